#include "flowseg/nn/layers.hpp"

#include <cmath>
#include <stdexcept>

namespace flowseg::nn {

namespace {

using networks::LayerKind;
using networks::LayerSpec;

Param make_param(const std::string& name, Shape shape) {
  return Param{name, Tensor(shape), Tensor(shape)};
}

// He-normal initialization over the fan-in.
void init_he(Param& p, int fan_in, Rng& rng) {
  std::normal_distribution<float> dist(0.0f, std::sqrt(2.0f / static_cast<float>(fan_in)));
  for (auto& v : p.value.storage()) v = dist(rng);
}

LayerSpec spec_of(const std::string& name, LayerKind kind, const Shape& in, const Shape& out,
                  int kh, int kw, int stride) {
  LayerSpec s;
  s.name = name;
  s.kind = kind;
  s.in_channels = in.c;
  s.out_channels = out.c;
  s.kernel_h = kh;
  s.kernel_w = kw;
  s.stride = stride;
  s.in_h = in.h;
  s.in_w = in.w;
  s.out_h = out.h;
  s.out_w = out.w;
  return s;
}

}  // namespace

// ---------------------------------------------------------------- Conv2d

Conv2d::Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride,
               Rng& rng)
    : Layer(std::move(name)) {
  geom_ = {in_channels, out_channels, kernel, kernel, stride, kernel / 2};
  weight_ = make_param(this->name() + ".weight", {out_channels, in_channels, kernel, kernel});
  bias_ = make_param(this->name() + ".bias", {1, 1, 1, out_channels});
  init_he(weight_, in_channels * kernel * kernel, rng);
}

Tensor Conv2d::forward(const Tensor& x, Mode mode, Cache* cache) {
  (void)mode;
  if (cache) cache->input = x;
  return kernels::conv2d_forward(x, weight_.value.data(), bias_.value.data(), geom_);
}

Tensor Conv2d::backward(const Tensor& dy, const Cache& cache, bool input_grad) {
  Tensor dx;
  kernels::conv2d_backward(cache.input, weight_.value.data(), dy, geom_,
                           input_grad ? &dx : nullptr, weight_.grad.data(), bias_.grad.data());
  return dx;
}

Shape Conv2d::output_shape(const Shape& in) const {
  return {in.n, geom_.out_channels, geom_.out_h(in.h), geom_.out_w(in.w)};
}

std::vector<LayerSpec> Conv2d::describe(const Shape& in) const {
  return {spec_of(name(), LayerKind::kConvolution, in, output_shape(in), geom_.kernel_h,
                  geom_.kernel_w, geom_.stride)};
}

void Conv2d::collect(std::vector<Param*>& params, std::vector<Param*>&) {
  params.push_back(&weight_);
  params.push_back(&bias_);
}

// ------------------------------------------------------- ConvTranspose2d

ConvTranspose2d::ConvTranspose2d(std::string name, int in_channels, int out_channels,
                                 int stride, Rng& rng)
    : Layer(std::move(name)) {
  const int k = 2 * stride;
  geom_ = {in_channels, out_channels, k, k, stride, stride / 2};
  weight_ = make_param(this->name() + ".weight", {in_channels, out_channels, k, k});
  bias_ = make_param(this->name() + ".bias", {1, 1, 1, out_channels});
  // Each output pixel receives (k/stride)^2 taps per input channel.
  init_he(weight_, in_channels * (k / stride) * (k / stride), rng);
}

Tensor ConvTranspose2d::forward(const Tensor& x, Mode mode, Cache* cache) {
  (void)mode;
  if (cache) cache->input = x;
  return kernels::deconv2d_forward(x, weight_.value.data(), bias_.value.data(), geom_);
}

Tensor ConvTranspose2d::backward(const Tensor& dy, const Cache& cache, bool input_grad) {
  Tensor dx;
  kernels::deconv2d_backward(cache.input, weight_.value.data(), dy, geom_,
                             input_grad ? &dx : nullptr, weight_.grad.data(),
                             bias_.grad.data());
  return dx;
}

Shape ConvTranspose2d::output_shape(const Shape& in) const {
  return {in.n, geom_.out_channels, geom_.deconv_h(in.h), geom_.deconv_w(in.w)};
}

std::vector<LayerSpec> ConvTranspose2d::describe(const Shape& in) const {
  return {spec_of(name(), LayerKind::kDeconvolution, in, output_shape(in), geom_.kernel_h,
                  geom_.kernel_w, geom_.stride)};
}

void ConvTranspose2d::collect(std::vector<Param*>& params, std::vector<Param*>&) {
  params.push_back(&weight_);
  params.push_back(&bias_);
}

// ------------------------------------------------------- SeparableConv2d

SeparableConv2d::SeparableConv2d(std::string name, int in_channels, int out_channels,
                                 int stride, Rng& rng)
    : Layer(std::move(name)) {
  dw_geom_ = {in_channels, in_channels, 3, 3, stride, 1};
  pw_geom_ = {in_channels, out_channels, 1, 1, 1, 0};
  dw_weight_ = make_param(this->name() + ".depthwise.weight", {in_channels, 1, 3, 3});
  dw_bias_ = make_param(this->name() + ".depthwise.bias", {1, 1, 1, in_channels});
  pw_weight_ = make_param(this->name() + ".pointwise.weight", {out_channels, in_channels, 1, 1});
  pw_bias_ = make_param(this->name() + ".pointwise.bias", {1, 1, 1, out_channels});
  init_he(dw_weight_, 9, rng);
  init_he(pw_weight_, in_channels, rng);
}

Tensor SeparableConv2d::forward(const Tensor& x, Mode mode, Cache* cache) {
  (void)mode;
  Tensor mid =
      kernels::depthwise_forward(x, dw_weight_.value.data(), dw_bias_.value.data(), dw_geom_);
  Tensor out =
      kernels::conv2d_forward(mid, pw_weight_.value.data(), pw_bias_.value.data(), pw_geom_);
  if (cache) {
    cache->input = x;
    cache->aux = std::move(mid);
  }
  return out;
}

Tensor SeparableConv2d::backward(const Tensor& dy, const Cache& cache, bool input_grad) {
  Tensor dmid;
  kernels::conv2d_backward(cache.aux, pw_weight_.value.data(), dy, pw_geom_, &dmid,
                           pw_weight_.grad.data(), pw_bias_.grad.data());
  Tensor dx;
  kernels::depthwise_backward(cache.input, dw_weight_.value.data(), dmid, dw_geom_,
                              input_grad ? &dx : nullptr, dw_weight_.grad.data(),
                              dw_bias_.grad.data());
  return dx;
}

Shape SeparableConv2d::output_shape(const Shape& in) const {
  return {in.n, pw_geom_.out_channels, dw_geom_.out_h(in.h), dw_geom_.out_w(in.w)};
}

std::vector<LayerSpec> SeparableConv2d::describe(const Shape& in) const {
  return {spec_of(name(), LayerKind::kSeparableConvolution, in, output_shape(in), 3, 3,
                  dw_geom_.stride)};
}

void SeparableConv2d::collect(std::vector<Param*>& params, std::vector<Param*>&) {
  params.push_back(&dw_weight_);
  params.push_back(&dw_bias_);
  params.push_back(&pw_weight_);
  params.push_back(&pw_bias_);
}

// ----------------------------------------------------------- BatchNorm2d

BatchNorm2d::BatchNorm2d(std::string name, int channels, float momentum, float eps)
    : Layer(std::move(name)), channels_(channels), momentum_(momentum), eps_(eps) {
  const Shape s{1, 1, 1, channels};
  gamma_ = make_param(this->name() + ".gamma", s);
  beta_ = make_param(this->name() + ".beta", s);
  running_mean_ = Param{this->name() + ".running_mean", Tensor(s), Tensor()};
  running_var_ = Param{this->name() + ".running_var", Tensor(s, 1.0f), Tensor()};
  gamma_.value.fill(1.0f);
}

Tensor BatchNorm2d::forward(const Tensor& x, Mode mode, Cache* cache) {
  if (x.c() != channels_) throw std::invalid_argument(name() + ": channel mismatch");
  const int n = x.n();
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(n) * plane;
  Tensor y(x.shape());
  std::vector<float> invstd(channels_);
  const bool train = mode == Mode::kTrain;

  for (int c = 0; c < channels_; ++c) {
    double mean, var;
    if (train) {
      double s = 0, s2 = 0;
      for (int i = 0; i < n; ++i) {
        const float* p = x.plane(i, c);
        for (std::size_t k = 0; k < plane; ++k) {
          s += p[k];
          s2 += static_cast<double>(p[k]) * p[k];
        }
      }
      mean = s / count;
      var = std::max(0.0, s2 / count - mean * mean);
      const double unbiased = count > 1 ? var * count / (count - 1) : var;
      auto& rm = running_mean_.value.data()[c];
      auto& rv = running_var_.value.data()[c];
      rm = static_cast<float>((1 - momentum_) * rm + momentum_ * mean);
      rv = static_cast<float>((1 - momentum_) * rv + momentum_ * unbiased);
    } else {
      mean = running_mean_.value.data()[c];
      var = running_var_.value.data()[c];
    }
    const float is = static_cast<float>(1.0 / std::sqrt(var + eps_));
    invstd[c] = is;
    const float m = static_cast<float>(mean);
    const float g = gamma_.value.data()[c];
    const float b = beta_.value.data()[c];
    for (int i = 0; i < n; ++i) {
      const float* p = x.plane(i, c);
      float* q = y.plane(i, c);
      for (std::size_t k = 0; k < plane; ++k) q[k] = (p[k] - m) * is * g + b;
    }
  }
  if (cache) {
    cache->train = train;
    cache->stats = std::move(invstd);
    // backward recomputes xhat from the input and the mean used here
    cache->input = x;
    cache->aux = Tensor(Shape{1, 1, 1, channels_});
    if (train) {
      for (int c = 0; c < channels_; ++c) {
        double s = 0;
        for (int i = 0; i < n; ++i) {
          const float* p = x.plane(i, c);
          for (std::size_t k = 0; k < plane; ++k) s += p[k];
        }
        cache->aux.data()[c] = static_cast<float>(s / count);
      }
    } else {
      for (int c = 0; c < channels_; ++c) cache->aux.data()[c] = running_mean_.value.data()[c];
    }
  }
  return y;
}

Tensor BatchNorm2d::backward(const Tensor& dy, const Cache& cache, bool input_grad) {
  const Tensor& x = cache.input;
  const int n = x.n();
  const std::size_t plane = x.shape().plane();
  const double count = static_cast<double>(n) * plane;
  Tensor dx(input_grad ? x.shape() : Shape{});

  for (int c = 0; c < channels_; ++c) {
    const float mean = cache.aux.data()[c];
    const float is = cache.stats[c];
    double sum_dy = 0, sum_dy_xhat = 0;
    for (int i = 0; i < n; ++i) {
      const float* p = x.plane(i, c);
      const float* g = dy.plane(i, c);
      for (std::size_t k = 0; k < plane; ++k) {
        sum_dy += g[k];
        sum_dy_xhat += static_cast<double>(g[k]) * (p[k] - mean) * is;
      }
    }
    gamma_.grad.data()[c] += static_cast<float>(sum_dy_xhat);
    beta_.grad.data()[c] += static_cast<float>(sum_dy);
    if (!input_grad) continue;
    const float gamma = gamma_.value.data()[c];
    for (int i = 0; i < n; ++i) {
      const float* p = x.plane(i, c);
      const float* g = dy.plane(i, c);
      float* d = dx.plane(i, c);
      if (cache.train) {
        const double a = sum_dy / count;
        const double b = sum_dy_xhat / count;
        for (std::size_t k = 0; k < plane; ++k) {
          const double xhat = (p[k] - mean) * is;
          d[k] = static_cast<float>(gamma * is * (g[k] - a - xhat * b));
        }
      } else {
        for (std::size_t k = 0; k < plane; ++k) d[k] = gamma * is * g[k];
      }
    }
  }
  return dx;
}

std::vector<LayerSpec> BatchNorm2d::describe(const Shape& in) const {
  return {spec_of(name(), LayerKind::kBatchNormalization, in, in, 1, 1, 1)};
}

void BatchNorm2d::collect(std::vector<Param*>& params, std::vector<Param*>& buffers) {
  params.push_back(&gamma_);
  params.push_back(&beta_);
  buffers.push_back(&running_mean_);
  buffers.push_back(&running_var_);
}

// ------------------------------------------------------------ Activation

Activation::Activation(std::string name, float negative_slope)
    : Layer(std::move(name)), slope_(negative_slope) {}

Tensor Activation::forward(const Tensor& x, Mode mode, Cache* cache) {
  (void)mode;
  Tensor y(x.shape());
  const float* p = x.data();
  float* q = y.data();
  for (std::size_t k = 0; k < x.size(); ++k) q[k] = p[k] > 0 ? p[k] : slope_ * p[k];
  if (cache) cache->input = x;
  return y;
}

Tensor Activation::backward(const Tensor& dy, const Cache& cache, bool input_grad) {
  if (!input_grad) return {};
  Tensor dx(dy.shape());
  const float* p = cache.input.data();
  const float* g = dy.data();
  float* d = dx.data();
  for (std::size_t k = 0; k < dy.size(); ++k) d[k] = p[k] > 0 ? g[k] : slope_ * g[k];
  return dx;
}

std::vector<LayerSpec> Activation::describe(const Shape& in) const {
  return {spec_of(name(), LayerKind::kActivation, in, in, 1, 1, 1)};
}

// ------------------------------------------------------------ Sequential

void Sequential::conv_block(const std::string& name, int in_c, int out_c, int kernel,
                            int stride, bool batch_norm, bool activation, float slope,
                            Rng& rng) {
  add<Conv2d>(name + ".conv", in_c, out_c, kernel, stride, rng);
  if (batch_norm) add<BatchNorm2d>(name + ".bn", out_c);
  if (activation) add<Activation>(name + (slope == 0.0f ? ".relu" : ".lrelu"), slope);
}

Tensor Sequential::forward(const Tensor& x, Mode mode, Tape* tape) {
  if (tape) tape->assign(layers_.size(), Cache{});
  Tensor cur = x;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    cur = layers_[i]->forward(cur, mode, tape ? &(*tape)[i] : nullptr);
  }
  return cur;
}

Tensor Sequential::backward(const Tensor& dy, const Tape& tape, bool input_grad) {
  if (tape.size() != layers_.size()) throw std::logic_error(name_ + ": tape size mismatch");
  Tensor g = dy;
  for (std::size_t i = layers_.size(); i-- > 0;) {
    g = layers_[i]->backward(g, tape[i], i > 0 || input_grad);
  }
  return g;
}

Shape Sequential::output_shape(Shape in) const {
  for (const auto& l : layers_) in = l->output_shape(in);
  return in;
}

std::vector<LayerSpec> Sequential::describe(Shape in) const {
  std::vector<LayerSpec> out;
  for (const auto& l : layers_) {
    auto s = l->describe(in);
    out.insert(out.end(), s.begin(), s.end());
    in = l->output_shape(in);
  }
  return out;
}

void Sequential::collect(std::vector<Param*>& params, std::vector<Param*>& buffers) {
  for (auto& l : layers_) l->collect(params, buffers);
}

networks::LayerSpec upsample_spec(const std::string& name, const Shape& in, int out_h,
                                  int out_w) {
  return spec_of(name, LayerKind::kBilinearUpsampling, in, Shape{in.n, in.c, out_h, out_w}, 1,
                 1, 1);
}

}  // namespace flowseg::nn
