#pragma once

#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "flowseg/kernels/conv.hpp"
#include "flowseg/networks/flops.hpp"
#include "flowseg/tensor.hpp"

namespace flowseg::nn {

enum class Mode { kTrain, kEval };

/// A learnable tensor and its gradient accumulator. Buffers (BatchNorm running
/// statistics) use the same type with an empty gradient.
struct Param {
  std::string name;
  Tensor value;
  Tensor grad;

  void zero_grad() { grad.fill(0.0f); }
};

/// Per-call forward state needed by backward.
struct Cache {
  Tensor input;
  Tensor aux;
  std::vector<float> stats;
  bool train = false;
};

using Tape = std::vector<Cache>;
using Rng = std::mt19937_64;

class Layer {
 public:
  explicit Layer(std::string name) : name_(std::move(name)) {}
  virtual ~Layer() = default;
  Layer(const Layer&) = delete;
  Layer& operator=(const Layer&) = delete;

  /// `cache` may be null when no backward pass will follow.
  virtual Tensor forward(const Tensor& x, Mode mode, Cache* cache) = 0;
  /// Accumulates parameter gradients; returns dL/dx when `input_grad`.
  virtual Tensor backward(const Tensor& dy, const Cache& cache, bool input_grad) = 0;
  virtual Shape output_shape(const Shape& in) const = 0;
  virtual std::vector<networks::LayerSpec> describe(const Shape& in) const = 0;
  virtual void collect(std::vector<Param*>& params, std::vector<Param*>& buffers) {
    (void)params;
    (void)buffers;
  }

  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

class Conv2d : public Layer {
 public:
  Conv2d(std::string name, int in_channels, int out_channels, int kernel, int stride, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode, Cache* cache) override;
  Tensor backward(const Tensor& dy, const Cache& cache, bool input_grad) override;
  Shape output_shape(const Shape& in) const override;
  std::vector<networks::LayerSpec> describe(const Shape& in) const override;
  void collect(std::vector<Param*>& params, std::vector<Param*>& buffers) override;

  Param& weight() { return weight_; }
  Param& bias() { return bias_; }
  const kernels::ConvGeometry& geometry() const { return geom_; }

 private:
  kernels::ConvGeometry geom_;
  Param weight_;
  Param bias_;
};

/// Stride-s transposed convolution with kernel 2s and padding s/2, which
/// upsamples exactly by s.
class ConvTranspose2d : public Layer {
 public:
  ConvTranspose2d(std::string name, int in_channels, int out_channels, int stride, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode, Cache* cache) override;
  Tensor backward(const Tensor& dy, const Cache& cache, bool input_grad) override;
  Shape output_shape(const Shape& in) const override;
  std::vector<networks::LayerSpec> describe(const Shape& in) const override;
  void collect(std::vector<Param*>& params, std::vector<Param*>& buffers) override;

 private:
  kernels::ConvGeometry geom_;
  Param weight_;
  Param bias_;
};

/// Depthwise k x k convolution followed by a pointwise 1x1 convolution.
class SeparableConv2d : public Layer {
 public:
  SeparableConv2d(std::string name, int in_channels, int out_channels, int stride, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode, Cache* cache) override;
  Tensor backward(const Tensor& dy, const Cache& cache, bool input_grad) override;
  Shape output_shape(const Shape& in) const override;
  std::vector<networks::LayerSpec> describe(const Shape& in) const override;
  void collect(std::vector<Param*>& params, std::vector<Param*>& buffers) override;

  Param& depthwise_weight() { return dw_weight_; }
  Param& depthwise_bias() { return dw_bias_; }
  Param& pointwise_weight() { return pw_weight_; }
  Param& pointwise_bias() { return pw_bias_; }

 private:
  kernels::ConvGeometry dw_geom_;
  kernels::ConvGeometry pw_geom_;
  Param dw_weight_, dw_bias_, pw_weight_, pw_bias_;
};

class BatchNorm2d : public Layer {
 public:
  BatchNorm2d(std::string name, int channels, float momentum = 0.1f, float eps = 1e-5f);

  Tensor forward(const Tensor& x, Mode mode, Cache* cache) override;
  Tensor backward(const Tensor& dy, const Cache& cache, bool input_grad) override;
  Shape output_shape(const Shape& in) const override { return in; }
  std::vector<networks::LayerSpec> describe(const Shape& in) const override;
  void collect(std::vector<Param*>& params, std::vector<Param*>& buffers) override;

 private:
  int channels_;
  float momentum_, eps_;
  Param gamma_, beta_, running_mean_, running_var_;
};

/// ReLU for slope 0, leaky ReLU otherwise.
class Activation : public Layer {
 public:
  Activation(std::string name, float negative_slope);

  Tensor forward(const Tensor& x, Mode mode, Cache* cache) override;
  Tensor backward(const Tensor& dy, const Cache& cache, bool input_grad) override;
  Shape output_shape(const Shape& in) const override { return in; }
  std::vector<networks::LayerSpec> describe(const Shape& in) const override;

 private:
  float slope_;
};

/// Ordered chain of layers with a tape of per-layer caches.
class Sequential {
 public:
  Sequential() = default;
  explicit Sequential(std::string name) : name_(std::move(name)) {}
  Sequential(Sequential&&) = default;
  Sequential& operator=(Sequential&&) = default;

  template <typename L, typename... Args>
  L& add(Args&&... args) {
    auto layer = std::make_unique<L>(std::forward<Args>(args)...);
    L& ref = *layer;
    layers_.push_back(std::move(layer));
    return ref;
  }

  /// Appends conv (+ optional BatchNorm) (+ optional activation).
  void conv_block(const std::string& name, int in_c, int out_c, int kernel, int stride,
                  bool batch_norm, bool activation, float slope, Rng& rng);

  Tensor forward(const Tensor& x, Mode mode, Tape* tape);
  Tensor backward(const Tensor& dy, const Tape& tape, bool input_grad);
  Shape output_shape(Shape in) const;
  std::vector<networks::LayerSpec> describe(Shape in) const;
  void collect(std::vector<Param*>& params, std::vector<Param*>& buffers);

  std::size_t size() const { return layers_.size(); }
  Layer& at(std::size_t i) { return *layers_.at(i); }
  const std::string& name() const { return name_; }

 private:
  std::string name_;
  std::vector<std::unique_ptr<Layer>> layers_;
};

/// Bilinear resize as a priced operator in network descriptions.
networks::LayerSpec upsample_spec(const std::string& name, const Shape& in, int out_h,
                                  int out_w);

}  // namespace flowseg::nn
