#include "flowseg/networks/networks.hpp"

#include <stdexcept>

#include "flowseg/error.hpp"
#include "flowseg/kernels/resample.hpp"
#include "flowseg/nn/optim.hpp"

namespace flowseg::networks {

// ------------------------------------------------------------ config

void NetworkConfig::validate() const {
  auto positive = [](int v, const char* what) {
    if (v <= 0) throw ConfigError(std::string("networks.") + what + " must be positive");
  };
  positive(num_classes, "num_classes");
  positive(feature_channels, "feature_channels");
  positive(segnet_base, "segnet_base");
  positive(flownet_base, "flownet_base");
  positive(dmnet_channels, "dmnet_channels");
  positive(cfnet_base, "cfnet_base");
  if (segnet_base % 2 != 0 || flownet_base % 2 != 0 || cfnet_base % 2 != 0) {
    throw ConfigError("networks: base widths must be even");
  }
  if (num_classes > 255) throw ConfigError("networks.num_classes must be < 255");
  if (lrelu_slope < 0.0f || lrelu_slope >= 1.0f) {
    throw ConfigError("networks.lrelu_slope must be in [0, 1)");
  }
}

nlohmann::json NetworkConfig::to_json() const {
  return {{"num_classes", num_classes},     {"feature_channels", feature_channels},
          {"segnet_base", segnet_base},     {"flownet_base", flownet_base},
          {"dmnet_channels", dmnet_channels}, {"cfnet_base", cfnet_base},
          {"lrelu_slope", lrelu_slope},     {"init_seed", init_seed}};
}

NetworkConfig NetworkConfig::from_json(const nlohmann::json& j) {
  NetworkConfig c;
  for (const auto& [key, value] : j.items()) {
    if (key == "num_classes") c.num_classes = value.get<int>();
    else if (key == "feature_channels") c.feature_channels = value.get<int>();
    else if (key == "segnet_base") c.segnet_base = value.get<int>();
    else if (key == "flownet_base") c.flownet_base = value.get<int>();
    else if (key == "dmnet_channels") c.dmnet_channels = value.get<int>();
    else if (key == "cfnet_base") c.cfnet_base = value.get<int>();
    else if (key == "lrelu_slope") c.lrelu_slope = value.get<float>();
    else if (key == "init_seed") c.init_seed = value.get<std::uint64_t>();
    else throw ConfigError("unknown key networks." + key);
  }
  c.validate();
  return c;
}

std::string NetworkConfig::hash() const {
  const std::string s = to_json().dump();
  return nn::hex64(nn::fnv1a(s.data(), s.size()));
}

std::vector<nn::Param*> ParamSet::all() const {
  std::vector<nn::Param*> out = params;
  out.insert(out.end(), buffers.begin(), buffers.end());
  return out;
}

std::int64_t ParamSet::count() const {
  std::int64_t n = 0;
  for (const auto* p : params) n += static_cast<std::int64_t>(p->value.size());
  return n;
}

// ------------------------------------------------------------ SegHead

SegHead::SegHead(const NetworkConfig& cfg, nn::Rng& rng)
    : feature_channels_(cfg.feature_channels),
      conv_("segnet.head", cfg.feature_channels, cfg.num_classes, 1, 1, rng) {}

Tensor SegHead::forward(const Tensor& feature, nn::Cache* cache) {
  if (feature.c() != feature_channels_) {
    throw std::invalid_argument("segmentation head expects " + std::to_string(feature_channels_) +
                                " channels, got " + std::to_string(feature.c()));
  }
  return conv_.forward(feature, Mode::kEval, cache);
}

Tensor SegHead::backward(const Tensor& dlogits, const nn::Cache& cache) {
  return conv_.backward(dlogits, cache, true);
}

void SegHead::collect(ParamSet& set) { conv_.collect(set.params, set.buffers); }

std::vector<LayerSpec> SegHead::describe(const Shape& in) const { return conv_.describe(in); }

// ------------------------------------------------------------ SegNet

SegNet::SegNet(const NetworkConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      stem_("segnet.stem"),
      deep_("segnet.deep"),
      fuse_("segnet.fuse"),
      head_(cfg, rng) {
  const int b = cfg.segnet_base;
  stem_.conv_block("segnet.stem.0", 3, b / 2, 3, 2, true, true, 0.0f, rng);
  stem_.conv_block("segnet.stem.1", b / 2, b, 3, 2, true, true, 0.0f, rng);
  deep_.conv_block("segnet.deep.0", b, 2 * b, 3, 2, true, true, 0.0f, rng);
  deep_.conv_block("segnet.deep.1", 2 * b, 3 * b, 3, 2, true, true, 0.0f, rng);
  deep_.conv_block("segnet.deep.2", 3 * b, 4 * b, 3, 1, true, true, 0.0f, rng);
  deep_.conv_block("segnet.deep.3", 4 * b, 2 * b, 1, 1, true, true, 0.0f, rng);
  fuse_.conv_block("segnet.fuse.0", 3 * b, 2 * b, 3, 1, true, true, 0.0f, rng);
  fuse_.conv_block("segnet.fuse.1", 2 * b, cfg.feature_channels, 3, 1, true, true, 0.0f, rng);
}

void SegNet::check_input(const Shape& s) {
  if (s.c != 3) throw std::invalid_argument("segnet expects 3-channel frames");
  if (s.h % 32 != 0 || s.w % 32 != 0 || s.h == 0 || s.w == 0) {
    throw std::invalid_argument("segnet input " + std::to_string(s.h) + "x" +
                                std::to_string(s.w) + " is not divisible by 32");
  }
}

Tensor SegNet::features(const Tensor& frame, Mode mode, Tape* tape) {
  check_input(frame.shape());
  Tensor low = stem_.forward(frame, mode, tape ? &tape->stem : nullptr);
  Tensor high = deep_.forward(low, mode, tape ? &tape->deep : nullptr);
  if (tape) {
    tape->low = low.shape();
    tape->high = high.shape();
  }
  Tensor up = kernels::resize_bilinear(high, low.h(), low.w());
  return fuse_.forward(concat_channels(up, low), mode, tape ? &tape->fuse : nullptr);
}

void SegNet::backward(const Tensor& dfeature, const Tape& tape) {
  Tensor dcat = fuse_.backward(dfeature, tape.fuse, true);
  auto [dup, dlow] = split_channels(dcat, tape.high.c);
  Tensor dhigh = kernels::resize_bilinear_backward(dup, tape.high);
  add_inplace(dlow, deep_.backward(dhigh, tape.deep, true));
  stem_.backward(dlow, tape.stem, false);
}

std::pair<Tensor, Tensor> SegNet::forward(const Tensor& frame, Mode mode) {
  Tensor f = features(frame, mode, nullptr);
  Tensor logits = head_.forward(f, nullptr);
  return {std::move(f), std::move(logits)};
}

void SegNet::collect(ParamSet& set) {
  stem_.collect(set.params, set.buffers);
  deep_.collect(set.params, set.buffers);
  fuse_.collect(set.params, set.buffers);
  head_.collect(set);
}

NetworkSpec SegNet::spec(int h, int w) const {
  NetworkSpec net;
  net.name = "segnet";
  net.output_stride = kFeatureStride;
  net.feature_channels = cfg_.feature_channels;
  const Shape in{1, 3, h, w};
  auto add = [&](std::vector<LayerSpec> v) { net.layers.insert(net.layers.end(), v.begin(), v.end()); };
  add(stem_.describe(in));
  const Shape low = stem_.output_shape(in);
  add(deep_.describe(low));
  const Shape high = deep_.output_shape(low);
  net.layers.push_back(nn::upsample_spec("segnet.upsample", high, low.h, low.w));
  const Shape cat{1, high.c + low.c, low.h, low.w};
  add(fuse_.describe(cat));
  const Shape feat = fuse_.output_shape(cat);
  add(head_.describe(feat));
  net.layers.push_back(nn::upsample_spec("segnet.logits_upsample",
                                         Shape{1, cfg_.num_classes, feat.h, feat.w}, h, w));
  return net;
}

// ------------------------------------------------------------ FlowNet

FlowNet::FlowNet(const NetworkConfig& cfg, nn::Rng& rng)
    : cfg_(cfg),
      enc1_("flownet.enc1"),
      enc2_("flownet.enc2"),
      dec_("flownet.dec"),
      predict_("flownet.predict") {
  const int b = cfg.flownet_base;
  const float s = cfg.lrelu_slope;
  enc1_.conv_block("flownet.enc1.0", 6, b / 2, 3, 2, false, true, s, rng);
  enc1_.conv_block("flownet.enc1.1", b / 2, b, 3, 2, false, true, s, rng);
  enc2_.conv_block("flownet.enc2.0", b, 2 * b, 3, 2, false, true, s, rng);
  enc2_.conv_block("flownet.enc2.1", 2 * b, 2 * b, 3, 1, false, true, s, rng);
  dec_.add<nn::ConvTranspose2d>("flownet.dec.0.deconv", 2 * b, b, 2, rng);
  dec_.add<nn::Activation>("flownet.dec.0.lrelu", s);
  predict_.conv_block("flownet.predict.0", 2 * b, b, 3, 1, false, true, s, rng);
  auto& out = predict_.add<nn::Conv2d>("flownet.predict.1.conv", b, 2, 3, 1, rng);
  // Start from the zero field: the identity warp.
  out.weight().value.fill(0.0f);
}

Tensor FlowNet::forward(const Tensor& frame_a, const Tensor& frame_b, Mode mode, Tape* tape) {
  if (frame_a.shape() != frame_b.shape()) {
    throw std::invalid_argument("flownet: frame resolutions differ " + frame_a.shape().str() +
                                " vs " + frame_b.shape().str());
  }
  if (frame_a.c() != 3 || frame_a.h() % kFeatureStride != 0 || frame_a.w() % kFeatureStride != 0) {
    throw std::invalid_argument("flownet: expects 3-channel frames with sides divisible by 4");
  }
  Tensor x = concat_channels(frame_a, frame_b);
  Tensor e2 = enc1_.forward(x, mode, tape ? &tape->enc1 : nullptr);
  Tensor e3 = enc2_.forward(e2, mode, tape ? &tape->enc2 : nullptr);
  Tensor d = dec_.forward(e3, mode, tape ? &tape->dec : nullptr);
  Tensor coarse = predict_.forward(concat_channels(d, e2), mode, tape ? &tape->predict : nullptr);
  if (tape) {
    tape->e2 = e2.shape();
    tape->coarse = coarse.shape();
  }
  return kernels::resize_bilinear(coarse, frame_a.h(), frame_a.w());
}

void FlowNet::backward(const Tensor& dflow, const Tape& tape) {
  Tensor dcoarse = kernels::resize_bilinear_backward(dflow, tape.coarse);
  Tensor dcat = predict_.backward(dcoarse, tape.predict, true);
  auto [dd, de2] = split_channels(dcat, dcat.c() - tape.e2.c);
  Tensor de3 = dec_.backward(dd, tape.dec, true);
  add_inplace(de2, enc2_.backward(de3, tape.enc2, true));
  enc1_.backward(de2, tape.enc1, false);
}

void FlowNet::collect(ParamSet& set) {
  enc1_.collect(set.params, set.buffers);
  enc2_.collect(set.params, set.buffers);
  dec_.collect(set.params, set.buffers);
  predict_.collect(set.params, set.buffers);
}

NetworkSpec FlowNet::spec(int h, int w) const {
  NetworkSpec net;
  net.name = "flownet";
  net.output_stride = 1;
  net.feature_channels = 2;
  auto add = [&](std::vector<LayerSpec> v) { net.layers.insert(net.layers.end(), v.begin(), v.end()); };
  const Shape in{1, 6, h, w};
  add(enc1_.describe(in));
  const Shape e2 = enc1_.output_shape(in);
  add(enc2_.describe(e2));
  const Shape e3 = enc2_.output_shape(e2);
  add(dec_.describe(e3));
  const Shape d = dec_.output_shape(e3);
  const Shape cat{1, d.c + e2.c, e2.h, e2.w};
  add(predict_.describe(cat));
  net.layers.push_back(nn::upsample_spec("flownet.upsample", predict_.output_shape(cat), h, w));
  return net;
}

// ------------------------------------------------------------ DMNet

DMNet::DMNet(const NetworkConfig& cfg, nn::Rng& rng) : cfg_(cfg), body_("dmnet") {
  const int c = cfg.dmnet_channels;
  const int strides[4] = {2, 2, 1, 1};
  int in = 3;
  for (int i = 0; i < 4; ++i) {
    const std::string name = "dmnet." + std::to_string(i);
    body_.add<nn::SeparableConv2d>(name + ".sepconv", in, c, strides[i], rng);
    // BatchNorm and ReLU sit between separable convolutions only, so the
    // final features are signed and the cosine spans [-1, 1].
    if (i < 3) {
      body_.add<nn::BatchNorm2d>(name + ".bn", c);
      body_.add<nn::Activation>(name + ".relu", 0.0f);
    }
    in = c;
  }
}

Tensor DMNet::features(const Tensor& image, Mode mode, nn::Tape* tape) {
  if (image.c() != 3) throw std::invalid_argument("dmnet expects 3-channel images");
  return body_.forward(image, mode, tape);
}

Tensor DMNet::backward(const Tensor& dfeature, const nn::Tape& tape) {
  return body_.backward(dfeature, tape, false);
}

void DMNet::collect(ParamSet& set) { body_.collect(set.params, set.buffers); }

NetworkSpec DMNet::spec(int h, int w) const {
  NetworkSpec net;
  net.name = "dmnet";
  net.output_stride = kFeatureStride;
  net.feature_channels = cfg_.dmnet_channels;
  net.layers = body_.describe(Shape{1, 3, h, w});
  return net;
}

// ------------------------------------------------------------ CFNet

const std::vector<int>& CFNet::encoder_strides() {
  static const std::vector<int> strides = {2, 2, 1, 2, 1, 2, 1, 2, 1, 2};
  return strides;
}

int cfnet_skip_source(int decoder_step) {
  static const int sources[CFNet::kDecoderLayers] = {-1, 8, 6, 4};
  return sources[decoder_step];
}

namespace {

std::vector<int> cfnet_encoder_widths(int b) {
  return {b / 2, b, b, b, b, 2 * b, 2 * b, 2 * b, 2 * b, 2 * b};
}

std::vector<int> cfnet_decoder_widths(int b, int feature_channels) {
  return {b, b, b / 2, feature_channels};
}

}  // namespace

CFNet::CFNet(const NetworkConfig& cfg, nn::Rng& rng) : cfg_(cfg) {
  const auto& strides = encoder_strides();
  int stride_product = 1;
  for (int s : strides) stride_product *= s;
  if (stride_product / (1 << kDecoderLayers) != kFeatureStride) {
    throw ConfigError("cfnet: encoder stride / 16 must equal the feature stride");
  }
  const auto enc_w = cfnet_encoder_widths(cfg.cfnet_base);
  const auto dec_w = cfnet_decoder_widths(cfg.cfnet_base, cfg.feature_channels);
  int in = 3;
  for (int i = 0; i < kEncoderLayers; ++i) {
    const std::string name = "cfnet.enc." + std::to_string(i);
    enc_.emplace_back(name);
    enc_.back().conv_block(name, in, enc_w[i], 3, strides[i], true, true, cfg.lrelu_slope, rng);
    in = enc_w[i];
  }
  int main = enc_w.back();
  for (int k = 0; k < kDecoderLayers; ++k) {
    const std::string name = "cfnet.dec." + std::to_string(k);
    const int skip = cfnet_skip_source(k);
    const int in_c = main + (skip >= 0 ? enc_w[skip] : 0);
    dec_.emplace_back(name);
    dec_.back().add<nn::ConvTranspose2d>(name + ".deconv", in_c, dec_w[k], 2, rng);
    // LReLU between deconvolutions; the last one emits the raw feature.
    if (k + 1 < kDecoderLayers) dec_.back().add<nn::Activation>(name + ".lrelu", cfg.lrelu_slope);
    main = dec_w[k];
  }
}

void CFNet::check_input(const Shape& s) {
  if (s.c != 3) throw std::invalid_argument("cfnet expects 3-channel frames");
  if (s.h % kEncoderStride != 0 || s.w % kEncoderStride != 0 || s.h == 0 || s.w == 0) {
    throw std::invalid_argument("cfnet input " + std::to_string(s.h) + "x" + std::to_string(s.w) +
                                " is not divisible by 64");
  }
}

Tensor CFNet::forward(const Tensor& frame, Mode mode, Tape* tape) {
  check_input(frame.shape());
  if (tape) {
    tape->enc.assign(kEncoderLayers, {});
    tape->dec.assign(kDecoderLayers, {});
    tape->dec_main_channels.assign(kDecoderLayers, 0);
  }
  std::vector<Tensor> acts;
  acts.reserve(kEncoderLayers);
  Tensor cur = frame;
  for (int i = 0; i < kEncoderLayers; ++i) {
    cur = enc_[i].forward(cur, mode, tape ? &tape->enc[i] : nullptr);
    acts.push_back(cur);
  }
  for (int k = 0; k < kDecoderLayers; ++k) {
    const int skip = cfnet_skip_source(k);
    if (tape) tape->dec_main_channels[k] = cur.c();
    Tensor in = skip >= 0 ? concat_channels(cur, acts[skip]) : cur;
    cur = dec_[k].forward(in, mode, tape ? &tape->dec[k] : nullptr);
  }
  return cur;
}

void CFNet::backward(const Tensor& dfeature, const Tape& tape) {
  std::vector<Tensor> dacts(kEncoderLayers);
  Tensor g = dfeature;
  for (int k = kDecoderLayers - 1; k >= 0; --k) {
    Tensor din = dec_[k].backward(g, tape.dec[k], true);
    const int skip = cfnet_skip_source(k);
    if (skip >= 0) {
      auto [dmain, dskip] = split_channels(din, tape.dec_main_channels[k]);
      dacts[skip] = std::move(dskip);
      g = std::move(dmain);
    } else {
      g = std::move(din);
    }
  }
  // g is now the gradient of the last encoder activation.
  for (int i = kEncoderLayers - 1; i >= 0; --i) {
    if (!dacts[i].empty()) add_inplace(g, dacts[i]);
    g = enc_[i].backward(g, tape.enc[i], i > 0);
  }
}

void CFNet::collect(ParamSet& set) {
  for (auto& s : enc_) s.collect(set.params, set.buffers);
  for (auto& s : dec_) s.collect(set.params, set.buffers);
}

NetworkSpec CFNet::spec(int h, int w) const {
  NetworkSpec net;
  net.name = "cfnet";
  net.output_stride = kFeatureStride;
  net.feature_channels = cfg_.feature_channels;
  auto add = [&](std::vector<LayerSpec> v) { net.layers.insert(net.layers.end(), v.begin(), v.end()); };
  std::vector<Shape> outs;
  Shape cur{1, 3, h, w};
  for (int i = 0; i < kEncoderLayers; ++i) {
    add(enc_[i].describe(cur));
    cur = enc_[i].output_shape(cur);
    outs.push_back(cur);
  }
  for (int k = 0; k < kDecoderLayers; ++k) {
    const int skip = cfnet_skip_source(k);
    Shape in = cur;
    if (skip >= 0) in.c += outs[skip].c;
    add(dec_[k].describe(in));
    cur = dec_[k].output_shape(in);
  }
  return net;
}

}  // namespace flowseg::networks
