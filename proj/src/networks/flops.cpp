#include "flowseg/networks/flops.hpp"

#include <stdexcept>

namespace flowseg::networks {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::kConvolution: return "convolution";
    case LayerKind::kSeparableConvolution: return "separable-convolution";
    case LayerKind::kDeconvolution: return "deconvolution";
    case LayerKind::kBatchNormalization: return "batch-normalization";
    case LayerKind::kActivation: return "activation";
    case LayerKind::kBilinearUpsampling: return "bilinear-upsampling";
  }
  throw std::invalid_argument("unknown layer kind");
}

LayerKind layer_kind_from_string(const std::string& s) {
  for (auto k : {LayerKind::kConvolution, LayerKind::kSeparableConvolution,
                 LayerKind::kDeconvolution, LayerKind::kBatchNormalization,
                 LayerKind::kActivation, LayerKind::kBilinearUpsampling}) {
    if (to_string(k) == s) return k;
  }
  throw std::invalid_argument("unknown layer kind: " + s);
}

namespace {

std::int64_t conv_flops(std::int64_t ho, std::int64_t wo, std::int64_t ci, std::int64_t kh,
                        std::int64_t kw, std::int64_t co) {
  return 2 * ho * wo * (ci * kh * kw + 1) * co;
}

int ceil_div(int a, int b) { return (a + b - 1) / b; }

}  // namespace

void validate_layer(const LayerSpec& l) {
  auto fail = [&](const std::string& why) {
    throw std::invalid_argument("layer '" + l.name + "' (" + to_string(l.kind) + "): " + why);
  };
  if (l.in_channels <= 0 || l.out_channels <= 0 || l.in_h <= 0 || l.in_w <= 0 ||
      l.out_h <= 0 || l.out_w <= 0) {
    fail("non-positive extent");
  }
  switch (l.kind) {
    case LayerKind::kConvolution:
    case LayerKind::kSeparableConvolution:
      if (l.stride < 1) fail("stride < 1");
      if (l.out_h != ceil_div(l.in_h, l.stride) || l.out_w != ceil_div(l.in_w, l.stride)) {
        fail("output size inconsistent with stride");
      }
      break;
    case LayerKind::kDeconvolution:
      if (l.out_h != l.in_h * l.stride || l.out_w != l.in_w * l.stride) {
        fail("output size inconsistent with upsampling stride");
      }
      break;
    case LayerKind::kBatchNormalization:
    case LayerKind::kActivation:
      if (l.in_channels != l.out_channels || l.in_h != l.out_h || l.in_w != l.out_w) {
        fail("elementwise layer must preserve shape");
      }
      break;
    case LayerKind::kBilinearUpsampling:
      if (l.in_channels != l.out_channels) fail("upsampling must preserve channels");
      break;
  }
}

std::int64_t layer_flops(const LayerSpec& l) {
  switch (l.kind) {
    case LayerKind::kConvolution:
    case LayerKind::kDeconvolution:
      return conv_flops(l.out_h, l.out_w, l.in_channels, l.kernel_h, l.kernel_w,
                        l.out_channels);
    case LayerKind::kSeparableConvolution:
      // depthwise: one input channel per group, Ci groups
      return conv_flops(l.out_h, l.out_w, 1, l.kernel_h, l.kernel_w, l.in_channels) +
             conv_flops(l.out_h, l.out_w, l.in_channels, 1, 1, l.out_channels);
    case LayerKind::kBilinearUpsampling:
      return std::int64_t{11} * l.out_h * l.out_w * l.out_channels;
    case LayerKind::kBatchNormalization:
      return std::int64_t{2} * l.in_h * l.in_w * l.in_channels;
    case LayerKind::kActivation:
      return std::int64_t{1} * l.in_h * l.in_w * l.in_channels;
  }
  throw std::invalid_argument("unknown layer kind");
}

FlopsReport describe_flops(const NetworkSpec& net, int input_h, int input_w) {
  FlopsReport report;
  report.network = net.name;
  report.input_h = input_h;
  report.input_w = input_w;
  for (const auto& l : net.layers) {
    validate_layer(l);
    const auto f = layer_flops(l);
    report.layers.push_back({l.name, l.kind, f});
    report.total += f;
  }
  return report;
}

nlohmann::json FlopsReport::to_json() const {
  nlohmann::json j;
  j["network"] = network;
  j["input"] = {input_h, input_w};
  j["total"] = total;
  auto& arr = j["layers"] = nlohmann::json::array();
  for (const auto& l : layers) {
    arr.push_back({{"name", l.name}, {"kind", to_string(l.kind)}, {"flops", l.flops}});
  }
  return j;
}

}  // namespace flowseg::networks
