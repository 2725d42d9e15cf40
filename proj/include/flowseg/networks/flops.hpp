#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace flowseg::networks {

enum class LayerKind {
  kConvolution,
  kSeparableConvolution,
  kDeconvolution,
  kBatchNormalization,
  kActivation,
  kBilinearUpsampling,
};

std::string to_string(LayerKind kind);
LayerKind layer_kind_from_string(const std::string& s);

/// One priced operator: kind, channel counts, kernel, stride and the input
/// and output spatial extents it runs at.
struct LayerSpec {
  std::string name;
  LayerKind kind = LayerKind::kConvolution;
  int in_channels = 0;
  int out_channels = 0;
  int kernel_h = 1;
  int kernel_w = 1;
  int stride = 1;
  int in_h = 0;
  int in_w = 0;
  int out_h = 0;
  int out_w = 0;
};

struct NetworkSpec {
  std::string name;
  std::vector<LayerSpec> layers;
  int output_stride = 4;
  int feature_channels = 0;
};

struct LayerFlops {
  std::string name;
  LayerKind kind;
  std::int64_t flops = 0;
};

struct FlopsReport {
  std::string network;
  int input_h = 0;
  int input_w = 0;
  std::vector<LayerFlops> layers;
  std::int64_t total = 0;

  nlohmann::json to_json() const;
};

/// FLOPs of a single operator:
///   convolution          2*Ho*Wo*(Ci*Kh*Kw + 1)*Co
///   bilinear upsampling  11*Ho*Wo*Co
///   batch normalization  2*Hi*Wi*Ci
///   ReLU / LReLU         Hi*Wi*Ci
/// Separable convolution is a depthwise convolution (one input channel per
/// group) plus a 1x1 pointwise convolution; deconvolution uses the convolution
/// formula at its output size.
std::int64_t layer_flops(const LayerSpec& layer);

/// Checks the layer chain's sizes and prices every layer.
FlopsReport describe_flops(const NetworkSpec& net, int input_h, int input_w);

/// Sanity check of a single layer's size arithmetic. Throws on violation.
void validate_layer(const LayerSpec& layer);

}  // namespace flowseg::networks
