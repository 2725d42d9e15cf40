#pragma once

// Desk-scale reference architectures. Every network produces maps at output
// stride 4 so features, propagated features, correction cues and distortion
// maps share one grid.

#include <cstdint>
#include <vector>

#include <nlohmann/json.hpp>

#include "flowseg/networks/flops.hpp"
#include "flowseg/nn/layers.hpp"

namespace flowseg::networks {

inline constexpr int kFeatureStride = 4;

struct NetworkConfig {
  int num_classes = 4;
  int feature_channels = 32;
  int segnet_base = 32;
  int flownet_base = 16;
  int dmnet_channels = 16;
  int cfnet_base = 16;
  float lrelu_slope = 0.1f;
  std::uint64_t init_seed = 1;

  void validate() const;
  nlohmann::json to_json() const;
  static NetworkConfig from_json(const nlohmann::json& j);
  /// Hash of every field that changes parameter shapes or initialization.
  std::string hash() const;
};

using nn::Mode;

/// Collects parameters and buffers of a network in a stable order.
struct ParamSet {
  std::vector<nn::Param*> params;
  std::vector<nn::Param*> buffers;

  std::vector<nn::Param*> all() const;
  std::int64_t count() const;
};

/// 1x1 convolution from C_feat to class scores, shared by every feature source.
class SegHead {
 public:
  SegHead(const NetworkConfig& cfg, nn::Rng& rng);

  Tensor forward(const Tensor& feature, nn::Cache* cache);
  /// Gradient with respect to the feature; parameter gradients accumulate too.
  Tensor backward(const Tensor& dlogits, const nn::Cache& cache);
  void collect(ParamSet& set);
  std::vector<LayerSpec> describe(const Shape& in) const;
  int feature_channels() const { return feature_channels_; }

 private:
  int feature_channels_;
  nn::Conv2d conv_;
};

/// Image segmentation network: strided encoder to stride 16, upsampled and
/// fused with the stride-4 features.
class SegNet {
 public:
  struct Tape {
    nn::Tape stem, deep, fuse;
    Shape low, high;
  };

  SegNet(const NetworkConfig& cfg, nn::Rng& rng);

  Tensor features(const Tensor& frame, Mode mode, Tape* tape);
  void backward(const Tensor& dfeature, const Tape& tape);
  SegHead& head() { return head_; }

  /// Features and stride-4 class scores.
  std::pair<Tensor, Tensor> forward(const Tensor& frame, Mode mode = Mode::kEval);

  void collect(ParamSet& set);
  NetworkSpec spec(int h, int w) const;
  static void check_input(const Shape& s);

 private:
  NetworkConfig cfg_;
  nn::Sequential stem_, deep_, fuse_;
  SegHead head_;
};

/// Flow estimator: encoder to stride 8, one deconvolution with a stride-4 skip,
/// flow predicted at stride 4 and bilinearly upsampled to image resolution.
/// Output convention: displacement from frame_b pixels into frame_a, so
/// warp(frame_a, flow) aligns with frame_b.
class FlowNet {
 public:
  struct Tape {
    nn::Tape enc1, enc2, dec, predict;
    Shape e2, coarse;
  };

  FlowNet(const NetworkConfig& cfg, nn::Rng& rng);

  Tensor forward(const Tensor& frame_a, const Tensor& frame_b, Mode mode, Tape* tape);
  void backward(const Tensor& dflow, const Tape& tape);

  void collect(ParamSet& set);
  NetworkSpec spec(int h, int w) const;

 private:
  NetworkConfig cfg_;
  nn::Sequential enc1_, enc2_, dec_, predict_;
};

/// Siamese feature extractor of four separable convolutions (strides 2,2,1,1)
/// with BatchNorm and ReLU between them.
class DMNet {
 public:
  DMNet(const NetworkConfig& cfg, nn::Rng& rng);

  Tensor features(const Tensor& image, Mode mode, nn::Tape* tape);
  Tensor backward(const Tensor& dfeature, const nn::Tape& tape);

  void collect(ParamSet& set);
  /// One branch at (h, w).
  NetworkSpec spec(int h, int w) const;
  nn::Sequential& body() { return body_; }

 private:
  NetworkConfig cfg_;
  nn::Sequential body_;
};

/// Correction-cue network: ten convolution layers (BatchNorm + LReLU) with
/// cumulative stride 64, then four stride-2 deconvolutions with skip
/// connections back to stride 4 and C_feat channels.
class CFNet {
 public:
  static constexpr int kEncoderLayers = 10;
  static constexpr int kDecoderLayers = 4;
  static constexpr int kEncoderStride = 64;

  struct Tape {
    std::vector<nn::Tape> enc;
    std::vector<nn::Tape> dec;
    std::vector<int> dec_main_channels;
  };

  CFNet(const NetworkConfig& cfg, nn::Rng& rng);

  Tensor forward(const Tensor& frame, Mode mode, Tape* tape);
  void backward(const Tensor& dfeature, const Tape& tape);

  void collect(ParamSet& set);
  NetworkSpec spec(int h, int w) const;
  static void check_input(const Shape& s);
  static const std::vector<int>& encoder_strides();

 private:
  NetworkConfig cfg_;
  std::vector<nn::Sequential> enc_;
  std::vector<nn::Sequential> dec_;
};

/// Encoder layer (0-based) whose output is concatenated to decoder step k's input.
int cfnet_skip_source(int decoder_step);

}  // namespace flowseg::networks
