#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "flowseg/nn/layers.hpp"

namespace flowseg::nn {

struct AdamConfig {
  float beta1 = 0.9f;
  float beta2 = 0.99f;
  float eps = 1e-8f;
};

class Adam {
 public:
  Adam(std::vector<Param*> params, AdamConfig config = {});

  void zero_grad();
  void step(float lr);
  std::int64_t steps() const { return t_; }

 private:
  std::vector<Param*> params_;
  std::vector<std::vector<float>> m_, v_;
  AdamConfig cfg_;
  std::int64_t t_ = 0;
};

/// Raw little-endian container: magic, count, then per entry the name, the
/// NCHW shape and float32 data.
std::vector<std::uint8_t> serialize_params(const std::vector<Param*>& params);
void deserialize_params(const std::vector<std::uint8_t>& bytes, const std::vector<Param*>& params,
                        const std::string& origin);

void save_params(const std::filesystem::path& path, const std::vector<Param*>& params);
void load_params(const std::filesystem::path& path, const std::vector<Param*>& params);

/// FNV-1a 64-bit over a byte range.
std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t seed = 0xcbf29ce484222325ULL);
std::string hex64(std::uint64_t v);

}  // namespace flowseg::nn
