#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "flowseg/data/synth.hpp"
#include "flowseg/tensor.hpp"

namespace testing {

using flowseg::BasicTensor;

template <typename T>
BasicTensor<T> random_tensor(int n, int c, int h, int w, std::mt19937_64& rng, double lo = -1,
                             double hi = 1) {
  BasicTensor<T> t(n, c, h, w);
  std::uniform_real_distribution<double> u(lo, hi);
  for (auto& v : t.span()) v = static_cast<T>(u(rng));
  return t;
}

/// Bilinear backward-warp sampler written directly from the definition:
/// out(p) = sum over the four integer neighbours q of max(0, 1-|x-qx|) *
/// max(0, 1-|y-qy|) * src(q), with src = 0 off the grid.
template <typename T>
BasicTensor<T> brute_force_warp(const BasicTensor<T>& src, const BasicTensor<T>& flow) {
  BasicTensor<T> out(src.shape());
  for (int n = 0; n < src.n(); ++n) {
    for (int y = 0; y < src.h(); ++y) {
      for (int x = 0; x < src.w(); ++x) {
        const double sx = x + static_cast<double>(flow.at(n, 0, y, x));
        const double sy = y + static_cast<double>(flow.at(n, 1, y, x));
        for (int c = 0; c < src.c(); ++c) {
          double acc = 0;
          for (int qy = static_cast<int>(std::floor(sy)); qy <= static_cast<int>(std::floor(sy)) + 1; ++qy) {
            for (int qx = static_cast<int>(std::floor(sx)); qx <= static_cast<int>(std::floor(sx)) + 1; ++qx) {
              if (qx < 0 || qy < 0 || qx >= src.w() || qy >= src.h()) continue;
              const double wgt = std::max(0.0, 1 - std::abs(sx - qx)) * std::max(0.0, 1 - std::abs(sy - qy));
              acc += wgt * static_cast<double>(src.at(n, c, qy, qx));
            }
          }
          out.at(n, c, y, x) = static_cast<T>(acc);
        }
      }
    }
  }
  return out;
}

/// Central difference of a scalar function of `x` at every element.
inline BasicTensor<double> numeric_gradient(BasicTensor<double> x,
                                            const std::function<double(const BasicTensor<double>&)>& f,
                                            double step = 1e-4) {
  BasicTensor<double> g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x.data()[i];
    x.data()[i] = keep + step;
    const double up = f(x);
    x.data()[i] = keep - step;
    const double down = f(x);
    x.data()[i] = keep;
    g.data()[i] = (up - down) / (2 * step);
  }
  return g;
}

/// max |a-b| / max(1e-6, max |b|).
inline double relative_error(const BasicTensor<double>& a, const BasicTensor<double>& b) {
  double diff = 0, scale = 1e-6;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a.data()[i] - b.data()[i]));
    scale = std::max(scale, std::abs(b.data()[i]));
  }
  return diff / scale;
}

/// Pearson statistic against uniform expectation; accepted within 5 sigma of
/// its mean (df) using the chi-square variance 2*df.
inline bool chi_square_uniform_ok(const std::vector<long>& counts, double* stat = nullptr) {
  long total = 0;
  for (long c : counts) total += c;
  const double expected = static_cast<double>(total) / counts.size();
  double x2 = 0;
  for (long c : counts) x2 += (c - expected) * (c - expected) / expected;
  if (stat) *stat = x2;
  const double df = static_cast<double>(counts.size()) - 1;
  return x2 <= df + 5 * std::sqrt(2 * df);
}

inline std::filesystem::path scratch_dir(const std::string& tag) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("flowseg_test_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline flowseg::data::SynthSpec small_spec() {
  flowseg::data::SynthSpec s;
  s.num_clips = 4;
  s.val_clips = 1;
  s.frames_per_clip = 12;
  s.annotated_index = 10;
  return s;
}

}  // namespace testing
