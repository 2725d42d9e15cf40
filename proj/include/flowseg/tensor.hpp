#pragma once

#include <algorithm>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace flowseg {

/// NCHW extent of a dense 4-D array.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 0;
  int w = 0;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t plane() const { return static_cast<std::size_t>(h) * w; }
  std::size_t item() const { return static_cast<std::size_t>(c) * h * w; }

  bool operator==(const Shape&) const = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

/// Dense row-major NCHW array. Images are (N,3,H,W), flows (N,2,H,W),
/// feature maps (N,C,H/s,W/s) and single-channel maps (N,1,H,W).
template <typename T>
class BasicTensor {
 public:
  using value_type = T;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, T fill = T(0))
      : shape_(shape), data_(shape.numel(), fill) {
    if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
      throw std::invalid_argument("negative tensor extent " + shape.str());
    }
  }
  BasicTensor(int n, int c, int h, int w, T fill = T(0))
      : BasicTensor(Shape{n, c, h, w}, fill) {}

  const Shape& shape() const { return shape_; }
  int n() const { return shape_.n; }
  int c() const { return shape_.c; }
  int h() const { return shape_.h; }
  int w() const { return shape_.w; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }
  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& storage() { return data_; }
  const std::vector<T>& storage() const { return data_; }

  T* item(int n) { return data_.data() + n * shape_.item(); }
  const T* item(int n) const { return data_.data() + n * shape_.item(); }
  T* plane(int n, int c) { return item(n) + c * shape_.plane(); }
  const T* plane(int n, int c) const { return item(n) + c * shape_.plane(); }

  T& at(int n, int c, int y, int x) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }
  T at(int n, int c, int y, int x) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x];
  }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Copy of `count` batch items starting at `begin`.
  BasicTensor slice_batch(int begin, int count) const {
    if (begin < 0 || count < 0 || begin + count > shape_.n) {
      throw std::out_of_range("slice_batch out of range");
    }
    BasicTensor out(Shape{count, shape_.c, shape_.h, shape_.w});
    std::copy(item(begin), item(begin) + count * shape_.item(), out.data());
    return out;
  }

  bool operator==(const BasicTensor&) const = default;

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Tensor = BasicTensor<float>;

template <typename T>
void require_same_shape(const BasicTensor<T>& a, const BasicTensor<T>& b,
                        const char* what) {
  if (a.shape() != b.shape()) {
    throw std::invalid_argument(std::string(what) + ": shape mismatch " +
                                a.shape().str() + " vs " + b.shape().str());
  }
}

/// Stack along channels: (N,Ca,H,W) ++ (N,Cb,H,W) -> (N,Ca+Cb,H,W).
template <typename T>
BasicTensor<T> concat_channels(const BasicTensor<T>& a, const BasicTensor<T>& b) {
  if (a.n() != b.n() || a.h() != b.h() || a.w() != b.w()) {
    throw std::invalid_argument("concat_channels: incompatible " + a.shape().str() +
                                " and " + b.shape().str());
  }
  BasicTensor<T> out(a.n(), a.c() + b.c(), a.h(), a.w());
  for (int i = 0; i < a.n(); ++i) {
    std::copy(a.item(i), a.item(i) + a.shape().item(), out.item(i));
    std::copy(b.item(i), b.item(i) + b.shape().item(), out.item(i) + a.shape().item());
  }
  return out;
}

/// Inverse of concat_channels: splits off the first `first` channels.
template <typename T>
std::pair<BasicTensor<T>, BasicTensor<T>> split_channels(const BasicTensor<T>& x, int first) {
  if (first < 0 || first > x.c()) throw std::invalid_argument("split_channels: bad split");
  BasicTensor<T> a(x.n(), first, x.h(), x.w());
  BasicTensor<T> b(x.n(), x.c() - first, x.h(), x.w());
  for (int i = 0; i < x.n(); ++i) {
    std::copy(x.item(i), x.item(i) + a.shape().item(), a.item(i));
    std::copy(x.item(i) + a.shape().item(), x.item(i) + x.shape().item(), b.item(i));
  }
  return {std::move(a), std::move(b)};
}

/// Stack along the batch axis.
template <typename T>
BasicTensor<T> concat_batch(const std::vector<const BasicTensor<T>*>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_batch: no parts");
  Shape s = parts.front()->shape();
  int total = 0;
  for (const auto* p : parts) {
    if (p->c() != s.c || p->h() != s.h || p->w() != s.w) {
      throw std::invalid_argument("concat_batch: incompatible parts");
    }
    total += p->n();
  }
  BasicTensor<T> out(total, s.c, s.h, s.w);
  T* dst = out.data();
  for (const auto* p : parts) dst = std::copy(p->data(), p->data() + p->size(), dst);
  return out;
}

template <typename T>
void add_inplace(BasicTensor<T>& dst, const BasicTensor<T>& src) {
  require_same_shape(dst, src, "add_inplace");
  T* d = dst.data();
  const T* s = src.data();
  for (std::size_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

template <typename To, typename From>
BasicTensor<To> tensor_cast(const BasicTensor<From>& x) {
  BasicTensor<To> out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out.data()[i] = static_cast<To>(x.data()[i]);
  return out;
}

}  // namespace flowseg
