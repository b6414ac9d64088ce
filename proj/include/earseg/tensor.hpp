#pragma once

#include <cstddef>
#include <cstdint>
#include <cmath>
#include <stdexcept>
#include <string>
#include <type_traits>
#include <vector>

namespace earseg {

// Dense 4-D array in (batch, channel, height, width) layout, row-major.
// Value semantics; float by default, double for verification runs, and
// std::uint8_t for label planes.
template <typename T = float>
class Tensor {
  static_assert(std::is_arithmetic_v<T>, "Tensor requires an arithmetic type");

public:
  Tensor() = default;

  Tensor(int n, int c, int h, int w)
      : n_(n), c_(c), h_(h), w_(w) {
    if (n < 0 || c < 0 || h < 0 || w < 0) {
      throw std::invalid_argument("Tensor: negative dimension");
    }
    data_.assign(static_cast<std::size_t>(n) * c * h * w, T(0));
  }

  int n() const { return n_; }
  int c() const { return c_; }
  int h() const { return h_; }
  int w() const { return w_; }

  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  T* data() { return data_.data(); }
  const T* data() const { return data_.data(); }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  T& at(int n, int c, int y, int x) { return data_[flat(n, c, y, x)]; }
  const T& at(int n, int c, int y, int x) const { return data_[flat(n, c, y, x)]; }

  std::size_t flat(int n, int c, int y, int x) const {
    return ((static_cast<std::size_t>(n) * c_ + c) * h_ + y) * w_ + x;
  }

  // Pointer to the start of one (n, c) spatial plane.
  T* plane(int n, int c) { return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * h_ * w_; }
  const T* plane(int n, int c) const {
    return data_.data() + (static_cast<std::size_t>(n) * c_ + c) * h_ * w_;
  }

  std::size_t plane_size() const { return static_cast<std::size_t>(h_) * w_; }

  bool same_shape(const Tensor& o) const {
    return n_ == o.n_ && c_ == o.c_ && h_ == o.h_ && w_ == o.w_;
  }

  std::string shape_str() const {
    return "(" + std::to_string(n_) + "," + std::to_string(c_) + "," + std::to_string(h_) + "," +
           std::to_string(w_) + ")";
  }

  void fill(T v) { data_.assign(data_.size(), v); }

  bool all_finite() const {
    for (T v : data_) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(n_, c_, h_, w_);
    for (std::size_t i = 0; i < data_.size(); ++i) out[i] = static_cast<U>(data_[i]);
    return out;
  }

private:
  int n_ = 0, c_ = 0, h_ = 0, w_ = 0;
  std::vector<T> data_;
};

// Argmax bookkeeping produced by 2x2 max pooling. For every pooled cell the
// flat row-major index of the window maximum within its source (h, w) plane
// is stored, together with the pre-pool spatial size so unpooling can
// reconstruct the exact input extent (needed for sizes not divisible by 2).
struct PoolIndices {
  int n = 0, c = 0;
  int pooled_h = 0, pooled_w = 0;
  int src_h = 0, src_w = 0;
  std::vector<std::int32_t> argmax;  // length n * c * pooled_h * pooled_w

  std::size_t flat(int n_i, int c_i, int py, int px) const {
    return ((static_cast<std::size_t>(n_i) * c + c_i) * pooled_h + py) * pooled_w + px;
  }
};

}  // namespace earseg
