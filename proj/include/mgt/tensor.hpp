#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "mgt/error.hpp"
#include "mgt/kernels.hpp"

namespace mgt {

// Dense row-major n-d array. Training runs on float; the gradient-check
// path instantiates the same code on double.
template <typename T>
struct TensorT {
  std::vector<int64_t> shape;
  std::vector<T> data;

  TensorT() = default;
  explicit TensorT(std::vector<int64_t> s) : shape(std::move(s)) {
    data.assign(static_cast<size_t>(numel_of(shape)), T(0));
  }
  TensorT(std::vector<int64_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel_of(shape)) {
      fail(ErrorKind::data, "tensor shape/data size mismatch");
    }
  }

  static int64_t numel_of(const std::vector<int64_t>& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
  }

  int64_t numel() const { return static_cast<int64_t>(data.size()); }
  int64_t dim(int i) const { return shape[static_cast<size_t>(i)]; }
  int rank() const { return static_cast<int>(shape.size()); }

  T* ptr() { return data.data(); }
  const T* ptr() const { return data.data(); }

  // 2-d / 3-d accessors for the common layouts
  T& at2(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  T at2(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  T& at3(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  T at3(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  T* row3(int64_t i, int64_t j) {
    return data.data() + static_cast<size_t>((i * shape[1] + j) * shape[2]);
  }
  const T* row3(int64_t i, int64_t j) const {
    return data.data() + static_cast<size_t>((i * shape[1] + j) * shape[2]);
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }
  void zero() { fill(T(0)); }

  bool same_shape(const TensorT& o) const { return shape == o.shape; }

  std::string shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
      if (i) s += ",";
      s += std::to_string(shape[i]);
    }
    return s + "]";
  }
};

using Tensor = TensorT<float>;

template <typename T>
bool all_finite(const TensorT<T>& t) {
  if constexpr (std::is_same_v<T, float>) {
    return !kernels::ops().any_nonfinite_f32(t.ptr(), t.data.size());
  } else {
    for (T v : t.data) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
}

template <typename T>
void require_finite(const TensorT<T>& t, const char* where) {
  if (!all_finite(t)) {
    fail(ErrorKind::numeric, std::string("non-finite values produced by ") + where);
  }
}

}  // namespace mgt
