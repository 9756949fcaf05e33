// Reference kernels. Plain loops, fixed accumulation order; these define the
// semantics that the SIMD variants are tested against.

#include <cmath>
#include <cstddef>

#include "mgt/kernels.hpp"

namespace mgt::kernels {
namespace {

template <typename T>
void gemm_nn_impl(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const T av = arow[p];
      const T* brow = b + static_cast<size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
void gemm_nt_impl(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int i = 0; i < m; ++i) {
    const T* arow = a + static_cast<size_t>(i) * k;
    T* crow = c + static_cast<size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const T* brow = b + static_cast<size_t>(j) * k;
      T acc = 0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

template <typename T>
void gemm_tn_impl(const T* a, const T* b, T* c, int m, int k, int n) {
  for (int p = 0; p < k; ++p) {
    const T* arow = a + static_cast<size_t>(p) * m;
    const T* brow = b + static_cast<size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const T av = arow[i];
      T* crow = c + static_cast<size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

template <typename T>
T dot_impl(const T* a, const T* b, size_t n) {
  T acc = 0;
  for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

template <typename T>
void axpy_impl(T alpha, const T* x, T* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void mul_f32_impl(const float* a, const float* b, float* out, size_t n) {
  for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void relu_f32_impl(const float* x, float* y, size_t n) {
  for (size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
}

void relu_bwd_f32_impl(const float* x, const float* dy, float* dx, size_t n) {
  for (size_t i = 0; i < n; ++i) dx[i] = x[i] > 0.0f ? dy[i] : 0.0f;
}

void adam_f32_impl(float* p, const float* g, float* m, float* v, size_t n, AdamScalars s) {
  for (size_t i = 0; i < n; ++i) {
    const float ge = g[i] + s.l2 * p[i];
    m[i] = s.beta1 * m[i] + (1.0f - s.beta1) * ge;
    v[i] = s.beta2 * v[i] + (1.0f - s.beta2) * ge * ge;
    p[i] -= s.lr * (m[i] * s.bc1) / (std::sqrt(v[i] * s.bc2) + s.eps);
  }
}

bool any_nonfinite_f32_impl(const float* x, size_t n) {
  for (size_t i = 0; i < n; ++i) {
    if (!std::isfinite(x[i])) return true;
  }
  return false;
}

float max_f32_impl(const float* x, size_t n) {
  float best = x[0];
  for (size_t i = 1; i < n; ++i) {
    if (x[i] > best) best = x[i];
  }
  return best;
}

double max_f64_impl(const double* x, size_t n) {
  double best = x[0];
  for (size_t i = 1; i < n; ++i) {
    if (x[i] > best) best = x[i];
  }
  return best;
}

double sum_f64_impl(const double* x, size_t n) {
  double acc = 0.0;
  for (size_t i = 0; i < n; ++i) acc += x[i];
  return acc;
}

}  // namespace

const Ops& scalar_ops() {
  static const Ops table = {
      gemm_nn_impl<float>,  gemm_nt_impl<float>,  gemm_tn_impl<float>,
      gemm_nn_impl<double>, gemm_nt_impl<double>, gemm_tn_impl<double>,
      dot_impl<float>,      dot_impl<double>,
      axpy_impl<float>,     axpy_impl<double>,
      mul_f32_impl,
      relu_f32_impl,        relu_bwd_f32_impl,
      adam_f32_impl,
      any_nonfinite_f32_impl,
      max_f32_impl,         max_f64_impl,
      sum_f64_impl,
  };
  return table;
}

}  // namespace mgt::kernels
