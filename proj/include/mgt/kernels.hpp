#pragma once

#include <cstddef>
#include <cstdint>

// Arithmetic inner loops shared by the DSP and training code. Every kernel
// has a scalar reference implementation and, on x86-64, an AVX2/FMA variant;
// the active variant is chosen at runtime from CPU capabilities and can be
// forced for equivalence testing. All matrices are dense row-major.
namespace mgt::kernels {

enum class Backend { scalar, avx2 };

Backend active_backend();
const char* backend_name(Backend b);
bool avx2_supported();

// Force a backend; throws a config error if the CPU lacks it.
void set_backend(Backend b);

// Per-entry Adam scalars; bc1/bc2 are the bias corrections 1/(1-beta^t).
struct AdamScalars {
  float lr;
  float beta1;
  float beta2;
  float eps;
  float bc1;
  float bc2;
  float l2;  // applied as g += l2 * p before the moment updates
};

struct Ops {
  // c[m,n] += a[m,k] * b[k,n]
  void (*gemm_nn_f32)(const float* a, const float* b, float* c, int m, int k, int n);
  // c[m,n] += a[m,k] * b[n,k]^T
  void (*gemm_nt_f32)(const float* a, const float* b, float* c, int m, int k, int n);
  // c[m,n] += a[k,m]^T * b[k,n]
  void (*gemm_tn_f32)(const float* a, const float* b, float* c, int m, int k, int n);
  void (*gemm_nn_f64)(const double* a, const double* b, double* c, int m, int k, int n);
  void (*gemm_nt_f64)(const double* a, const double* b, double* c, int m, int k, int n);
  void (*gemm_tn_f64)(const double* a, const double* b, double* c, int m, int k, int n);

  float (*dot_f32)(const float* a, const float* b, size_t n);
  double (*dot_f64)(const double* a, const double* b, size_t n);
  void (*axpy_f32)(float alpha, const float* x, float* y, size_t n);
  void (*axpy_f64)(double alpha, const double* x, double* y, size_t n);
  void (*mul_f32)(const float* a, const float* b, float* out, size_t n);
  void (*relu_f32)(const float* x, float* y, size_t n);
  // dx = (x > 0) ? dy : 0
  void (*relu_bwd_f32)(const float* x, const float* dy, float* dx, size_t n);
  void (*adam_f32)(float* p, const float* g, float* m, float* v, size_t n, AdamScalars s);
  bool (*any_nonfinite_f32)(const float* x, size_t n);
  float (*max_f32)(const float* x, size_t n);
  double (*max_f64)(const double* x, size_t n);
  double (*sum_f64)(const double* x, size_t n);
};

const Ops& ops();

// Typed convenience wrappers so templated callers need no dtype switches.
template <typename T>
void gemm_nn(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void gemm_nt(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
void gemm_tn(const T* a, const T* b, T* c, int m, int k, int n);
template <typename T>
T dot(const T* a, const T* b, size_t n);
template <typename T>
void axpy(T alpha, const T* x, T* y, size_t n);

template <>
inline void gemm_nn<float>(const float* a, const float* b, float* c, int m, int k, int n) {
  ops().gemm_nn_f32(a, b, c, m, k, n);
}
template <>
inline void gemm_nn<double>(const double* a, const double* b, double* c, int m, int k, int n) {
  ops().gemm_nn_f64(a, b, c, m, k, n);
}
template <>
inline void gemm_nt<float>(const float* a, const float* b, float* c, int m, int k, int n) {
  ops().gemm_nt_f32(a, b, c, m, k, n);
}
template <>
inline void gemm_nt<double>(const double* a, const double* b, double* c, int m, int k, int n) {
  ops().gemm_nt_f64(a, b, c, m, k, n);
}
template <>
inline void gemm_tn<float>(const float* a, const float* b, float* c, int m, int k, int n) {
  ops().gemm_tn_f32(a, b, c, m, k, n);
}
template <>
inline void gemm_tn<double>(const double* a, const double* b, double* c, int m, int k, int n) {
  ops().gemm_tn_f64(a, b, c, m, k, n);
}
template <>
inline float dot<float>(const float* a, const float* b, size_t n) {
  return ops().dot_f32(a, b, n);
}
template <>
inline double dot<double>(const double* a, const double* b, size_t n) {
  return ops().dot_f64(a, b, n);
}
template <>
inline void axpy<float>(float alpha, const float* x, float* y, size_t n) {
  ops().axpy_f32(alpha, x, y, n);
}
template <>
inline void axpy<double>(double alpha, const double* x, double* y, size_t n) {
  ops().axpy_f64(alpha, x, y, n);
}

// Implementation tables (one per backend); exposed for the equivalence tests.
const Ops& scalar_ops();
#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
#endif

}  // namespace mgt::kernels
