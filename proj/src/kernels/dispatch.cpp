#include <atomic>
#include <string>

#include "mgt/error.hpp"
#include "mgt/kernels.hpp"

namespace mgt::kernels {
namespace {

std::atomic<const Ops*> g_active{nullptr};
std::atomic<Backend> g_backend{Backend::scalar};

Backend detect_backend() {
#if defined(__x86_64__) || defined(_M_X64)
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) {
    return Backend::avx2;
  }
#endif
  return Backend::scalar;
}

const Ops* table_for(Backend b) {
#if defined(__x86_64__) || defined(_M_X64)
  if (b == Backend::avx2) return &avx2_ops();
#endif
  (void)b;
  return &scalar_ops();
}

void ensure_initialized() {
  if (g_active.load(std::memory_order_acquire) == nullptr) {
    Backend b = detect_backend();
    g_backend.store(b, std::memory_order_relaxed);
    g_active.store(table_for(b), std::memory_order_release);
  }
}

}  // namespace

bool avx2_supported() {
#if defined(__x86_64__) || defined(_M_X64)
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

Backend active_backend() {
  ensure_initialized();
  return g_backend.load(std::memory_order_relaxed);
}

const char* backend_name(Backend b) {
  switch (b) {
    case Backend::scalar:
      return "scalar";
    case Backend::avx2:
      return "avx2";
  }
  return "?";
}

void set_backend(Backend b) {
  if (b == Backend::avx2 && !avx2_supported()) {
    fail(ErrorKind::config, "kernel backend avx2 not supported on this CPU");
  }
  g_backend.store(b, std::memory_order_relaxed);
  g_active.store(table_for(b), std::memory_order_release);
}

const Ops& ops() {
  ensure_initialized();
  return *g_active.load(std::memory_order_acquire);
}

}  // namespace mgt::kernels
