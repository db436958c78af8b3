#include <cstdlib>

#include "salguide/errors.hpp"
#include "salguide/kernels.hpp"

namespace salguide::kernels {

#ifdef SALGUIDE_X86_BACKENDS
const Backend& avx2_backend();    // kernels_avx2.cpp
const Backend& avx512_backend();  // kernels_avx512.cpp
#endif

const Backend* avx2() {
#ifdef SALGUIDE_X86_BACKENDS
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &avx2_backend();
#endif
  return nullptr;
}

const Backend* avx512() {
#ifdef SALGUIDE_X86_BACKENDS
  if (__builtin_cpu_supports("avx512f") && __builtin_cpu_supports("avx512dq") &&
      __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"))
    return &avx512_backend();
#endif
  return nullptr;
}

namespace {

const Backend* g_active = nullptr;

const Backend& resolve(const std::string& name) {
  if (name == "auto") {
    if (const Backend* b = avx512()) return *b;
    if (const Backend* b = avx2()) return *b;
    return scalar();
  }
  if (name == "scalar") return scalar();
  if (name == "avx2") {
    if (const Backend* b = avx2()) return *b;
    throw UsageError("kernel backend 'avx2' not supported on this CPU/build");
  }
  if (name == "avx512") {
    if (const Backend* b = avx512()) return *b;
    throw UsageError("kernel backend 'avx512' not supported on this CPU/build");
  }
  throw UsageError("unknown kernel backend '" + name +
                   "' (want auto|scalar|avx2|avx512)");
}

}  // namespace

const Backend& active() {
  if (!g_active) {
    const char* env = std::getenv("SALGUIDE_KERNELS");
    g_active = &resolve(env && *env ? env : "auto");
  }
  return *g_active;
}

void select(const std::string& name) { g_active = &resolve(name); }

}  // namespace salguide::kernels
