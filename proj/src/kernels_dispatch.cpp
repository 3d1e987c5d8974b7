#include "crg/kernels.hpp"

#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

namespace crg::kernels {
namespace {

bool cpu_has_avx2() {
#if (defined(__x86_64__) || defined(_M_X64)) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
  return false;
#endif
}

const KernelTable* table_for(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return &scalar::table();
    case Backend::Avx2:
      return cpu_has_avx2() ? avx2::table() : nullptr;
    case Backend::Neon:
      return neon::table();  // NEON is mandatory on AArch64
  }
  return nullptr;
}

const KernelTable* pick_default() {
  if (const char* env = std::getenv("CRG_KERNELS")) {
    const std::string want(env);
    for (Backend b : {Backend::Scalar, Backend::Avx2, Backend::Neon}) {
      if (want == name(b)) {
        if (const KernelTable* t = table_for(b)) return t;
      }
    }
  }
  if (const KernelTable* t = table_for(Backend::Avx2)) return t;
  if (const KernelTable* t = table_for(Backend::Neon)) return t;
  return &scalar::table();
}

std::atomic<const KernelTable*>& current() {
  static std::atomic<const KernelTable*> t{pick_default()};
  return t;
}

}  // namespace

bool supported(Backend b) { return table_for(b) != nullptr; }

std::string_view name(Backend b) {
  switch (b) {
    case Backend::Scalar:
      return "scalar";
    case Backend::Avx2:
      return "avx2";
    case Backend::Neon:
      return "neon";
  }
  return "unknown";
}

const KernelTable& active() { return *current().load(std::memory_order_relaxed); }

Backend active_backend() { return active().backend; }

void set_backend(Backend b) {
  const KernelTable* t = table_for(b);
  if (t == nullptr) {
    throw std::invalid_argument("kernel backend not supported here: " + std::string(name(b)));
  }
  current().store(t, std::memory_order_relaxed);
}

}  // namespace crg::kernels
