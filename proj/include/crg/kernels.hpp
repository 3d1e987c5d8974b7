#pragma once

// Double-precision inner loops used by every stage of the engine. Each kernel
// has a portable scalar reference and vectorized variants (AVX2+FMA on x86-64,
// NEON on AArch64). The variant is chosen once at startup from the CPU's
// capabilities; CRG_KERNELS=scalar|avx2|neon forces a particular one.

#include <cstddef>
#include <span>
#include <string_view>

namespace crg::kernels {

enum class Backend { Scalar, Avx2, Neon };

struct KernelTable {
  Backend backend;
  double (*dot)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // y = alpha * y + beta * x
  void (*axpby)(double alpha, double beta, const double* x, double* y, std::size_t n);
  // out[r] = sum_c m[r * cols + c] * x[c]
  void (*gemv)(const double* m, std::size_t rows, std::size_t cols, const double* x,
               double* out);
};

namespace scalar {
const KernelTable& table();
}
namespace avx2 {
// Null when the build target has no AVX2 support compiled in.
const KernelTable* table();
}
namespace neon {
const KernelTable* table();
}

bool supported(Backend b);
std::string_view name(Backend b);

/// Currently active table.
const KernelTable& active();
Backend active_backend();

/// Switches the active variant. Throws std::invalid_argument if the CPU or
/// build does not support it. Not safe to call while kernels are running.
void set_backend(Backend b);

// Convenience wrappers over the active table.

inline double dot(std::span<const double> a, std::span<const double> b) {
  return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void axpby(double alpha, double beta, std::span<const double> x, std::span<double> y) {
  active().axpby(alpha, beta, x.data(), y.data(), x.size());
}

inline void gemv(std::span<const double> m, std::size_t rows, std::size_t cols,
                 std::span<const double> x, std::span<double> out) {
  active().gemv(m.data(), rows, cols, x.data(), out.data());
}

}  // namespace crg::kernels
