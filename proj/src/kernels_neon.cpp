#include "crg/kernels.hpp"

#if defined(__aarch64__) || defined(_M_ARM64)
#define CRG_HAVE_NEON_TU 1
#include <arm_neon.h>
#endif

namespace crg::kernels::neon {

#if CRG_HAVE_NEON_TU

namespace {

double dot(const double* a, const double* b, std::size_t n) {
  float64x2_t acc0 = vdupq_n_f64(0.0);
  float64x2_t acc1 = vdupq_n_f64(0.0);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
  }
  double s = vaddvq_f64(vaddq_f64(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
  for (; i < n; ++i) y[i] += alpha * x[i];
}

void axpby(double alpha, double beta, const double* x, double* y, std::size_t n) {
  const float64x2_t va = vdupq_n_f64(alpha);
  const float64x2_t vb = vdupq_n_f64(beta);
  std::size_t i = 0;
  for (; i + 2 <= n; i += 2) {
    float64x2_t t = vmulq_f64(vb, vld1q_f64(x + i));
    vst1q_f64(y + i, vfmaq_f64(t, va, vld1q_f64(y + i)));
  }
  for (; i < n; ++i) y[i] = alpha * y[i] + beta * x[i];
}

void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot(m + r * cols, x, cols);
}

constexpr KernelTable kTable{Backend::Neon, &dot, &axpy, &axpby, &gemv};

}  // namespace

const KernelTable* table() { return &kTable; }

#else

const KernelTable* table() { return nullptr; }

#endif

}  // namespace crg::kernels::neon
