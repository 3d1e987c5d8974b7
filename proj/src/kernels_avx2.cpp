#include "crg/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define CRG_HAVE_AVX2_TU 1
#include <immintrin.h>
#endif

namespace crg::kernels::avx2 {

#if CRG_HAVE_AVX2_TU

namespace {

#define CRG_AVX2 __attribute__((target("avx2,fma")))

CRG_AVX2 inline double hsum(__m256d v) {
  __m128d lo = _mm256_castpd256_pd128(v);
  __m128d hi = _mm256_extractf128_pd(v, 1);
  lo = _mm_add_pd(lo, hi);
  __m128d sh = _mm_unpackhi_pd(lo, lo);
  return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

CRG_AVX2 double dot(const double* a, const double* b, std::size_t n) {
  __m256d acc0 = _mm256_setzero_pd();
  __m256d acc1 = _mm256_setzero_pd();
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
  }
  if (i + 4 <= n) {
    acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    i += 4;
  }
  double s = hsum(_mm256_add_pd(acc0, acc1));
  for (; i < n; ++i) s += a[i] * b[i];
  return s;
}

CRG_AVX2 void axpy(double alpha, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
  }
  for (; i < n; ++i) y[i] += alpha * x[i];
}

CRG_AVX2 void axpby(double alpha, double beta, const double* x, double* y, std::size_t n) {
  const __m256d va = _mm256_set1_pd(alpha);
  const __m256d vb = _mm256_set1_pd(beta);
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d t = _mm256_mul_pd(vb, _mm256_loadu_pd(x + i));
    _mm256_storeu_pd(y + i, _mm256_fmadd_pd(va, _mm256_loadu_pd(y + i), t));
  }
  for (; i < n; ++i) y[i] = alpha * y[i] + beta * x[i];
}

CRG_AVX2 void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x,
                   double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot(m + r * cols, x, cols);
}

#undef CRG_AVX2

constexpr KernelTable kTable{Backend::Avx2, &dot, &axpy, &axpby, &gemv};

}  // namespace

const KernelTable* table() { return &kTable; }

#else

const KernelTable* table() { return nullptr; }

#endif

}  // namespace crg::kernels::avx2
