#include "crg/kernels.hpp"

namespace crg::kernels::scalar {
namespace {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void axpby(double alpha, double beta, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = alpha * y[i] + beta * x[i];
}

void gemv(const double* m, std::size_t rows, std::size_t cols, const double* x, double* out) {
  for (std::size_t r = 0; r < rows; ++r) out[r] = dot(m + r * cols, x, cols);
}

constexpr KernelTable kTable{Backend::Scalar, &dot, &axpy, &axpby, &gemv};

}  // namespace

const KernelTable& table() { return kTable; }

}  // namespace crg::kernels::scalar
