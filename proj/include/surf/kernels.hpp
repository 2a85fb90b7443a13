#pragma once

#include <cstddef>
#include <utility>

#include "surf/matrix.hpp"

// Dense kernels behind the unrolled forward/backward passes. Every kernel has a
// serial reference and an OpenMP version; both compute each output element with
// the same operation order, so results are bitwise identical across backends
// and thread counts.
namespace surf::kernels {

enum class Backend { serial, parallel };

void set_backend(Backend b) noexcept;
Backend backend() noexcept;
bool parallel_available() noexcept;

// RAII backend override, used by tests and the benchmark.
class ScopedBackend {
 public:
  explicit ScopedBackend(Backend b) : saved_(backend()) { set_backend(b); }
  ~ScopedBackend() { set_backend(saved_); }
  ScopedBackend(const ScopedBackend&) = delete;
  ScopedBackend& operator=(const ScopedBackend&) = delete;

 private:
  Backend saved_;
};

namespace serial {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
void perceptron_forward(const Matrix& m, const Matrix& c, const Matrix& x, const Matrix& batch,
                        Matrix& z);
void perceptron_backward(const Matrix& m, const Matrix& delta, const Matrix& x, const Matrix& batch,
                         Matrix& dm, Matrix& dc, Matrix& dx);
}  // namespace serial

namespace parallel {
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);
void perceptron_forward(const Matrix& m, const Matrix& c, const Matrix& x, const Matrix& batch,
                        Matrix& z);
void perceptron_backward(const Matrix& m, const Matrix& delta, const Matrix& x, const Matrix& batch,
                         Matrix& dm, Matrix& dc, Matrix& dx);
}  // namespace parallel

// out = a * b
void matmul(const Matrix& a, const Matrix& b, Matrix& out);
// out = a^T * b
void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out);

// z_i = m * [x_i ; batch_i] + c for every row i. m is d x (d + b), c is 1 x d.
void perceptron_forward(const Matrix& m, const Matrix& c, const Matrix& x, const Matrix& batch,
                        Matrix& z);

// Reverse of perceptron_forward for row gradients delta = dL/dz:
//   dm = sum_i delta_i [x_i ; batch_i]^T,  dc = sum_i delta_i,  dx_i = m[:, :d]^T delta_i.
// Agent sums run in ascending row order.
void perceptron_backward(const Matrix& m, const Matrix& delta, const Matrix& x, const Matrix& batch,
                         Matrix& dm, Matrix& dc, Matrix& dx);

// Runs fn(i) for i in [0, n); iterations must write disjoint outputs.
template <class Fn>
void for_each_index(std::size_t n, Fn&& fn) {
  if (backend() == Backend::parallel && parallel_available()) {
    const long long count = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < count; ++i) fn(static_cast<std::size_t>(i));
  } else {
    for (std::size_t i = 0; i < n; ++i) fn(i);
  }
}

}  // namespace surf::kernels
