#include "surf/kernels.hpp"

#include <atomic>
#include <cassert>

#include "surf/error.hpp"

namespace surf::kernels {
namespace {

std::atomic<Backend> g_backend{Backend::parallel};

void require(bool ok, const char* what) {
  if (!ok) throw ParameterError(what);
}

void check_perceptron(const Matrix& m, const Matrix& c, const Matrix& x, const Matrix& batch) {
  require(x.rows() == batch.rows(), "perceptron: row count mismatch");
  require(m.rows() == x.cols(), "perceptron: weight rows must equal d");
  require(m.cols() == x.cols() + batch.cols(), "perceptron: weight cols must equal d + b");
  require(c.size() == m.rows(), "perceptron: bias length must equal d");
}

}  // namespace

void set_backend(Backend b) noexcept { g_backend.store(b); }
Backend backend() noexcept { return g_backend.load(); }

bool parallel_available() noexcept {
#ifdef _OPENMP
  return true;
#else
  return false;
#endif
}

// Serial references: textbook loops, one output element at a time.
namespace serial {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  out = Matrix(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      out(i, j) = s;
    }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.rows() == b.rows(), "matmul_at_b: inner dimension mismatch");
  out = Matrix(a.cols(), b.cols());
  for (std::size_t i = 0; i < a.cols(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.rows(); ++k) s += a(k, i) * b(k, j);
      out(i, j) = s;
    }
}

void perceptron_forward(const Matrix& m, const Matrix& c, const Matrix& x, const Matrix& batch,
                        Matrix& z) {
  check_perceptron(m, c, x, batch);
  const std::size_t d = x.cols();
  const std::size_t b = batch.cols();
  z = Matrix(x.rows(), d);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t r = 0; r < d; ++r) {
      double s = 0.0;
      for (std::size_t q = 0; q < d; ++q) s += m(r, q) * x(i, q);
      for (std::size_t q = 0; q < b; ++q) s += m(r, d + q) * batch(i, q);
      z(i, r) = s + c.flat()[r];
    }
}

void perceptron_backward(const Matrix& m, const Matrix& delta, const Matrix& x,
                         const Matrix& batch, Matrix& dm, Matrix& dc, Matrix& dx) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t b = batch.cols();
  require(delta.rows() == n && delta.cols() == d, "perceptron_backward: delta shape");
  require(m.rows() == d && m.cols() == d + b, "perceptron_backward: weight shape");
  dm = Matrix(d, d + b);
  dc = Matrix(1, d);
  dx = Matrix(n, d);
  for (std::size_t r = 0; r < d; ++r) {
    for (std::size_t q = 0; q < d + b; ++q) {
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += delta(i, r) * (q < d ? x(i, q) : batch(i, q - d));
      dm(r, q) = s;
    }
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += delta(i, r);
    dc(0, r) = s;
  }
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t q = 0; q < d; ++q) {
      double s = 0.0;
      for (std::size_t r = 0; r < d; ++r) s += m(r, q) * delta(i, r);
      dx(i, q) = s;
    }
}

}  // namespace serial

// OpenMP versions: rows are distributed over threads and each output element
// accumulates its terms in the same ascending order as the serial reference.
namespace parallel {

void matmul(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.cols() == b.rows(), "matmul: inner dimension mismatch");
  out = Matrix(a.rows(), b.cols());
  const long long rows = static_cast<long long>(a.rows());
  const std::size_t inner = a.cols();
  const std::size_t cols = b.cols();
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    double* o = out.data() + static_cast<std::size_t>(i) * cols;
    const double* ar = a.data() + static_cast<std::size_t>(i) * inner;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aik = ar[k];
      const double* br = b.data() + k * cols;
      for (std::size_t j = 0; j < cols; ++j) o[j] += aik * br[j];
    }
  }
}

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  require(a.rows() == b.rows(), "matmul_at_b: inner dimension mismatch");
  out = Matrix(a.cols(), b.cols());
  const long long rows = static_cast<long long>(a.cols());
  const std::size_t inner = a.rows();
  const std::size_t cols = b.cols();
#pragma omp parallel for schedule(static)
  for (long long i = 0; i < rows; ++i) {
    double* o = out.data() + static_cast<std::size_t>(i) * cols;
    for (std::size_t k = 0; k < inner; ++k) {
      const double aki = a(k, static_cast<std::size_t>(i));
      const double* br = b.data() + k * cols;
      for (std::size_t j = 0; j < cols; ++j) o[j] += aki * br[j];
    }
  }
}

void perceptron_forward(const Matrix& m, const Matrix& c, const Matrix& x, const Matrix& batch,
                        Matrix& z) {
  check_perceptron(m, c, x, batch);
  const std::size_t d = x.cols();
  const std::size_t b = batch.cols();
  const std::size_t width = d + b;
  z = Matrix(x.rows(), d);
  const long long rows = static_cast<long long>(x.rows());
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < rows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    const double* xi = x.data() + i * d;
    const double* bi = batch.data() + i * b;
    for (std::size_t r = 0; r < d; ++r) {
      const double* mr = m.data() + r * width;
      double s = 0.0;
      for (std::size_t q = 0; q < d; ++q) s += mr[q] * xi[q];
      for (std::size_t q = 0; q < b; ++q) s += mr[d + q] * bi[q];
      z(i, r) = s + c.data()[r];
    }
  }
}

void perceptron_backward(const Matrix& m, const Matrix& delta, const Matrix& x,
                         const Matrix& batch, Matrix& dm, Matrix& dc, Matrix& dx) {
  const std::size_t n = x.rows();
  const std::size_t d = x.cols();
  const std::size_t b = batch.cols();
  const std::size_t width = d + b;
  require(delta.rows() == n && delta.cols() == d, "perceptron_backward: delta shape");
  require(m.rows() == d && m.cols() == width, "perceptron_backward: weight shape");
  dm = Matrix(d, width);
  dc = Matrix(1, d);
  dx = Matrix(n, d);
  const long long drows = static_cast<long long>(d);
#pragma omp parallel for schedule(static)
  for (long long rr = 0; rr < drows; ++rr) {
    const auto r = static_cast<std::size_t>(rr);
    double* out = dm.data() + r * width;
    double sc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double g = delta(i, r);
      const double* xi = x.data() + i * d;
      const double* bi = batch.data() + i * b;
      for (std::size_t q = 0; q < d; ++q) out[q] += g * xi[q];
      for (std::size_t q = 0; q < b; ++q) out[d + q] += g * bi[q];
      sc += g;
    }
    dc.data()[r] = sc;
  }
  const long long nrows = static_cast<long long>(n);
#pragma omp parallel for schedule(static)
  for (long long ii = 0; ii < nrows; ++ii) {
    const auto i = static_cast<std::size_t>(ii);
    double* out = dx.data() + i * d;
    const double* di = delta.data() + i * d;
    for (std::size_t r = 0; r < d; ++r) {
      const double g = di[r];
      const double* mr = m.data() + r * width;
      for (std::size_t q = 0; q < d; ++q) out[q] += mr[q] * g;
    }
  }
}

}  // namespace parallel

#define SURF_DISPATCH(fn, ...)                                          \
  if (backend() == Backend::parallel && parallel_available()) {         \
    parallel::fn(__VA_ARGS__);                                          \
  } else {                                                              \
    serial::fn(__VA_ARGS__);                                            \
  }

void matmul(const Matrix& a, const Matrix& b, Matrix& out) { SURF_DISPATCH(matmul, a, b, out) }

void matmul_at_b(const Matrix& a, const Matrix& b, Matrix& out) {
  SURF_DISPATCH(matmul_at_b, a, b, out)
}

void perceptron_forward(const Matrix& m, const Matrix& c, const Matrix& x, const Matrix& batch,
                        Matrix& z) {
  SURF_DISPATCH(perceptron_forward, m, c, x, batch, z)
}

void perceptron_backward(const Matrix& m, const Matrix& delta, const Matrix& x,
                         const Matrix& batch, Matrix& dm, Matrix& dc, Matrix& dx) {
  SURF_DISPATCH(perceptron_backward, m, delta, x, batch, dm, dc, dx)
}

#undef SURF_DISPATCH

}  // namespace surf::kernels
