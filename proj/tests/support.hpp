#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>

#include "surf/data.hpp"
#include "surf/matrix.hpp"

namespace surf::testing {

inline FLDataset small_dataset(std::size_t n, std::size_t p, std::size_t c, std::size_t m_train,
                               std::size_t m_test, std::uint64_t seed, double alpha = 1.0,
                               double class_sep = 1.0) {
  SyntheticConfig cfg;
  cfg.num_agents = n;
  cfg.num_features = p;
  cfg.num_classes = c;
  cfg.m_train = m_train;
  cfg.m_test = m_test;
  cfg.alpha = alpha;
  cfg.class_sep = class_sep;
  cfg.means_seed = seed + 1000;
  return gen_dataset(cfg, class_means(cfg), seed);
}

inline Matrix random_matrix(std::size_t rows, std::size_t cols, std::uint64_t seed,
                            double scale = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, scale);
  Matrix m(rows, cols);
  for (double& v : m.flat()) v = normal(rng);
  return m;
}

// Five-point central difference of f at x along the coordinate *x.
template <class F>
double fd5(F&& f, double& x, double h) {
  const double x0 = x;
  x = x0 + 2 * h;
  const double f2 = f();
  x = x0 + h;
  const double f1 = f();
  x = x0 - h;
  const double fm1 = f();
  x = x0 - 2 * h;
  const double fm2 = f();
  x = x0;
  return (-f2 + 8 * f1 - 8 * fm1 + fm2) / (12 * h);
}

// Relative error with a floor on the denominator so exact zeros compare absolutely.
inline double rel_err(double analytic, double numeric, double floor = 1e-6) {
  return std::abs(analytic - numeric) /
         std::max({std::abs(analytic), std::abs(numeric), floor});
}

}  // namespace surf::testing
