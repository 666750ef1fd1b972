#pragma once

// Test-only reference computations, written independently of the library's
// own code paths.

#include "ccvnet/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>

namespace oracle {

using ccvnet::Tensor;

/// Elementwise central difference of f with respect to every entry of x.
inline Tensor numeric_gradient(const std::function<double()> &f, Tensor &x, double eps = 1e-5) {
  Tensor g(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + eps;
    const double up = f();
    x[i] = saved - eps;
    const double down = f();
    x[i] = saved;
    g[i] = (up - down) / (2.0 * eps);
  }
  return g;
}

/// max_i |a_i - n_i| / max(|a_i|, |n_i|, floor).
inline double max_rel_error(const Tensor &a, const Tensor &n, double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(n[i]), floor});
    worst = std::max(worst, std::abs(a[i] - n[i]) / scale);
  }
  return worst;
}

/// Textbook sample cross-covariance at lag tau, one entry at a time.
inline double covariance_entry(const Tensor &x, std::size_t i, std::size_t j, int tau) {
  const long T = static_cast<long>(x.dim(1));
  const long shift = std::abs(tau);
  const long n = T - shift;
  std::vector<double> a, b;
  for (long t = 0; t < T; ++t) {
    const long u = t + tau;
    if (u < 0 || u >= T)
      continue;
    a.push_back(x.at(i, static_cast<std::size_t>(t)));
    b.push_back(x.at(j, static_cast<std::size_t>(u)));
  }
  double ma = 0.0, mb = 0.0;
  for (long k = 0; k < n; ++k) {
    ma += a[k];
    mb += b[k];
  }
  ma /= static_cast<double>(n);
  mb /= static_cast<double>(n);
  double s = 0.0;
  for (long k = 0; k < n; ++k)
    s += (a[k] - ma) * (b[k] - mb);
  return s / static_cast<double>(n - 1);
}

inline Tensor random_tensor(ccvnet::Shape shape, std::mt19937_64 &gen, double scale = 1.0) {
  std::normal_distribution<double> dist(0.0, scale);
  Tensor t(std::move(shape));
  for (auto &v : t.storage())
    v = dist(gen);
  return t;
}

/// Random tensor with every entry at least min_abs away from zero.
inline Tensor random_away_from_zero(ccvnet::Shape shape, std::mt19937_64 &gen,
                                    double min_abs) {
  std::normal_distribution<double> dist(0.0, 1.0);
  Tensor t(std::move(shape));
  for (auto &v : t.storage()) {
    do
      v = dist(gen);
    while (std::abs(v) < min_abs);
  }
  return t;
}

} // namespace oracle
