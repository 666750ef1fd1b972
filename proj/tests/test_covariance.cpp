#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "ccvnet/covariance.hpp"
#include "ccvnet/errors.hpp"
#include "oracles.hpp"

#include <cmath>

using namespace ccvnet;

namespace {

Trial make_trial(Tensor data) { return Trial{std::move(data), 0, "s", "t"}; }

Trial random_trial(std::mt19937_64 &gen, std::size_t c, std::size_t t, double scale = 1.0) {
  return make_trial(oracle::random_tensor({c, t}, gen, scale));
}

double quadratic_form(const Tensor &m, const std::vector<double> &x) {
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i)
    for (std::size_t j = 0; j < x.size(); ++j)
      s += x[i] * m.at(i, j) * x[j];
  return s;
}

} // namespace

TEST_CASE("ccv examples") {
  SUBCASE("constant channels give zeros") {
    const CovMatrix m = ccv(make_trial(Tensor::matrix({{2, 2, 2}, {-1, -1, -1}})));
    for (double v : m.values.data())
      CHECK(v == 0.0);
  }
  SUBCASE("identical channels") {
    const CovMatrix m = ccv(make_trial(Tensor::matrix({{1, 2, 3, 4}, {1, 2, 3, 4}})));
    for (double v : m.values.data())
      CHECK(std::abs(v - 5.0 / 3.0) < 1e-12);
  }
  SUBCASE("scaled channel") {
    const CovMatrix m = ccv(make_trial(Tensor::matrix({{1, 2, 3, 4}, {2, 4, 6, 8}})));
    CHECK(std::abs(m.values.at(0, 0) - 5.0 / 3.0) < 1e-10);
    CHECK(std::abs(m.values.at(0, 1) - 10.0 / 3.0) < 1e-10);
    CHECK(std::abs(m.values.at(1, 0) - 10.0 / 3.0) < 1e-10);
    CHECK(std::abs(m.values.at(1, 1) - 20.0 / 3.0) < 1e-10);
    CHECK(m.lag == 0);
  }
}

TEST_CASE("ccv matches the textbook definition on random trials") {
  std::mt19937_64 gen(21);
  std::uniform_int_distribution<std::size_t> cdist(2, 8), tdist(2, 64);
  for (int k = 0; k < 100; ++k) {
    const Trial trial = random_trial(gen, cdist(gen), tdist(gen), 3.0);
    const CovMatrix m = ccv(trial);
    for (std::size_t i = 0; i < trial.channels(); ++i)
      for (std::size_t j = 0; j < trial.channels(); ++j)
        CHECK(std::abs(m.values.at(i, j) - oracle::covariance_entry(trial.data, i, j, 0)) < 1e-10);
  }
}

TEST_CASE("ccv at lag zero is symmetric and positive semi-definite") {
  std::mt19937_64 gen(22);
  std::normal_distribution<double> normal;
  for (int k = 0; k < 20; ++k) {
    // Fewer samples than channels makes the matrix rank deficient.
    const std::size_t c = 8, t = k % 2 == 0 ? 5 : 64;
    const CovMatrix m = ccv(random_trial(gen, c, t));
    for (std::size_t i = 0; i < c; ++i)
      for (std::size_t j = 0; j < c; ++j)
        CHECK(m.values.at(i, j) == m.values.at(j, i));
    for (int v = 0; v < 100; ++v) {
      std::vector<double> x(c);
      double norm2 = 0.0;
      for (auto &e : x) {
        e = normal(gen);
        norm2 += e * e;
      }
      CHECK(quadratic_form(m.values, x) >= -1e-9 * norm2);
    }
  }
}

TEST_CASE("ccv is quadratic in the signal scale") {
  std::mt19937_64 gen(23);
  for (double alpha : {-3.0, 0.01, 7.5}) {
    const Trial trial = random_trial(gen, 5, 40);
    Trial scaled = trial;
    for (auto &v : scaled.data.storage())
      v *= alpha;
    const CovMatrix a = ccv(trial), b = ccv(scaled);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const double want = alpha * alpha * a.values[i];
      CHECK(std::abs(b.values[i] - want) <= 1e-9 * std::max(std::abs(want), 1e-300));
    }
  }
}

TEST_CASE("ccv is invariant to per-channel offsets") {
  std::mt19937_64 gen(24);
  const Trial trial = random_trial(gen, 4, 30);
  Trial shifted = trial;
  for (std::size_t c = 0; c < 4; ++c)
    for (std::size_t t = 0; t < 30; ++t)
      shifted.data.at(c, t) += 100.0 * static_cast<double>(c + 1);
  const CovMatrix a = ccv(trial), b = ccv(shifted);
  for (std::size_t i = 0; i < a.values.size(); ++i)
    CHECK(std::abs(a.values[i] - b.values[i]) < 1e-9);
}

TEST_CASE("lagged ccv") {
  std::mt19937_64 gen(25);
  const Trial trial = random_trial(gen, 4, 20);
  for (int tau : {-5, -1, 1, 3, 18}) {
    const CovMatrix m = ccv(trial, tau);
    CHECK(m.lag == tau);
    for (std::size_t i = 0; i < 4; ++i)
      for (std::size_t j = 0; j < 4; ++j)
        CHECK(std::abs(m.values.at(i, j) - oracle::covariance_entry(trial.data, i, j, tau)) <
              1e-10);
  }

  SUBCASE("a delayed copy peaks at its delay") {
    Tensor x({2, 40});
    std::normal_distribution<double> normal;
    for (std::size_t t = 0; t < 40; ++t)
      x.at(0, t) = normal(gen);
    for (std::size_t t = 3; t < 40; ++t)
      x.at(1, t) = x.at(0, t - 3);
    const Trial delayed = make_trial(x);
    CHECK(ccv(delayed, 3).values.at(0, 1) > ccv(delayed, 0).values.at(0, 1));
    CHECK(ccv(delayed, 3).values.at(0, 1) > ccv(delayed, -3).values.at(0, 1));
  }
}

TEST_CASE("ccv errors") {
  std::mt19937_64 gen(26);
  const Trial trial = random_trial(gen, 3, 10);
  CHECK_THROWS_AS(ccv(trial, 10), ConfigError);
  CHECK_THROWS_AS(ccv(trial, -10), ConfigError);
  CHECK_THROWS_AS(ccv(trial, 9), DataError);
  CHECK_THROWS_AS(ccv(make_trial(Tensor({2, 1}))), DataError);
  CHECK_THROWS_AS(ccv(make_trial(Tensor({6}))), DimensionError);

  Trial bad = trial;
  bad.data.at(1, 4) = std::nan("");
  CHECK_THROWS_AS(ccv(bad), DataError);
}

TEST_CASE("standardize") {
  std::mt19937_64 gen(27);
  auto random_set = [&](std::size_t n, double scale) {
    std::vector<CovMatrix> out;
    for (std::size_t k = 0; k < n; ++k)
      out.push_back(ccv(random_trial(gen, 4, 16, scale)));
    return out;
  };

  SUBCASE("a single matrix against itself is all zeros") {
    const auto set = random_set(1, 1.0);
    const auto [z, stats] = standardize(set);
    for (double v : z[0].values.data())
      CHECK(v == 0.0);
    for (double s : stats.stddev.data())
      CHECK(s == kStdFloor);
  }

  SUBCASE("z-scores have zero mean and unit spread") {
    const auto set = random_set(50, 2.0);
    const auto [z, stats] = standardize(set);
    const std::size_t n = set.size();
    for (std::size_t e = 0; e < z[0].values.size(); ++e) {
      double mean = 0.0;
      for (const auto &m : z)
        mean += m.values[e];
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (const auto &m : z)
        var += (m.values[e] - mean) * (m.values[e] - mean);
      const double sd = std::sqrt(var / static_cast<double>(n));
      CHECK(std::abs(mean) < 1e-9);
      CHECK(std::abs(sd - 1.0) < 1e-6);
    }
  }

  SUBCASE("stats from one set are applied verbatim to another") {
    const auto a = random_set(30, 1.0);
    const auto b = random_set(30, 5.0);
    const auto [za, stats] = standardize(a);
    const auto [zb_with_a, same_stats] = standardize(b, stats);
    const auto [zb_self, own] = standardize(b);
    CHECK(same_stats.mean == stats.mean);
    CHECK(same_stats.stddev == stats.stddev);

    double max_diff = 0.0;
    for (std::size_t k = 0; k < b.size(); ++k)
      for (std::size_t e = 0; e < b[k].values.size(); ++e) {
        const double want = (b[k].values[e] - stats.mean[e]) / stats.stddev[e];
        CHECK(std::abs(zb_with_a[k].values[e] - want) < 1e-12);
        max_diff = std::max(max_diff, std::abs(zb_with_a[k].values[e] - zb_self[k].values[e]));
      }
    CHECK(max_diff > 0.1);
    CHECK(apply_standardize(b[3], stats).values == zb_with_a[3].values);
  }

  SUBCASE("errors") {
    CHECK_THROWS_AS(standardize({}), DataError);
    auto mixed = random_set(2, 1.0);
    mixed.push_back(ccv(random_trial(gen, 3, 16)));
    CHECK_THROWS_AS(standardize(mixed), DimensionError);
  }
}
