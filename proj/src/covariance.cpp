#include "ccvnet/covariance.hpp"

#include "ccvnet/errors.hpp"

#include <cmath>
#include <cstdlib>

namespace ccvnet {

CovMatrix ccv(const Trial &trial, int lag) {
  if (trial.data.rank() != 2)
    throw DimensionError("ccv: trial data must be [channels x samples], got " +
                         shape_str(trial.data.shape()));
  const std::size_t channels = trial.channels();
  const std::size_t samples = trial.samples();
  const std::size_t shift = static_cast<std::size_t>(std::abs(lag));
  if (shift >= samples)
    throw ConfigError("ccv: |lag| = " + std::to_string(shift) + " must be below " +
                      std::to_string(samples) + " samples");
  const std::size_t n = samples - shift;
  if (n <= 1)
    throw DataError("ccv: overlapping window of " + std::to_string(n) +
                    " sample(s) is too short for a covariance (trial " + trial.trial_id + ")");
  if (!trial.data.all_finite())
    throw DataError("ccv: non-finite sample in trial " + trial.trial_id);

  // Channel i contributes x_i(t), channel j contributes x_j(t + lag).
  const std::size_t lead_start = lag >= 0 ? 0 : shift;
  const std::size_t lag_start = lag >= 0 ? shift : 0;

  auto window_mean = [&](std::size_t c, std::size_t start) {
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      s += trial.data.at(c, start + t);
    return s / static_cast<double>(n);
  };
  std::vector<double> lead_mean(channels), lag_mean(channels);
  for (std::size_t c = 0; c < channels; ++c) {
    lead_mean[c] = window_mean(c, lead_start);
    lag_mean[c] = lag == 0 ? lead_mean[c] : window_mean(c, lag_start);
  }

  const double norm = 1.0 / static_cast<double>(n - 1);
  auto entry = [&](std::size_t i, std::size_t j) {
    const double *xi = &trial.data.data()[i * samples + lead_start];
    const double *xj = &trial.data.data()[j * samples + lag_start];
    double s = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      s += (xi[t] - lead_mean[i]) * (xj[t] - lag_mean[j]);
    return s * norm;
  };

  CovMatrix out{Tensor({channels, channels}), lag};
  for (std::size_t i = 0; i < channels; ++i)
    for (std::size_t j = (lag == 0 ? i : 0); j < channels; ++j) {
      out.values.at(i, j) = entry(i, j);
      if (lag == 0)
        out.values.at(j, i) = out.values.at(i, j);
    }
  return out;
}

CovMatrix apply_standardize(const CovMatrix &m, const StandardizeStats &stats) {
  if (m.values.shape() != stats.mean.shape())
    throw DimensionError("standardize: matrix " + shape_str(m.values.shape()) +
                         " does not match stats " + shape_str(stats.mean.shape()));
  CovMatrix out = m;
  for (std::size_t i = 0; i < out.values.size(); ++i)
    out.values[i] = (m.values[i] - stats.mean[i]) / stats.stddev[i];
  return out;
}

std::pair<std::vector<CovMatrix>, StandardizeStats>
standardize(const std::vector<CovMatrix> &mats, const std::optional<StandardizeStats> &stats) {
  if (mats.empty())
    throw DataError("standardize: empty matrix list");

  StandardizeStats fitted;
  if (stats) {
    fitted = *stats;
  } else {
    const Shape &shape = mats.front().values.shape();
    fitted.mean = Tensor(shape);
    fitted.stddev = Tensor(shape);
    const double count = static_cast<double>(mats.size());
    for (const auto &m : mats) {
      if (m.values.shape() != shape)
        throw DimensionError("standardize: mixed matrix shapes " + shape_str(shape) + " and " +
                             shape_str(m.values.shape()));
      for (std::size_t i = 0; i < m.values.size(); ++i)
        fitted.mean[i] += m.values[i];
    }
    for (std::size_t i = 0; i < fitted.mean.size(); ++i)
      fitted.mean[i] /= count;
    for (const auto &m : mats)
      for (std::size_t i = 0; i < m.values.size(); ++i) {
        const double d = m.values[i] - fitted.mean[i];
        fitted.stddev[i] += d * d;
      }
    for (std::size_t i = 0; i < fitted.stddev.size(); ++i)
      fitted.stddev[i] = std::max(std::sqrt(fitted.stddev[i] / count), kStdFloor);
  }

  std::vector<CovMatrix> out;
  out.reserve(mats.size());
  for (const auto &m : mats)
    out.push_back(apply_standardize(m, fitted));
  return {std::move(out), std::move(fitted)};
}

} // namespace ccvnet
