#pragma once

#include "ccvnet/tensor.hpp"

#include <optional>
#include <string>
#include <vector>

namespace ccvnet {

/// One EEG recording: data is [channels x samples].
struct Trial {
  Tensor data;
  int label = 0;
  std::string subject_id;
  std::string trial_id;

  std::size_t channels() const { return data.dim(0); }
  std::size_t samples() const { return data.dim(1); }
};

/// Channel cross-covariance of one trial. Symmetric PSD when lag == 0.
struct CovMatrix {
  Tensor values; // [C x C]
  int lag = 0;

  std::size_t channels() const { return values.dim(0); }
};

/// Sample cross-covariance between channel i at t and channel j at t + lag
/// over the overlapping window, centred on each window's own mean and
/// normalised by (n - 1) with n = T - |lag|.
CovMatrix ccv(const Trial &trial, int lag = 0);

/// Per-entry mean and standard deviation used for z-scoring.
struct StandardizeStats {
  Tensor mean;
  Tensor stddev;
};

inline constexpr double kStdFloor = 1e-8;

/// Fits stats on `mats` (population std, floored at 1e-8) unless `stats` is
/// given, in which case they are applied verbatim.
std::pair<std::vector<CovMatrix>, StandardizeStats>
standardize(const std::vector<CovMatrix> &mats,
            const std::optional<StandardizeStats> &stats = std::nullopt);

CovMatrix apply_standardize(const CovMatrix &m, const StandardizeStats &stats);

} // namespace ccvnet
