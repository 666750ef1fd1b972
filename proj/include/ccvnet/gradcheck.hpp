#pragma once

// Central finite-difference verification of the analytic gradients.

#include "ccvnet/autodiff.hpp"
#include "ccvnet/rng.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace ccvnet {

struct GradcheckOptions {
  std::uint64_t seed = 1;
  double epsilon = 1e-5;
  double tolerance = 1e-4;
  /// Entries probed per tensor; larger tensors are sampled at random.
  std::size_t max_entries = 64;
};

struct GradcheckResult {
  std::string op;
  double max_rel_error = 0.0;
  std::size_t entries_checked = 0;
  /// Probes dropped because a non-differentiable point lay within +-epsilon.
  std::size_t entries_skipped = 0;
  bool passed = false;
};

/// Relative error ||a - n|| / (||a|| + ||n||) per tensor, maximised over
/// `wrt`. `loss` must rebuild the graph from the current leaf values.
/// Entries whose difference quotient changes between eps and eps/2 straddle
/// a kink and are skipped.
GradcheckResult check_gradients(const std::string &op, const std::function<Var()> &loss,
                                const std::vector<Var> &wrt, const GradcheckOptions &opts,
                                Rng &rng);

/// Every layer type plus the four stage networks.
std::vector<GradcheckResult> run_gradcheck_suite(const GradcheckOptions &opts);

} // namespace ccvnet
