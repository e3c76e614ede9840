#pragma once

#include "lamarl/nn/tape.hpp"

#include <functional>
#include <string>
#include <vector>

namespace lamarl::nn {

struct GradCheckResult {
  Real max_rel_error = 0;
  std::string worst_param;
  Index worst_index = -1;
  Real worst_analytic = 0;
  Real worst_numeric = 0;
  std::size_t entries_checked = 0;
};

/// Compares reverse-mode gradients of `loss` against central differences.
///
/// `loss` must build a fresh computation on the supplied tape and return a 1x1
/// node. Relative error is |a - n| / max(|a|, |n|, floor); the floor keeps
/// entries whose true gradient is ~0 from dominating through rounding noise.
/// `max_entries_per_param` = 0 checks every entry.
GradCheckResult check_gradients(const std::vector<ParamArray*>& params, const std::function<Var(Tape&)>& loss,
                                Real step = 1e-4, Real floor = 1e-6, std::size_t max_entries_per_param = 0);

}  // namespace lamarl::nn
