#include "lamarl/nn/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace lamarl::nn {

GradCheckResult check_gradients(const std::vector<ParamArray*>& params, const std::function<Var(Tape&)>& loss,
                                Real step, Real floor, std::size_t max_entries_per_param) {
  for (ParamArray* p : params) p->zero_grad();
  {
    Tape t;
    const Var l = loss(t);
    t.backward(l);
  }
  std::vector<Matrix> analytic;
  analytic.reserve(params.size());
  for (ParamArray* p : params) analytic.push_back(p->grad);

  const auto eval = [&loss]() {
    Tape t;
    return loss(t).scalar();
  };

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    ParamArray& p = *params[pi];
    if (p.frozen) continue;
    const Index n = p.value.size();
    Index stride = 1;
    if (max_entries_per_param > 0 && static_cast<std::size_t>(n) > max_entries_per_param)
      stride = (n + static_cast<Index>(max_entries_per_param) - 1) / static_cast<Index>(max_entries_per_param);
    for (Index k = 0; k < n; k += stride) {
      Real& x = p.value.data()[k];
      const Real saved = x;
      x = saved + step;
      const Real up = eval();
      x = saved - step;
      const Real down = eval();
      x = saved;
      const Real numeric = (up - down) / (2 * step);
      const Real a = analytic[pi].data()[k];
      const Real rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor});
      ++res.entries_checked;
      if (rel > res.max_rel_error || res.worst_index < 0) {
        res.max_rel_error = std::max(res.max_rel_error, rel);
        if (rel >= res.max_rel_error) {
          res.worst_param = p.name;
          res.worst_index = k;
          res.worst_analytic = a;
          res.worst_numeric = numeric;
        }
      }
    }
  }
  for (ParamArray* p : params) p->zero_grad();
  return res;
}

}  // namespace lamarl::nn
