#pragma once

#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "structvec/tensor.hpp"

namespace structvec::testing {

struct GradCheckResult {
  bool ok = true;
  double worst_abs_err = 0.0;
  std::string worst_where;
};

// Central finite differences against reverse-mode gradients. `run` must
// rebuild the computation from the current parameter values and return the
// scalar loss; when do_backward is set it must also run backward so that
// gradients accumulate into the parameters.
inline GradCheckResult gradcheck(std::vector<Param<double>*> params,
                                 const std::function<double(bool)>& run,
                                 double step = 1e-5, double rtol = 1e-4,
                                 double atol = 1e-6) {
  for (auto* p : params) p->zero_grad();
  run(true);
  std::vector<std::vector<double>> analytic;
  analytic.reserve(params.size());
  for (auto* p : params) analytic.push_back(p->grad.data);

  GradCheckResult res;
  for (std::size_t pi = 0; pi < params.size(); ++pi) {
    Param<double>& p = *params[pi];
    for (std::size_t i = 0; i < p.value.numel(); ++i) {
      const double saved = p.value.data[i];
      p.value.data[i] = saved + step;
      const double up = run(false);
      p.value.data[i] = saved - step;
      const double down = run(false);
      p.value.data[i] = saved;
      const double fd = (up - down) / (2.0 * step);
      const double an = analytic[pi][i];
      const double err = std::abs(fd - an);
      const double tol = atol + rtol * std::max(std::abs(fd), std::abs(an));
      if (err > res.worst_abs_err) {
        res.worst_abs_err = err;
        res.worst_where = p.name + "[" + std::to_string(i) + "] analytic=" +
                          std::to_string(an) + " fd=" + std::to_string(fd);
      }
      if (err > tol) res.ok = false;
    }
  }
  return res;
}

}  // namespace structvec::testing
