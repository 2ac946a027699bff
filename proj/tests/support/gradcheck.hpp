#pragma once

// Central finite-difference oracle. It only evaluates the loss function, so it
// is independent of every backward implementation it is used to check.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "oncoabs/numcore/tape.hpp"

namespace oncoabs::oracle {

struct GroupError {
  std::string name;
  double rel_error = 0.0;
  double analytic_norm = 0.0;
};

/// ||a - n|| / max(||a||, ||n||), or 0 when both are (numerically) zero.
inline double relative_error(const std::vector<double>& a, const std::vector<double>& n) {
  double d = 0.0, na = 0.0, nn = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    d += (a[i] - n[i]) * (a[i] - n[i]);
    na += a[i] * a[i];
    nn += n[i] * n[i];
  }
  const double denom = std::max(std::sqrt(na), std::sqrt(nn));
  if (denom < 1e-12) return 0.0;
  return std::sqrt(d) / denom;
}

/// `loss` evaluates the scalar loss for the current parameter values.
/// `analytic` fills each parameter's grad. At most `max_elements` entries per
/// parameter are probed, evenly strided.
inline std::vector<GroupError> check_gradients(num::ParameterSet<double>& params,
                                               const std::function<double()>& loss,
                                               const std::function<void()>& analytic, double step = 1e-5,
                                               std::size_t max_elements = 4000) {
  params.zero_grad();
  analytic();
  std::vector<GroupError> out;
  for (auto& p : params) {
    std::vector<double> a, n;
    const std::size_t count = p.value.size();
    const std::size_t stride = std::max<std::size_t>(1, count / max_elements);
    for (std::size_t k = 0; k < count; k += stride) {
      const double saved = p.value[k];
      p.value[k] = saved + step;
      const double up = loss();
      p.value[k] = saved - step;
      const double down = loss();
      p.value[k] = saved;
      a.push_back(p.grad[k]);
      n.push_back((up - down) / (2.0 * step));
    }
    double an = 0.0;
    for (double x : a) an += x * x;
    out.push_back({p.name, relative_error(a, n), std::sqrt(an)});
  }
  return out;
}

}  // namespace oncoabs::oracle
