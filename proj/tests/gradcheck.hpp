#pragma once

// Central finite-difference gradient checking.

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "msf/autograd.hpp"
#include "msf/params.hpp"

namespace testing {

struct GradCheckResult {
  std::string worst_name;
  double worst_relative_error = 0.0;
  int64_t checked = 0;
};

// Relative error of one parameter tensor: ||analytic - numeric|| /
// max(||analytic||, ||numeric||), with a floor so all-zero gradients compare
// absolutely.
inline double relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn = 0.0;
  for (size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn += numeric[i] * numeric[i];
  }
  return std::sqrt(diff) / std::max({std::sqrt(na), std::sqrt(nn), 1e-8});
}

// `loss` rebuilds the graph from the current parameter values and returns a
// one-element Var.
inline GradCheckResult check_gradients(const msf::ParamList& params, const std::function<msf::Var()>& loss,
                                       double eps = 1e-3) {
  msf::zero_grads(params);
  msf::backward(loss());
  std::vector<std::vector<double>> analytic;
  for (const auto& p : params) analytic.push_back(p.var.grad().vec());

  GradCheckResult result;
  for (size_t k = 0; k < params.size(); ++k) {
    msf::Var v = params[k].var;
    auto& values = v.mutable_value();
    std::vector<double> numeric(static_cast<size_t>(values.size()));
    for (int64_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      double plus, minus;
      {
        msf::NoGradGuard guard;
        values[i] = saved + eps;
        plus = loss().value()[0];
        values[i] = saved - eps;
        minus = loss().value()[0];
      }
      values[i] = saved;
      numeric[static_cast<size_t>(i)] = (plus - minus) / (2.0 * eps);
    }
    const double err = relative_error(analytic[k], numeric);
    result.checked += values.size();
    if (err >= result.worst_relative_error) {
      result.worst_relative_error = err;
      result.worst_name = params[k].name;
    }
  }
  msf::zero_grads(params);
  return result;
}

}  // namespace testing
