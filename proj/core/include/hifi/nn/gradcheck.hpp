#pragma once

#include <cmath>
#include <functional>

#include "hifi/common.hpp"
#include "hifi/nn/tensor.hpp"

namespace hifi::nn {

struct GradCheckResult {
  double max_rel_err = 0.0;
  bool pass = false;
  int coords_checked = 0;
  std::string worst;  // where the worst mismatch occurred
};

/// Compares reverse-mode gradients of a scalar function against central
/// finite differences (step 1e-5 scaled by |x|). Relative error uses an
/// absolute floor of 1: |a-fd| / max(1, |a|, |fd|).
///
/// f must rebuild its graph from the given tensors on every call, reading
/// their current values. Inputs with requires_grad are checked; when
/// max_coords_per_input > 0, at most that many coordinates are sampled per
/// input (deterministically from `seed`), otherwise all coordinates run.
inline GradCheckResult grad_check(
    const std::function<Tensor64(std::vector<Tensor64>&)>& f, std::vector<Tensor64> inputs,
    double tol, int max_coords_per_input = 0, std::uint64_t seed = 1234) {
  auto eval = [&]() -> double {
    NoGradGuard ng;
    auto out = f(inputs);
    if (out.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
    return out.item();
  };

  // Analytic pass.
  for (auto& in : inputs) in.zero_grad();
  auto root = f(inputs);
  if (root.numel() != 1) throw ShapeError("grad_check: f must be scalar-valued");
  if (!std::isfinite(root.item()))
    throw DiagnosticError("grad_check: non-finite forward value at root");
  backward(root);

  std::vector<std::vector<double>> analytic;
  for (auto& in : inputs) {
    if (!in.requires_grad()) {
      analytic.emplace_back();
      continue;
    }
    std::vector<double> g(in.numel(), 0.0);
    if (in.has_grad()) g = in.grad_values();
    for (std::size_t j = 0; j < g.size(); ++j)
      if (!std::isfinite(g[j]))
        throw DiagnosticError("grad_check: non-finite gradient in input '" + in.name() +
                              "' at flat index " + std::to_string(j));
    analytic.push_back(std::move(g));
  }

  GradCheckResult res;
  Rng rng(seed);
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    auto& in = inputs[i];
    if (!in.requires_grad()) continue;
    std::size_t n = in.numel();
    std::vector<std::size_t> coords;
    if (max_coords_per_input > 0 && n > static_cast<std::size_t>(max_coords_per_input)) {
      for (int c = 0; c < max_coords_per_input; ++c)
        coords.push_back(static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(n) - 1)));
    } else {
      coords.resize(n);
      for (std::size_t j = 0; j < n; ++j) coords[j] = j;
    }
    for (std::size_t j : coords) {
      double old = in.data()[j];
      double h = 1e-5 * std::max(1.0, std::abs(old));
      in.data()[j] = old + h;
      double fp = eval();
      in.data()[j] = old - h;
      double fm = eval();
      in.data()[j] = old;
      double fd = (fp - fm) / (2.0 * h);
      double a = analytic[i][j];
      double rel = std::abs(a - fd) / std::max({1.0, std::abs(a), std::abs(fd)});
      ++res.coords_checked;
      if (rel > res.max_rel_err) {
        res.max_rel_err = rel;
        res.worst = "input " + std::to_string(i) +
                    (in.name().empty() ? "" : " (" + in.name() + ")") + " coord " +
                    std::to_string(j) + ": analytic=" + std::to_string(a) +
                    " fd=" + std::to_string(fd);
      }
    }
  }
  res.pass = res.max_rel_err < tol;
  return res;
}

}  // namespace hifi::nn
