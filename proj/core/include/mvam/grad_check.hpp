#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvam/tensor.hpp"

namespace mvam {

struct GradCheckEntry {
  std::string name;
  std::size_t coordinates = 0;
  double max_relative_error = 0.0;
  bool passed = false;
};

struct GradCheckReport {
  double step = 0.0;
  double tolerance = 0.0;
  std::vector<GradCheckEntry> entries;

  bool passed() const;
  double max_relative_error() const;
};

// |analytic - numeric| / max(|analytic|, |numeric|, floor)
double relative_error(double analytic, double numeric, double floor = 1e-8);

// Compares reverse-mode gradients of `loss_fn` against central differences
// over every coordinate of every tensor in `params`. `loss_fn` must rebuild
// its graph from the current parameter values on each call. The step must lie
// in [1e-7, 1e-3]; a non-finite loss throws NumericError.
GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<const NamedTensor> params, double step,
                           double tolerance = 1e-4);

}  // namespace mvam
