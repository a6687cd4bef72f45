#include "mvam/grad_check.hpp"

#include <algorithm>
#include <cmath>

#include "mvam/error.hpp"

namespace mvam {

bool GradCheckReport::passed() const {
  return std::all_of(entries.begin(), entries.end(),
                     [](const GradCheckEntry& e) { return e.passed; });
}

double GradCheckReport::max_relative_error() const {
  double worst = 0.0;
  for (const auto& e : entries) worst = std::max(worst, e.max_relative_error);
  return worst;
}

double relative_error(double analytic, double numeric, double floor) {
  const double denom =
      std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

namespace {

double finite_loss(const std::function<Tensor()>& loss_fn) {
  NoGradGuard no_grad;
  const double value = loss_fn().item();
  if (!std::isfinite(value)) {
    throw NumericError("grad_check: loss is not finite");
  }
  return value;
}

}  // namespace

GradCheckReport grad_check(const std::function<Tensor()>& loss_fn,
                           std::span<const NamedTensor> params, double step,
                           double tolerance) {
  if (!(step >= 1e-7 && step <= 1e-3)) {
    throw ConfigError("grad_check: step must lie in [1e-7, 1e-3], got " +
                      std::to_string(step));
  }
  zero_grads(params);
  Tensor loss = loss_fn();
  if (!std::isfinite(loss.item())) {
    throw NumericError("grad_check: loss is not finite");
  }
  backward(loss);

  GradCheckReport report;
  report.step = step;
  report.tolerance = tolerance;
  for (const NamedTensor& p : params) {
    Tensor t = p.tensor;
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    GradCheckEntry entry{p.name, t.size(), 0.0, true};
    auto values = t.mutable_data();
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double saved = values[i];
      values[i] = saved + step;
      const double up = finite_loss(loss_fn);
      values[i] = saved - step;
      const double down = finite_loss(loss_fn);
      values[i] = saved;
      const double numeric = (up - down) / (2.0 * step);
      entry.max_relative_error = std::max(
          entry.max_relative_error, relative_error(analytic[i], numeric));
    }
    entry.passed = entry.max_relative_error < tolerance;
    report.entries.push_back(std::move(entry));
  }
  zero_grads(params);
  return report;
}

}  // namespace mvam
