#include "mvam/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <numeric>

#include "mvam/error.hpp"

namespace mvam {

void PredictionSet::validate() const {
  if (probabilities.size() != docs * labels || truth.size() != docs * labels) {
    throw DataError("prediction set: expected " + std::to_string(docs) + "x" +
                    std::to_string(labels) + " scores and truth, got " +
                    std::to_string(probabilities.size()) + " and " +
                    std::to_string(truth.size()));
  }
  for (std::uint8_t t : truth) {
    if (t > 1) throw DataError("prediction set: truth entries must be 0 or 1");
  }
}

std::vector<LabelCounts> confusion_counts(const PredictionSet& pred) {
  pred.validate();
  std::vector<LabelCounts> counts(pred.labels);
  for (std::size_t d = 0; d < pred.docs; ++d) {
    for (std::size_t l = 0; l < pred.labels; ++l) {
      const bool predicted = pred.score(d, l) >= pred.threshold;
      const bool actual = pred.positive(d, l);
      if (predicted && actual) ++counts[l].tp;
      if (predicted && !actual) ++counts[l].fp;
      if (!predicted && actual) ++counts[l].fn;
    }
  }
  return counts;
}

namespace {

double f1(std::size_t tp, std::size_t fp, std::size_t fn) {
  const std::size_t denom = 2 * tp + fp + fn;
  return denom == 0 ? 0.0 : static_cast<double>(2 * tp) / static_cast<double>(denom);
}

// Mann-Whitney statistic over (score, is_positive) pairs; nullopt when either
// class is empty.
std::optional<double> rank_auc(std::vector<std::pair<double, bool>>& items) {
  std::sort(items.begin(), items.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });
  double positive_rank_sum = 0.0;
  std::size_t positives = 0;
  for (std::size_t i = 0; i < items.size();) {
    std::size_t j = i;
    std::size_t tied_positives = 0;
    while (j < items.size() && items[j].first == items[i].first) {
      tied_positives += items[j].second ? 1 : 0;
      ++j;
    }
    // 1-based ranks i+1 .. j share their mean.
    const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
    positive_rank_sum += mean_rank * static_cast<double>(tied_positives);
    positives += tied_positives;
    i = j;
  }
  const std::size_t negatives = items.size() - positives;
  if (positives == 0 || negatives == 0) return std::nullopt;
  const double p = static_cast<double>(positives);
  const double n = static_cast<double>(negatives);
  return (positive_rank_sum - p * (p + 1.0) / 2.0) / (p * n);
}

}  // namespace

double micro_f1(std::span<const LabelCounts> counts) {
  std::size_t tp = 0, fp = 0, fn = 0;
  for (const LabelCounts& c : counts) {
    tp += c.tp;
    fp += c.fp;
    fn += c.fn;
  }
  return f1(tp, fp, fn);
}

double macro_f1(std::span<const LabelCounts> counts) {
  if (counts.empty()) return 0.0;
  double total = 0.0;
  for (const LabelCounts& c : counts) total += f1(c.tp, c.fp, c.fn);
  return total / static_cast<double>(counts.size());
}

double roc_auc(const PredictionSet& pred, Averaging mode) {
  pred.validate();
  if (mode == Averaging::kMicro) {
    std::vector<std::pair<double, bool>> items;
    items.reserve(pred.docs * pred.labels);
    for (std::size_t i = 0; i < pred.docs * pred.labels; ++i) {
      items.emplace_back(pred.probabilities[i], pred.truth[i] != 0);
    }
    auto auc = rank_auc(items);
    if (!auc) {
      throw MetricError("micro AUC needs at least one positive and one negative pair");
    }
    return *auc;
  }
  double total = 0.0;
  std::size_t valid = 0;
  std::vector<std::pair<double, bool>> items(pred.docs);
  for (std::size_t l = 0; l < pred.labels; ++l) {
    for (std::size_t d = 0; d < pred.docs; ++d) {
      items[d] = {pred.score(d, l), pred.positive(d, l)};
    }
    if (auto auc = rank_auc(items)) {
      total += *auc;
      ++valid;
    }
  }
  if (valid == 0) {
    throw MetricError("macro AUC undefined: all " + std::to_string(pred.labels) +
                      " labels lack a positive or a negative document");
  }
  return total / static_cast<double>(valid);
}

double precision_at_n(const PredictionSet& pred, std::size_t n) {
  pred.validate();
  if (n == 0 || n > pred.labels) {
    throw ConfigError("precision@" + std::to_string(n) + " needs 1 <= n <= " +
                      std::to_string(pred.labels) + " labels");
  }
  if (pred.docs == 0) return 0.0;
  std::vector<std::size_t> order(pred.labels);
  double total = 0.0;
  for (std::size_t d = 0; d < pred.docs; ++d) {
    std::iota(order.begin(), order.end(), 0);
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n),
                      order.end(), [&](std::size_t a, std::size_t b) {
                        const double sa = pred.score(d, a), sb = pred.score(d, b);
                        return sa != sb ? sa > sb : a < b;
                      });
    std::size_t hits = 0;
    for (std::size_t i = 0; i < n; ++i) hits += pred.positive(d, order[i]) ? 1 : 0;
    total += static_cast<double>(hits) / static_cast<double>(n);
  }
  return total / static_cast<double>(pred.docs);
}

std::optional<double> MetricsReport::p_at(std::size_t n) const {
  for (const auto& [k, v] : precision_at) {
    if (k == n) return v;
  }
  return std::nullopt;
}

MetricsReport evaluate_all(const PredictionSet& pred,
                           std::span<const std::size_t> n_list) {
  MetricsReport report;
  report.counts = confusion_counts(pred);
  report.micro_f1 = micro_f1(report.counts);
  report.macro_f1 = macro_f1(report.counts);
  report.micro_auc = roc_auc(pred, Averaging::kMicro);
  report.macro_auc = roc_auc(pred, Averaging::kMacro);
  for (std::size_t n : n_list) {
    report.precision_at.emplace_back(n, precision_at_n(pred, n));
  }
  return report;
}

namespace {

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

}  // namespace

std::string format_report(const MetricsReport& report) {
  std::string out;
  auto line = [&out](const std::string& key, double v) {
    out += key + "=" + fixed4(v) + "\n";
  };
  line("macro_auc", report.macro_auc);
  line("micro_auc", report.micro_auc);
  line("macro_f1", report.macro_f1);
  line("micro_f1", report.micro_f1);
  for (const auto& [n, v] : report.precision_at) line("p_at_" + std::to_string(n), v);
  return out;
}

MetricsReport parse_report(std::string_view text) {
  MetricsReport report;
  std::size_t number = 0;
  while (!text.empty()) {
    const std::size_t end = text.find('\n');
    std::string_view line = text.substr(0, end);
    text = end == std::string_view::npos ? std::string_view() : text.substr(end + 1);
    ++number;
    if (line.empty()) continue;
    const std::size_t eq = line.find('=');
    if (eq == std::string_view::npos) throw DataError("expected key=value", number);
    const std::string_view key = line.substr(0, eq);
    const std::string_view raw = line.substr(eq + 1);
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(raw.data(), raw.data() + raw.size(), value);
    if (ec != std::errc() || ptr != raw.data() + raw.size()) {
      throw DataError("malformed value '" + std::string(raw) + "'", number);
    }
    if (key == "macro_auc") {
      report.macro_auc = value;
    } else if (key == "micro_auc") {
      report.micro_auc = value;
    } else if (key == "macro_f1") {
      report.macro_f1 = value;
    } else if (key == "micro_f1") {
      report.micro_f1 = value;
    } else if (key.starts_with("p_at_")) {
      std::size_t n = 0;
      const std::string_view digits = key.substr(5);
      auto [p2, ec2] = std::from_chars(digits.data(), digits.data() + digits.size(), n);
      if (ec2 != std::errc() || p2 != digits.data() + digits.size() || n == 0) {
        throw DataError("malformed metric key '" + std::string(key) + "'", number);
      }
      report.precision_at.emplace_back(n, value);
    } else {
      throw DataError("unknown metric '" + std::string(key) + "'", number);
    }
  }
  return report;
}

}  // namespace mvam
