#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace mvam {

// Documents x labels scores with their binary truth, both row-major.
struct PredictionSet {
  std::size_t docs = 0;
  std::size_t labels = 0;
  std::vector<double> probabilities;
  std::vector<std::uint8_t> truth;
  double threshold = 0.5;  // score >= threshold counts as predicted

  void validate() const;
  double score(std::size_t doc, std::size_t label) const {
    return probabilities[doc * labels + label];
  }
  bool positive(std::size_t doc, std::size_t label) const {
    return truth[doc * labels + label] != 0;
  }
};

struct LabelCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;

  friend bool operator==(const LabelCounts&, const LabelCounts&) = default;
};

enum class Averaging { kMicro, kMacro };

std::vector<LabelCounts> confusion_counts(const PredictionSet& pred);

// Pooled 2TP / (2TP + FP + FN); 0 when the denominator is 0.
double micro_f1(std::span<const LabelCounts> counts);
// Mean of per-label F1 over every label; a label with TP = FP = FN = 0
// contributes 0.
double macro_f1(std::span<const LabelCounts> counts);

// Rank-statistic AUC with ties worth one half. Micro pools every
// (doc, label) pair. Macro averages labels that have at least one positive
// and one negative document, skipping the rest; MetricError when none does.
double roc_auc(const PredictionSet& pred, Averaging mode);

// Mean over documents of |top-n labels in truth| / n. Ties in score go to the
// lower label index.
double precision_at_n(const PredictionSet& pred, std::size_t n);

struct MetricsReport {
  double macro_auc = 0.0;
  double micro_auc = 0.0;
  double macro_f1 = 0.0;
  double micro_f1 = 0.0;
  std::vector<std::pair<std::size_t, double>> precision_at;
  std::vector<LabelCounts> counts;

  std::optional<double> p_at(std::size_t n) const;
};

MetricsReport evaluate_all(const PredictionSet& pred,
                           std::span<const std::size_t> n_list);

// One `name=value` line per metric, 4 fractional digits.
std::string format_report(const MetricsReport& report);
MetricsReport parse_report(std::string_view text);

}  // namespace mvam
