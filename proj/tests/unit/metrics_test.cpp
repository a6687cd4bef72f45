#include <gtest/gtest.h>

#include <cmath>

#include "mvam/error.hpp"
#include "mvam/metrics.hpp"
#include "oracles.hpp"

namespace mvam {
namespace {

using testing::Rng;

PredictionSet make(std::size_t docs, std::size_t labels, std::vector<double> scores,
                   std::vector<std::uint8_t> truth) {
  PredictionSet p;
  p.docs = docs;
  p.labels = labels;
  p.probabilities = std::move(scores);
  p.truth = std::move(truth);
  return p;
}

TEST(ConfusionCounts, Examples) {
  PredictionSet p = make(2, 2, {0.9, 0.8, 0.7, 0.1}, {1, 0, 1, 1});
  auto counts = confusion_counts(p);
  ASSERT_EQ(counts.size(), 2u);
  EXPECT_EQ(counts[0], (LabelCounts{2, 0, 0}));
  EXPECT_EQ(counts[1], (LabelCounts{0, 1, 1}));
  EXPECT_NEAR(micro_f1(counts), 4.0 / 6.0, 1e-15);
  EXPECT_DOUBLE_EQ(macro_f1(counts), 0.5);

  PredictionSet perfect = make(2, 2, {1, 0, 1, 1}, {1, 0, 1, 1});
  for (const LabelCounts& c : confusion_counts(perfect)) {
    EXPECT_EQ(c.fp, 0u);
    EXPECT_EQ(c.fn, 0u);
  }
  EXPECT_EQ(micro_f1(confusion_counts(perfect)), 1.0);
  EXPECT_EQ(macro_f1(confusion_counts(perfect)), 1.0);

  PredictionSet silent = make(2, 2, {0, 0, 0, 0}, {1, 0, 1, 1});
  auto zero = confusion_counts(silent);
  EXPECT_EQ(zero[0], (LabelCounts{0, 0, 2}));
  EXPECT_EQ(zero[1], (LabelCounts{0, 0, 1}));
  EXPECT_EQ(micro_f1(zero), 0.0);
  EXPECT_EQ(macro_f1(zero), 0.0);
}

TEST(ConfusionCounts, ThresholdIsInclusive) {
  PredictionSet p = make(1, 2, {0.5, 0.4999999}, {1, 1});
  auto counts = confusion_counts(p);
  EXPECT_EQ(counts[0].tp, 1u);
  EXPECT_EQ(counts[1].fn, 1u);
}

TEST(MacroF1, EmptyLabelCountsAsZero) {
  PredictionSet p = make(2, 2, {0.9, 0.1, 0.9, 0.1}, {1, 0, 1, 0});
  EXPECT_DOUBLE_EQ(macro_f1(confusion_counts(p)), 0.5);
  EXPECT_EQ(micro_f1(confusion_counts(p)), 1.0);
}

TEST(RocAuc, Examples) {
  PredictionSet ranked = make(3, 1, {0.9, 0.4, 0.6}, {1, 0, 1});
  EXPECT_EQ(roc_auc(ranked, Averaging::kMicro), 1.0);
  EXPECT_EQ(roc_auc(ranked, Averaging::kMacro), 1.0);

  PredictionSet flat = make(2, 2, {0.3, 0.3, 0.3, 0.3}, {1, 0, 0, 1});
  EXPECT_EQ(roc_auc(flat, Averaging::kMicro), 0.5);
  EXPECT_EQ(roc_auc(flat, Averaging::kMacro), 0.5);

  PredictionSet reversed = make(2, 1, {0.1, 0.9}, {1, 0});
  EXPECT_EQ(roc_auc(reversed, Averaging::kMicro), 0.0);
}

TEST(RocAuc, MacroSkipsDegenerateLabels) {
  // Label 1 is positive everywhere and contributes nothing.
  PredictionSet p = make(3, 2, {0.9, 0.1, 0.2, 0.5, 0.8, 0.3}, {1, 1, 0, 1, 1, 1});
  EXPECT_EQ(roc_auc(p, Averaging::kMacro), 1.0);

  PredictionSet none = make(2, 2, {0.1, 0.2, 0.3, 0.4}, {1, 0, 1, 0});
  try {
    roc_auc(none, Averaging::kMacro);
    FAIL() << "expected MetricError";
  } catch (const MetricError& e) {
    EXPECT_NE(std::string(e.what()).find("2 labels"), std::string::npos) << e.what();
  }
  PredictionSet all_pos = make(1, 2, {0.1, 0.2}, {1, 1});
  EXPECT_THROW(roc_auc(all_pos, Averaging::kMicro), MetricError);
}

TEST(PrecisionAtN, Examples) {
  PredictionSet p = make(1, 3, {0.9, 0.2, 0.7}, {1, 0, 0});
  EXPECT_DOUBLE_EQ(precision_at_n(p, 2), 0.5);
  EXPECT_EQ(precision_at_n(p, 1), 1.0);

  PredictionSet full = make(1, 3, {0.1, 0.5, 0.3}, {1, 1, 1});
  for (std::size_t n = 1; n <= 3; ++n) EXPECT_EQ(precision_at_n(full, n), 1.0);

  PredictionSet mixed = make(2, 2, {0.9, 0.1, 0.9, 0.1}, {1, 0, 0, 0});
  EXPECT_DOUBLE_EQ(precision_at_n(mixed, 1), 0.5);

  EXPECT_THROW(precision_at_n(p, 4), ConfigError);
  EXPECT_THROW(precision_at_n(p, 0), ConfigError);
}

TEST(PrecisionAtN, TiesGoToLowerLabelIndex) {
  PredictionSet p = make(1, 4, {0.5, 0.5, 0.5, 0.5}, {0, 0, 1, 1});
  EXPECT_EQ(precision_at_n(p, 2), 0.0);
  PredictionSet q = make(1, 4, {0.5, 0.5, 0.5, 0.5}, {1, 1, 0, 0});
  EXPECT_EQ(precision_at_n(q, 2), 1.0);
}

TEST(PredictionSet, ValidationRejectsBadInput) {
  EXPECT_THROW(make(2, 2, {0.1, 0.2, 0.3}, {0, 0, 0, 0}).validate(), DataError);
  EXPECT_THROW(make(1, 2, {0.1, 0.2}, {0, 2}).validate(), DataError);
  EXPECT_THROW(evaluate_all(make(1, 2, {0.1, 0.2}, {0, 2}), std::vector<std::size_t>{1}),
               DataError);
}

class MetricsOracle : public ::testing::TestWithParam<std::size_t> {};

TEST_P(MetricsOracle, RandomMatricesMatchBruteForce) {
  Rng rng(1000 + GetParam());
  for (int round = 0; round < 20; ++round) {
    const std::size_t ties = round % 3 == 0 ? 5 : 0;
    PredictionSet p = testing::random_predictions(rng, 50, 20, ties);
    const std::vector<std::size_t> ns = {1, 5, 8, 15, 20};
    MetricsReport r = evaluate_all(p, ns);
    EXPECT_NEAR(r.micro_auc, testing::oracle_micro_auc(p), 1e-12);
    EXPECT_NEAR(r.macro_auc, testing::oracle_macro_auc(p), 1e-12);
    EXPECT_EQ(r.micro_f1, testing::oracle_micro_f1(p));
    EXPECT_NEAR(r.macro_f1, testing::oracle_macro_f1(p), 1e-12);
    for (const auto& [n, v] : r.precision_at) {
      EXPECT_NEAR(v, testing::oracle_p_at_n(p, n), 1e-12) << "n=" << n;
    }
    for (double v : {r.micro_auc, r.macro_auc, r.micro_f1, r.macro_f1}) {
      EXPECT_GE(v, 0.0);
      EXPECT_LE(v, 1.0);
    }
    MetricsReport again = evaluate_all(p, ns);
    EXPECT_EQ(format_report(again), format_report(r));
  }
}

INSTANTIATE_TEST_SUITE_P(Seeds, MetricsOracle, ::testing::Range<std::size_t>(0, 5));

TEST(MetricsProperties, AucInvariantUnderIncreasingTransform) {
  Rng rng(21);
  for (int round = 0; round < 50; ++round) {
    PredictionSet p = testing::random_predictions(rng, 30, 6, round % 2 == 0 ? 4 : 0);
    double lo = 1.0;
    for (double s : p.probabilities) lo = std::min(lo, s);
    PredictionSet q = p;
    for (double& s : q.probabilities) s = (s - lo) * (s - lo) / 4.0;
    EXPECT_EQ(roc_auc(p, Averaging::kMicro), roc_auc(q, Averaging::kMicro));
    EXPECT_EQ(roc_auc(p, Averaging::kMacro), roc_auc(q, Averaging::kMacro));
  }
}

TEST(MetricsProperties, PrecisionBoundedByPositivesPerDocument) {
  Rng rng(22);
  for (int round = 0; round < 200; ++round) {
    PredictionSet p = testing::random_predictions(rng, 1, 12, round % 4);
    std::size_t m = 0;
    for (auto t : p.truth) m += t;
    for (std::size_t n = 1; n <= 12; ++n) {
      EXPECT_LE(precision_at_n(p, n), static_cast<double>(m) / n + 1e-15);
    }
  }
}

TEST(MetricsProperties, MacroInvariantUnderLabelReordering) {
  Rng rng(23);
  for (int round = 0; round < 50; ++round) {
    PredictionSet p = testing::random_predictions(rng, 25, 8);
    std::vector<std::size_t> perm(8);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng.engine());
    PredictionSet q = p;
    for (std::size_t d = 0; d < 25; ++d) {
      for (std::size_t l = 0; l < 8; ++l) {
        q.probabilities[d * 8 + l] = p.score(d, perm[l]);
        q.truth[d * 8 + l] = p.truth[d * 8 + perm[l]];
      }
    }
    EXPECT_NEAR(roc_auc(p, Averaging::kMacro), roc_auc(q, Averaging::kMacro), 1e-12);
    EXPECT_NEAR(macro_f1(confusion_counts(p)), macro_f1(confusion_counts(q)), 1e-12);
    EXPECT_EQ(micro_f1(confusion_counts(p)), micro_f1(confusion_counts(q)));
    EXPECT_EQ(roc_auc(p, Averaging::kMicro), roc_auc(q, Averaging::kMicro));
  }
}

TEST(MetricsReport, FormatsFourDigitsAndParsesBack) {
  MetricsReport r;
  r.macro_auc = 0.91234;
  r.micro_auc = 1.0;
  r.macro_f1 = 0.5;
  r.micro_f1 = 2.0 / 3.0;
  r.precision_at = {{5, 0.25}, {15, 0.123456}};
  const std::string text = format_report(r);
  EXPECT_EQ(text,
            "macro_auc=0.9123\nmicro_auc=1.0000\nmacro_f1=0.5000\nmicro_f1=0.6667\n"
            "p_at_5=0.2500\np_at_15=0.1235\n");
  MetricsReport back = parse_report(text);
  EXPECT_DOUBLE_EQ(back.macro_auc, 0.9123);
  EXPECT_DOUBLE_EQ(back.micro_f1, 0.6667);
  ASSERT_EQ(back.precision_at.size(), 2u);
  EXPECT_EQ(back.precision_at[1].first, 15u);
  EXPECT_EQ(back.p_at(15), 0.1235);
  EXPECT_FALSE(back.p_at(8).has_value());
  EXPECT_EQ(format_report(back), text);
}

TEST(MetricsReport, ParseErrorsCarryLineNumbers) {
  try {
    parse_report("macro_auc=0.5\nbogus\n");
    FAIL() << "expected DataError";
  } catch (const DataError& e) {
    EXPECT_EQ(e.line(), 2u);
  }
  EXPECT_THROW(parse_report("weird=0.1\n"), DataError);
  EXPECT_THROW(parse_report("macro_auc=abc\n"), DataError);
  EXPECT_THROW(parse_report("p_at_x=0.1\n"), DataError);
}

}  // namespace
}  // namespace mvam
