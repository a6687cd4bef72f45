#pragma once

#include <cstdint>
#include <vector>

#include "mvam/data.hpp"

namespace mvam {

// If `given` is active, `implied` is switched on with `probability`.
struct CoOccurrence {
  LabelId given = 0;
  LabelId implied = 0;
  double probability = 1.0;
};

// A corpus with planted structure. Every label owns `triggers_per_label`
// words that no other label or filler position uses; an active label emits
// each of its trigger words with probability `trigger_emission`. Filler
// positions draw uniformly from the remaining vocabulary.
struct SyntheticSpec {
  std::size_t vocab_size = 2000;  // word types: triggers + filler
  std::size_t num_labels = 30;
  std::size_t train_docs = 5000;
  std::size_t val_docs = 500;
  std::size_t test_docs = 500;
  std::size_t min_length = 40;
  std::size_t max_length = 80;
  std::size_t triggers_per_label = 2;
  double base_rate = 0.2;
  std::vector<double> label_base_rates;  // overrides base_rate when non-empty
  std::vector<CoOccurrence> cooccurrences;  // applied in order
  // Labels that never emit triggers; detectable only through co-occurrence.
  std::vector<LabelId> silent_labels;
  double trigger_emission = 0.95;
  // Per inactive label and document: probability that one of its trigger
  // words appears anyway.
  double noise_rate = 0.0;
  std::uint64_t seed = 7;

  void validate() const;
  double rate_of(LabelId label) const;
};

struct SyntheticCorpus {
  RawCorpus raw;
  Corpus corpus;
};

std::string synthetic_trigger_token(LabelId label, std::size_t index);
std::string synthetic_label_name(LabelId label, std::size_t num_labels);

// N(0, stddev) rows standing in for pretrained vectors; the PAD row is zero.
Tensor gaussian_embeddings(std::size_t vocab_size, std::size_t dim, double stddev,
                           std::uint64_t seed);

// Deterministic for a fixed spec (including its seed).
SyntheticCorpus generate_synthetic(const SyntheticSpec& spec);

}  // namespace mvam
