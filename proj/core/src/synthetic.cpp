#include "mvam/synthetic.hpp"

#include <algorithm>
#include <random>
#include <set>

#include "mvam/error.hpp"

namespace mvam {

namespace {

void check_probability(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(what) + " must lie in [0, 1], got " +
                      std::to_string(p));
  }
}

std::string padded(const char* prefix, std::size_t value, std::size_t width) {
  std::string digits = std::to_string(value);
  if (digits.size() < width) digits.insert(0, width - digits.size(), '0');
  return prefix + digits;
}

std::size_t digits_for(std::size_t count) {
  return std::to_string(count > 0 ? count - 1 : 0).size();
}

}  // namespace

double SyntheticSpec::rate_of(LabelId label) const {
  if (label_base_rates.empty()) return base_rate;
  return label_base_rates.at(static_cast<std::size_t>(label));
}

void SyntheticSpec::validate() const {
  if (num_labels == 0) throw ConfigError("synthetic: num_labels must be >= 1");
  if (triggers_per_label == 0) {
    throw ConfigError("synthetic: triggers_per_label must be >= 1");
  }
  if (num_labels * triggers_per_label >= vocab_size) {
    throw ConfigError("synthetic: " + std::to_string(num_labels) + " labels x " +
                      std::to_string(triggers_per_label) +
                      " triggers leave no filler words in a vocabulary of " +
                      std::to_string(vocab_size));
  }
  if (min_length == 0 || min_length > max_length) {
    throw ConfigError("synthetic: need 1 <= min_length <= max_length");
  }
  check_probability(base_rate, "synthetic: base_rate");
  if (!label_base_rates.empty() && label_base_rates.size() != num_labels) {
    throw ConfigError("synthetic: label_base_rates needs one rate per label");
  }
  for (double r : label_base_rates) check_probability(r, "synthetic: label base rate");
  check_probability(trigger_emission, "synthetic: trigger_emission");
  check_probability(noise_rate, "synthetic: noise_rate");
  auto check_label = [this](LabelId l) {
    if (l < 0 || static_cast<std::size_t>(l) >= num_labels) {
      throw ConfigError("synthetic: label " + std::to_string(l) + " out of range");
    }
  };
  for (const CoOccurrence& c : cooccurrences) {
    check_label(c.given);
    check_label(c.implied);
    check_probability(c.probability, "synthetic: co-occurrence probability");
  }
  for (LabelId l : silent_labels) check_label(l);
}

std::string synthetic_trigger_token(LabelId label, std::size_t index) {
  return "trig" + std::to_string(label) + "_" + std::to_string(index);
}

std::string synthetic_label_name(LabelId label, std::size_t num_labels) {
  return padded("L", static_cast<std::size_t>(label), digits_for(num_labels));
}

SyntheticCorpus generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const std::size_t num_triggers = spec.num_labels * spec.triggers_per_label;
  const std::size_t num_filler = spec.vocab_size - num_triggers;

  std::vector<std::string> words;
  words.reserve(spec.vocab_size);
  for (std::size_t l = 0; l < spec.num_labels; ++l) {
    for (std::size_t j = 0; j < spec.triggers_per_label; ++j) {
      words.push_back(synthetic_trigger_token(static_cast<LabelId>(l), j));
    }
  }
  const std::size_t filler_width = digits_for(num_filler);
  for (std::size_t i = 0; i < num_filler; ++i) {
    words.push_back(padded("w", i, filler_width));
  }
  std::vector<std::string> label_names;
  for (std::size_t l = 0; l < spec.num_labels; ++l) {
    label_names.push_back(synthetic_label_name(static_cast<LabelId>(l), spec.num_labels));
  }
  const std::set<LabelId> silent(spec.silent_labels.begin(), spec.silent_labels.end());

  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> length_dist(spec.min_length,
                                                         spec.max_length);
  std::uniform_int_distribution<std::size_t> filler_dist(0, num_filler - 1);
  std::uniform_int_distribution<std::size_t> trigger_pick(0, spec.triggers_per_label - 1);

  SyntheticCorpus out;
  const std::pair<Split, std::size_t> plan[] = {{Split::kTrain, spec.train_docs},
                                                {Split::kVal, spec.val_docs},
                                                {Split::kTest, spec.test_docs}};
  for (const auto& [split, count] : plan) {
    const std::size_t width = std::max<std::size_t>(5, digits_for(count));
    for (std::size_t d = 0; d < count; ++d) {
      std::vector<bool> active(spec.num_labels, false);
      for (std::size_t l = 0; l < spec.num_labels; ++l) {
        active[l] = unit(rng) < spec.rate_of(static_cast<LabelId>(l));
      }
      for (const CoOccurrence& c : spec.cooccurrences) {
        const bool fire = unit(rng) < c.probability;
        if (active[static_cast<std::size_t>(c.given)] && fire) {
          active[static_cast<std::size_t>(c.implied)] = true;
        }
      }

      std::vector<std::string> tokens;
      for (std::size_t l = 0; l < spec.num_labels; ++l) {
        if (silent.contains(static_cast<LabelId>(l))) continue;
        if (active[l]) {
          for (std::size_t j = 0; j < spec.triggers_per_label; ++j) {
            if (unit(rng) < spec.trigger_emission) {
              tokens.push_back(words[l * spec.triggers_per_label + j]);
            }
          }
        } else if (unit(rng) < spec.noise_rate) {
          tokens.push_back(words[l * spec.triggers_per_label + trigger_pick(rng)]);
        }
      }
      const std::size_t length = std::max(length_dist(rng), tokens.size());
      while (tokens.size() < length) {
        tokens.push_back(words[num_triggers + filler_dist(rng)]);
      }
      std::shuffle(tokens.begin(), tokens.end(), rng);

      RawDocument doc;
      doc.id = std::string(to_string(split)) + "-" +
               padded("", d, width);
      doc.tokens = std::move(tokens);
      doc.split = split;
      for (std::size_t l = 0; l < spec.num_labels; ++l) {
        if (active[l]) doc.labels.push_back(label_names[l]);
      }
      out.raw.documents.push_back(std::move(doc));
    }
  }

  Vocabulary vocab(words);
  LabelIndex labels(label_names);
  LoadOptions options;
  options.max_length = std::max<std::size_t>(spec.max_length + num_triggers, 1);
  out.corpus = index_corpus(out.raw, vocab, labels, options);
  return out;
}

Tensor gaussian_embeddings(std::size_t vocab_size, std::size_t dim, double stddev,
                           std::uint64_t seed) {
  if (!(stddev > 0.0)) throw ConfigError("embedding stddev must be > 0");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, stddev);
  std::vector<double> values(vocab_size * dim, 0.0);
  for (std::size_t i = dim; i < values.size(); ++i) values[i] = normal(rng);
  return Tensor::from({vocab_size, dim}, values);
}

}  // namespace mvam
