#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mvam/model.hpp"
#include "mvam/synthetic.hpp"
#include "mvam/training.hpp"

namespace mvam::cli {

struct DataSection {
  std::string corpus;      // required by train
  std::string vocab;       // built from the train split when empty
  std::string labels;      // built from the corpus when empty
  std::string embeddings;  // optional pretrained vectors, dim = model.embed_dim
  std::size_t min_freq = 1;
  std::size_t max_length = 2500;
  bool drop_unknown_labels = false;
  std::size_t top_labels = 0;  // keep the k most frequent labels, 0 keeps all
};

struct SynthSection {
  SyntheticSpec spec;
  std::size_t embedding_dim = 0;  // > 0 also writes gaussian vectors
  double embedding_stddev = 1.0;
};

struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  DataSection data;
  SynthSection synthetic;
  std::string out = "out";
  std::uint64_t seed = 0;
};

nlohmann::json to_json(const RunConfig& config);
// Fields missing from `j` keep the value already in `config`; unknown keys
// and ill-typed values throw ConfigError.
void apply_json(RunConfig& config, const nlohmann::json& j);

// `key=value` with a dotted key, e.g. `model.conv_channels=64`. The value is
// parsed as JSON and falls back to a plain string.
void apply_override(RunConfig& config, const std::string& assignment);

struct ConfigSources {
  std::optional<std::filesystem::path> file;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out;
};

// defaults <- file <- --set overrides <- --seed / --out.
RunConfig resolve_config(RunConfig defaults, const ConfigSources& sources);

// The effective config with every seed replaced by the run seed.
TrainConfig effective_train_config(const RunConfig& config);
SyntheticSpec effective_synthetic_spec(const RunConfig& config);

void write_effective_config(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace mvam::cli
