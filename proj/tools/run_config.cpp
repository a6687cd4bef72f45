#include "run_config.hpp"

#include <fstream>

#include "mvam/error.hpp"

namespace mvam::cli {

using nlohmann::json;

namespace {

json spec_to_json(const SyntheticSpec& s) {
  json co = json::array();
  for (const CoOccurrence& c : s.cooccurrences) {
    co.push_back({{"given", c.given}, {"implied", c.implied}, {"probability", c.probability}});
  }
  return {{"vocab_size", s.vocab_size},
          {"num_labels", s.num_labels},
          {"train_docs", s.train_docs},
          {"val_docs", s.val_docs},
          {"test_docs", s.test_docs},
          {"min_length", s.min_length},
          {"max_length", s.max_length},
          {"triggers_per_label", s.triggers_per_label},
          {"base_rate", s.base_rate},
          {"label_base_rates", s.label_base_rates},
          {"cooccurrences", co},
          {"silent_labels", s.silent_labels},
          {"trigger_emission", s.trigger_emission},
          {"noise_rate", s.noise_rate}};
}

// Reads `j[key]` into `out` when present, with the dotted path in errors.
class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  void size(const char* key, std::size_t& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw bad(key, "a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void u64(const char* key, std::uint64_t& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number_unsigned()) throw bad(key, "a non-negative integer");
      out = v->get<std::uint64_t>();
    }
  }
  void real(const char* key, double& out) const {
    if (const json* v = find(key)) {
      if (!v->is_number()) throw bad(key, "a number");
      out = v->get<double>();
    }
  }
  void flag(const char* key, bool& out) const {
    if (const json* v = find(key)) {
      if (!v->is_boolean()) throw bad(key, "true or false");
      out = v->get<bool>();
    }
  }
  void text(const char* key, std::string& out) const {
    if (const json* v = find(key)) {
      if (!v->is_string()) throw bad(key, "a string");
      out = v->get<std::string>();
    }
  }
  void sizes(const char* key, std::vector<std::size_t>& out) const {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw bad(key, "an array of integers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number_unsigned()) throw bad(key, "an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  void reals(const char* key, std::vector<double>& out) const {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw bad(key, "an array of numbers");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number()) throw bad(key, "an array of numbers");
        out.push_back(e.get<double>());
      }
    }
  }
  void labels(const char* key, std::vector<LabelId>& out) const {
    if (const json* v = find(key)) {
      if (!v->is_array()) throw bad(key, "an array of label indices");
      out.clear();
      for (const json& e : *v) {
        if (!e.is_number_integer()) throw bad(key, "an array of label indices");
        out.push_back(e.get<LabelId>());
      }
    }
  }
  const json* find(const char* key) const {
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string where(const char* key = nullptr) const {
    std::string p = path_.empty() ? std::string("config") : path_;
    if (key) p += std::string(".") + key;
    return p;
  }
  void reject_unknown(std::initializer_list<const char*> known) const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      bool ok = false;
      for (const char* k : known) ok = ok || it.key() == k;
      if (!ok) throw ConfigError("unknown config key '" + where(it.key().c_str()) + "'");
    }
  }

 private:
  ConfigError bad(const char* key, const char* expected) const {
    return ConfigError(where(key) + " must be " + expected);
  }

  const json& j_;
  std::string path_;
};

void read_model(const json& j, ModelConfig& m) {
  Reader r(j, "model");
  r.reject_unknown({"embed_dim", "conv_channels", "kernel_width", "ffn_dim", "dropout",
                    "use_positional_encoding", "use_label_attention", "activation",
                    "num_label_blocks", "norm", "norm_eps"});
  r.size("embed_dim", m.embed_dim);
  r.size("conv_channels", m.conv_channels);
  r.size("kernel_width", m.kernel_width);
  r.size("ffn_dim", m.ffn_dim);
  r.real("dropout", m.dropout);
  r.flag("use_positional_encoding", m.use_positional_encoding);
  r.flag("use_label_attention", m.use_label_attention);
  std::string text;
  r.text("activation", text);
  if (!text.empty()) m.activation = parse_activation(text);
  text.clear();
  r.text("norm", text);
  if (!text.empty()) m.norm = parse_norm_kind(text);
  r.size("num_label_blocks", m.num_label_blocks);
  r.real("norm_eps", m.norm_eps);
}

void read_train(const json& j, TrainConfig& t) {
  Reader r(j, "train");
  r.reject_unknown({"learning_rate", "beta1", "beta2", "epsilon", "batch_size", "patience",
                    "max_epochs", "early_stop_n", "report_n"});
  r.real("learning_rate", t.learning_rate);
  r.real("beta1", t.beta1);
  r.real("beta2", t.beta2);
  r.real("epsilon", t.epsilon);
  r.size("batch_size", t.batch_size);
  r.size("patience", t.patience);
  r.size("max_epochs", t.max_epochs);
  r.size("early_stop_n", t.early_stop_n);
  r.sizes("report_n", t.report_n);
}

void read_data(const json& j, DataSection& d) {
  Reader r(j, "data");
  r.reject_unknown({"corpus", "vocab", "labels", "embeddings", "min_freq", "max_length",
                    "drop_unknown_labels", "top_labels"});
  r.text("corpus", d.corpus);
  r.text("vocab", d.vocab);
  r.text("labels", d.labels);
  r.text("embeddings", d.embeddings);
  r.size("min_freq", d.min_freq);
  r.size("max_length", d.max_length);
  r.flag("drop_unknown_labels", d.drop_unknown_labels);
  r.size("top_labels", d.top_labels);
}

void read_synthetic(const json& j, SynthSection& out) {
  Reader r(j, "synthetic");
  r.reject_unknown({"vocab_size", "num_labels", "train_docs", "val_docs", "test_docs",
                    "min_length", "max_length", "triggers_per_label", "base_rate",
                    "label_base_rates", "cooccurrences", "silent_labels",
                    "trigger_emission", "noise_rate", "embedding_dim",
                    "embedding_stddev"});
  SyntheticSpec& s = out.spec;
  r.size("vocab_size", s.vocab_size);
  r.size("num_labels", s.num_labels);
  r.size("train_docs", s.train_docs);
  r.size("val_docs", s.val_docs);
  r.size("test_docs", s.test_docs);
  r.size("min_length", s.min_length);
  r.size("max_length", s.max_length);
  r.size("triggers_per_label", s.triggers_per_label);
  r.real("base_rate", s.base_rate);
  r.reals("label_base_rates", s.label_base_rates);
  r.labels("silent_labels", s.silent_labels);
  r.real("trigger_emission", s.trigger_emission);
  r.real("noise_rate", s.noise_rate);
  r.size("embedding_dim", out.embedding_dim);
  r.real("embedding_stddev", out.embedding_stddev);
  if (const json* co = r.find("cooccurrences")) {
    if (!co->is_array()) throw ConfigError("synthetic.cooccurrences must be an array");
    s.cooccurrences.clear();
    for (const json& e : *co) {
      Reader c(e, "synthetic.cooccurrences[]");
      c.reject_unknown({"given", "implied", "probability"});
      CoOccurrence rule;
      std::size_t given = 0, implied = 0;
      c.size("given", given);
      c.size("implied", implied);
      c.real("probability", rule.probability);
      rule.given = static_cast<LabelId>(given);
      rule.implied = static_cast<LabelId>(implied);
      s.cooccurrences.push_back(rule);
    }
  }
}

}  // namespace

json to_json(const RunConfig& c) {
  const ModelConfig& m = c.model;
  const TrainConfig& t = c.train;
  const DataSection& d = c.data;
  json synthetic = spec_to_json(c.synthetic.spec);
  synthetic["embedding_dim"] = c.synthetic.embedding_dim;
  synthetic["embedding_stddev"] = c.synthetic.embedding_stddev;
  return {
      {"model",
       {{"embed_dim", m.embed_dim},
        {"conv_channels", m.conv_channels},
        {"kernel_width", m.kernel_width},
        {"ffn_dim", m.ffn_dim},
        {"dropout", m.dropout},
        {"use_positional_encoding", m.use_positional_encoding},
        {"use_label_attention", m.use_label_attention},
        {"activation", std::string(to_string(m.activation))},
        {"num_label_blocks", m.num_label_blocks},
        {"norm", std::string(to_string(m.norm))},
        {"norm_eps", m.norm_eps}}},
      {"train",
       {{"learning_rate", t.learning_rate},
        {"beta1", t.beta1},
        {"beta2", t.beta2},
        {"epsilon", t.epsilon},
        {"batch_size", t.batch_size},
        {"patience", t.patience},
        {"max_epochs", t.max_epochs},
        {"early_stop_n", t.early_stop_n},
        {"report_n", t.report_n}}},
      {"data",
       {{"corpus", d.corpus},
        {"vocab", d.vocab},
        {"labels", d.labels},
        {"embeddings", d.embeddings},
        {"min_freq", d.min_freq},
        {"max_length", d.max_length},
        {"drop_unknown_labels", d.drop_unknown_labels},
        {"top_labels", d.top_labels}}},
      {"synthetic", synthetic},
      {"out", c.out},
      {"seed", c.seed},
  };
}

void apply_json(RunConfig& config, const json& j) {
  Reader r(j, "");
  r.reject_unknown({"model", "train", "data", "synthetic", "out", "seed"});
  RunConfig next = config;
  if (const json* v = r.find("model")) read_model(*v, next.model);
  if (const json* v = r.find("train")) read_train(*v, next.train);
  if (const json* v = r.find("data")) read_data(*v, next.data);
  if (const json* v = r.find("synthetic")) read_synthetic(*v, next.synthetic);
  r.text("out", next.out);
  r.u64("seed", next.seed);
  config = std::move(next);
}

void apply_override(RunConfig& config, const std::string& assignment) {
  const std::size_t eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) {
    throw ConfigError("--set expects key=value, got '" + assignment + "'");
  }
  const std::string key = assignment.substr(0, eq);
  const std::string raw = assignment.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;

  json patch = value;
  std::size_t end = key.size();
  while (true) {
    const std::size_t dot = key.rfind('.', end - 1);
    const std::size_t begin = dot == std::string::npos ? 0 : dot + 1;
    const std::string part = key.substr(begin, end - begin);
    if (part.empty()) throw ConfigError("--set: malformed key '" + key + "'");
    patch = json{{part, patch}};
    if (dot == std::string::npos) break;
    end = dot;
  }
  apply_json(config, patch);
}

RunConfig resolve_config(RunConfig config, const ConfigSources& sources) {
  if (sources.file) {
    std::ifstream in(*sources.file);
    if (!in) throw ConfigError("cannot open config file " + sources.file->string());
    json j = json::parse(in, nullptr, false);
    if (j.is_discarded()) {
      throw ConfigError("config file " + sources.file->string() + " is not valid JSON");
    }
    apply_json(config, j);
  }
  for (const std::string& o : sources.overrides) apply_override(config, o);
  if (sources.seed) config.seed = *sources.seed;
  if (sources.out) config.out = *sources.out;
  return config;
}

TrainConfig effective_train_config(const RunConfig& config) {
  TrainConfig t = config.train;
  t.seed = config.seed;
  return t;
}

SyntheticSpec effective_synthetic_spec(const RunConfig& config) {
  SyntheticSpec s = config.synthetic.spec;
  s.seed = config.seed;
  return s;
}

void write_effective_config(const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const auto path = dir / "effective_config.json";
  std::ofstream out(path);
  out << to_json(config).dump(2) << '\n';
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace mvam::cli
