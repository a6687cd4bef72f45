#include "commands.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include <CLI11.hpp>

#include "mvam/error.hpp"
#include "mvam/model_check.hpp"
#include "run_config.hpp"

namespace mvam::cli {

namespace fs = std::filesystem;

namespace {

struct CommonFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::string out;

  void attach(CLI::App& app, bool with_out = true) {
    app.add_option("--config", config, "JSON run config");
    app.add_option("--set", overrides, "Override a config field, key=value")
        ->allow_extra_args(false);
    app.add_option("--seed", seed, "Run seed");
    if (with_out) app.add_option("--out", out, "Output directory");
  }

  RunConfig resolve(RunConfig defaults = {}) const {
    ConfigSources sources;
    if (!config.empty()) sources.file = config;
    sources.overrides = overrides;
    sources.seed = seed;
    if (!out.empty()) sources.out = out;
    return resolve_config(std::move(defaults), sources);
  }
};

std::string shortest(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

std::string fixed4(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

std::vector<std::size_t> parse_n_list(const std::string& text) {
  std::vector<std::size_t> out;
  std::stringstream in(text);
  for (std::string item; std::getline(in, item, ',');) {
    std::size_t n = 0;
    auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), n);
    if (ec != std::errc() || ptr != item.data() + item.size() || n == 0) {
      throw ConfigError("--n expects a comma-separated list of positive integers, got '" +
                        text + "'");
    }
    out.push_back(n);
  }
  if (out.empty()) throw ConfigError("--n is empty");
  return out;
}

std::vector<std::size_t> default_n_list(std::size_t num_labels) {
  std::vector<std::size_t> out;
  for (std::size_t n : {5, 8, 15}) {
    if (n <= num_labels) out.push_back(n);
  }
  if (out.empty()) out.push_back(num_labels);
  return out;
}

void ensure_file(const std::string& path, const char* what) {
  if (path.empty()) throw ConfigError(std::string(what) + " path is required");
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path);
}

// ---- synth ----------------------------------------------------------------

int cmd_synth(const CommonFlags& flags, std::ostream& out) {
  const RunConfig config = flags.resolve();
  const SyntheticSpec spec = effective_synthetic_spec(config);
  const SyntheticCorpus synthetic = generate_synthetic(spec);
  const fs::path dir = config.out;
  fs::create_directories(dir);
  write_effective_config(config, dir);
  write_raw_corpus(dir / "corpus.tsv", synthetic.raw);
  synthetic.corpus.vocab.save(dir / "vocab.txt");
  synthetic.corpus.labels.save(dir / "labels.txt");
  if (config.synthetic.embedding_dim > 0) {
    const Tensor table =
        gaussian_embeddings(synthetic.corpus.vocab.size(), config.synthetic.embedding_dim,
                            config.synthetic.embedding_stddev, config.seed + 1);
    save_embeddings(dir / "embeddings.txt", synthetic.corpus.vocab, table);
  }
  out << "wrote " << synthetic.raw.documents.size() << " documents ("
      << synthetic.corpus.count(Split::kTrain) << " train, "
      << synthetic.corpus.count(Split::kVal) << " val, "
      << synthetic.corpus.count(Split::kTest) << " test) to " << dir.string() << '\n';
  return kOk;
}

// ---- train ----------------------------------------------------------------

Corpus load_training_corpus(const RunConfig& config) {
  const DataSection& d = config.data;
  ensure_file(d.corpus, "data.corpus");
  RawCorpus raw = read_raw_corpus(fs::path(d.corpus));
  if (d.top_labels > 0) {
    const auto keep = most_frequent_labels(raw, d.top_labels);
    raw = restrict_labels(raw, keep, true);
  }
  Vocabulary vocab;
  if (!d.vocab.empty()) {
    ensure_file(d.vocab, "data.vocab");
    vocab = Vocabulary::load(d.vocab);
  } else {
    vocab = build_vocab(raw, d.min_freq, Split::kTrain);
  }
  LabelIndex labels;
  if (!d.labels.empty()) {
    ensure_file(d.labels, "data.labels");
    labels = LabelIndex::load(d.labels);
  } else {
    labels = build_label_index(raw);
  }
  LoadOptions options;
  options.max_length = d.max_length;
  options.drop_unknown_labels = d.drop_unknown_labels;
  Corpus corpus = index_corpus(raw, vocab, labels, options);
  corpus.rejected_empty += raw.rejected_empty;
  return corpus;
}

void print_report_line(std::ostream& out, const MetricsReport& r) {
  out << "macro_auc=" << fixed4(r.macro_auc) << " micro_auc=" << fixed4(r.micro_auc)
      << " macro_f1=" << fixed4(r.macro_f1) << " micro_f1=" << fixed4(r.micro_f1);
  for (const auto& [n, v] : r.precision_at) out << " p_at_" << n << '=' << fixed4(v);
}

int cmd_train(const CommonFlags& flags, std::ostream& out) {
  const RunConfig config = flags.resolve();
  const TrainConfig train_config = effective_train_config(config);
  train_config.validate();
  const Corpus corpus = load_training_corpus(config);
  std::optional<Tensor> pretrained;
  if (!config.data.embeddings.empty()) {
    ensure_file(config.data.embeddings, "data.embeddings");
    EmbeddingTable table = load_pretrained_embeddings(
        config.data.embeddings, corpus.vocab, config.model.embed_dim, config.seed);
    out << "embeddings: " << table.found << " found, " << table.random_rows
        << " randomly initialised\n";
    pretrained = std::move(table.table);
  }

  const fs::path dir = config.out;
  fs::create_directories(dir);
  write_effective_config(config, dir);

  TrainHooks hooks;
  hooks.on_epoch_end = [&out](const EpochRecord& r, const ModelParams&) {
    out << "epoch " << r.epoch << " loss=" << fixed4(r.train_loss)
        << " early_stop=" << fixed4(r.early_stop_metric);
    if (r.validation) {
      out << ' ';
      print_report_line(out, *r.validation);
    }
    out << '\n';
  };
  const TrainResult result = train(config.model, train_config, corpus, pretrained, hooks);

  save_checkpoint(dir / "checkpoint.mvam", result.best);
  corpus.vocab.save(dir / "vocab.txt");
  corpus.labels.save(dir / "labels.txt");
  {
    std::ofstream log(dir / "train_log.jsonl");
    write_train_log(log, result.log);
    if (!log) throw DataError("cannot write " + (dir / "train_log.jsonl").string());
  }
  out << "best epoch " << result.log.best_epoch << " of " << result.log.epochs.size()
      << " (" << result.log.stop_reason << ")\n";
  if (result.log.diverged) {
    throw NumericError("training diverged: " + result.log.stop_reason +
                       "; last good checkpoint written to " + dir.string());
  }
  return kOk;
}

// ---- eval / predict -------------------------------------------------------

struct CorpusFlags {
  std::string corpus;
  std::string vocab;
  std::string split = "test";
  std::size_t max_length = 2500;
  bool drop_unknown_labels = false;

  void attach(CLI::App& app) {
    app.add_option("--corpus", corpus, "Corpus file")->required();
    app.add_option("--vocab", vocab, "Vocabulary file (default: next to the checkpoint)");
    app.add_option("--split", split, "train | val | test");
    app.add_option("--max-length", max_length, "Truncation length");
    app.add_flag("--drop-unknown-labels", drop_unknown_labels,
                 "Ignore labels the model does not know");
  }
};

struct LoadedModel {
  Checkpoint checkpoint;
  Corpus corpus;
};

LoadedModel load_model_and_corpus(const std::string& checkpoint_path,
                                  const CorpusFlags& flags) {
  ensure_file(checkpoint_path, "checkpoint");
  ensure_file(flags.corpus, "corpus");
  LoadedModel m;
  m.checkpoint = load_checkpoint(fs::path(checkpoint_path));
  const std::string vocab_path =
      flags.vocab.empty() ? (fs::path(checkpoint_path).parent_path() / "vocab.txt").string()
                          : flags.vocab;
  ensure_file(vocab_path, "vocabulary");
  const Vocabulary vocab = Vocabulary::load(vocab_path);
  LoadOptions options;
  options.max_length = flags.max_length;
  options.drop_unknown_labels = flags.drop_unknown_labels;
  m.corpus = load_corpus(flags.corpus, vocab, LabelIndex(m.checkpoint.labels), options);
  return m;
}

// `id<TAB>s_1 ... s_L` rows; an optional `#labels<TAB>names...` line fixes the
// column order, otherwise `labels` does.
PredictionSet read_predictions(const fs::path& path, const Corpus& corpus, Split split,
                               const LabelIndex& labels) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open predictions file " + path.string());
  std::vector<std::size_t> column_to_label(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) column_to_label[i] = i;
  std::map<std::string, std::vector<double>> rows;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (line.starts_with("#labels\t")) {
      std::istringstream names(line.substr(8));
      std::vector<std::size_t> order;
      for (std::string name; names >> name;) {
        auto id = labels.find(name);
        if (!id) throw DataError("unknown label '" + name + "' in header", number);
        order.push_back(static_cast<std::size_t>(*id));
      }
      if (order.size() != labels.size()) {
        throw DataError("header names " + std::to_string(order.size()) + " of " +
                            std::to_string(labels.size()) + " labels",
                        number);
      }
      column_to_label = order;
      continue;
    }
    if (line.front() == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos) throw DataError("expected id<TAB>scores", number);
    std::string id = line.substr(0, tab);
    std::istringstream fields(line.substr(tab + 1));
    std::vector<std::string> items;
    for (std::string item; fields >> item;) items.push_back(item);
    if (items.size() != labels.size()) {
      throw DataError("expected " + std::to_string(labels.size()) + " scores, got " +
                          std::to_string(items.size()),
                      number);
    }
    std::vector<double> scores(labels.size(), 0.0);
    for (std::size_t column = 0; column < items.size(); ++column) {
      const std::string& item = items[column];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
      if (ec != std::errc() || ptr != item.data() + item.size()) {
        throw DataError("malformed score '" + item + "'", number);
      }
      scores[column_to_label[column]] = v;
    }
    if (!rows.emplace(std::move(id), std::move(scores)).second) {
      throw DataError("duplicate document id", number);
    }
  }

  const auto docs = corpus.split(split);
  PredictionSet pred;
  pred.docs = docs.size();
  pred.labels = labels.size();
  for (const Document* doc : docs) {
    auto it = rows.find(doc->id);
    if (it == rows.end()) throw DataError("no prediction for document '" + doc->id + "'");
    pred.probabilities.insert(pred.probabilities.end(), it->second.begin(),
                              it->second.end());
    std::vector<std::uint8_t> truth(labels.size(), 0);
    for (LabelId l : doc->labels) truth[static_cast<std::size_t>(l)] = 1;
    pred.truth.insert(pred.truth.end(), truth.begin(), truth.end());
  }
  return pred;
}

int cmd_eval(const std::string& checkpoint_path, const std::string& predictions_path,
             const std::string& labels_path, const CorpusFlags& flags,
             const std::string& n_text, std::ostream& out) {
  const Split split = parse_split(flags.split);
  if (checkpoint_path.empty() == predictions_path.empty()) {
    throw ConfigError("eval needs exactly one of --checkpoint or --predictions");
  }
  PredictionSet pred;
  if (!checkpoint_path.empty()) {
    const LoadedModel m = load_model_and_corpus(checkpoint_path, flags);
    pred = predict(m.checkpoint, m.corpus, split);
  } else {
    ensure_file(predictions_path, "predictions");
    ensure_file(flags.corpus, "corpus");
    const RawCorpus raw = read_raw_corpus(fs::path(flags.corpus));
    LabelIndex labels;
    if (!labels_path.empty()) {
      ensure_file(labels_path, "labels");
      labels = LabelIndex::load(labels_path);
    } else {
      labels = build_label_index(raw);
    }
    LoadOptions options;
    options.max_length = flags.max_length;
    options.drop_unknown_labels = flags.drop_unknown_labels;
    const Corpus corpus = index_corpus(raw, build_vocab(raw, 1), labels, options);
    pred = read_predictions(predictions_path, corpus, split, labels);
  }
  const std::vector<std::size_t> n_list =
      n_text.empty() ? default_n_list(pred.labels) : parse_n_list(n_text);
  out << format_report(evaluate_all(pred, n_list));
  return kOk;
}

int cmd_predict(const std::string& checkpoint_path, const CorpusFlags& flags,
                std::optional<std::size_t> top_flag, bool attention, bool scores,
                std::ostream& out) {
  const Split split = parse_split(flags.split);
  const LoadedModel m = load_model_and_corpus(checkpoint_path, flags);
  const std::size_t L = m.checkpoint.labels.size();
  const std::size_t top = top_flag.value_or(std::min<std::size_t>(5, L));
  if (top == 0 || top > L) {
    throw ConfigError("--top must lie in [1, " + std::to_string(L) + "]");
  }
  if (scores) {
    out << "#labels\t";
    for (std::size_t l = 0; l < L; ++l) out << (l ? " " : "") << m.checkpoint.labels[l];
    out << '\n';
  }
  const auto docs = m.corpus.split(split);
  NoGradGuard no_grad;
  constexpr std::size_t kBatch = 64;
  std::vector<std::size_t> order(L);
  for (std::size_t start = 0; start < docs.size(); start += kBatch) {
    const std::size_t end = std::min(docs.size(), start + kBatch);
    const Batch batch = make_batch(
        std::span<const Document* const>(docs.data() + start, end - start), L);
    const ForwardOutput fo = forward(batch, m.checkpoint.params, m.checkpoint.config);
    for (std::size_t r = 0; r < batch.rows; ++r) {
      out << batch.documents[r]->id << '\t';
      if (scores) {
        for (std::size_t l = 0; l < L; ++l) {
          out << (l ? " " : "") << shortest(fo.probabilities.at(r, l));
        }
        out << '\n';
        continue;
      }
      for (std::size_t l = 0; l < L; ++l) order[l] = l;
      std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        return fo.probabilities.at(r, a) > fo.probabilities.at(r, b);
      });
      const std::size_t length = batch.row_length(r);
      for (std::size_t i = 0; i < top; ++i) {
        const std::size_t l = order[i];
        out << (i ? " " : "") << m.checkpoint.labels[l] << ':'
            << fixed4(fo.probabilities.at(r, l));
        if (attention) {
          const Tensor& alpha = fo.attention[r];
          std::size_t best = 0;
          for (std::size_t p = 1; p < length; ++p) {
            if (alpha.at(l, p) > alpha.at(l, best)) best = p;
          }
          out << '@' << best;
        }
      }
      out << '\n';
    }
  }
  return kOk;
}

// ---- gradcheck ------------------------------------------------------------

int cmd_gradcheck(const CommonFlags& flags, double step, double tolerance,
                  std::ostream& out) {
  RunConfig defaults;
  defaults.model = tiny_model_config();
  const RunConfig config = flags.resolve(defaults);
  ModelConfig model = config.model;
  model.num_labels = tiny_model_config().num_labels;
  ModelGradCheckOptions options;
  options.seed = config.seed;
  options.step = step;
  options.tolerance = tolerance;
  const auto t0 = std::chrono::steady_clock::now();
  const GradCheckReport report = check_model_gradients(model, options);
  const double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const GradCheckEntry& e : report.entries) {
    char buf[160];
    std::snprintf(buf, sizeof(buf), "%-24s %6zu  max_rel_err=%.3e  %s\n", e.name.c_str(),
                  e.coordinates, e.max_relative_error, e.passed ? "ok" : "FAIL");
    out << buf;
  }
  char buf[160];
  std::snprintf(buf, sizeof(buf), "gradcheck %s: max_rel_err=%.3e tolerance=%.1e step=%.1e (%.2fs)\n",
                report.passed() ? "passed" : "FAILED", report.max_relative_error(),
                report.tolerance, report.step, seconds);
  out << buf;
  return report.passed() ? kOk : kNumeric;
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multi-view alignment model for multi-label document classification", "mvam"};
  app.require_subcommand(1);

  CommonFlags synth_flags, train_flags, grad_flags;
  CLI::App* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
  synth_flags.attach(*synth);
  CLI::App* train_cmd = app.add_subcommand("train", "Train and write the best checkpoint");
  train_flags.attach(*train_cmd);

  CLI::App* eval = app.add_subcommand("eval", "Print the metrics record for one split");
  std::string eval_checkpoint, eval_predictions, eval_labels, eval_n;
  CorpusFlags eval_corpus;
  eval->add_option("--checkpoint", eval_checkpoint, "Checkpoint file");
  eval->add_option("--predictions", eval_predictions, "Score matrix written by predict --scores");
  eval->add_option("--labels", eval_labels, "Label file for --predictions");
  eval->add_option("--n", eval_n, "Comma-separated P@n cut-offs");
  eval_corpus.attach(*eval);

  CLI::App* predict_cmd = app.add_subcommand("predict", "Top-n labels per document");
  std::string predict_checkpoint;
  std::optional<std::size_t> top;
  bool attention = false, scores = false;
  CorpusFlags predict_corpus;
  predict_cmd->add_option("--checkpoint", predict_checkpoint, "Checkpoint file")->required();
  predict_cmd->add_option("--top", top, "Labels per document (default 5, at most the label count)");
  predict_cmd->add_flag("--attention", attention, "Append the argmax attention position");
  predict_cmd->add_flag("--scores", scores, "Write the full score matrix instead");
  predict_corpus.attach(*predict_cmd);

  CLI::App* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient");
  double step = 1e-5, tolerance = 1e-4;
  grad_flags.attach(*grad, false);
  grad->add_option("--step", step, "Central-difference step");
  grad->add_option("--tolerance", tolerance, "Maximum relative error");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e, out, err) == 0 ? kOk : kUsage;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kUsage;
  }

  try {
    if (*synth) return cmd_synth(synth_flags, out);
    if (*train_cmd) return cmd_train(train_flags, out);
    if (*eval) {
      return cmd_eval(eval_checkpoint, eval_predictions, eval_labels, eval_corpus, eval_n, out);
    }
    if (*predict_cmd) {
      return cmd_predict(predict_checkpoint, predict_corpus, top, attention, scores, out);
    }
    if (*grad) return cmd_gradcheck(grad_flags, step, tolerance, out);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << '\n';
    return kConfig;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return kNumeric;
  } catch (const DataError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const ShapeError& e) {
    err << "data error: " << e.what() << '\n';
    return kData;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace mvam::cli
