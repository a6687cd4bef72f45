#include "mvam/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <ostream>
#include <random>

#include <json.hpp>

#include "mvam/error.hpp"

namespace mvam {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("train.learning_rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw ConfigError("train.beta1 and train.beta2 must lie in [0, 1)");
  }
  if (!(epsilon > 0.0)) throw ConfigError("train.epsilon must be > 0");
  if (batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  if (patience == 0) throw ConfigError("train.patience must be >= 1");
  if (max_epochs == 0) throw ConfigError("train.max_epochs must be >= 1");
  if (early_stop_n == 0) throw ConfigError("train.early_stop_n must be >= 1");
}

Tensor bce_loss(const Tensor& probabilities, const Tensor& truth) {
  return binary_cross_entropy(probabilities, truth, 1e-12);
}

AdamState AdamState::for_params(std::span<const NamedTensor> params) {
  AdamState state;
  for (const NamedTensor& p : params) {
    state.first_moment.emplace_back(p.tensor.size(), 0.0);
    state.second_moment.emplace_back(p.tensor.size(), 0.0);
  }
  return state;
}

void adam_step(std::span<const NamedTensor> params, AdamState& state,
               const TrainConfig& config) {
  if (state.first_moment.size() != params.size()) {
    throw ConfigError("adam_step: optimiser state was built for " +
                      std::to_string(state.first_moment.size()) +
                      " tensors, got " + std::to_string(params.size()));
  }
  for (const NamedTensor& p : params) {
    for (double g : p.tensor.grad()) {
      if (!std::isfinite(g)) {
        throw NumericError("adam_step: non-finite gradient in '" + p.name + "'");
      }
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor tensor = params[i].tensor;
    auto values = tensor.mutable_data();
    auto grads = tensor.grad();
    auto& m = state.first_moment[i];
    auto& v = state.second_moment[i];
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = grads[j];
      m[j] = config.beta1 * m[j] + (1.0 - config.beta1) * g;
      v[j] = config.beta2 * v[j] + (1.0 - config.beta2) * g * g;
      const double m_hat = m[j] / correction1;
      const double v_hat = v[j] / correction2;
      values[j] -= config.learning_rate * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

EarlyStopping::EarlyStopping(std::size_t patience) : patience_(patience) {
  if (patience == 0) throw ConfigError("early stopping patience must be >= 1");
}

bool EarlyStopping::update(double metric) {
  ++epochs_;
  improved_last_ = epochs_ == 1 || metric > best_value_;
  if (improved_last_) {
    best_value_ = metric;
    best_epoch_ = epochs_;
  }
  return epochs_ - best_epoch_ >= patience_;
}

void write_train_log(std::ostream& out, const TrainLog& log) {
  using nlohmann::json;
  for (const EpochRecord& r : log.epochs) {
    json j = {{"epoch", r.epoch},
              {"train_loss", r.train_loss},
              {"early_stop_metric", r.early_stop_metric},
              {"wall_seconds", r.wall_seconds}};
    if (r.validation) {
      const MetricsReport& v = *r.validation;
      json metrics = {{"macro_auc", v.macro_auc},
                      {"micro_auc", v.micro_auc},
                      {"macro_f1", v.macro_f1},
                      {"micro_f1", v.micro_f1}};
      for (const auto& [n, value] : v.precision_at) {
        metrics["p_at_" + std::to_string(n)] = value;
      }
      j["validation"] = metrics;
    }
    out << j.dump() << '\n';
  }
  out << json{{"best_epoch", log.best_epoch},
              {"diverged", log.diverged},
              {"stop_reason", log.stop_reason}}
             .dump()
      << '\n';
}

namespace {

PredictionSet predict_documents(const ModelParams& params, const ModelConfig& config,
                                const std::vector<const Document*>& docs,
                                std::size_t batch_size) {
  NoGradGuard no_grad;
  PredictionSet pred;
  pred.docs = docs.size();
  pred.labels = config.num_labels;
  pred.probabilities.reserve(pred.docs * pred.labels);
  pred.truth.reserve(pred.docs * pred.labels);
  for (std::size_t start = 0; start < docs.size(); start += batch_size) {
    const std::size_t end = std::min(docs.size(), start + batch_size);
    Batch batch = make_batch(
        std::span<const Document* const>(docs.data() + start, end - start),
        config.num_labels);
    ForwardOutput out = forward(batch, params, config, {});
    auto probs = out.probabilities.data();
    pred.probabilities.insert(pred.probabilities.end(), probs.begin(), probs.end());
    for (double y : batch.labels) pred.truth.push_back(y != 0.0 ? 1 : 0);
  }
  return pred;
}

std::vector<std::size_t> valid_report_n(const TrainConfig& config,
                                        std::size_t num_labels) {
  std::vector<std::size_t> out;
  for (std::size_t n : config.report_n) {
    if (n >= 1 && n <= num_labels) out.push_back(n);
  }
  if (std::find(out.begin(), out.end(), config.early_stop_n) == out.end()) {
    out.push_back(config.early_stop_n);
  }
  std::sort(out.begin(), out.end());
  return out;
}

void check_compatible(const Checkpoint& checkpoint, const Corpus& corpus) {
  if (checkpoint.vocab_hash != corpus.vocab.hash()) {
    throw DataError("checkpoint vocabulary hash " +
                    std::to_string(checkpoint.vocab_hash) +
                    " does not match the corpus vocabulary " +
                    std::to_string(corpus.vocab.hash()));
  }
  if (checkpoint.labels != corpus.labels.names()) {
    throw DataError("checkpoint label mapping differs from the corpus labels");
  }
}

}  // namespace

Checkpoint make_checkpoint(const ModelConfig& config, const ModelParams& params,
                           const Corpus& corpus) {
  return {config, params.clone(), corpus.vocab.hash(), corpus.labels.names()};
}

TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Corpus& corpus, const std::optional<Tensor>& pretrained,
                  const TrainHooks& hooks) {
  ModelConfig config = model_config;
  config.vocab_size = corpus.vocab.size();
  config.num_labels = corpus.labels.size();
  config.validate();
  train_config.validate();
  if (train_config.early_stop_n > config.num_labels) {
    throw ConfigError("train.early_stop_n = " + std::to_string(train_config.early_stop_n) +
                      " exceeds the " + std::to_string(config.num_labels) + " labels");
  }
  const auto val_docs = corpus.split(Split::kVal);
  if (corpus.count(Split::kTrain) == 0 || val_docs.empty()) {
    throw DataError("training needs non-empty train and val splits");
  }
  const std::vector<std::size_t> report_n = valid_report_n(train_config, config.num_labels);

  ModelParams params = init_params(config, pretrained, train_config.seed);
  const std::vector<NamedTensor> trainable = params.trainable();
  AdamState adam = AdamState::for_params(trainable);
  std::mt19937_64 rng(train_config.seed ^ 0x5eed5eed5eed5eedULL);
  EarlyStopping stopper(train_config.patience);

  TrainResult result;
  std::optional<ModelParams> best;
  TrainLog& log = result.log;
  log.stop_reason = "max_epochs";

  for (std::size_t epoch = 1; epoch <= train_config.max_epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    BatchStream stream(corpus, train_config.batch_size, Split::kTrain, rng());
    double loss_sum = 0.0;
    std::size_t rows = 0;
    while (auto batch = stream.next()) {
      zero_grads(trainable);
      ForwardOutput out =
          forward(*batch, params, config, {.train = true, .dropout_seed = rng()});
      Tensor truth = Tensor::from({batch->rows, config.num_labels}, batch->labels);
      Tensor loss = bce_loss(out.probabilities, truth);
      if (!std::isfinite(loss.item())) {
        log.diverged = true;
        log.stop_reason = "non-finite loss in epoch " + std::to_string(epoch);
        break;
      }
      backward(loss);
      try {
        adam_step(trainable, adam, train_config);
      } catch (const NumericError& e) {
        log.diverged = true;
        log.stop_reason = e.what();
        break;
      }
      loss_sum += loss.item() * static_cast<double>(batch->rows);
      rows += batch->rows;
    }
    if (log.diverged) break;

    EpochRecord record;
    record.epoch = epoch;
    record.train_loss = loss_sum / static_cast<double>(rows);
    if (hooks.validation_metric) {
      record.early_stop_metric = hooks.validation_metric(epoch, params);
    } else {
      const PredictionSet pred =
          predict_documents(params, config, val_docs, train_config.batch_size * 4);
      record.early_stop_metric = precision_at_n(pred, train_config.early_stop_n);
      try {
        record.validation = evaluate_all(pred, report_n);
      } catch (const MetricError&) {
        // tiny validation splits can leave AUC undefined
      }
    }
    record.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool stop = stopper.update(record.early_stop_metric);
    if (stopper.improved_last()) best = params.clone();
    log.epochs.push_back(record);
    if (hooks.on_epoch_end) hooks.on_epoch_end(record, params);
    if (stop) {
      log.stop_reason = "patience";
      break;
    }
  }

  log.best_epoch = stopper.best_epoch();
  result.best = make_checkpoint(config, best ? *best : params, corpus);
  return result;
}

PredictionSet predict(const Checkpoint& checkpoint, const Corpus& corpus,
                      Split split, std::size_t batch_size) {
  check_compatible(checkpoint, corpus);
  return predict_documents(checkpoint.params, checkpoint.config, corpus.split(split),
                           std::max<std::size_t>(batch_size, 1));
}

MetricsReport evaluate_checkpoint(const Checkpoint& checkpoint,
                                  const Corpus& corpus, Split split,
                                  std::span<const std::size_t> n_list) {
  return evaluate_all(predict(checkpoint, corpus, split), n_list);
}

}  // namespace mvam
