#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvam/data.hpp"
#include "mvam/metrics.hpp"
#include "mvam/model.hpp"

namespace mvam {

struct TrainConfig {
  double learning_rate = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::size_t batch_size = 16;
  std::size_t patience = 10;
  std::size_t max_epochs = 100;
  std::size_t early_stop_n = 15;  // validation P@n drives early stopping
  std::vector<std::size_t> report_n = {5, 8, 15};
  std::uint64_t seed = 0;

  void validate() const;
};

// Mean over batch rows of the per-document BCE summed over labels.
Tensor bce_loss(const Tensor& probabilities, const Tensor& truth);

struct AdamState {
  std::vector<std::vector<double>> first_moment;
  std::vector<std::vector<double>> second_moment;
  std::uint64_t step = 0;

  static AdamState for_params(std::span<const NamedTensor> params);
};

// Bias-corrected Adam over `params` using their accumulated grads. A
// non-finite gradient aborts the step before anything is modified and throws
// NumericError.
void adam_step(std::span<const NamedTensor> params, AdamState& state,
               const TrainConfig& config);

// "No strict improvement for `patience` consecutive epochs" rule.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience);

  // Records the metric of the next epoch (1-based); returns true when
  // training should stop after it.
  bool update(double metric);
  bool improved_last() const { return improved_last_; }
  std::size_t best_epoch() const { return best_epoch_; }
  double best_value() const { return best_value_; }
  std::size_t epochs_seen() const { return epochs_; }

 private:
  std::size_t patience_;
  std::size_t epochs_ = 0;
  std::size_t best_epoch_ = 0;
  double best_value_ = 0.0;
  bool improved_last_ = false;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double early_stop_metric = 0.0;
  std::optional<MetricsReport> validation;  // absent when AUC is undefined
  double wall_seconds = 0.0;
};

struct TrainLog {
  std::vector<EpochRecord> epochs;
  std::size_t best_epoch = 0;
  bool diverged = false;
  std::string stop_reason;
};

void write_train_log(std::ostream& out, const TrainLog& log);

struct TrainHooks {
  // Replaces the validation P@n computation when set.
  std::function<double(std::size_t epoch, const ModelParams&)> validation_metric;
  std::function<void(const EpochRecord&, const ModelParams&)> on_epoch_end;
};

struct TrainResult {
  Checkpoint best;
  TrainLog log;
};

// `model_config.vocab_size` and `num_labels` are taken from the corpus.
TrainResult train(const ModelConfig& model_config, const TrainConfig& train_config,
                  const Corpus& corpus,
                  const std::optional<Tensor>& pretrained = std::nullopt,
                  const TrainHooks& hooks = {});

Checkpoint make_checkpoint(const ModelConfig& config, const ModelParams& params,
                           const Corpus& corpus);

// Eval-mode probabilities for every document of `split`, corpus order.
PredictionSet predict(const Checkpoint& checkpoint, const Corpus& corpus,
                      Split split, std::size_t batch_size = 64);

// Rejects a checkpoint whose vocabulary hash or labels differ from the corpus.
MetricsReport evaluate_checkpoint(const Checkpoint& checkpoint,
                                  const Corpus& corpus, Split split,
                                  std::span<const std::size_t> n_list);

}  // namespace mvam
