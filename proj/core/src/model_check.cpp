#include "mvam/model_check.hpp"

#include <random>

#include "mvam/error.hpp"
#include "mvam/synthetic.hpp"
#include "mvam/training.hpp"

namespace mvam {

ModelConfig tiny_model_config() {
  ModelConfig config;
  config.embed_dim = 8;
  config.conv_channels = 6;
  config.kernel_width = 3;
  config.ffn_dim = 16;
  config.num_labels = 5;
  config.dropout = 0.25;
  return config;
}

GradCheckReport check_model_gradients(ModelConfig config,
                                      const ModelGradCheckOptions& options) {
  if (config.num_labels == 0) config.num_labels = 5;
  if (options.docs == 0) throw ConfigError("gradcheck needs at least one document");

  SyntheticSpec spec;
  spec.num_labels = config.num_labels;
  spec.triggers_per_label = 1;
  spec.vocab_size = std::max(options.vocab_words, config.num_labels + 1);
  spec.train_docs = options.docs;
  spec.val_docs = 0;
  spec.test_docs = 0;
  spec.min_length = options.min_length;
  spec.max_length = options.max_length;
  spec.base_rate = 0.4;
  spec.seed = options.seed;
  const SyntheticCorpus synthetic = generate_synthetic(spec);
  const Corpus& corpus = synthetic.corpus;
  if (config.vocab_size == 0) config.vocab_size = corpus.vocab.size();
  config.validate();

  ModelParams params = init_params(config, std::nullopt, options.seed);
  const std::vector<NamedTensor> trainable = params.trainable();
  std::mt19937_64 rng(options.seed + 1);
  std::uniform_real_distribution<double> uniform(-options.param_scale, options.param_scale);
  for (const NamedTensor& p : trainable) {
    Tensor t = p.tensor;
    auto values = t.mutable_data();
    for (double& v : values) v = uniform(rng);
    if (p.name == "word_embedding") {
      for (std::size_t e = 0; e < config.embed_dim; ++e) values[e] = 0.0;
    }
  }

  const auto docs = corpus.split(Split::kTrain);
  const Batch batch = make_batch(docs, config.num_labels);
  const Tensor truth = Tensor::from({batch.rows, config.num_labels}, batch.labels);
  const ForwardOptions forward_options{options.train_mode, options.seed + 2};
  auto loss_fn = [&] {
    return bce_loss(forward(batch, params, config, forward_options).probabilities, truth);
  };
  return grad_check(loss_fn, trainable, options.step, options.tolerance);
}

}  // namespace mvam
