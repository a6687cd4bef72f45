#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvam/data.hpp"
#include "mvam/ops.hpp"
#include "mvam/tensor.hpp"

namespace mvam {

enum class NormKind { kLayer, kBatch };

std::string_view to_string(Activation kind);
Activation parse_activation(std::string_view text);
std::string_view to_string(NormKind kind);
NormKind parse_norm_kind(std::string_view text);

struct ModelConfig {
  std::size_t embed_dim = 100;      // d_e: word and label embeddings
  std::size_t conv_channels = 200;  // d_c
  std::size_t kernel_width = 10;    // k
  std::size_t ffn_dim = 2048;       // d_ff
  std::size_t num_labels = 0;
  std::size_t vocab_size = 0;
  double dropout = 0.6;  // on the word-embedding output, train mode only
  bool use_positional_encoding = true;
  // false bypasses self-attention and its Add & Norm: Z goes straight into
  // the feed-forward network.
  bool use_label_attention = true;
  Activation activation = Activation::kTanh;
  std::size_t num_label_blocks = 1;
  NormKind norm = NormKind::kLayer;
  double norm_eps = 1e-5;

  void validate() const;
  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

// One self-attention block of the label encoder. Only the final block maps
// to conv_channels; earlier blocks keep embed_dim and carry a second Add &
// Norm after the feed-forward layer.
struct LabelBlockParams {
  Tensor query;      // [d_e x d_e]
  Tensor key;        // [d_e x d_e]
  Tensor norm_gain;  // [d_e]
  Tensor norm_bias;  // [d_e]
  Tensor ffn_in;     // [d_e x d_ff]
  Tensor ffn_in_bias;
  Tensor ffn_out;    // [d_ff x d_out]
  Tensor ffn_out_bias;
  Tensor out_norm_gain;  // undefined on the final block
  Tensor out_norm_bias;
};

struct ModelParams {
  Tensor word_embedding;   // [vocab x d_e], row PAD stays zero
  Tensor label_embedding;  // [|Y| x d_e]
  Tensor positional;       // [|Y| x d_e], fixed
  std::vector<LabelBlockParams> blocks;
  Tensor conv_kernel;  // [k x d_e x d_c]
  Tensor conv_bias;    // [d_c]
  Tensor classifier_weight;  // [|Y| x d_c]
  Tensor classifier_bias;    // [|Y|]

  // Everything the optimiser updates (excludes `positional`).
  std::vector<NamedTensor> trainable() const;
  // trainable() plus `positional`, in a stable order used by checkpoints.
  std::vector<NamedTensor> all() const;
  ModelParams clone() const;
};

bool bitwise_equal(const ModelParams& a, const ModelParams& b);

// PE(pos, 2j) = sin(pos / 10000^(2j/d)), PE(pos, 2j+1) = cos(same).
Tensor positional_encoding(std::size_t num_labels, std::size_t dim);

// Uniform(-0.5/fan_in, 0.5/fan_in) for weight matrices and embeddings, zero
// biases, unit norm gains. `pretrained`, when given, becomes the word
// embedding verbatim.
ModelParams init_params(const ModelConfig& config,
                        const std::optional<Tensor>& pretrained,
                        std::uint64_t seed);

struct ForwardOptions {
  bool train = false;
  std::uint64_t dropout_seed = 0;  // per-batch; rows derive their own masks
};

// [d_c x N] convolutional encoding of one padded row; PAD columns embed to
// zero.
Tensor encode_document(std::span<const TokenId> ids, const ModelParams& params,
                       const ModelConfig& config, bool train,
                       std::uint64_t dropout_seed);

// [|Y| x d_c] label representations after internal alignment.
Tensor encode_labels(const ModelParams& params, const ModelConfig& config);
// The [|Y| x |Y|] softmax weights of each block; empty when label attention
// is bypassed.
std::vector<Tensor> label_self_attention(const ModelParams& params,
                                         const ModelConfig& config);

struct AttentionMatch {
  Tensor alpha;  // [|Y| x N], zero at padded positions
  Tensor pooled;  // [|Y| x d_c]
};

AttentionMatch attend_match(const Tensor& encoded, const Tensor& label_reps,
                            std::span<const std::uint8_t> mask);

// sigma(rowwise <beta_l, v_l> + b_l) -> [|Y|]
Tensor classify(const Tensor& pooled, const Tensor& weight, const Tensor& bias);

struct ForwardOutput {
  Tensor probabilities;  // [batch x |Y|]
  std::vector<Tensor> attention;  // per row, [|Y| x max_length]
  Tensor label_reps;     // [|Y| x d_c]
};

ForwardOutput forward(const Batch& batch, const ModelParams& params,
                      const ModelConfig& config, const ForwardOptions& options = {});

// Checkpoint: everything needed to reload a trained model.
struct Checkpoint {
  ModelConfig config;
  ModelParams params;
  std::uint64_t vocab_hash = 0;
  std::vector<std::string> labels;
};

void save_checkpoint(std::ostream& out, const Checkpoint& checkpoint);
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(std::istream& in);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace mvam
