#include "mvam/model.hpp"

#include <cmath>
#include <cstring>
#include <random>

#include "mvam/error.hpp"

namespace mvam {

std::string_view to_string(Activation kind) {
  switch (kind) {
    case Activation::kIdentity:
      return "identity";
    case Activation::kTanh:
      return "tanh";
    case Activation::kRelu:
      return "relu";
  }
  return "tanh";
}

Activation parse_activation(std::string_view text) {
  if (text == "tanh") return Activation::kTanh;
  if (text == "relu") return Activation::kRelu;
  if (text == "identity") return Activation::kIdentity;
  throw ConfigError("unknown activation '" + std::string(text) + "'");
}

std::string_view to_string(NormKind kind) {
  return kind == NormKind::kBatch ? "batch" : "layer";
}

NormKind parse_norm_kind(std::string_view text) {
  if (text == "layer") return NormKind::kLayer;
  if (text == "batch") return NormKind::kBatch;
  throw ConfigError("unknown norm kind '" + std::string(text) + "'");
}

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model.") + name + " must be >= 1");
  };
  positive(embed_dim, "embed_dim");
  positive(conv_channels, "conv_channels");
  positive(kernel_width, "kernel_width");
  positive(ffn_dim, "ffn_dim");
  positive(num_labels, "num_labels");
  positive(vocab_size, "vocab_size");
  positive(num_label_blocks, "num_label_blocks");
  if (embed_dim < 2) throw ConfigError("model.embed_dim must be >= 2");
  if (!(dropout >= 0.0 && dropout < 1.0)) {
    throw ConfigError("model.dropout must lie in [0, 1)");
  }
  if (!(norm_eps > 0.0)) throw ConfigError("model.norm_eps must be > 0");
}

std::vector<NamedTensor> ModelParams::trainable() const {
  std::vector<NamedTensor> out = {{"word_embedding", word_embedding},
                                  {"label_embedding", label_embedding}};
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    const LabelBlockParams& p = blocks[b];
    const std::string prefix = "blocks." + std::to_string(b) + ".";
    out.push_back({prefix + "query", p.query});
    out.push_back({prefix + "key", p.key});
    out.push_back({prefix + "norm_gain", p.norm_gain});
    out.push_back({prefix + "norm_bias", p.norm_bias});
    out.push_back({prefix + "ffn_in", p.ffn_in});
    out.push_back({prefix + "ffn_in_bias", p.ffn_in_bias});
    out.push_back({prefix + "ffn_out", p.ffn_out});
    out.push_back({prefix + "ffn_out_bias", p.ffn_out_bias});
    if (p.out_norm_gain.defined()) {
      out.push_back({prefix + "out_norm_gain", p.out_norm_gain});
      out.push_back({prefix + "out_norm_bias", p.out_norm_bias});
    }
  }
  out.push_back({"conv_kernel", conv_kernel});
  out.push_back({"conv_bias", conv_bias});
  out.push_back({"classifier_weight", classifier_weight});
  out.push_back({"classifier_bias", classifier_bias});
  return out;
}

std::vector<NamedTensor> ModelParams::all() const {
  std::vector<NamedTensor> out = trainable();
  out.insert(out.begin() + 2, NamedTensor{"positional", positional});
  return out;
}

namespace {

Tensor copy_if_defined(const Tensor& t) { return t.defined() ? t.clone() : Tensor(); }

}  // namespace

ModelParams ModelParams::clone() const {
  ModelParams out;
  out.word_embedding = word_embedding.clone();
  out.label_embedding = label_embedding.clone();
  out.positional = positional.clone();
  for (const LabelBlockParams& b : blocks) {
    out.blocks.push_back({b.query.clone(), b.key.clone(), b.norm_gain.clone(),
                          b.norm_bias.clone(), b.ffn_in.clone(),
                          b.ffn_in_bias.clone(), b.ffn_out.clone(),
                          b.ffn_out_bias.clone(), copy_if_defined(b.out_norm_gain),
                          copy_if_defined(b.out_norm_bias)});
  }
  out.conv_kernel = conv_kernel.clone();
  out.conv_bias = conv_bias.clone();
  out.classifier_weight = classifier_weight.clone();
  out.classifier_bias = classifier_bias.clone();
  return out;
}

bool bitwise_equal(const ModelParams& a, const ModelParams& b) {
  const auto lhs = a.all();
  const auto rhs = b.all();
  if (lhs.size() != rhs.size()) return false;
  for (std::size_t i = 0; i < lhs.size(); ++i) {
    if (lhs[i].name != rhs[i].name) return false;
    if (lhs[i].tensor.shape() != rhs[i].tensor.shape()) return false;
    auto x = lhs[i].tensor.data();
    auto y = rhs[i].tensor.data();
    if (std::memcmp(x.data(), y.data(), x.size_bytes()) != 0) return false;
  }
  return true;
}

Tensor positional_encoding(std::size_t num_labels, std::size_t dim) {
  if (dim < 2) throw ConfigError("positional_encoding: dimension must be >= 2");
  if (num_labels == 0) throw ConfigError("positional_encoding: no labels");
  std::vector<double> table(num_labels * dim, 0.0);
  for (std::size_t pos = 0; pos < num_labels; ++pos) {
    for (std::size_t j = 0; j < dim / 2; ++j) {
      const double freq = std::pow(10000.0, static_cast<double>(2 * j) /
                                                static_cast<double>(dim));
      const double angle = static_cast<double>(pos) / freq;
      table[pos * dim + 2 * j] = std::sin(angle);
      table[pos * dim + 2 * j + 1] = std::cos(angle);
    }
  }
  return Tensor::from({num_labels, dim}, std::move(table));
}

ModelParams init_params(const ModelConfig& config,
                        const std::optional<Tensor>& pretrained,
                        std::uint64_t seed) {
  config.validate();
  const std::size_t de = config.embed_dim, dc = config.conv_channels;
  const std::size_t dff = config.ffn_dim, L = config.num_labels;
  std::mt19937_64 rng(seed);

  auto uniform = [&rng](Shape shape, std::size_t fan_in) {
    const double bound = 0.5 / static_cast<double>(fan_in);
    std::uniform_real_distribution<double> dist(-bound, bound);
    std::vector<double> values(element_count(shape));
    for (double& v : values) v = dist(rng);
    return Tensor::from(std::move(shape), std::move(values), true);
  };
  auto zeros = [](Shape shape) { return Tensor::zeros(std::move(shape), true); };
  auto ones = [](Shape shape) { return Tensor::full(std::move(shape), 1.0, true); };

  ModelParams p;
  if (pretrained) {
    if (pretrained->shape() != Shape{config.vocab_size, de}) {
      throw ConfigError("pretrained embedding has shape " +
                        to_string(pretrained->shape()) + ", expected " +
                        to_string(Shape{config.vocab_size, de}));
    }
    p.word_embedding = Tensor::from({config.vocab_size, de},
                                    std::vector<double>(pretrained->data().begin(),
                                                        pretrained->data().end()),
                                    true);
  } else {
    p.word_embedding = uniform({config.vocab_size, de}, de);
    auto pad_row = p.word_embedding.mutable_data().subspan(
        static_cast<std::size_t>(Vocabulary::kPad) * de, de);
    std::fill(pad_row.begin(), pad_row.end(), 0.0);
  }
  p.label_embedding = uniform({L, de}, de);
  p.positional = positional_encoding(L, de);

  for (std::size_t b = 0; b < config.num_label_blocks; ++b) {
    const bool final_block = b + 1 == config.num_label_blocks;
    const std::size_t out_dim = final_block ? dc : de;
    LabelBlockParams block;
    block.query = uniform({de, de}, de);
    block.key = uniform({de, de}, de);
    block.norm_gain = ones({de});
    block.norm_bias = zeros({de});
    block.ffn_in = uniform({de, dff}, de);
    block.ffn_in_bias = zeros({dff});
    block.ffn_out = uniform({dff, out_dim}, dff);
    block.ffn_out_bias = zeros({out_dim});
    if (!final_block) {
      block.out_norm_gain = ones({de});
      block.out_norm_bias = zeros({de});
    }
    p.blocks.push_back(std::move(block));
  }

  p.conv_kernel = uniform({config.kernel_width, de, dc}, config.kernel_width * de);
  p.conv_bias = zeros({dc});
  p.classifier_weight = uniform({L, dc}, dc);
  p.classifier_bias = zeros({L});
  return p;
}

namespace {

Tensor normalize(const Tensor& x, const Tensor& gain, const Tensor& bias,
                 const ModelConfig& config) {
  return config.norm == NormKind::kBatch
             ? batch_normalize(x, gain, bias, config.norm_eps)
             : layer_normalize(x, gain, bias, config.norm_eps);
}

// splitmix64 finaliser; decorrelates per-row dropout seeds.
std::uint64_t mix_seed(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

struct LabelEncoding {
  Tensor reps;
  std::vector<Tensor> self_attention;
};

LabelEncoding encode_labels_detailed(const ModelParams& params,
                                     const ModelConfig& config) {
  LabelEncoding out;
  Tensor z = config.use_positional_encoding
                 ? add(params.label_embedding, params.positional)
                 : params.label_embedding;
  const double inv_sqrt_dim = 1.0 / std::sqrt(static_cast<double>(config.embed_dim));
  for (std::size_t b = 0; b < params.blocks.size(); ++b) {
    const LabelBlockParams& block = params.blocks[b];
    Tensor x = z;
    if (config.use_label_attention) {
      Tensor q = matmul(z, block.query);
      Tensor k = matmul(z, block.key);
      // Sums over labels are order independent, so permuting the labels
      // permutes every output exactly.
      Tensor weights = softmax_rows(scale(matmul(q, transpose(k)), inv_sqrt_dim),
                                    std::nullopt, Summation::kSorted);
      out.self_attention.push_back(weights);
      // Values are Z itself; there is no value projection.
      x = normalize(add(z, matmul(weights, z, Summation::kSorted)), block.norm_gain,
                    block.norm_bias, config);
    }
    Tensor hidden = relu(add_bias(matmul(x, block.ffn_in), block.ffn_in_bias));
    Tensor ffn = add_bias(matmul(hidden, block.ffn_out), block.ffn_out_bias);
    if (block.out_norm_gain.defined()) {
      z = normalize(add(x, ffn), block.out_norm_gain, block.out_norm_bias, config);
    } else {
      z = ffn;
    }
  }
  out.reps = z;
  return out;
}

}  // namespace

Tensor encode_document(std::span<const TokenId> ids, const ModelParams& params,
                       const ModelConfig& config, bool train,
                       std::uint64_t dropout_seed) {
  if (ids.empty()) throw DataError("encode_document: empty document");
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= config.vocab_size) {
      throw DataError("token id " + std::to_string(id) +
                      " is outside the vocabulary of " +
                      std::to_string(config.vocab_size));
    }
  }
  Tensor embedded = embedding_columns(params.word_embedding, ids, Vocabulary::kPad);
  embedded = dropout(embedded, config.dropout, dropout_seed, train);
  return conv1d_same(embedded, params.conv_kernel, params.conv_bias,
                     config.activation);
}

Tensor encode_labels(const ModelParams& params, const ModelConfig& config) {
  return encode_labels_detailed(params, config).reps;
}

AttentionMatch attend_match(const Tensor& encoded, const Tensor& label_reps,
                            std::span<const std::uint8_t> mask) {
  const std::size_t len = encoded.dim(1);
  if (label_reps.rank() != 2 || label_reps.dim(1) != encoded.dim(0)) {
    throw ShapeError("attend_match: label representations " +
                     to_string(label_reps.shape()) + " do not match encoding " +
                     to_string(encoded.shape()));
  }
  if (mask.size() != len) {
    throw ShapeError("attend_match: mask of " + std::to_string(mask.size()) +
                     " entries for " + std::to_string(len) + " positions");
  }
  bool any = false;
  for (std::uint8_t m : mask) any = any || m != 0;
  if (!any) throw DataError("attend_match: document is entirely padding");

  Tensor scores = matmul(label_reps, encoded);  // [|Y| x N]
  Tensor alpha = softmax_rows(scores, mask);
  Tensor pooled = matmul(alpha, transpose(encoded));  // [|Y| x d_c]
  return {alpha, pooled};
}

Tensor classify(const Tensor& pooled, const Tensor& weight, const Tensor& bias) {
  if (pooled.shape() != weight.shape()) {
    throw ShapeError("classify: pooled " + to_string(pooled.shape()) +
                     " vs weights " + to_string(weight.shape()));
  }
  return sigmoid(add(sum_rows(mul(pooled, weight)), bias));
}

ForwardOutput forward(const Batch& batch, const ModelParams& params,
                      const ModelConfig& config, const ForwardOptions& options) {
  if (batch.rows == 0) throw DataError("forward: empty batch");
  if (batch.num_labels != config.num_labels) {
    throw ShapeError("forward: batch has " + std::to_string(batch.num_labels) +
                     " labels, model has " + std::to_string(config.num_labels));
  }
  ForwardOutput out;
  out.label_reps = encode_labels(params, config);
  std::vector<Tensor> rows;
  rows.reserve(batch.rows);
  for (std::size_t r = 0; r < batch.rows; ++r) {
    Tensor encoded = encode_document(batch.row_ids(r), params, config, options.train,
                                     mix_seed(options.dropout_seed + r));
    AttentionMatch match = attend_match(encoded, out.label_reps, batch.row_mask(r));
    rows.push_back(classify(match.pooled, params.classifier_weight,
                            params.classifier_bias));
    out.attention.push_back(match.alpha);
  }
  out.probabilities = stack_rows(rows);
  return out;
}

std::vector<Tensor> label_self_attention(const ModelParams& params,
                                         const ModelConfig& config) {
  return encode_labels_detailed(params, config).self_attention;
}

}  // namespace mvam
