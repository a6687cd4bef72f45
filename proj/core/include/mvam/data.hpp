#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mvam/tensor.hpp"

namespace mvam {

using TokenId = std::int32_t;
using LabelId = std::int32_t;

enum class Split { kTrain, kVal, kTest };

std::string_view to_string(Split split);
Split parse_split(std::string_view text);

// Token <-> id map with PAD = 0 and UNK = 1 reserved ahead of corpus tokens.
class Vocabulary {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kUnk = 1;
  static constexpr std::string_view kPadToken = "<pad>";
  static constexpr std::string_view kUnkToken = "<unk>";

  Vocabulary();
  // `tokens` excludes the reserved entries; duplicates or reserved spellings
  // are rejected.
  explicit Vocabulary(std::span<const std::string> tokens);

  std::size_t size() const { return tokens_.size(); }
  TokenId id_of(std::string_view token) const;  // UNK when absent
  bool contains(std::string_view token) const;
  const std::string& token_of(TokenId id) const;
  const std::vector<std::string>& tokens() const { return tokens_; }

  // FNV-1a over the id-ordered token list; identifies the id assignment.
  std::uint64_t hash() const;

  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> index_;
};

class LabelIndex {
 public:
  LabelIndex() = default;
  explicit LabelIndex(std::vector<std::string> names);

  std::size_t size() const { return names_.size(); }
  std::optional<LabelId> find(std::string_view name) const;
  const std::string& name_of(LabelId id) const;
  const std::vector<std::string>& names() const { return names_; }

  void save(const std::filesystem::path& path) const;
  static LabelIndex load(const std::filesystem::path& path);

  friend bool operator==(const LabelIndex& a, const LabelIndex& b) {
    return a.names_ == b.names_;
  }

 private:
  std::vector<std::string> names_;
  std::unordered_map<std::string, LabelId> index_;
};

// A record as it appears in a corpus file, before id mapping.
struct RawDocument {
  std::string id;
  std::vector<std::string> tokens;
  std::vector<std::string> labels;
  Split split = Split::kTrain;
  std::size_t line = 0;  // 1-based source line, 0 when generated
};

struct RawCorpus {
  std::vector<RawDocument> documents;
  std::size_t rejected_empty = 0;  // records whose token field was empty
};

RawCorpus read_raw_corpus(std::istream& in);
RawCorpus read_raw_corpus(const std::filesystem::path& path);
void write_raw_corpus(std::ostream& out, const RawCorpus& corpus);
void write_raw_corpus(const std::filesystem::path& path, const RawCorpus& corpus);

struct Document {
  std::string id;
  std::vector<TokenId> tokens;  // never empty
  std::vector<LabelId> labels;  // sorted, unique
  Split split = Split::kTrain;
};

struct Corpus {
  std::vector<Document> documents;
  Vocabulary vocab;
  LabelIndex labels;
  std::size_t rejected_empty = 0;
  std::size_t truncated = 0;

  std::vector<const Document*> split(Split which) const;
  std::size_t count(Split which) const;
};

struct LoadOptions {
  std::size_t max_length = 2500;  // longer documents lose their tail
  bool drop_unknown_labels = false;
};

Corpus index_corpus(const RawCorpus& raw, const Vocabulary& vocab,
                    const LabelIndex& labels, const LoadOptions& options = {});
Corpus load_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                   const LabelIndex& labels, const LoadOptions& options = {});
// Inverse of index_corpus up to UNK substitution and truncation.
RawCorpus to_raw(const Corpus& corpus);

// Tokens with frequency >= min_freq, ordered by (frequency desc, token asc).
// With `split`, only documents of that split are counted.
Vocabulary build_vocab(const RawCorpus& corpus, std::size_t min_freq,
                       std::optional<Split> split = std::nullopt);
// Every label seen in the corpus, ascending.
LabelIndex build_label_index(const RawCorpus& corpus);

std::vector<std::string> most_frequent_labels(const RawCorpus& corpus,
                                              std::size_t k);
RawCorpus restrict_labels(const RawCorpus& corpus,
                          std::span<const std::string> keep,
                          bool drop_unlabeled);

struct EmbeddingTable {
  Tensor table;  // [vocab x dim]
  std::size_t found = 0;
  std::size_t random_rows = 0;  // excluding PAD and UNK
};

// Text format `token v1 ... v_dim`; an optional leading `count dim` header
// line is accepted. Missing tokens get U(-0.5/dim, 0.5/dim) from `seed`; the
// PAD row is always zero.
EmbeddingTable load_pretrained_embeddings(const std::filesystem::path& path,
                                          const Vocabulary& vocab,
                                          std::size_t dim, std::uint64_t seed);

// Writes the format read by load_pretrained_embeddings, with a header and
// every row except PAD. Tokens containing whitespace cannot be represented
// and are left out.
void save_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                     const Tensor& table);

struct Batch {
  std::size_t rows = 0;
  std::size_t max_length = 0;
  std::size_t num_labels = 0;
  std::vector<TokenId> ids;        // rows x max_length, PAD-filled
  std::vector<std::uint8_t> mask;  // rows x max_length, 1 on real tokens
  std::vector<double> labels;      // rows x num_labels, 0/1
  std::vector<const Document*> documents;

  std::span<const TokenId> row_ids(std::size_t row) const;
  std::span<const std::uint8_t> row_mask(std::size_t row) const;
  std::size_t row_length(std::size_t row) const;
};

Batch make_batch(std::span<const Document* const> docs, std::size_t num_labels);

// Fixed-size batches over one split; the final batch may be short. Without
// a seed, documents keep corpus order.
class BatchStream {
 public:
  BatchStream(const Corpus& corpus, std::size_t batch_size, Split split,
              std::optional<std::uint64_t> shuffle_seed = std::nullopt);

  std::optional<Batch> next();
  std::size_t num_batches() const;

 private:
  std::vector<const Document*> order_;
  std::size_t batch_size_;
  std::size_t num_labels_;
  std::size_t cursor_ = 0;
};

}  // namespace mvam
