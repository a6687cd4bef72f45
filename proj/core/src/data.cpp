#include "mvam/data.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include "mvam/error.hpp"

namespace mvam {

std::string_view to_string(Split split) {
  switch (split) {
    case Split::kTrain:
      return "train";
    case Split::kVal:
      return "val";
    case Split::kTest:
      return "test";
  }
  return "train";
}

Split parse_split(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "val") return Split::kVal;
  if (text == "test") return Split::kTest;
  throw DataError("unknown split '" + std::string(text) +
                  "' (expected train, val or test)");
}

namespace {

// Escapes: \\ backslash, \t tab, \n newline, \s space.
std::string escape(std::string_view text, bool escape_space) {
  std::string out;
  out.reserve(text.size());
  for (char ch : text) {
    switch (ch) {
      case '\\':
        out += "\\\\";
        break;
      case '\t':
        out += "\\t";
        break;
      case '\n':
        out += "\\n";
        break;
      case ' ':
        out += escape_space ? "\\s" : " ";
        break;
      default:
        out += ch;
    }
  }
  return out;
}

std::string unescape(std::string_view text, std::size_t line) {
  std::string out;
  out.reserve(text.size());
  for (std::size_t i = 0; i < text.size(); ++i) {
    if (text[i] != '\\') {
      out += text[i];
      continue;
    }
    if (++i == text.size()) throw DataError("dangling escape", line);
    switch (text[i]) {
      case '\\':
        out += '\\';
        break;
      case 't':
        out += '\t';
        break;
      case 'n':
        out += '\n';
        break;
      case 's':
        out += ' ';
        break;
      default:
        throw DataError(std::string("unknown escape \\") + text[i], line);
    }
  }
  return out;
}

std::vector<std::string_view> split_on(std::string_view text, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string_view::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

// Space-separated items; runs of spaces collapse.
std::vector<std::string> split_items(std::string_view field, std::size_t line) {
  std::vector<std::string> items;
  for (std::string_view piece : split_on(field, ' ')) {
    if (!piece.empty()) items.push_back(unescape(piece, line));
  }
  return items;
}

std::string join_items(const std::vector<std::string>& items) {
  std::string out;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i > 0) out += ' ';
    out += escape(items[i], true);
  }
  return out;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  std::vector<std::string> lines;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    lines.push_back(unescape(line, number));
  }
  return lines;
}

}  // namespace

// ---- Vocabulary ------------------------------------------------------------

Vocabulary::Vocabulary() {
  tokens_ = {std::string(kPadToken), std::string(kUnkToken)};
  index_ = {{tokens_[0], kPad}, {tokens_[1], kUnk}};
}

Vocabulary::Vocabulary(std::span<const std::string> tokens) : Vocabulary() {
  tokens_.reserve(tokens.size() + 2);
  for (const std::string& token : tokens) {
    const auto id = static_cast<TokenId>(tokens_.size());
    if (!index_.emplace(token, id).second) {
      throw DataError("duplicate or reserved vocabulary token '" + token + "'");
    }
    tokens_.push_back(token);
  }
}

TokenId Vocabulary::id_of(std::string_view token) const {
  auto it = index_.find(std::string(token));
  return it == index_.end() ? kUnk : it->second;
}

bool Vocabulary::contains(std::string_view token) const {
  return index_.find(std::string(token)) != index_.end();
}

const std::string& Vocabulary::token_of(TokenId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= tokens_.size()) {
    throw DataError("token id " + std::to_string(id) + " out of range");
  }
  return tokens_[static_cast<std::size_t>(id)];
}

std::uint64_t Vocabulary::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto feed = [&h](unsigned char byte) {
    h ^= byte;
    h *= 1099511628211ULL;
  };
  for (const std::string& token : tokens_) {
    for (char ch : token) feed(static_cast<unsigned char>(ch));
    feed(0xff);  // separator, never part of UTF-8 text
  }
  return h;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out = open_output(path);
  for (const std::string& token : tokens_) out << escape(token, false) << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::vector<std::string> lines = read_lines(path);
  if (lines.size() < 2 || lines[0] != kPadToken || lines[1] != kUnkToken) {
    throw DataError(path.string() + ": vocabulary must start with " +
                    std::string(kPadToken) + " and " + std::string(kUnkToken));
  }
  return Vocabulary(std::span<const std::string>(lines).subspan(2));
}

// ---- LabelIndex ------------------------------------------------------------

LabelIndex::LabelIndex(std::vector<std::string> names) : names_(std::move(names)) {
  for (std::size_t i = 0; i < names_.size(); ++i) {
    if (!index_.emplace(names_[i], static_cast<LabelId>(i)).second) {
      throw DataError("duplicate label '" + names_[i] + "'");
    }
  }
}

std::optional<LabelId> LabelIndex::find(std::string_view name) const {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

const std::string& LabelIndex::name_of(LabelId id) const {
  if (id < 0 || static_cast<std::size_t>(id) >= names_.size()) {
    throw DataError("label id " + std::to_string(id) + " out of range");
  }
  return names_[static_cast<std::size_t>(id)];
}

void LabelIndex::save(const std::filesystem::path& path) const {
  std::ofstream out = open_output(path);
  for (const std::string& name : names_) out << escape(name, false) << '\n';
}

LabelIndex LabelIndex::load(const std::filesystem::path& path) {
  return LabelIndex(read_lines(path));
}

// ---- corpus files ----------------------------------------------------------

RawCorpus read_raw_corpus(std::istream& in) {
  RawCorpus corpus;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    const auto fields = split_on(line, '\t');
    if (fields.size() != 4) {
      throw DataError("expected 4 tab-separated fields (id, tokens, labels, "
                      "split), got " + std::to_string(fields.size()),
                      number);
    }
    RawDocument doc;
    doc.id = unescape(fields[0], number);
    if (doc.id.empty()) throw DataError("empty document id", number);
    doc.tokens = split_items(fields[1], number);
    doc.labels = split_items(fields[2], number);
    try {
      doc.split = parse_split(fields[3]);
    } catch (const DataError& e) {
      throw DataError(e.what(), number);
    }
    doc.line = number;
    if (doc.tokens.empty()) {
      ++corpus.rejected_empty;
      continue;
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

RawCorpus read_raw_corpus(const std::filesystem::path& path) {
  std::ifstream in = open_input(path);
  return read_raw_corpus(in);
}

void write_raw_corpus(std::ostream& out, const RawCorpus& corpus) {
  for (const RawDocument& doc : corpus.documents) {
    out << escape(doc.id, false) << '\t' << join_items(doc.tokens) << '\t'
        << join_items(doc.labels) << '\t' << to_string(doc.split) << '\n';
  }
}

void write_raw_corpus(const std::filesystem::path& path, const RawCorpus& corpus) {
  std::ofstream out = open_output(path);
  write_raw_corpus(out, corpus);
}

std::vector<const Document*> Corpus::split(Split which) const {
  std::vector<const Document*> out;
  for (const Document& doc : documents) {
    if (doc.split == which) out.push_back(&doc);
  }
  return out;
}

std::size_t Corpus::count(Split which) const {
  return static_cast<std::size_t>(
      std::count_if(documents.begin(), documents.end(),
                    [which](const Document& d) { return d.split == which; }));
}

Corpus index_corpus(const RawCorpus& raw, const Vocabulary& vocab,
                    const LabelIndex& labels, const LoadOptions& options) {
  if (options.max_length == 0) throw ConfigError("max_length must be >= 1");
  Corpus corpus;
  corpus.vocab = vocab;
  corpus.labels = labels;
  corpus.rejected_empty = raw.rejected_empty;
  corpus.documents.reserve(raw.documents.size());
  for (const RawDocument& rdoc : raw.documents) {
    if (rdoc.tokens.empty()) {
      ++corpus.rejected_empty;
      continue;
    }
    Document doc;
    doc.id = rdoc.id;
    doc.split = rdoc.split;
    const std::size_t keep = std::min(rdoc.tokens.size(), options.max_length);
    if (keep < rdoc.tokens.size()) ++corpus.truncated;
    doc.tokens.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) {
      doc.tokens.push_back(vocab.id_of(rdoc.tokens[i]));
    }
    for (const std::string& name : rdoc.labels) {
      if (auto id = labels.find(name)) {
        doc.labels.push_back(*id);
      } else if (!options.drop_unknown_labels) {
        throw DataError("unknown label '" + name + "' in document '" +
                            rdoc.id + "'",
                        rdoc.line);
      }
    }
    std::sort(doc.labels.begin(), doc.labels.end());
    doc.labels.erase(std::unique(doc.labels.begin(), doc.labels.end()),
                     doc.labels.end());
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

Corpus load_corpus(const std::filesystem::path& path, const Vocabulary& vocab,
                   const LabelIndex& labels, const LoadOptions& options) {
  return index_corpus(read_raw_corpus(path), vocab, labels, options);
}

RawCorpus to_raw(const Corpus& corpus) {
  RawCorpus raw;
  raw.rejected_empty = corpus.rejected_empty;
  for (const Document& doc : corpus.documents) {
    RawDocument r;
    r.id = doc.id;
    r.split = doc.split;
    for (TokenId t : doc.tokens) r.tokens.push_back(corpus.vocab.token_of(t));
    for (LabelId l : doc.labels) r.labels.push_back(corpus.labels.name_of(l));
    raw.documents.push_back(std::move(r));
  }
  return raw;
}

Vocabulary build_vocab(const RawCorpus& corpus, std::size_t min_freq,
                       std::optional<Split> split) {
  if (min_freq == 0) throw ConfigError("min_freq must be >= 1");
  std::map<std::string, std::size_t> freq;
  for (const RawDocument& doc : corpus.documents) {
    if (split && doc.split != *split) continue;
    for (const std::string& token : doc.tokens) ++freq[token];
  }
  std::vector<std::pair<std::string, std::size_t>> kept;
  for (auto& [token, count] : freq) {
    if (count < min_freq) continue;
    if (token == Vocabulary::kPadToken || token == Vocabulary::kUnkToken) continue;
    kept.emplace_back(token, count);
  }
  std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) {
    return a.second > b.second;  // map order already gives token asc
  });
  std::vector<std::string> tokens;
  tokens.reserve(kept.size());
  for (auto& [token, count] : kept) tokens.push_back(token);
  return Vocabulary(tokens);
}

LabelIndex build_label_index(const RawCorpus& corpus) {
  std::set<std::string> names;
  for (const RawDocument& doc : corpus.documents) {
    names.insert(doc.labels.begin(), doc.labels.end());
  }
  return LabelIndex(std::vector<std::string>(names.begin(), names.end()));
}

std::vector<std::string> most_frequent_labels(const RawCorpus& corpus,
                                              std::size_t k) {
  std::map<std::string, std::size_t> freq;
  for (const RawDocument& doc : corpus.documents) {
    std::set<std::string> unique(doc.labels.begin(), doc.labels.end());
    for (const std::string& name : unique) ++freq[name];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(freq.begin(), freq.end());
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  std::vector<std::string> out;
  for (std::size_t i = 0; i < std::min(k, ranked.size()); ++i) {
    out.push_back(ranked[i].first);
  }
  return out;
}

RawCorpus restrict_labels(const RawCorpus& corpus,
                          std::span<const std::string> keep,
                          bool drop_unlabeled) {
  const std::set<std::string> allowed(keep.begin(), keep.end());
  RawCorpus out;
  out.rejected_empty = corpus.rejected_empty;
  for (const RawDocument& doc : corpus.documents) {
    RawDocument copy = doc;
    std::erase_if(copy.labels,
                  [&](const std::string& l) { return !allowed.contains(l); });
    if (drop_unlabeled && copy.labels.empty()) continue;
    out.documents.push_back(std::move(copy));
  }
  return out;
}

// ---- embeddings ------------------------------------------------------------

EmbeddingTable load_pretrained_embeddings(const std::filesystem::path& path,
                                          const Vocabulary& vocab,
                                          std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw ConfigError("embedding dimension must be >= 1");
  std::vector<double> values(vocab.size() * dim, 0.0);
  std::vector<bool> have(vocab.size(), false);
  std::ifstream in = open_input(path);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::istringstream fields(line);
    std::vector<std::string> parts;
    for (std::string part; fields >> part;) parts.push_back(part);
    if (parts.empty()) continue;
    if (number == 1 && parts.size() == 2 && dim != 1) {
      // word2vec header: "<count> <dim>"
      std::size_t declared = 0;
      auto [ptr, ec] = std::from_chars(parts[1].data(),
                                       parts[1].data() + parts[1].size(), declared);
      if (ec == std::errc() && ptr == parts[1].data() + parts[1].size()) {
        if (declared != dim) {
          throw DataError("header declares dimension " + parts[1] +
                              ", expected " + std::to_string(dim),
                          number);
        }
        continue;
      }
    }
    if (parts.size() != dim + 1) {
      throw DataError("expected token followed by " + std::to_string(dim) +
                          " values, got " + std::to_string(parts.size() - 1),
                      number);
    }
    if (!vocab.contains(parts[0])) continue;
    const auto id = static_cast<std::size_t>(vocab.id_of(parts[0]));
    if (have[id]) continue;
    for (std::size_t e = 0; e < dim; ++e) {
      const std::string& text = parts[e + 1];
      double v = 0.0;
      auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
      if (ec != std::errc() || ptr != text.data() + text.size()) {
        throw DataError("malformed value '" + text + "'", number);
      }
      values[id * dim + e] = v;
    }
    have[id] = true;
  }

  EmbeddingTable out;
  std::mt19937_64 rng(seed);
  const double bound = 0.5 / static_cast<double>(dim);
  std::uniform_real_distribution<double> uniform(-bound, bound);
  for (std::size_t id = 0; id < vocab.size(); ++id) {
    if (id == static_cast<std::size_t>(Vocabulary::kPad)) {
      std::fill_n(values.begin() + static_cast<std::ptrdiff_t>(id * dim), dim, 0.0);
      continue;
    }
    if (have[id]) {
      ++out.found;
      continue;
    }
    for (std::size_t e = 0; e < dim; ++e) values[id * dim + e] = uniform(rng);
    if (id != static_cast<std::size_t>(Vocabulary::kUnk)) ++out.random_rows;
  }
  out.table = Tensor::from({vocab.size(), dim}, std::move(values));
  return out;
}

// ---- batching --------------------------------------------------------------

std::span<const TokenId> Batch::row_ids(std::size_t row) const {
  return std::span<const TokenId>(ids).subspan(row * max_length, max_length);
}

std::span<const std::uint8_t> Batch::row_mask(std::size_t row) const {
  return std::span<const std::uint8_t>(mask).subspan(row * max_length, max_length);
}

std::size_t Batch::row_length(std::size_t row) const {
  return documents.at(row)->tokens.size();
}

Batch make_batch(std::span<const Document* const> docs, std::size_t num_labels) {
  if (docs.empty()) throw DataError("cannot batch zero documents");
  Batch batch;
  batch.rows = docs.size();
  batch.num_labels = num_labels;
  for (const Document* doc : docs) {
    if (doc->tokens.empty()) {
      throw DataError("document '" + doc->id + "' has no tokens");
    }
    batch.max_length = std::max(batch.max_length, doc->tokens.size());
  }
  batch.ids.assign(batch.rows * batch.max_length, Vocabulary::kPad);
  batch.mask.assign(batch.rows * batch.max_length, 0);
  batch.labels.assign(batch.rows * num_labels, 0.0);
  for (std::size_t r = 0; r < docs.size(); ++r) {
    const Document& doc = *docs[r];
    std::copy(doc.tokens.begin(), doc.tokens.end(),
              batch.ids.begin() + static_cast<std::ptrdiff_t>(r * batch.max_length));
    std::fill_n(batch.mask.begin() + static_cast<std::ptrdiff_t>(r * batch.max_length),
                doc.tokens.size(), 1);
    for (LabelId l : doc.labels) {
      if (l < 0 || static_cast<std::size_t>(l) >= num_labels) {
        throw DataError("label id " + std::to_string(l) + " of document '" +
                        doc.id + "' exceeds " + std::to_string(num_labels) +
                        " labels");
      }
      batch.labels[r * num_labels + static_cast<std::size_t>(l)] = 1.0;
    }
    batch.documents.push_back(&doc);
  }
  return batch;
}

BatchStream::BatchStream(const Corpus& corpus, std::size_t batch_size,
                         Split split, std::optional<std::uint64_t> shuffle_seed)
    : order_(corpus.split(split)),
      batch_size_(batch_size),
      num_labels_(corpus.labels.size()) {
  if (batch_size == 0) throw ConfigError("batch_size must be >= 1");
  if (shuffle_seed) {
    std::mt19937_64 rng(*shuffle_seed);
    std::shuffle(order_.begin(), order_.end(), rng);
  }
}

std::optional<Batch> BatchStream::next() {
  if (cursor_ >= order_.size()) return std::nullopt;
  const std::size_t end = std::min(order_.size(), cursor_ + batch_size_);
  std::span<const Document* const> slice(order_.data() + cursor_, end - cursor_);
  cursor_ = end;
  return make_batch(slice, num_labels_);
}

std::size_t BatchStream::num_batches() const {
  return (order_.size() + batch_size_ - 1) / batch_size_;
}

void save_embeddings(const std::filesystem::path& path, const Vocabulary& vocab,
                     const Tensor& table) {
  if (table.rank() != 2 || table.dim(0) != vocab.size()) {
    throw ShapeError("save_embeddings: table " + to_string(table.shape()) +
                     " does not cover a vocabulary of " + std::to_string(vocab.size()));
  }
  const std::size_t dim = table.dim(1);
  std::ofstream out = open_output(path);
  std::vector<std::size_t> rows;
  for (std::size_t id = 1; id < vocab.size(); ++id) {
    const std::string& token = vocab.token_of(static_cast<TokenId>(id));
    if (token.find_first_of(" \t\n\r\f\v") == std::string::npos) rows.push_back(id);
  }
  out << rows.size() << ' ' << dim << '\n';
  char buf[32];
  for (std::size_t id : rows) {
    out << vocab.token_of(static_cast<TokenId>(id));
    for (std::size_t e = 0; e < dim; ++e) {
      auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), table.at(id, e));
      out << ' ' << std::string_view(buf, static_cast<std::size_t>(end - buf));
    }
    out << '\n';
  }
  if (!out) throw DataError("cannot write " + path.string());
}

}  // namespace mvam
