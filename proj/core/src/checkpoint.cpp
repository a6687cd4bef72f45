// Checkpoint container:
//   8 bytes   magic "MVAMCKPT"
//   u32       format version
//   u64       header length in bytes
//   header    UTF-8 JSON: config, vocab hash, labels, tensor directory
//   payload   float64 little-endian values, tensors back to back in
//             directory order
#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "mvam/error.hpp"
#include "mvam/model.hpp"

namespace mvam {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload is written in host byte order");

constexpr char kMagic[8] = {'M', 'V', 'A', 'M', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

using nlohmann::json;

json config_to_json(const ModelConfig& c) {
  return {{"embed_dim", c.embed_dim},
          {"conv_channels", c.conv_channels},
          {"kernel_width", c.kernel_width},
          {"ffn_dim", c.ffn_dim},
          {"num_labels", c.num_labels},
          {"vocab_size", c.vocab_size},
          {"dropout", c.dropout},
          {"use_positional_encoding", c.use_positional_encoding},
          {"use_label_attention", c.use_label_attention},
          {"activation", std::string(to_string(c.activation))},
          {"num_label_blocks", c.num_label_blocks},
          {"norm", std::string(to_string(c.norm))},
          {"norm_eps", c.norm_eps}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.embed_dim = j.at("embed_dim").get<std::size_t>();
  c.conv_channels = j.at("conv_channels").get<std::size_t>();
  c.kernel_width = j.at("kernel_width").get<std::size_t>();
  c.ffn_dim = j.at("ffn_dim").get<std::size_t>();
  c.num_labels = j.at("num_labels").get<std::size_t>();
  c.vocab_size = j.at("vocab_size").get<std::size_t>();
  c.dropout = j.at("dropout").get<double>();
  c.use_positional_encoding = j.at("use_positional_encoding").get<bool>();
  c.use_label_attention = j.at("use_label_attention").get<bool>();
  c.activation = parse_activation(j.at("activation").get<std::string>());
  c.num_label_blocks = j.at("num_label_blocks").get<std::size_t>();
  c.norm = parse_norm_kind(j.at("norm").get<std::string>());
  c.norm_eps = j.at("norm_eps").get<double>();
  return c;
}

template <typename T>
void write_pod(std::ostream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
  T value{};
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("checkpoint: truncated file");
  return value;
}

}  // namespace

void save_checkpoint(std::ostream& out, const Checkpoint& checkpoint) {
  const auto tensors = checkpoint.params.all();
  json directory = json::array();
  for (const NamedTensor& t : tensors) {
    directory.push_back({{"name", t.name}, {"shape", t.tensor.shape()}});
  }
  const json header = {{"config", config_to_json(checkpoint.config)},
                       {"vocab_hash", std::to_string(checkpoint.vocab_hash)},
                       {"labels", checkpoint.labels},
                       {"tensors", directory}};
  const std::string text = header.dump();
  out.write(kMagic, sizeof(kMagic));
  write_pod(out, kVersion);
  write_pod(out, static_cast<std::uint64_t>(text.size()));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const NamedTensor& t : tensors) {
    auto values = t.tensor.data();
    out.write(reinterpret_cast<const char*>(values.data()),
              static_cast<std::streamsize>(values.size_bytes()));
  }
  if (!out) throw DataError("checkpoint: write failed");
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& checkpoint) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  save_checkpoint(out, checkpoint);
}

Checkpoint load_checkpoint(std::istream& in) {
  char magic[sizeof(kMagic)] = {};
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw DataError("checkpoint: bad magic, not an mvam checkpoint");
  }
  const auto version = read_pod<std::uint32_t>(in);
  if (version != kVersion) {
    throw DataError("checkpoint: unsupported version " + std::to_string(version));
  }
  const auto header_size = read_pod<std::uint64_t>(in);
  std::string text(header_size, '\0');
  in.read(text.data(), static_cast<std::streamsize>(header_size));
  if (!in) throw DataError("checkpoint: truncated header");

  Checkpoint checkpoint;
  json header;
  try {
    header = json::parse(text);
    checkpoint.config = config_from_json(header.at("config"));
    checkpoint.vocab_hash = std::stoull(header.at("vocab_hash").get<std::string>());
    checkpoint.labels = header.at("labels").get<std::vector<std::string>>();
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint: malformed header: ") + e.what());
  }

  // Shapes come from the config; the directory must agree with them.
  checkpoint.params = init_params(checkpoint.config, std::nullopt, 0);
  const auto tensors = checkpoint.params.all();
  const json& directory = header.at("tensors");
  if (directory.size() != tensors.size()) {
    throw DataError("checkpoint: expected " + std::to_string(tensors.size()) +
                    " tensors, found " + std::to_string(directory.size()));
  }
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const std::string name = directory[i].at("name").get<std::string>();
    const Shape shape = directory[i].at("shape").get<Shape>();
    Tensor t = tensors[i].tensor;
    if (name != tensors[i].name || shape != t.shape()) {
      throw DataError("checkpoint: tensor '" + name + "' " + to_string(shape) +
                      " does not match expected '" + tensors[i].name + "' " +
                      to_string(t.shape()));
    }
    auto values = t.mutable_data();
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size_bytes()));
    if (!in) throw DataError("checkpoint: truncated payload in '" + name + "'");
  }
  return checkpoint;
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return load_checkpoint(in);
}

}  // namespace mvam
