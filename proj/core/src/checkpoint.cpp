#include "arc/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

#include <nlohmann/json.hpp>

#include "arc/rng.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint i/o assumes a little-endian host");

namespace arc {
namespace {

using nlohmann::json;

constexpr char kMagic[4] = {'T', 'L', 'M', 'C'};

json config_to_json(const ModelConfig& cfg) {
  return json{{"d_model", cfg.d_model},
              {"n_heads", cfg.n_heads},
              {"head_dim", cfg.head_dim},
              {"n_layers", cfg.n_layers},
              {"d_ffn", cfg.d_ffn},
              {"vocab_size", cfg.vocab_size},
              {"max_ctx", cfg.max_ctx},
              {"dropout_rate", cfg.dropout_rate},
              {"dropout_on_embedding", cfg.dropout_on_embedding}};
}

ModelConfig config_from_json(const json& j) {
  ModelConfig cfg;
  cfg.d_model = j.at("d_model").get<int>();
  cfg.n_heads = j.at("n_heads").get<int>();
  cfg.head_dim = j.at("head_dim").get<int>();
  cfg.n_layers = j.at("n_layers").get<int>();
  cfg.d_ffn = j.at("d_ffn").get<int>();
  cfg.vocab_size = j.at("vocab_size").get<int>();
  cfg.max_ctx = j.at("max_ctx").get<int>();
  cfg.dropout_rate = j.at("dropout_rate").get<float>();
  cfg.dropout_on_embedding = j.value("dropout_on_embedding", true);
  return cfg;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(v));
}

struct RawCheckpoint {
  json header;
  std::vector<char> payload;
};

RawCheckpoint read_raw(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) raise(ErrorCode::IoError, "cannot open " + path);
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
  if (bytes.size() < 12) raise(ErrorCode::CorruptCheckpoint, "file shorter than header");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    raise(ErrorCode::CorruptCheckpoint, "bad magic bytes");
  }
  std::uint32_t version = 0, header_len = 0;
  std::memcpy(&version, bytes.data() + 4, 4);
  std::memcpy(&header_len, bytes.data() + 8, 4);
  if (version != kCheckpointVersion) {
    raise(ErrorCode::VersionMismatch,
          "checkpoint version " + std::to_string(version) + ", expected " +
              std::to_string(kCheckpointVersion));
  }
  if (bytes.size() < 12 + static_cast<std::size_t>(header_len)) {
    raise(ErrorCode::CorruptCheckpoint, "truncated header");
  }
  RawCheckpoint raw;
  try {
    raw.header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
  } catch (const json::parse_error& e) {
    raise(ErrorCode::CorruptCheckpoint, std::string("header is not valid JSON: ") + e.what());
  }
  raw.payload.assign(bytes.begin() + 12 + header_len, bytes.end());
  return raw;
}

}  // namespace

void save_checkpoint(const std::string& path, const Params& p, const ModelConfig& cfg) {
  const auto table = tensor_table(p);
  json manifest = json::array();
  std::size_t offset = 0;
  for (const auto& t : table) {
    manifest.push_back(
        {{"name", t.name}, {"shape", t.shape}, {"dtype", "f32"}, {"offset", offset}});
    offset += t.size * sizeof(float);
  }
  const json header = {{"config", config_to_json(cfg)},
                       {"vocab_version", kVocabVersion},
                       {"tensors", manifest}};
  const std::string header_str = header.dump();

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) raise(ErrorCode::IoError, "cannot write " + path);
  out.write(kMagic, 4);
  write_u32(out, kCheckpointVersion);
  write_u32(out, static_cast<std::uint32_t>(header_str.size()));
  out.write(header_str.data(), static_cast<std::streamsize>(header_str.size()));
  for (const auto& t : table) {
    out.write(reinterpret_cast<const char*>(t.data),
              static_cast<std::streamsize>(t.size * sizeof(float)));
  }
  if (!out) raise(ErrorCode::IoError, "write failed for " + path);
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
  const RawCheckpoint raw = read_raw(path);

  LoadedCheckpoint loaded;
  try {
    loaded.config = config_from_json(raw.header.at("config"));
    loaded.vocab_version = raw.header.at("vocab_version").get<int>();
  } catch (const json::exception& e) {
    raise(ErrorCode::CorruptCheckpoint, std::string("malformed header: ") + e.what());
  }
  loaded.config.validate();
  if (loaded.vocab_version != kVocabVersion) {
    raise(ErrorCode::VersionMismatch,
          "vocabulary version " + std::to_string(loaded.vocab_version) + ", expected " +
              std::to_string(kVocabVersion));
  }

  loaded.params = Params::zeros(loaded.config);
  const auto table = tensor_table(loaded.params);
  const json& manifest = raw.header.at("tensors");
  if (!manifest.is_array() || manifest.size() != table.size()) {
    raise(ErrorCode::ShapeMismatch, "manifest lists " + std::to_string(manifest.size()) +
                                        " tensors, model has " + std::to_string(table.size()));
  }
  std::size_t expected_offset = 0;
  for (std::size_t i = 0; i < table.size(); ++i) {
    const json& entry = manifest[i];
    const std::string name = entry.at("name").get<std::string>();
    const std::vector<int> shape = entry.at("shape").get<std::vector<int>>();
    const std::string dtype = entry.at("dtype").get<std::string>();
    const std::size_t offset = entry.at("offset").get<std::size_t>();
    if (name != table[i].name || shape != table[i].shape || dtype != "f32") {
      raise(ErrorCode::ShapeMismatch, "tensor " + std::to_string(i) + " (" + name +
                                          ") does not match the expected layout");
    }
    if (offset != expected_offset) {
      raise(ErrorCode::CorruptCheckpoint, "offset of " + name + " inconsistent with manifest");
    }
    expected_offset += table[i].size * sizeof(float);
  }
  if (raw.payload.size() != expected_offset) {
    raise(ErrorCode::CorruptCheckpoint,
          "payload holds " + std::to_string(raw.payload.size()) + " bytes, manifest needs " +
              std::to_string(expected_offset));
  }
  std::size_t offset = 0;
  for (const auto& t : table) {
    std::memcpy(t.data, raw.payload.data() + offset, t.size * sizeof(float));
    offset += t.size * sizeof(float);
  }
  return loaded;
}

CheckpointInfo inspect_checkpoint(const std::string& path) {
  const RawCheckpoint raw = read_raw(path);
  CheckpointInfo info;
  try {
    info.config = config_from_json(raw.header.at("config"));
    info.vocab_version = raw.header.at("vocab_version").get<int>();
  } catch (const json::exception& e) {
    raise(ErrorCode::CorruptCheckpoint, std::string("malformed header: ") + e.what());
  }
  info.payload_fingerprint = fnv1a64(raw.payload.data(), raw.payload.size());
  return info;
}

}  // namespace arc
