#pragma once

#include <cstdint>
#include <string>

#include "arc/tinylm.hpp"

namespace arc {

// Container layout: magic "TLMC", version u32 little-endian, header-length
// u32 little-endian, UTF-8 JSON header (model config, vocab version,
// tensor manifest with name/shape/dtype/offset), then contiguous
// little-endian f32 payloads in manifest order. Round trips are bit-exact.
constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  ModelConfig config;
  int vocab_version = kVocabVersion;
  std::uint64_t payload_fingerprint = 0;  // FNV-1a over the raw payload bytes
};

void save_checkpoint(const std::string& path, const Params& p, const ModelConfig& cfg);

struct LoadedCheckpoint {
  Params params;
  ModelConfig config;
  int vocab_version = kVocabVersion;
};

// Throws IoError, CorruptCheckpoint, VersionMismatch, ShapeMismatch.
LoadedCheckpoint load_checkpoint(const std::string& path);

// Header plus payload fingerprint without materializing parameters.
CheckpointInfo inspect_checkpoint(const std::string& path);

}  // namespace arc
