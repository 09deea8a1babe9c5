#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>

#include "sqalab/model.hpp"

namespace sqalab {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointMeta {
  std::uint64_t seed = 0;
  std::size_t epoch = 0;
  std::string label_metric;
  std::string config_hash;
  bool operator==(const CheckpointMeta&) const = default;
};

struct LoadedCheckpoint {
  std::unique_ptr<Model<float>> model;
  CheckpointMeta meta;
};

std::string encode_checkpoint(Model<float>& model, const CheckpointMeta& meta);
/// Errors: CorruptFileError (truncated / inconsistent), VersionError (format
/// version or unknown layer type), FormatError (bad magic).
LoadedCheckpoint decode_checkpoint(const std::string& bytes);

void save_checkpoint(const std::filesystem::path& path, Model<float>& model,
                     const CheckpointMeta& meta);
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace sqalab
