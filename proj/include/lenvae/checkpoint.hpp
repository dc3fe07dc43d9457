// Binary checkpoint files.
//
//   "LVAE" | u32 version | u64 n + n bytes of `key = value` config lines
//   | u64 vocabulary size, then per token u32 n + n bytes
//   | u64 tensor count, then per tensor: u32 n + name, u32 rank,
//     rank x u64 dims, float64 values | u32 CRC-32 of all preceding bytes
//
// All integers and floats are little-endian.
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "lenvae/model.hpp"
#include "lenvae/textpipe.hpp"

namespace lenvae {

inline constexpr std::uint32_t kCheckpointVersion = 1;

enum class CheckpointErrorKind {
  kIo,
  kBadMagic,
  kVersionMismatch,
  kTruncated,
  kChecksumMismatch,
  kMalformed,
  kIncompatible,
};

std::string_view to_string(CheckpointErrorKind kind);

class CheckpointError : public Error {
 public:
  CheckpointError(CheckpointErrorKind kind, const std::string& what)
      : Error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}
  CheckpointErrorKind kind() const { return kind_; }

 private:
  CheckpointErrorKind kind_;
};

struct Checkpoint {
  VaeModel model;
  Vocabulary vocab;
  std::int64_t step = 0;
};

void save_checkpoint(const std::filesystem::path& path, const VaeModel& model,
                     const Vocabulary& vocab, std::int64_t step);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Throws kIncompatible unless the checkpoint was trained with length
/// embeddings.
void require_length_embedding(const Checkpoint& checkpoint);

std::string serialize_hyperparams(const HyperParams& hp);
HyperParams parse_hyperparams(const std::string& text);

}  // namespace lenvae
