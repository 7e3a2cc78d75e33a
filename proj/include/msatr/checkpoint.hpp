#pragma once

// Binary checkpoints: "MSTR", u32 version, generator config, weight records,
// and an optional training state for bit-exact resume. All integers and
// doubles little-endian.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include "msatr/training.hpp"

namespace msatr {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct TrainSnapshot {
  TrainConfig config;
  TrainState state;
  ParamList d_global;
  ParamList d_local;
};

struct Checkpoint {
  GeneratorConfig generator_config;
  ParamList generator;
  std::optional<TrainSnapshot> train;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
// CheckpointError with the byte offset of the first problem.
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes);

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Value copies of the current weights (and state, for a trainer).
Checkpoint snapshot(const Generator& g);
Checkpoint snapshot(const Trainer& t);

Generator restore_generator(const Checkpoint& ckpt);
// Needs a training state in the checkpoint.
Trainer restore_trainer(const Checkpoint& ckpt, Dataset data);

}  // namespace msatr
