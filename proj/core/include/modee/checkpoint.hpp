#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "modee/config.hpp"
#include "modee/model.hpp"
#include "modee/optim.hpp"

namespace modee {

/// Checkpoint directory layout:
///   config.json    run config plus {epoch, step, final, d_model, vocab_size,
///                  input_cap, output_cap, backbone}
///   weights.bin    model weights, frozen encoder snapshot included
///   optimizer.bin  optimizer moments (absent for weight-only exports)
///   vocab.txt      one piece per line
struct CheckpointInfo {
  int epoch = 0;
  std::uint64_t step = 0;
  bool final = false;
};

/// Writes into a sibling temporary directory and renames it into place.
/// Throws IoError on failure. Returns checkpoint_hash(dir).
std::string save_checkpoint(const std::filesystem::path& dir, const ModeeModel& model,
                            const OptimizerGroups* optimizer, const RunConfig& cfg,
                            const CheckpointInfo& info);

struct LoadedCheckpoint {
  RunConfig config;
  CheckpointInfo info;
  std::unique_ptr<ModeeModel> model;
};

/// Rebuilds the model from config.json, vocab.txt and weights.bin.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& dir);

/// FNV-1a over weights.bin followed by optimizer.bin (when present), hex.
std::string checkpoint_hash(const std::filesystem::path& dir);

}  // namespace modee
