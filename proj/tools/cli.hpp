#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "modee/model.hpp"

namespace modee::cli {

enum ExitCode : int {
  kOk = 0,
  kInternalError = 1,
  kInputError = 2,
  kAlignmentError = 3,
};

struct TrainArgs {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<Ablation> ablation;
  std::optional<std::filesystem::path> output_dir;
  std::optional<int> resume_from_epoch;
  bool closed_domain = false;
  bool quiet = false;
  std::vector<std::string> argv;  // recorded in the manifest
};

struct PredictArgs {
  std::filesystem::path checkpoint;
  std::filesystem::path input;
  std::filesystem::path output;
  bool closed_domain = false;
  std::vector<std::string> argv;
};

struct EvaluateArgs {
  std::filesystem::path predictions;
  std::filesystem::path gold;
  std::string metric = "all";
  std::optional<std::filesystem::path> output_dir;
  bool closed_domain = false;
  std::vector<std::string> argv;
};

struct SynthArgs {
  std::filesystem::path output;
  std::size_t count = 32;
  std::uint64_t seed = 7;
  bool closed_domain = false;
};

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err);
/// Training with the ablation preset applied; without --output the run goes
/// to <output_dir>/<ablation>.
int cmd_ablate(const TrainArgs& args, std::ostream& out, std::ostream& err);
int cmd_predict(const PredictArgs& args, std::ostream& out, std::ostream& err);
int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);
int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err);

/// Parses argv and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// A run directory with checkpoints/FINAL resolves to its final checkpoint.
std::filesystem::path resolve_checkpoint_dir(const std::filesystem::path& path);

}  // namespace modee::cli
