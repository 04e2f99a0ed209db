#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include "modee/backbone.hpp"
#include "modee/corpus.hpp"
#include "modee/model.hpp"

namespace modee {

inline constexpr int kConfigSchemaVersion = 1;

struct DataConfig {
  std::filesystem::path path;
  Schema schema = Schema::OpenDomain;
  std::array<double, 3> split = {0.8, 0.1, 0.1};
  std::uint64_t split_seed = 1234;
};

struct BackboneConfig {
  std::string identifier = "toy-transformer";
  ToyTransformerConfig toy;
  // 0: no limit.
  std::size_t vocab_max_size = 0;
  std::size_t input_cap = 512;
  std::size_t output_cap = 512;
  // Directory holding weights.bin and vocab.txt whose backbone weights seed
  // the model (and its frozen encoder).
  std::optional<std::filesystem::path> pretrained_checkpoint;
};

struct TrainConfig {
  int epochs = 10;
  int effective_batch = 8;
  double lr_text = 1e-3;
  double weight_decay_text = 0.01;
  double lr_graph_fusion = 1e-3;
  double weight_decay_graph_fusion = 5e-4;
  double tau = 0.1;
  double lambda_contrastive = 1.0;
  int per_class_samples = 5;
  Ablation ablation = Ablation::Full;
  std::uint64_t seed = 13;
  bool ce_mean_reduction = false;
  bool contrastive_all_in_denominator = false;
  bool none_as_class = true;
  // Score the validation split after every epoch.
  bool validate_each_epoch = true;

  /// Throws ConfigError when an invariant fails.
  void validate() const;
};

struct RunConfig {
  int schema_version = kConfigSchemaVersion;
  DataConfig data;
  BackboneConfig backbone;
  GraphEncoderConfig graph;
  Topology topology = Topology::Complete;
  FusionConfig fusion;
  TrainConfig training;
  GenerationConfig generation;
  std::filesystem::path output_dir = "runs/default";

  void validate() const;
  /// Topology after applying the ablation.
  Topology effective_topology() const;
  ModelConfig model_config() const;
};

/// Open-domain defaults, with the closed-domain caps when requested.
RunConfig default_run_config(Schema schema = Schema::OpenDomain);

/// Missing keys keep their defaults; unknown keys and wrong types are a
/// ConfigError. Relative paths resolve against base_dir.
RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir = {});
RunConfig load_run_config(const std::filesystem::path& path);
std::string run_config_to_json(const RunConfig& cfg);

std::string_view schema_name(Schema s);
std::optional<Schema> schema_from_name(std::string_view name);

}  // namespace modee
