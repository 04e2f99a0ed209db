#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "modee/config.hpp"
#include "modee/corpus.hpp"
#include "modee/graphnet.hpp"
#include "modee/inference.hpp"
#include "modee/model.hpp"
#include "modee/optim.hpp"

namespace modee {

OptimizerSettings optimizer_settings(const TrainConfig& cfg);

/// Loss graph for one document, before any backward pass.
struct DocumentLosses {
  ad::Var ce;
  std::optional<ad::Var> contrastive;  // nullopt: ablated or skipped batch
  ad::Var total;
  bool contrastive_skipped = false;
  std::size_t dropped_spans = 0;
};

/// encode -> teacher-forced logits over the rendered gold string -> CE, plus
/// the sampled contrastive term on graph embeddings (FULL, ADDITIVE,
/// LINEAR_GRAPH). step_seed drives neighbor orderings and node sampling.
DocumentLosses document_losses(ModeeModel& model, const AnnotatedDocument& doc, const RunConfig& cfg,
                               std::uint64_t step_seed, FeatureCache* cache = nullptr);

struct StepLosses {
  double ce = 0.0;
  double contrastive = 0.0;  // exactly 0 when ablated or skipped
  double total = 0.0;
  bool contrastive_skipped = false;
  bool optimizer_stepped = false;
  std::size_t dropped_spans = 0;
};

/// Model, optimizer groups and the gradient-accumulation counter.
class TrainState {
 public:
  TrainState(ModeeModel& model, const TrainConfig& cfg);

  ModeeModel& model() { return model_; }
  OptimizerGroups& optimizer() { return optimizer_; }
  const OptimizerGroups& optimizer() const { return optimizer_; }
  int pending() const { return pending_; }
  std::uint64_t optimizer_steps() const { return steps_; }
  void set_optimizer_steps(std::uint64_t s) { steps_ = s; }

  /// Adds one document's (1 / effective_batch)-scaled gradient; steps the
  /// optimizer once effective_batch documents are pending.
  void accumulate(int effective_batch);
  /// Steps on a partial batch, if any.
  bool flush();

 private:
  ModeeModel& model_;
  OptimizerGroups optimizer_;
  int pending_ = 0;
  std::uint64_t steps_ = 0;
};

/// Forward, backward and (every effective_batch documents) an optimizer
/// step.
StepLosses training_step(TrainState& state, const AnnotatedDocument& doc, const RunConfig& cfg,
                         std::uint64_t step_seed, FeatureCache* cache = nullptr);

struct EpochMetrics {
  int epoch = 0;
  double ce = 0.0;           // mean per document
  double contrastive = 0.0;  // mean over documents with a contrastive term
  std::optional<double> val_em_f1;
  std::size_t contrastive_skipped = 0;
  std::size_t documents = 0;
  std::string checkpoint;
  std::string checkpoint_hash;
};

std::string epoch_metrics_json(const EpochMetrics& m);

struct TrainingOptions {
  // Continue after this epoch's checkpoint under cfg.output_dir.
  std::optional<int> resume_from_epoch;
  bool write_checkpoints = true;
  FeatureCache* cache = nullptr;
  std::function<void(const EpochMetrics&)> on_epoch;
};

struct TrainingResult {
  std::vector<EpochMetrics> epochs;
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path final_checkpoint;
  std::string final_checkpoint_hash;
};

/// Pieces of the training inputs and the rendered targets (plus the empty
/// record, so every format token is present).
Vocabulary build_vocabulary(std::span<const AnnotatedDocument> train, Schema schema, std::size_t max_size);

/// A fresh model for cfg; backbone weights come from
/// cfg.backbone.pretrained_checkpoint when set.
std::unique_ptr<ModeeModel> make_model(const RunConfig& cfg, std::span<const AnnotatedDocument> train);

InferenceOptions inference_options(const RunConfig& cfg);

std::filesystem::path epoch_checkpoint_dir(const RunConfig& cfg, int epoch);

/// Epoch loop: seeded shuffle, accumulated steps, validation EM F1,
/// a checkpoint under <output_dir>/checkpoints/epoch-NNN and a line in
/// <output_dir>/metrics.jsonl per epoch. The last checkpoint is marked
/// final and named in <output_dir>/checkpoints/FINAL.
TrainingResult run_training(ModeeModel& model, std::span<const AnnotatedDocument> train,
                            std::span<const AnnotatedDocument> validation, const RunConfig& cfg,
                            const TrainingOptions& options = {});

}  // namespace modee
