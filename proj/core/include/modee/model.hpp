#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "modee/autodiff.hpp"
#include "modee/corpus.hpp"
#include "modee/fusion.hpp"
#include "modee/graphnet.hpp"
#include "modee/params.hpp"
#include "modee/toy_transformer.hpp"

namespace modee {

enum class Ablation { Full, NoContrastive, Additive, LinearGraph };

std::string_view ablation_name(Ablation a);  // "full", "no-contrastive", ...
/// Accepts the dashed names, underscores, and any letter case.
std::optional<Ablation> ablation_from_name(std::string_view name);

struct ModelConfig {
  ToyTransformerConfig backbone;
  GraphEncoderConfig graph;
  FusionConfig fusion;
  // Set by the LINEAR_GRAPH ablation; otherwise the configured topology.
  Topology topology = Topology::Complete;
  std::uint64_t graph_init_seed = 2;
  std::uint64_t fusion_init_seed = 3;
};

/// Intermediate matrices of one forward pass.
struct EncodedDocument {
  Tokenization tok;
  ad::Var h_text;
  ad::Var h_graph;
  ad::Var alpha;  // undefined under the additive ablation
  ad::Var h_integrated;
};

/// Text encoder + decoder (the backbone), graph encoder and fusion.
class ModeeModel {
 public:
  ModeeModel(Vocabulary vocab, ModelConfig cfg, Ablation ablation);

  Ablation ablation() const { return ablation_; }
  Topology topology() const { return cfg_.topology; }
  const ModelConfig& config() const { return cfg_; }

  ToyTransformer& backbone() { return *backbone_; }
  const ToyTransformer& backbone() const { return *backbone_; }
  GraphEncoder& graph_encoder() { return graph_; }
  const GraphEncoder& graph_encoder() const { return graph_; }
  /// Null under the additive ablation, which has no fusion parameters.
  GatedFusion* fusion() { return fusion_.get(); }
  const GatedFusion* fusion() const { return fusion_.get(); }

  /// Every trainable parameter, tagged by module.
  ParameterSet trainable_parameters() const;

  /// tokenize -> live encoder -> frozen node features -> graph encoder ->
  /// gate (or sum) -> conditioning matrix.
  EncodedDocument encode(std::string_view input_text, std::size_t input_cap, std::uint64_t graph_seed,
                         FeatureCache* cache = nullptr);

  /// Inference: generated 5W string for one input text.
  std::string generate(std::string_view input_text, std::size_t input_cap, std::uint64_t graph_seed,
                       const GenerationConfig& gen, FeatureCache* cache = nullptr);

  std::vector<NamedMatrix> export_weights() const;
  void import_weights(const std::vector<NamedMatrix>& items);
  std::uint64_t weights_checksum() const;

 private:
  ModelConfig cfg_;
  Ablation ablation_;
  std::unique_ptr<ToyTransformer> backbone_;
  GraphEncoder graph_;
  std::unique_ptr<GatedFusion> fusion_;
};

}  // namespace modee
