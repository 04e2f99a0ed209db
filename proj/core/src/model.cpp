#include "modee/model.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include "modee/errors.hpp"

namespace modee {

std::string_view ablation_name(Ablation a) {
  switch (a) {
    case Ablation::Full: return "full";
    case Ablation::NoContrastive: return "no-contrastive";
    case Ablation::Additive: return "additive";
    case Ablation::LinearGraph: return "linear-graph";
  }
  return "full";
}

std::optional<Ablation> ablation_from_name(std::string_view name) {
  std::string key;
  for (char c : name) key.push_back(c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  for (Ablation a : {Ablation::Full, Ablation::NoContrastive, Ablation::Additive, Ablation::LinearGraph}) {
    if (key == ablation_name(a)) return a;
  }
  return std::nullopt;
}

ModeeModel::ModeeModel(Vocabulary vocab, ModelConfig cfg, Ablation ablation)
    : cfg_(cfg),
      ablation_(ablation),
      backbone_(std::make_unique<ToyTransformer>(std::move(vocab), cfg.backbone)),
      graph_(cfg.backbone.d_model, cfg.graph, cfg.graph_init_seed) {
  if (ablation_ == Ablation::LinearGraph) cfg_.topology = Topology::Linear;
  if (ablation_ != Ablation::Additive) {
    fusion_ = std::make_unique<GatedFusion>(cfg.backbone.d_model, cfg.fusion, cfg.fusion_init_seed);
  }
}

ParameterSet ModeeModel::trainable_parameters() const {
  ParameterSet all;
  all.extend(backbone_->parameters());
  all.extend(graph_.parameters());
  if (fusion_) all.extend(fusion_->parameters());
  return all;
}

EncodedDocument ModeeModel::encode(std::string_view input_text, std::size_t input_cap,
                                   std::uint64_t graph_seed, FeatureCache* cache) {
  EncodedDocument out;
  out.tok = backbone_->tokenize(input_text, input_cap);
  out.h_text = backbone_->encode_tokens(out.tok);
  const auto& frozen = *backbone_->frozen_pretrained_encoder();
  ad::Matrix features = cache ? cache->get(out.tok, frozen) : init_node_features(out.tok, frozen);
  const TokenGraph graph = build_token_graph(out.tok.size(), cfg_.topology);
  out.h_graph = graph_.encode(graph, ad::constant(std::move(features)), graph_seed);
  if (fusion_) {
    out.alpha = fusion_->gating_vector(out.h_text, out.h_graph);
    out.h_integrated = integrate(out.h_text, out.alpha);
  } else {
    out.h_integrated = fuse_additive(out.h_text, out.h_graph);
  }
  return out;
}

std::string ModeeModel::generate(std::string_view input_text, std::size_t input_cap,
                                 std::uint64_t graph_seed, const GenerationConfig& gen,
                                 FeatureCache* cache) {
  ad::NoGradGuard no_grad;
  const EncodedDocument enc = encode(input_text, input_cap, graph_seed, cache);
  return backbone_->generate(enc.h_integrated.value(), gen);
}

std::vector<NamedMatrix> ModeeModel::export_weights() const {
  std::vector<NamedMatrix> out = backbone_->export_weights();
  for (const auto& p : graph_.parameters().entries()) out.push_back({p.name, p.var.value()});
  if (fusion_) {
    for (const auto& p : fusion_->parameters().entries()) out.push_back({p.name, p.var.value()});
  }
  return out;
}

void ModeeModel::import_weights(const std::vector<NamedMatrix>& items) {
  std::vector<NamedMatrix> backbone_items;
  std::map<std::string, const ad::Matrix*> rest;
  for (const auto& it : items) {
    if (it.name.rfind("graph.", 0) == 0 || it.name.rfind("fusion.", 0) == 0) {
      rest[it.name] = &it.value;
    } else {
      backbone_items.push_back(it);
    }
  }
  backbone_->import_weights(backbone_items);
  auto assign = [&](ParameterSet& set) {
    for (auto& p : set.entries()) {
      auto found = rest.find(p.name);
      if (found == rest.end()) throw IoError("checkpoint is missing parameter '" + p.name + "'");
      if (found->second->rows() != p.var.rows() || found->second->cols() != p.var.cols()) {
        throw IoError("checkpoint parameter '" + p.name + "' has the wrong shape");
      }
      p.var.mutable_value() = *found->second;
    }
  };
  assign(graph_.parameters());
  if (fusion_) assign(fusion_->parameters());
}

std::uint64_t ModeeModel::weights_checksum() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& item : export_weights()) {
    h = fnv1a(item.name.data(), item.name.size(), h);
    h = matrix_checksum(item.value, h);
  }
  return h;
}

}  // namespace modee
