#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "modee/backbone.hpp"
#include "modee/corpus.hpp"
#include "modee/evalkit.hpp"
#include "modee/model.hpp"

namespace modee {

struct InferenceOptions {
  Schema schema = Schema::OpenDomain;
  std::size_t input_cap = 512;
  GenerationConfig generation;
  // Neighbor orderings are fixed at inference time.
  std::uint64_t graph_seed = 0;
};

struct Prediction {
  std::string id;
  std::string generated;
  EventRecord record;  // all slots absent when parsing failed
  bool parse_failed = false;
};

/// Generates and parses one record per document, in order.
std::vector<Prediction> predict_documents(ModeeModel& model, std::span<const Document> docs,
                                          const InferenceOptions& options, FeatureCache* cache = nullptr);

/// Generate, parse defensively, then score every requested metric.
EvalReport evaluate_corpus(ModeeModel& model, std::span<const AnnotatedDocument> docs,
                           const InferenceOptions& options, MetricSet metrics = MetricSet::All,
                           FeatureCache* cache = nullptr, const EmbeddingScorer* scorer = nullptr);

/// {id, generated, prediction: {where..why}, parse_failed}
std::string prediction_record_json(const Prediction& p);

}  // namespace modee
