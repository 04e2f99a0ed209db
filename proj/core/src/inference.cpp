#include "modee/inference.hpp"

#include <json.hpp>

#include "modee/errors.hpp"

namespace modee {

std::vector<Prediction> predict_documents(ModeeModel& model, std::span<const Document> docs,
                                          const InferenceOptions& options, FeatureCache* cache) {
  std::vector<Prediction> out;
  out.reserve(docs.size());
  for (const auto& doc : docs) {
    Prediction p;
    p.id = doc.id;
    p.generated = model.generate(model_input_text(doc, options.schema), options.input_cap,
                                 options.graph_seed, options.generation, cache);
    try {
      p.record = parse_5w_string(p.generated);
    } catch (const ParseError&) {
      p.record = EventRecord{};
      p.parse_failed = true;
    }
    out.push_back(std::move(p));
  }
  return out;
}

EvalReport evaluate_corpus(ModeeModel& model, std::span<const AnnotatedDocument> docs,
                           const InferenceOptions& options, MetricSet metrics, FeatureCache* cache,
                           const EmbeddingScorer* scorer) {
  std::vector<Document> inputs;
  std::vector<EventRecord> golds;
  for (const auto& d : docs) {
    inputs.push_back(d.document);
    golds.push_back(d.gold);
  }
  const auto predictions = predict_documents(model, inputs, options, cache);
  std::vector<EventRecord> preds;
  std::size_t failures = 0;
  for (const auto& p : predictions) {
    preds.push_back(p.record);
    failures += p.parse_failed;
  }
  EvalReport report = evaluate_records(preds, golds, metrics, scorer);
  report.parse_failures = failures;
  return report;
}

std::string prediction_record_json(const Prediction& p) {
  nlohmann::json rec = nlohmann::json::object();
  for (Slot s : kSlots) {
    const auto& v = p.record[s];
    rec[std::string(slot_name(s))] = v ? nlohmann::json(*v) : nlohmann::json(nullptr);
  }
  nlohmann::json j;
  j["id"] = p.id;
  j["generated"] = p.generated;
  j["prediction"] = rec;
  j["parse_failed"] = p.parse_failed;
  return j.dump();
}

}  // namespace modee
