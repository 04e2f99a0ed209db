#include "modee/training.hpp"

#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "modee/checkpoint.hpp"
#include "modee/errors.hpp"
#include "modee/losses.hpp"
#include "modee/rng.hpp"

namespace modee {

namespace fs = std::filesystem;

OptimizerSettings optimizer_settings(const TrainConfig& cfg) {
  return {cfg.lr_text, cfg.weight_decay_text, cfg.lr_graph_fusion, cfg.weight_decay_graph_fusion};
}

DocumentLosses document_losses(ModeeModel& model, const AnnotatedDocument& doc, const RunConfig& cfg,
                               std::uint64_t step_seed, FeatureCache* cache) {
  const TrainConfig& t = cfg.training;
  DocumentLosses out;
  const std::string input = model_input_text(doc.document, cfg.data.schema);
  const EncodedDocument enc = model.encode(input, cfg.backbone.input_cap, derive_seed(step_seed, {0}), cache);

  const auto& vocab = model.backbone().vocabulary();
  const std::vector<int> target = encode_target(vocab, render_5w_string(doc.gold), cfg.backbone.output_cap);
  const ad::Var logits = model.backbone().teacher_forced_logits(enc.h_integrated, target);
  out.ce = cross_entropy_loss(logits, target, t.ce_mean_reduction);
  out.total = out.ce;

  const TokenLabeling labeling = align_labels(doc, enc.tok.offsets);
  out.dropped_spans = labeling.dropped_spans;
  if (t.ablation == Ablation::NoContrastive) return out;

  const auto sample = sample_contrastive_nodes(labeling, t.per_class_samples, derive_seed(step_seed, {1}));
  if (sample) {
    const ad::Var z = ad::gather_rows(enc.h_graph, sample->indices);
    ContrastiveOptions opts;
    opts.tau = t.tau;
    opts.all_in_denominator = t.contrastive_all_in_denominator;
    opts.none_as_class = t.none_as_class;
    out.contrastive = contrastive_loss(z, sample->labels, opts);
  }
  if (out.contrastive) {
    out.total = out.ce + ad::scale(*out.contrastive, t.lambda_contrastive);
  } else {
    out.contrastive_skipped = true;
  }
  return out;
}

TrainState::TrainState(ModeeModel& model, const TrainConfig& cfg)
    : model_(model),
      optimizer_(make_optimizer_groups(optimizer_settings(cfg), model.trainable_parameters())) {}

void TrainState::accumulate(int effective_batch) {
  if (++pending_ >= effective_batch) flush();
}

bool TrainState::flush() {
  if (pending_ == 0) return false;
  optimizer_.step();
  optimizer_.zero_grad();
  pending_ = 0;
  ++steps_;
  return true;
}

StepLosses training_step(TrainState& state, const AnnotatedDocument& doc, const RunConfig& cfg,
                         std::uint64_t step_seed, FeatureCache* cache) {
  const DocumentLosses losses = document_losses(state.model(), doc, cfg, step_seed, cache);
  ad::backward(losses.total, 1.0 / static_cast<double>(cfg.training.effective_batch));
  StepLosses out;
  out.ce = losses.ce.scalar();
  out.contrastive = losses.contrastive ? losses.contrastive->scalar() : 0.0;
  out.total = losses.total.scalar();
  out.contrastive_skipped = losses.contrastive_skipped;
  out.dropped_spans = losses.dropped_spans;
  const std::uint64_t before = state.optimizer_steps();
  state.accumulate(cfg.training.effective_batch);
  out.optimizer_stepped = state.optimizer_steps() != before;
  return out;
}

std::string epoch_metrics_json(const EpochMetrics& m) {
  nlohmann::json j;
  j["epoch"] = m.epoch;
  j["ce"] = m.ce;
  j["contrastive"] = m.contrastive;
  j["val_em_f1"] = m.val_em_f1 ? nlohmann::json(*m.val_em_f1) : nlohmann::json(nullptr);
  j["contrastive_skipped"] = m.contrastive_skipped;
  j["documents"] = m.documents;
  j["checkpoint"] = m.checkpoint;
  j["checkpoint_hash"] = m.checkpoint_hash;
  return j.dump();
}

Vocabulary build_vocabulary(std::span<const AnnotatedDocument> train, Schema schema, std::size_t max_size) {
  std::vector<std::string> texts;
  texts.push_back(render_5w_string(EventRecord{}));
  for (const auto& d : train) {
    texts.push_back(model_input_text(d.document, schema));
    texts.push_back(render_5w_string(d.gold));
  }
  return Vocabulary::build(texts, max_size);
}

std::unique_ptr<ModeeModel> make_model(const RunConfig& cfg, std::span<const AnnotatedDocument> train) {
  if (cfg.backbone.pretrained_checkpoint) {
    const fs::path dir = *cfg.backbone.pretrained_checkpoint;
    Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
    auto model = std::make_unique<ModeeModel>(std::move(vocab), cfg.model_config(), cfg.training.ablation);
    std::vector<NamedMatrix> backbone_weights;
    for (auto& item : read_matrices(dir / "weights.bin")) {
      const bool other_module = item.name.rfind("graph.", 0) == 0 || item.name.rfind("fusion.", 0) == 0;
      if (!other_module && item.name.rfind("frozen.", 0) != 0) backbone_weights.push_back(std::move(item));
    }
    model->backbone().import_weights(backbone_weights);
    return model;
  }
  return std::make_unique<ModeeModel>(build_vocabulary(train, cfg.data.schema, cfg.backbone.vocab_max_size),
                                      cfg.model_config(), cfg.training.ablation);
}

InferenceOptions inference_options(const RunConfig& cfg) {
  InferenceOptions o;
  o.schema = cfg.data.schema;
  o.input_cap = cfg.backbone.input_cap;
  o.generation = cfg.generation;
  o.graph_seed = derive_seed(cfg.training.seed, {0x5eedULL});
  return o;
}

fs::path epoch_checkpoint_dir(const RunConfig& cfg, int epoch) {
  char name[32];
  std::snprintf(name, sizeof(name), "epoch-%03d", epoch);
  return cfg.output_dir / "checkpoints" / name;
}

namespace {

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    out << text;
    out.close();
    if (!out) throw IoError("cannot write " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot write " + path.string() + ": " + ec.message());
}

std::vector<std::string> kept_metrics_lines(const fs::path& path, int up_to_epoch) {
  std::vector<std::string> kept;
  std::ifstream in(path);
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto j = nlohmann::json::parse(line, nullptr, false);
    if (!j.is_discarded() && j.value("epoch", 0) <= up_to_epoch) kept.push_back(line);
  }
  return kept;
}

}  // namespace

TrainingResult run_training(ModeeModel& model, std::span<const AnnotatedDocument> train,
                            std::span<const AnnotatedDocument> validation, const RunConfig& cfg,
                            const TrainingOptions& options) {
  cfg.validate();
  if (train.empty()) throw ValueError("training split is empty");
  const TrainConfig& t = cfg.training;

  TrainState state(model, t);
  FeatureCache local_cache;
  FeatureCache* cache = options.cache ? options.cache : &local_cache;
  TrainingResult result;

  std::vector<std::string> metrics_lines;
  const fs::path metrics_path = cfg.output_dir / "metrics.jsonl";
  int first_epoch = 1;
  if (options.resume_from_epoch) {
    const int k = *options.resume_from_epoch;
    if (k < 1 || k > t.epochs) throw ConfigError("cannot resume from epoch " + std::to_string(k));
    const fs::path dir = epoch_checkpoint_dir(cfg, k);
    if (!fs::exists(dir / "weights.bin")) throw IoError("no checkpoint at " + dir.string());
    if (!(Vocabulary::load(dir / "vocab.txt") == model.backbone().vocabulary())) {
      throw ConfigError("checkpoint vocabulary does not match the model");
    }
    model.import_weights(read_matrices(dir / "weights.bin"));
    state.optimizer().load(dir / "optimizer.bin");
    const auto meta = nlohmann::json::parse(std::ifstream(dir / "config.json"), nullptr, false);
    if (!meta.is_discarded() && meta.contains("checkpoint")) {
      state.set_optimizer_steps(meta["checkpoint"].value("step", std::uint64_t{0}));
    }
    metrics_lines = kept_metrics_lines(metrics_path, k);
    first_epoch = k + 1;
  }
  if (options.write_checkpoints) {
    std::error_code ec;
    fs::create_directories(cfg.output_dir / "checkpoints", ec);
    if (ec) throw IoError("cannot create " + (cfg.output_dir / "checkpoints").string() + ": " + ec.message());
    write_text_atomic(metrics_path, [&] {
      std::string s;
      for (const auto& l : metrics_lines) s += l + "\n";
      return s;
    }());
  }

  const InferenceOptions infer = inference_options(cfg);
  for (int epoch = first_epoch; epoch <= t.epochs; ++epoch) {
    std::vector<std::size_t> order(train.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng(derive_seed(t.seed, {0xE90C4ULL, static_cast<std::uint64_t>(epoch)})).shuffle(order);

    EpochMetrics m;
    m.epoch = epoch;
    double ce_sum = 0.0, con_sum = 0.0;
    std::size_t con_docs = 0;
    for (std::size_t i : order) {
      const std::uint64_t step_seed = derive_seed(t.seed, {static_cast<std::uint64_t>(epoch), i});
      const StepLosses s = training_step(state, train[i], cfg, step_seed, cache);
      ce_sum += s.ce;
      if (t.ablation != Ablation::NoContrastive) {
        if (s.contrastive_skipped) {
          ++m.contrastive_skipped;
        } else {
          con_sum += s.contrastive;
          ++con_docs;
        }
      }
    }
    state.flush();
    m.documents = train.size();
    m.ce = ce_sum / static_cast<double>(train.size());
    m.contrastive = con_docs ? con_sum / static_cast<double>(con_docs) : 0.0;
    if (t.validate_each_epoch && !validation.empty()) {
      m.val_em_f1 = evaluate_corpus(model, validation, infer, MetricSet::ExactMatch, cache).em.overall.f1;
    }

    if (options.write_checkpoints) {
      const fs::path dir = epoch_checkpoint_dir(cfg, epoch);
      const bool final = epoch == t.epochs;
      m.checkpoint = dir.filename().string();
      m.checkpoint_hash = save_checkpoint(dir, model, &state.optimizer(), cfg,
                                          CheckpointInfo{epoch, state.optimizer_steps(), final});
      result.checkpoints.push_back(dir);
      metrics_lines.push_back(epoch_metrics_json(m));
      std::string text;
      for (const auto& l : metrics_lines) text += l + "\n";
      write_text_atomic(metrics_path, text);
      if (final) {
        write_text_atomic(cfg.output_dir / "checkpoints" / "FINAL", m.checkpoint + "\n");
        result.final_checkpoint = dir;
        result.final_checkpoint_hash = m.checkpoint_hash;
      }
    }
    if (options.on_epoch) options.on_epoch(m);
    result.epochs.push_back(std::move(m));
  }
  return result;
}

}  // namespace modee
