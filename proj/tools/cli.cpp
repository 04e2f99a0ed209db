#include "cli.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "modee/checkpoint.hpp"
#include "modee/config.hpp"
#include "modee/corpus.hpp"
#include "modee/errors.hpp"
#include "modee/evalkit.hpp"
#include "modee/inference.hpp"
#include "modee/synthetic.hpp"
#include "modee/training.hpp"

#ifndef MODEE_SOURCE_REVISION
#define MODEE_SOURCE_REVISION "unknown"
#endif

namespace modee::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

/// An input file/record set that cannot be aligned with the gold data.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string source_revision() {
  if (const char* env = std::getenv("MODEE_SOURCE_REVISION")) return env;
  return MODEE_SOURCE_REVISION;
}

void write_atomic(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
    if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  }
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

/// Maps exceptions to exit codes and prints a one-line diagnostic.
template <typename F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const AlignmentError& e) {
    err << "error: " << e.what() << "\n";
    return kAlignmentError;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kInputError;
  } catch (const IoError& e) {
    err << "i/o error: " << e.what() << "\n";
    return kInputError;
  } catch (const SchemaError& e) {
    err << "input error: " << e.what() << "\n";
    return kInputError;
  } catch (const BackboneError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kInputError;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << "\n";
    return kInternalError;
  }
}

json argv_json(const std::vector<std::string>& argv) { return json(argv); }

RunConfig prepare_train_config(const TrainArgs& args) {
  RunConfig cfg = load_run_config(args.config);
  if (args.seed) cfg.training.seed = *args.seed;
  if (args.ablation) cfg.training.ablation = *args.ablation;
  if (args.output_dir) cfg.output_dir = *args.output_dir;
  if (args.closed_domain && cfg.data.schema != Schema::ClosedDomain) {
    cfg.data.schema = Schema::ClosedDomain;
    cfg.backbone.input_cap = std::max<std::size_t>(cfg.backbone.input_cap, 1024);
    cfg.backbone.output_cap = std::max<std::size_t>(cfg.backbone.output_cap, 1024);
    cfg.backbone.toy.max_positions = std::max(cfg.backbone.toy.max_positions, 1024);
  }
  cfg.validate();
  return cfg;
}

int train_with(const RunConfig& cfg, const TrainArgs& args, const std::string& command, std::ostream& out) {
  if (!fs::is_regular_file(cfg.data.path)) {
    throw IoError("dataset not found: " + cfg.data.path.string());
  }

  json manifest;
  manifest["command"] = command;
  manifest["argv"] = argv_json(args.argv);
  manifest["config_path"] = fs::absolute(args.config).string();
  manifest["seed"] = cfg.training.seed;
  manifest["source_revision"] = source_revision();
  manifest["backbone"] = cfg.backbone.identifier;
  manifest["ablation"] = ablation_name(cfg.training.ablation);
  manifest["topology"] = topology_name(cfg.effective_topology());
  manifest["schema"] = schema_name(cfg.data.schema);
  manifest["resume_from_epoch"] = args.resume_from_epoch ? json(*args.resume_from_epoch) : json(nullptr);
  manifest["config"] = json::parse(run_config_to_json(cfg));
  manifest["started_at"] = utc_now();
  manifest["finished_at"] = nullptr;
  manifest["status"] = "running";
  const fs::path manifest_path = cfg.output_dir / "manifest.json";
  write_atomic(manifest_path, manifest.dump(2) + "\n");

  const auto docs = load_corpus(cfg.data.path, cfg.data.schema);
  const CorpusSplit split = split_corpus(docs, cfg.data.split, cfg.data.split_seed);
  if (split.train.empty()) throw ConfigError("training split of " + cfg.data.path.string() + " is empty");
  auto model = make_model(cfg, split.train);

  FeatureCache cache = FeatureCache::from_environment();
  TrainingOptions opts;
  opts.cache = &cache;
  opts.resume_from_epoch = args.resume_from_epoch;
  if (!args.quiet) {
    opts.on_epoch = [&](const EpochMetrics& m) {
      out << "epoch " << m.epoch << "  ce " << m.ce << "  contrastive " << m.contrastive << "  val_em_f1 "
          << (m.val_em_f1 ? std::to_string(*m.val_em_f1) : std::string("n/a")) << "\n";
    };
  }
  const TrainingResult result = run_training(*model, split.train, split.validation, cfg, opts);

  manifest["finished_at"] = utc_now();
  manifest["status"] = "complete";
  manifest["final_checkpoint"] = result.final_checkpoint.string();
  manifest["final_checkpoint_hash"] = result.final_checkpoint_hash;
  manifest["split_sizes"] = {split.train.size(), split.validation.size(), split.test.size()};
  write_atomic(manifest_path, manifest.dump(2) + "\n");
  out << "final checkpoint " << result.final_checkpoint.string() << " (" << result.final_checkpoint_hash
      << ")\n";
  return kOk;
}

/// Predicted records by id: "prediction" when present, otherwise "gold",
/// so a dataset file can stand in for predictions.
struct PredictionFile {
  std::vector<std::string> order;
  std::map<std::string, EventRecord> records;
  std::size_t parse_failures = 0;
};

EventRecord record_from_json(const json& obj, std::size_t line, const std::string& field) {
  if (!obj.is_object()) throw SchemaError(line, field, "expected an object");
  EventRecord r;
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool known = false;
    for (Slot s : kSlots) {
      if (it.key() != slot_name(s)) continue;
      known = true;
      if (it->is_null()) break;
      if (!it->is_string()) throw SchemaError(line, field + "." + it.key(), "expected string or null");
      std::string v = collapse_whitespace(it->get<std::string>());
      if (!v.empty()) r.set(s, std::move(v));
    }
    if (!known) throw SchemaError(line, field + "." + it.key(), "unknown slot");
  }
  return r;
}

PredictionFile read_prediction_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read predictions file " + path.string());
  PredictionFile pf;
  std::string text;
  std::size_t line = 0;
  while (std::getline(in, text)) {
    ++line;
    if (text.find_first_not_of(" \t\r") == std::string::npos) continue;
    json j = json::parse(text, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw SchemaError(line, "record", "malformed JSON");
    if (!j.contains("id") || !j["id"].is_string()) throw SchemaError(line, "id", "missing or not a string");
    const std::string id = j["id"].get<std::string>();
    if (pf.records.count(id)) throw SchemaError(line, "id", "duplicate id '" + id + "'");
    EventRecord r;
    if (j.contains("prediction")) {
      r = record_from_json(j["prediction"], line, "prediction");
    } else if (j.contains("gold")) {
      r = record_from_json(j["gold"], line, "gold");
    } else {
      throw SchemaError(line, "prediction", "record has neither 'prediction' nor 'gold'");
    }
    if (j.contains("parse_failed") && j["parse_failed"].is_boolean() && j["parse_failed"].get<bool>()) {
      ++pf.parse_failures;
    }
    pf.order.push_back(id);
    pf.records.emplace(id, std::move(r));
  }
  return pf;
}

std::string join_ids(const std::vector<std::string>& ids) {
  std::string s;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (i) s += ", ";
    s += ids[i];
  }
  return s;
}

}  // namespace

fs::path resolve_checkpoint_dir(const fs::path& path) {
  const fs::path marker = path / "checkpoints" / "FINAL";
  if (fs::exists(marker)) {
    std::ifstream in(marker);
    std::string name;
    std::getline(in, name);
    return path / "checkpoints" / name;
  }
  return path;
}

int cmd_train(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] { return train_with(prepare_train_config(args), args, "train", out); });
}

int cmd_ablate(const TrainArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (!args.ablation) throw ConfigError("ablate needs --ablation");
    RunConfig cfg = prepare_train_config(args);
    if (!args.output_dir) cfg.output_dir /= std::string(ablation_name(*args.ablation));
    return train_with(cfg, args, "ablate", out);
  });
}

int cmd_predict(const PredictArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path dir = resolve_checkpoint_dir(args.checkpoint);
    LoadedCheckpoint ckpt = load_checkpoint(dir);
    RunConfig cfg = ckpt.config;
    if (args.closed_domain) cfg.data.schema = Schema::ClosedDomain;
    if (!fs::is_regular_file(args.input)) throw IoError("input file not found: " + args.input.string());

    json manifest;
    manifest["command"] = "predict";
    manifest["argv"] = argv_json(args.argv);
    manifest["checkpoint"] = fs::absolute(dir).string();
    manifest["checkpoint_hash"] = checkpoint_hash(dir);
    manifest["input"] = fs::absolute(args.input).string();
    manifest["seed"] = cfg.training.seed;
    manifest["source_revision"] = source_revision();
    manifest["backbone"] = cfg.backbone.identifier;
    manifest["schema"] = schema_name(cfg.data.schema);
    manifest["started_at"] = utc_now();
    fs::path manifest_path = args.output;
    manifest_path += ".manifest.json";
    write_atomic(manifest_path, manifest.dump(2) + "\n");

    const auto docs = load_corpus(args.input, cfg.data.schema);
    std::vector<Document> inputs;
    for (const auto& d : docs) inputs.push_back(d.document);
    FeatureCache cache = FeatureCache::from_environment();
    const auto preds = predict_documents(*ckpt.model, inputs, inference_options(cfg), &cache);
    std::string text;
    std::size_t failures = 0;
    for (const auto& p : preds) {
      text += prediction_record_json(p) + "\n";
      failures += p.parse_failed;
    }
    write_atomic(args.output, text);

    manifest["finished_at"] = utc_now();
    manifest["documents"] = preds.size();
    manifest["parse_failures"] = failures;
    write_atomic(manifest_path, manifest.dump(2) + "\n");
    out << "wrote " << preds.size() << " predictions to " << args.output.string() << " (" << failures
        << " parse failures)\n";
    return kOk;
  });
}

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const auto metrics = metric_set_from_name(args.metric);
    if (!metrics) throw ConfigError("unknown --metric '" + args.metric + "' (em|rouge|embed|all)");
    const Schema schema = args.closed_domain ? Schema::ClosedDomain : Schema::OpenDomain;
    const auto gold_docs = load_corpus(args.gold, schema);
    const PredictionFile pf = read_prediction_file(args.predictions);

    std::vector<std::string> missing, extra;
    std::set<std::string> gold_ids;
    for (const auto& d : gold_docs) {
      gold_ids.insert(d.document.id);
      if (!pf.records.count(d.document.id)) missing.push_back(d.document.id);
    }
    for (const auto& id : pf.order) {
      if (!gold_ids.count(id)) extra.push_back(id);
    }
    if (!missing.empty() || !extra.empty()) {
      std::string msg = "prediction and gold ids do not align";
      if (!missing.empty()) msg += "; missing predictions for: " + join_ids(missing);
      if (!extra.empty()) msg += "; predictions without gold: " + join_ids(extra);
      throw AlignmentError(msg);
    }

    std::vector<EventRecord> preds, golds;
    for (const auto& d : gold_docs) {
      golds.push_back(d.gold);
      preds.push_back(pf.records.at(d.document.id));
    }
    EvalReport report = evaluate_records(preds, golds, *metrics);
    report.parse_failures = pf.parse_failures;
    const std::string table = report_table(report);
    const std::string js = report_json(report);
    out << table;
    if (args.output_dir) {
      json manifest;
      manifest["command"] = "evaluate";
      manifest["argv"] = argv_json(args.argv);
      manifest["predictions"] = fs::absolute(args.predictions).string();
      manifest["gold"] = fs::absolute(args.gold).string();
      manifest["metric"] = args.metric;
      manifest["source_revision"] = source_revision();
      manifest["started_at"] = utc_now();
      write_atomic(*args.output_dir / "manifest.json", manifest.dump(2) + "\n");
      write_atomic(*args.output_dir / "report.json", js + "\n");
      write_atomic(*args.output_dir / "report.txt", table);
    } else {
      out << js << "\n";
    }
    return kOk;
  });
}

int cmd_synth(const SynthArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    SyntheticOptions opts;
    opts.count = args.count;
    opts.seed = args.seed;
    opts.with_argument_types = args.closed_domain;
    const auto docs = generate_synthetic_corpus(opts);
    std::string text;
    for (const auto& d : docs) text += corpus_record_json(d) + "\n";
    write_atomic(args.output, text);
    out << "wrote " << docs.size() << " documents to " << args.output.string() << "\n";
    return kOk;
  });
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> all_args(argv, argv + argc);
  CLI::App app{"Five-W event extraction: train, predict, evaluate, ablate"};
  app.require_subcommand(1);

  TrainArgs train_args;
  std::string ablation;
  std::optional<std::uint64_t> seed;
  std::string output;
  int resume = 0;
  auto add_train_flags = [&](CLI::App* sub) {
    sub->add_option("--config", train_args.config, "Run config file (JSON)")->required();
    sub->add_option("--seed", seed, "Override training.seed");
    sub->add_option("--ablation", ablation, "full|no-contrastive|additive|linear-graph");
    sub->add_option("--output", output, "Override output_dir");
    sub->add_option("--resume-from", resume, "Resume after this epoch's checkpoint");
    sub->add_flag("--closed-domain", train_args.closed_domain, "Document followed by its argument types");
    sub->add_flag("--quiet", train_args.quiet, "No per-epoch lines");
  };
  CLI::App* train = app.add_subcommand("train", "Train a model");
  add_train_flags(train);
  CLI::App* ablate = app.add_subcommand("ablate", "Train with an ablation preset");
  add_train_flags(ablate);

  PredictArgs predict_args;
  CLI::App* predict = app.add_subcommand("predict", "Generate 5W records for a dataset file");
  predict->add_option("--checkpoint", predict_args.checkpoint, "Checkpoint or run directory")->required();
  predict->add_option("--input", predict_args.input, "Dataset file")->required();
  predict->add_option("--output", predict_args.output, "Predictions file (JSONL)")->required();
  predict->add_flag("--closed-domain", predict_args.closed_domain, "Closed-domain inputs");

  EvaluateArgs eval_args;
  std::string eval_output;
  CLI::App* evaluate = app.add_subcommand("evaluate", "Score predictions against gold");
  evaluate->add_option("--input", eval_args.predictions, "Predictions file")->required();
  evaluate->add_option("--gold", eval_args.gold, "Gold dataset file")->required();
  evaluate->add_option("--metric", eval_args.metric, "em|rouge|embed|all");
  evaluate->add_option("--output", eval_output, "Directory for report.json / report.txt");
  evaluate->add_flag("--closed-domain", eval_args.closed_domain, "Closed-domain gold file");

  SynthArgs synth_args;
  CLI::App* synth = app.add_subcommand("synth", "Write a synthetic templated dataset");
  synth->add_option("--output", synth_args.output, "Dataset file")->required();
  synth->add_option("--count", synth_args.count, "Number of documents");
  synth->add_option("--seed", synth_args.seed, "Generator seed");
  synth->add_flag("--closed-domain", synth_args.closed_domain, "Attach argument types");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& e) {
    err << "usage error: " << e.what() << "\n";
    return kInputError;
  }

  if (train->parsed() || ablate->parsed()) {
    train_args.argv = all_args;
    train_args.seed = seed;
    if (!output.empty()) train_args.output_dir = output;
    if (resume > 0) train_args.resume_from_epoch = resume;
    if (!ablation.empty()) {
      auto a = ablation_from_name(ablation);
      if (!a) {
        err << "config error: unknown --ablation '" << ablation << "'\n";
        return kInputError;
      }
      train_args.ablation = a;
    }
    return train->parsed() ? cmd_train(train_args, out, err) : cmd_ablate(train_args, out, err);
  }
  if (predict->parsed()) {
    predict_args.argv = all_args;
    return cmd_predict(predict_args, out, err);
  }
  if (evaluate->parsed()) {
    eval_args.argv = all_args;
    if (!eval_output.empty()) eval_args.output_dir = eval_output;
    return cmd_evaluate(eval_args, out, err);
  }
  return cmd_synth(synth_args, out, err);
}

}  // namespace modee::cli
