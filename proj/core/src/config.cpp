#include "modee/config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "modee/errors.hpp"
#include "modee/rng.hpp"

namespace modee {

using nlohmann::json;

namespace {

class Section {
 public:
  Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + " must be an object");
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!used_.count(it.key())) throw ConfigError("unknown config key '" + path_ + "." + it.key() + "'");
    }
  }

  const json* get(const std::string& key) {
    used_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  template <typename T>
  void read(const std::string& key, T& out) {
    const json* v = get(key);
    if (!v) return;
    try {
      if constexpr (std::is_same_v<T, bool>) {
        if (!v->is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T>) {
        if (!v->is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>) {
          if (v->is_number_integer() && !v->is_number_unsigned() && v->get<long long>() < 0) {
            throw ConfigError("");
          }
        }
      } else if constexpr (std::is_floating_point_v<T>) {
        if (!v->is_number()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v->is_string()) throw ConfigError("");
      }
      out = v->get<T>();
    } catch (const std::exception&) {
      throw ConfigError("config key '" + path_ + "." + key + "' has the wrong type");
    }
  }

  Section child(const std::string& key) {
    const json* v = get(key);
    static const json empty = json::object();
    return Section(v ? *v : empty, path_ + "." + key);
  }

  bool has(const std::string& key) const { return j_.contains(key); }
  std::string where() const { return "config section '" + path_ + "'"; }
  const std::string& path() const { return path_; }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> used_;
};

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.empty() || p.is_absolute() || base.empty()) return p;
  return base / p;
}

}  // namespace

std::string_view schema_name(Schema s) {
  return s == Schema::ClosedDomain ? "closed-domain" : "open-domain";
}

std::optional<Schema> schema_from_name(std::string_view name) {
  if (name == "open-domain") return Schema::OpenDomain;
  if (name == "closed-domain") return Schema::ClosedDomain;
  return std::nullopt;
}

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("training.epochs must be >= 1");
  if (effective_batch < 1) throw ConfigError("training.effective_batch must be >= 1");
  if (!(lr_text > 0.0)) throw ConfigError("training.lr_text must be > 0");
  if (!(lr_graph_fusion > 0.0)) throw ConfigError("training.lr_graph_fusion must be > 0");
  if (!(weight_decay_text >= 0.0)) throw ConfigError("training.weight_decay_text must be >= 0");
  if (!(weight_decay_graph_fusion >= 0.0)) {
    throw ConfigError("training.weight_decay_graph_fusion must be >= 0");
  }
  if (!(tau > 0.0)) throw ConfigError("training.tau must be > 0");
  if (!std::isfinite(lambda_contrastive) || lambda_contrastive < 0.0) {
    throw ConfigError("training.lambda_contrastive must be finite and >= 0");
  }
  if (per_class_samples < 2) throw ConfigError("training.per_class_samples must be >= 2");
}

void RunConfig::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw ConfigError("unsupported config schema_version " + std::to_string(schema_version));
  }
  if (backbone.identifier != "toy-transformer") {
    throw ConfigError("unknown backbone identifier '" + backbone.identifier + "'");
  }
  const auto& t = backbone.toy;
  if (t.d_model < 1 || t.heads < 1 || t.d_model % t.heads != 0) {
    throw ConfigError("backbone.d_model must be a positive multiple of backbone.heads");
  }
  if (t.encoder_layers < 1 || t.decoder_layers < 1 || t.ffn_dim < 1) {
    throw ConfigError("backbone layer counts and ffn_dim must be positive");
  }
  if (backbone.input_cap < 1 || backbone.output_cap < 1) throw ConfigError("backbone caps must be >= 1");
  if (static_cast<std::size_t>(t.max_positions) < std::max(backbone.input_cap, backbone.output_cap)) {
    throw ConfigError("backbone.max_positions must cover input_cap and output_cap");
  }
  if (graph.sample_sizes[0] < 1 || graph.sample_sizes[1] < 1) {
    throw ConfigError("graph.sample_sizes entries must be >= 1");
  }
  if (generation.beam_size < 1) throw ConfigError("generation.beam_size must be >= 1");
  if (generation.max_output_tokens < 1) throw ConfigError("generation.max_output_tokens must be >= 1");
  for (double r : data.split) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw ConfigError("data.split ratios must be finite and >= 0");
  }
  if (std::abs(data.split[0] + data.split[1] + data.split[2] - 1.0) > 1e-9) {
    throw ConfigError("data.split ratios must sum to 1");
  }
  training.validate();
}

Topology RunConfig::effective_topology() const {
  return training.ablation == Ablation::LinearGraph ? Topology::Linear : topology;
}

ModelConfig RunConfig::model_config() const {
  ModelConfig m;
  m.backbone = backbone.toy;
  m.backbone.init_seed = derive_seed(training.seed, {1});
  m.graph = graph;
  m.fusion = fusion;
  m.topology = effective_topology();
  m.graph_init_seed = derive_seed(training.seed, {2});
  m.fusion_init_seed = derive_seed(training.seed, {3});
  return m;
}

RunConfig default_run_config(Schema schema) {
  RunConfig cfg;
  cfg.data.schema = schema;
  if (schema == Schema::ClosedDomain) {
    cfg.backbone.input_cap = 1024;
    cfg.backbone.output_cap = 1024;
    cfg.generation.max_output_tokens = 1024;
    cfg.training.epochs = 20;
  }
  cfg.backbone.toy.max_positions =
      static_cast<int>(std::max(cfg.backbone.input_cap, cfg.backbone.output_cap));
  return cfg;
}

RunConfig run_config_from_json(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  Section root(j, "config");

  Schema schema = Schema::OpenDomain;
  if (j.is_object() && j.contains("data") && j["data"].is_object() && j["data"].contains("schema")) {
    const auto& s = j["data"]["schema"];
    if (!s.is_string() || !schema_from_name(s.get<std::string>())) {
      throw ConfigError("data.schema must be 'open-domain' or 'closed-domain'");
    }
    schema = *schema_from_name(s.get<std::string>());
  }
  RunConfig cfg = default_run_config(schema);
  root.read("schema_version", cfg.schema_version);

  {
    Section s = root.child("data");
    std::string path, schema_str;
    s.read("path", path);
    cfg.data.path = resolve(path, base_dir);
    s.read("schema", schema_str);
    if (const json* split = s.get("split")) {
      if (!split->is_array() || split->size() != 3) throw ConfigError("data.split must be [train, val, test]");
      for (std::size_t i = 0; i < 3; ++i) {
        if (!(*split)[i].is_number()) throw ConfigError("data.split entries must be numbers");
        cfg.data.split[i] = (*split)[i].get<double>();
      }
    }
    s.read("split_seed", cfg.data.split_seed);
    s.finish();
  }
  {
    Section s = root.child("backbone");
    s.read("identifier", cfg.backbone.identifier);
    s.read("d_model", cfg.backbone.toy.d_model);
    s.read("heads", cfg.backbone.toy.heads);
    s.read("encoder_layers", cfg.backbone.toy.encoder_layers);
    s.read("decoder_layers", cfg.backbone.toy.decoder_layers);
    s.read("ffn_dim", cfg.backbone.toy.ffn_dim);
    s.read("max_positions", cfg.backbone.toy.max_positions);
    s.read("vocab_max_size", cfg.backbone.vocab_max_size);
    s.read("input_cap", cfg.backbone.input_cap);
    s.read("output_cap", cfg.backbone.output_cap);
    if (const json* p = s.get("pretrained_checkpoint"); p && !p->is_null()) {
      if (!p->is_string()) throw ConfigError("backbone.pretrained_checkpoint must be a path or null");
      cfg.backbone.pretrained_checkpoint = resolve(p->get<std::string>(), base_dir);
    }
    if (!s.has("max_positions")) {
      cfg.backbone.toy.max_positions =
          static_cast<int>(std::max(cfg.backbone.input_cap, cfg.backbone.output_cap));
    }
    s.finish();
  }
  {
    Section s = root.child("graph");
    std::string topology = std::string(topology_name(cfg.topology));
    s.read("topology", topology);
    auto t = topology_from_name(topology);
    if (!t) throw ConfigError("graph.topology must be 'complete' or 'linear'");
    cfg.topology = *t;
    if (const json* sizes = s.get("sample_sizes")) {
      if (!sizes->is_array() || sizes->size() != 2) throw ConfigError("graph.sample_sizes must hold two integers");
      for (std::size_t i = 0; i < 2; ++i) {
        if (!(*sizes)[i].is_number_integer()) throw ConfigError("graph.sample_sizes must hold two integers");
        cfg.graph.sample_sizes[i] = (*sizes)[i].get<int>();
      }
    }
    s.read("full_neighborhood", cfg.graph.full_neighborhood);
    s.finish();
  }
  {
    Section s = root.child("fusion");
    s.read("projection_bias", cfg.fusion.projection_bias);
    s.read("softmax_gate", cfg.fusion.softmax_gate);
    s.finish();
  }
  {
    Section s = root.child("training");
    auto& t = cfg.training;
    s.read("epochs", t.epochs);
    s.read("effective_batch", t.effective_batch);
    s.read("lr_text", t.lr_text);
    s.read("weight_decay_text", t.weight_decay_text);
    s.read("lr_graph_fusion", t.lr_graph_fusion);
    s.read("weight_decay_graph_fusion", t.weight_decay_graph_fusion);
    s.read("tau", t.tau);
    s.read("lambda_contrastive", t.lambda_contrastive);
    s.read("per_class_samples", t.per_class_samples);
    std::string ablation(ablation_name(t.ablation));
    s.read("ablation", ablation);
    auto a = ablation_from_name(ablation);
    if (!a) throw ConfigError("unknown training.ablation '" + ablation + "'");
    t.ablation = *a;
    s.read("seed", t.seed);
    s.read("ce_mean_reduction", t.ce_mean_reduction);
    s.read("contrastive_all_in_denominator", t.contrastive_all_in_denominator);
    s.read("none_as_class", t.none_as_class);
    s.read("validate_each_epoch", t.validate_each_epoch);
    s.finish();
  }
  {
    Section s = root.child("generation");
    s.read("beam_size", cfg.generation.beam_size);
    s.read("max_output_tokens", cfg.generation.max_output_tokens);
    s.finish();
  }
  std::string out_dir = cfg.output_dir.string();
  root.read("output_dir", out_dir);
  cfg.output_dir = resolve(out_dir, base_dir);
  root.finish();
  cfg.validate();
  return cfg;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return run_config_from_json(buf.str(), path.parent_path());
}

std::string run_config_to_json(const RunConfig& cfg) {
  const auto& b = cfg.backbone;
  const auto& t = cfg.training;
  json j;
  j["schema_version"] = cfg.schema_version;
  j["data"] = {{"path", cfg.data.path.string()},
               {"schema", schema_name(cfg.data.schema)},
               {"split", cfg.data.split},
               {"split_seed", cfg.data.split_seed}};
  j["backbone"] = {{"identifier", b.identifier},
                   {"d_model", b.toy.d_model},
                   {"heads", b.toy.heads},
                   {"encoder_layers", b.toy.encoder_layers},
                   {"decoder_layers", b.toy.decoder_layers},
                   {"ffn_dim", b.toy.ffn_dim},
                   {"max_positions", b.toy.max_positions},
                   {"vocab_max_size", b.vocab_max_size},
                   {"input_cap", b.input_cap},
                   {"output_cap", b.output_cap},
                   {"pretrained_checkpoint",
                    b.pretrained_checkpoint ? json(b.pretrained_checkpoint->string()) : json(nullptr)}};
  j["graph"] = {{"topology", topology_name(cfg.topology)},
                {"sample_sizes", cfg.graph.sample_sizes},
                {"full_neighborhood", cfg.graph.full_neighborhood}};
  j["fusion"] = {{"projection_bias", cfg.fusion.projection_bias},
                 {"softmax_gate", cfg.fusion.softmax_gate}};
  j["training"] = {{"epochs", t.epochs},
                   {"effective_batch", t.effective_batch},
                   {"lr_text", t.lr_text},
                   {"weight_decay_text", t.weight_decay_text},
                   {"lr_graph_fusion", t.lr_graph_fusion},
                   {"weight_decay_graph_fusion", t.weight_decay_graph_fusion},
                   {"tau", t.tau},
                   {"lambda_contrastive", t.lambda_contrastive},
                   {"per_class_samples", t.per_class_samples},
                   {"ablation", ablation_name(t.ablation)},
                   {"seed", t.seed},
                   {"ce_mean_reduction", t.ce_mean_reduction},
                   {"contrastive_all_in_denominator", t.contrastive_all_in_denominator},
                   {"none_as_class", t.none_as_class},
                   {"validate_each_epoch", t.validate_each_epoch}};
  j["generation"] = {{"beam_size", cfg.generation.beam_size},
                     {"max_output_tokens", cfg.generation.max_output_tokens}};
  j["output_dir"] = cfg.output_dir.string();
  return j.dump(2);
}

}  // namespace modee
