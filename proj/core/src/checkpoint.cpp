#include "modee/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

#include "modee/errors.hpp"

namespace modee {

namespace fs = std::filesystem;

namespace {

std::string read_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  out << content;
  out.close();
  if (!out) throw IoError("cannot write " + p.string());
}

}  // namespace

std::string save_checkpoint(const fs::path& dir, const ModeeModel& model, const OptimizerGroups* optimizer,
                            const RunConfig& cfg, const CheckpointInfo& info) {
  fs::path tmp = dir;
  tmp += ".tmp";
  std::error_code ec;
  fs::remove_all(tmp, ec);
  fs::create_directories(tmp, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + tmp.string() + ": " + ec.message());

  nlohmann::json meta = nlohmann::json::parse(run_config_to_json(cfg));
  const auto& bb = model.backbone();
  meta["checkpoint"] = {{"epoch", info.epoch},
                        {"step", info.step},
                        {"final", info.final},
                        {"backbone", bb.identifier()},
                        {"d_model", bb.hidden_dim()},
                        {"vocab_size", bb.vocabulary().size()},
                        {"input_cap", cfg.backbone.input_cap},
                        {"output_cap", cfg.backbone.output_cap},
                        {"topology", topology_name(model.topology())}};
  write_file(tmp / "config.json", meta.dump(2) + "\n");
  write_matrices(tmp / "weights.bin", model.export_weights());
  if (optimizer) optimizer->save(tmp / "optimizer.bin");
  bb.vocabulary().save(tmp / "vocab.txt");

  fs::remove_all(dir, ec);
  fs::rename(tmp, dir, ec);
  if (ec) throw IoError("cannot move checkpoint into " + dir.string() + ": " + ec.message());
  return checkpoint_hash(dir);
}

LoadedCheckpoint load_checkpoint(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory not found: " + dir.string());
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(read_file(dir / "config.json"));
  } catch (const nlohmann::json::exception& e) {
    throw IoError("malformed checkpoint config in " + dir.string() + ": " + e.what());
  }
  LoadedCheckpoint out;
  if (meta.contains("checkpoint")) {
    const auto& c = meta["checkpoint"];
    out.info.epoch = c.value("epoch", 0);
    out.info.step = c.value("step", std::uint64_t{0});
    out.info.final = c.value("final", false);
    meta.erase("checkpoint");
  }
  out.config = run_config_from_json(meta.dump());
  Vocabulary vocab = Vocabulary::load(dir / "vocab.txt");
  out.model = std::make_unique<ModeeModel>(std::move(vocab), out.config.model_config(),
                                           out.config.training.ablation);
  out.model->import_weights(read_matrices(dir / "weights.bin"));
  return out;
}

std::string checkpoint_hash(const fs::path& dir) {
  const std::string w = read_file(dir / "weights.bin");
  std::uint64_t h = fnv1a(w.data(), w.size());
  if (fs::exists(dir / "optimizer.bin")) {
    const std::string o = read_file(dir / "optimizer.bin");
    h = fnv1a(o.data(), o.size(), h);
  }
  return hex64(h);
}

}  // namespace modee
