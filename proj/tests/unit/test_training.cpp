#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>

#include "modee/checkpoint.hpp"
#include "modee/config.hpp"
#include "modee/errors.hpp"
#include "modee/losses.hpp"
#include "modee/synthetic.hpp"
#include "modee/training.hpp"
#include "oracles.hpp"
#include "support.hpp"

namespace modee {
namespace {

using ad::Matrix;

RunConfig tiny_config(const std::filesystem::path& out) {
  RunConfig cfg = default_run_config();
  cfg.backbone.toy.d_model = 8;
  cfg.backbone.toy.ffn_dim = 16;
  cfg.backbone.toy.encoder_layers = 1;
  cfg.backbone.toy.decoder_layers = 1;
  cfg.backbone.input_cap = 64;
  cfg.backbone.output_cap = 64;
  cfg.backbone.toy.max_positions = 64;
  cfg.generation.beam_size = 1;
  cfg.generation.max_output_tokens = 48;
  cfg.training.epochs = 3;
  cfg.training.effective_batch = 2;
  cfg.output_dir = out;
  return cfg;
}

std::vector<AnnotatedDocument> tiny_corpus(std::size_t n, std::uint64_t seed = 7) {
  SyntheticOptions opts;
  opts.count = n;
  opts.seed = seed;
  opts.min_filler = 0;
  opts.max_filler = 1;
  return generate_synthetic_corpus(opts);
}

// ---- cross-entropy ----

TEST(CrossEntropy, HandSoftmaxOracle) {
  Matrix logits(2, 3);
  logits << 1, 0, 0, 0, 2, 0;
  const std::vector<int> gold = {0, 1};
  const double row0 = -(1.0 - std::log(std::exp(1.0) + 2.0));
  const double row1 = -(2.0 - std::log(std::exp(2.0) + 2.0));
  const double loss = cross_entropy_loss(ad::constant(logits), gold).scalar();
  EXPECT_NEAR(loss, row0 + row1, 1e-12);
  EXPECT_NEAR(loss, 0.7910, 1e-4);
  EXPECT_NEAR(cross_entropy_loss(ad::constant(logits), gold, true).scalar(), (row0 + row1) / 2, 1e-12);
}

TEST(CrossEntropy, UniformLogitsGiveLengthTimesLogV) {
  for (int m : {1, 3, 17}) {
    for (int v : {2, 5, 263}) {
      std::vector<int> gold(static_cast<std::size_t>(m));
      for (int t = 0; t < m; ++t) gold[static_cast<std::size_t>(t)] = t % v;
      const double loss = cross_entropy_loss(ad::constant(Matrix::Constant(m, v, 0.37)), gold).scalar();
      EXPECT_NEAR(loss, m * std::log(static_cast<double>(v)), 1e-12);
    }
  }
}

// ---- contrastive ----

TEST(Contrastive, ThreeVectorOracle) {
  Matrix e(3, 2);
  e << 1, 0, 1, 0, 0, 1;
  const std::vector<TokenClass> labels = {TokenClass::Where, TokenClass::Where, TokenClass::Who};
  const auto loss = contrastive_loss(ad::constant(e), labels, ContrastiveOptions{.tau = 1.0});
  ASSERT_TRUE(loss.has_value());
  EXPECT_NEAR(loss->scalar(), std::log1p(std::exp(-1.0)), 1e-12);
  EXPECT_NEAR(loss->scalar(), 0.3133, 1e-4);
}

TEST(Contrastive, MatchesBruteForce) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    const auto batch = testing::random_contrastive_batch(rng);
    for (bool all_in : {false, true}) {
      const ContrastiveOptions opt{.tau = 0.1 + rng.uniform(), .all_in_denominator = all_in};
      const auto loss = contrastive_loss(ad::constant(batch.embeddings), batch.labels, opt);
      ASSERT_TRUE(loss.has_value());
      EXPECT_NEAR(loss->scalar(), testing::brute_force_contrastive(batch.embeddings, batch.labels, opt), 1e-10);
    }
  }
}

TEST(Contrastive, UniformSimilarityIsLogK) {
  // Identical rows: every term is -log(1 / K), K = denominator size.
  const Matrix e = Matrix::Constant(5, 3, 0.4);
  const std::vector<TokenClass> labels = {TokenClass::What, TokenClass::What, TokenClass::Who, TokenClass::Why,
                                          TokenClass::None};
  const double got = contrastive_loss(ad::constant(e), labels, ContrastiveOptions{})->scalar();
  EXPECT_NEAR(got, std::log(4.0), 1e-12);
}

TEST(Contrastive, ScaleAndRotationInvariant) {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const auto batch = testing::random_contrastive_batch(rng);
    const ContrastiveOptions opt{};
    const double base = contrastive_loss(ad::constant(batch.embeddings), batch.labels, opt)->scalar();
    Matrix scaled = batch.embeddings;
    for (ad::Index i = 0; i < scaled.rows(); ++i) scaled.row(i) *= 0.1 + 5.0 * rng.uniform();
    EXPECT_NEAR(contrastive_loss(ad::constant(scaled), batch.labels, opt)->scalar(), base, 1e-10);
    const Eigen::HouseholderQR<Matrix> qr(testing::random_matrix(rng, batch.embeddings.cols(), batch.embeddings.cols()));
    const Matrix q = qr.householderQ();
    EXPECT_NEAR(contrastive_loss(ad::constant(batch.embeddings * q), batch.labels, opt)->scalar(), base, 1e-10);
  }
}

TEST(Contrastive, DecreasesAsPositivesAlign) {
  const std::vector<TokenClass> labels = {TokenClass::Where, TokenClass::Where, TokenClass::When};
  double previous = INFINITY;
  for (double angle = 3.0; angle >= 0.0; angle -= 0.25) {
    Matrix e(3, 3);
    e << 1, 0, 0, std::cos(angle), 0, std::sin(angle), 0, 1, 0;
    const double l = contrastive_loss(ad::constant(e), labels, ContrastiveOptions{})->scalar();
    EXPECT_LT(l, previous);
    previous = l;
  }
}

TEST(Contrastive, NoPositivePairAndBadTemperature) {
  const std::vector<TokenClass> labels = {TokenClass::Where, TokenClass::When};
  const Matrix e = Matrix::Identity(2, 2);
  EXPECT_FALSE(contrastive_loss(ad::constant(e), labels, ContrastiveOptions{}).has_value());
  EXPECT_THROW(contrastive_loss(ad::constant(e), labels, ContrastiveOptions{.tau = 0.0}), ValueError);
  const std::vector<TokenClass> nones = {TokenClass::None, TokenClass::None};
  EXPECT_FALSE(contrastive_loss(ad::constant(e), nones, ContrastiveOptions{.none_as_class = false}).has_value());
  EXPECT_TRUE(contrastive_loss(ad::constant(e), nones, ContrastiveOptions{}).has_value());
}

TEST(ContrastiveSampling, PerClassCapAndMinimumRule) {
  TokenLabeling lab;
  for (std::size_t c = 0; c < kTokenClassCount; ++c) {
    for (int i = 0; i < 10; ++i) lab.labels.push_back(static_cast<TokenClass>(c));
  }
  const auto s = sample_contrastive_nodes(lab, 5, 3);
  ASSERT_TRUE(s.has_value());
  EXPECT_EQ(s->indices.size(), 30u);
  EXPECT_EQ(std::set<int>(s->indices.begin(), s->indices.end()).size(), 30u);
  for (std::size_t i = 0; i < s->indices.size(); ++i) EXPECT_EQ(lab.labels[s->indices[i]], s->labels[i]);

  TokenLabeling small;
  small.labels = {TokenClass::Who, TokenClass::None, TokenClass::Who, TokenClass::None, TokenClass::None,
                  TokenClass::What};
  const auto t = sample_contrastive_nodes(small, 5, 4);
  ASSERT_TRUE(t.has_value());
  EXPECT_EQ(t->indices.size(), 6u);
  EXPECT_EQ(sample_contrastive_nodes(small, 5, 4)->indices, t->indices);

  TokenLabeling singles;
  singles.labels = {TokenClass::Who, TokenClass::None, TokenClass::What};
  EXPECT_FALSE(sample_contrastive_nodes(singles, 5, 1).has_value());
}

// ---- optimizer groups ----

TEST(OptimizerGroups, PartitionAndSettings) {
  const auto docs = tiny_corpus(4);
  const RunConfig cfg = tiny_config(testing::temp_dir("groups"));
  auto model = make_model(cfg, docs);
  const ParameterSet all = model->trainable_parameters();
  auto groups = make_optimizer_groups(optimizer_settings(cfg.training), all);
  const auto& a = groups.group(OptimizerGroupId::TextDecoder);
  const auto& b = groups.group(OptimizerGroupId::GraphFusion);
  EXPECT_EQ(a.parameters().size() + b.parameters().size(), all.size());
  for (const auto& p : a.parameters()) {
    EXPECT_TRUE(p.tag == ModuleTag::TextEncoder || p.tag == ModuleTag::Decoder);
  }
  for (const auto& p : b.parameters()) {
    EXPECT_TRUE(p.tag == ModuleTag::GraphEncoder || p.tag == ModuleTag::Fusion);
  }
  EXPECT_TRUE(a.settings().decoupled_decay);
  EXPECT_FALSE(b.settings().decoupled_decay);
  EXPECT_DOUBLE_EQ(b.settings().weight_decay, 5e-4);

  GroupAssignment partial = default_group_assignment();
  partial.erase(ModuleTag::Fusion);
  EXPECT_THROW(make_optimizer_groups(optimizer_settings(cfg.training), all, partial), ConfigError);
}

TEST(Adam, MatchesClosedFormFirstStep) {
  ad::Var w = ad::parameter(Matrix::Constant(1, 1, 2.0));
  AdamGroup g("g", AdamSettings{.lr = 0.1});
  g.add(NamedParameter{"w", ModuleTag::Fusion, w});
  ad::backward(ad::scale(w, 3.0));
  g.step();
  // Bias-corrected first step moves by lr * sign(grad).
  EXPECT_NEAR(w.value()(0, 0), 2.0 - 0.1, 1e-7);
  EXPECT_THROW(AdamGroup("bad", AdamSettings{.lr = 0.0}), ConfigError);
}

// ---- losses on a document ----

TEST(DocumentLosses, NoContrastiveAblationReportsCeOnly) {
  const auto docs = tiny_corpus(2);
  RunConfig cfg = tiny_config(testing::temp_dir("nocon"));
  cfg.training.ablation = Ablation::NoContrastive;
  auto model = make_model(cfg, docs);
  TrainState state(*model, cfg.training);
  const StepLosses s = training_step(state, docs[0], cfg, 1);
  EXPECT_EQ(s.contrastive, 0.0);
  EXPECT_EQ(s.total, s.ce);
}

TEST(DocumentLosses, FullModeAddsWeightedContrastive) {
  const auto docs = tiny_corpus(2);
  RunConfig cfg = tiny_config(testing::temp_dir("full"));
  cfg.training.lambda_contrastive = 0.5;
  auto model = make_model(cfg, docs);
  const DocumentLosses l = document_losses(*model, docs[0], cfg, 9);
  ASSERT_TRUE(l.contrastive.has_value());
  EXPECT_NEAR(l.total.scalar(), l.ce.scalar() + 0.5 * l.contrastive->scalar(), 1e-12);
  EXPECT_GT(l.ce.scalar(), 0.0);
}

TEST(DocumentLosses, GraphAndFusionGradientsMatchFiniteDifferences) {
  const auto docs = tiny_corpus(3, 21);
  RunConfig cfg = tiny_config(testing::temp_dir("fd"));
  cfg.backbone.input_cap = 6;
  cfg.backbone.output_cap = 10;
  auto model = make_model(cfg, docs);
  auto loss = [&] { return document_losses(*model, docs[1], cfg, 5).total; };
  ad::backward(loss());
  ParameterSet params;
  params.extend(model->graph_encoder().parameters());
  params.extend(model->fusion()->parameters());
  double worst = 0.0;
  for (auto& p : params.entries()) {
    const Matrix numeric = testing::numeric_gradient([&] { return loss().scalar(); }, p.var);
    worst = std::max(worst, testing::relative_error(testing::grad_or_zero(p.var), numeric));
  }
  EXPECT_LT(worst, 1e-4);
}

// ---- accumulation and runs ----

TEST(TrainState, StepsEveryEffectiveBatchAndFlushes) {
  const auto docs = tiny_corpus(5);
  RunConfig cfg = tiny_config(testing::temp_dir("accum"));
  cfg.training.effective_batch = 2;
  auto model = make_model(cfg, docs);
  TrainState state(*model, cfg.training);
  std::vector<bool> stepped;
  for (std::size_t i = 0; i < docs.size(); ++i) stepped.push_back(training_step(state, docs[i], cfg, i).optimizer_stepped);
  EXPECT_EQ(stepped, (std::vector<bool>{false, true, false, true, false}));
  EXPECT_EQ(state.pending(), 1);
  EXPECT_TRUE(state.flush());
  EXPECT_EQ(state.pending(), 0);
  EXPECT_EQ(state.optimizer_steps(), 3u);
  EXPECT_FALSE(state.flush());
}

TEST(RunTraining, WritesCheckpointsAndMetrics) {
  const auto docs = tiny_corpus(4);
  const auto out = testing::temp_dir("run");
  RunConfig cfg = tiny_config(out);
  cfg.training.epochs = 10;
  auto model = make_model(cfg, docs);
  const auto val = std::span(docs).subspan(0, 1);
  const TrainingResult r = run_training(*model, docs, val, cfg);
  ASSERT_EQ(r.epochs.size(), 10u);
  ASSERT_EQ(r.checkpoints.size(), 10u);
  for (int e = 1; e <= 10; ++e) EXPECT_TRUE(std::filesystem::exists(epoch_checkpoint_dir(cfg, e) / "weights.bin"));
  EXPECT_EQ(r.final_checkpoint, epoch_checkpoint_dir(cfg, 10));
  EXPECT_EQ(checkpoint_hash(r.final_checkpoint), r.final_checkpoint_hash);

  std::ifstream in(out / "metrics.jsonl");
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    const auto j = nlohmann::json::parse(line);
    EXPECT_EQ(j.at("epoch").get<int>(), ++lines);
    EXPECT_TRUE(std::isfinite(j.at("ce").get<double>()));
    EXPECT_TRUE(j.at("val_em_f1").is_number());
  }
  EXPECT_EQ(lines, 10);
  EXPECT_LT(r.epochs.back().ce, r.epochs.front().ce);

  const LoadedCheckpoint loaded = load_checkpoint(r.final_checkpoint);
  EXPECT_TRUE(loaded.info.final);
  EXPECT_EQ(loaded.model->weights_checksum(), model->weights_checksum());
}

TEST(RunTraining, DeterministicAndResumable) {
  const auto docs = tiny_corpus(5);
  auto run = [&](const std::filesystem::path& out, int epochs, std::optional<int> resume) {
    RunConfig cfg = tiny_config(out);
    cfg.training.epochs = epochs;
    auto model = make_model(cfg, docs);
    TrainingOptions opts;
    opts.resume_from_epoch = resume;
    return run_training(*model, docs, {}, cfg, opts);
  };
  const auto a = run(testing::temp_dir("det-a"), 4, std::nullopt);
  const auto b = run(testing::temp_dir("det-b"), 4, std::nullopt);
  EXPECT_EQ(a.final_checkpoint_hash, b.final_checkpoint_hash);

  const auto dir = testing::temp_dir("resume");
  run(dir, 2, std::nullopt);
  const auto resumed = run(dir, 4, 2);
  EXPECT_EQ(resumed.final_checkpoint_hash, a.final_checkpoint_hash);
  ASSERT_EQ(resumed.epochs.size(), 2u);
  for (std::size_t e = 0; e < 2; ++e) {
    EXPECT_EQ(resumed.epochs[e].epoch, a.epochs[e + 2].epoch);
    EXPECT_EQ(resumed.epochs[e].ce, a.epochs[e + 2].ce);
    EXPECT_EQ(resumed.epochs[e].checkpoint_hash, a.epochs[e + 2].checkpoint_hash);
    EXPECT_FALSE(resumed.epochs[e].val_em_f1.has_value());
  }
  std::ifstream in(dir / "metrics.jsonl");
  std::string line;
  std::vector<std::string> hashes;
  while (std::getline(in, line)) hashes.push_back(nlohmann::json::parse(line).at("checkpoint_hash"));
  ASSERT_EQ(hashes.size(), 4u);
  for (std::size_t e = 0; e < 4; ++e) EXPECT_EQ(hashes[e], a.epochs[e].checkpoint_hash);
}

TEST(RunTraining, EmptyTrainSplitIsAnError) {
  RunConfig cfg = tiny_config(testing::temp_dir("empty"));
  const auto docs = tiny_corpus(2);
  auto model = make_model(cfg, docs);
  EXPECT_THROW(run_training(*model, {}, {}, cfg), ValueError);
}

// ---- configuration ----

TEST(RunConfigJson, RoundTripAndStrictness) {
  RunConfig cfg = tiny_config("/tmp/somewhere");
  cfg.training.ablation = Ablation::LinearGraph;
  cfg.training.tau = 0.25;
  cfg.data.path = "/data/train.jsonl";
  const RunConfig back = run_config_from_json(run_config_to_json(cfg));
  EXPECT_EQ(run_config_to_json(back), run_config_to_json(cfg));
  EXPECT_EQ(back.effective_topology(), Topology::Linear);

  EXPECT_THROW(run_config_from_json(R"({"training": {"epochz": 3}})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"training": {"epochs": "three"}})"), ConfigError);
  EXPECT_THROW(run_config_from_json(R"({"training": {"per_class_samples": 1}})"), ConfigError);
  EXPECT_THROW(run_config_from_json("{not json"), ConfigError);

  const RunConfig rel = run_config_from_json(R"({"data": {"path": "d.jsonl"}, "output_dir": "out"})", "/base");
  EXPECT_EQ(rel.data.path, std::filesystem::path("/base/d.jsonl"));
  EXPECT_EQ(rel.output_dir, std::filesystem::path("/base/out"));
}

TEST(RunConfigJson, ClosedDomainDefaults) {
  const RunConfig c = default_run_config(Schema::ClosedDomain);
  EXPECT_EQ(c.backbone.input_cap, 1024u);
  EXPECT_EQ(c.backbone.output_cap, 1024u);
  EXPECT_EQ(c.training.epochs, 20);
  const RunConfig o = default_run_config();
  EXPECT_EQ(o.backbone.input_cap, 512u);
  EXPECT_EQ(o.training.epochs, 10);
  EXPECT_EQ(o.training.effective_batch, 8);
}

}  // namespace
}  // namespace modee
