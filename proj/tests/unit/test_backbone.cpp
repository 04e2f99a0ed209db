#include <gtest/gtest.h>

#include <cmath>

#include "modee/backbone.hpp"
#include "modee/errors.hpp"
#include "modee/losses.hpp"
#include "modee/optim.hpp"
#include "modee/synthetic.hpp"
#include "modee/tokenizer.hpp"
#include "modee/toy_transformer.hpp"
#include "support.hpp"

namespace modee {
namespace {

using ad::Matrix;

std::vector<std::string> synthetic_texts(std::size_t n) {
  SyntheticOptions opts;
  opts.count = n;
  std::vector<std::string> texts;
  for (const auto& d : generate_synthetic_corpus(opts)) {
    texts.push_back(d.document.text);
    texts.push_back(render_5w_string(d.gold));
  }
  return texts;
}

ToyTransformer make_toy(std::size_t vocab_size = 64, std::uint64_t seed = 1) {
  ToyTransformerConfig cfg;
  cfg.init_seed = seed;
  return ToyTransformer(Vocabulary::build(synthetic_texts(8), vocab_size), cfg);
}

TEST(Tokenizer, EmptyTextIsJustEndToken) {
  const Vocabulary v;
  const auto t = tokenize(v, "", 512);
  EXPECT_EQ(t.token_ids, std::vector<int>{Vocabulary::kEos});
  EXPECT_FALSE(t.truncated);
}

TEST(Tokenizer, CapTruncates) {
  std::string text;
  for (int i = 0; i < 599; ++i) text += "tok ";
  const Vocabulary v = Vocabulary::build(std::vector<std::string>{text});
  const auto full = tokenize(v, text, 4096);
  ASSERT_EQ(full.size(), 600u);
  EXPECT_FALSE(full.truncated);
  const auto t = tokenize(v, text, 512);
  EXPECT_EQ(t.size(), 512u);
  EXPECT_EQ(t.offsets.size(), 512u);
  EXPECT_TRUE(t.truncated);
  EXPECT_EQ(t.token_ids.back(), Vocabulary::kEos);
  EXPECT_EQ(tokenize(v, text, 512), t);
  EXPECT_THROW(tokenize(v, text, 0), ValueError);
}

TEST(Tokenizer, OffsetsPointAtPieceText) {
  const std::string text = "In Pune, 40 people  marched.";
  const auto pieces = split_pieces(text);
  std::vector<std::string> got;
  for (const auto& p : pieces) got.push_back(text.substr(p.offset.start, p.offset.end - p.offset.start));
  EXPECT_EQ(got, (std::vector<std::string>{"In", "Pune", ",", "40", "people", "marched", "."}));
}

TEST(Tokenizer, DecodeInvertsTargetEncoding) {
  const std::string s = "where:Pune; when:none; what:40 people marched; who:none; why:fuel prices";
  const Vocabulary v = Vocabulary::build(std::vector<std::string>{s});
  const auto ids = encode_target(v, s, 512);
  EXPECT_EQ(ids.back(), Vocabulary::kEos);
  EXPECT_EQ(decode(v, ids), s);
}

TEST(Tokenizer, VocabularySaveLoad) {
  const Vocabulary v = Vocabulary::build(synthetic_texts(4), 50);
  EXPECT_EQ(v.size(), 50);
  EXPECT_EQ(v.piece(Vocabulary::kPad), "<pad>");
  const auto dir = testing::temp_dir("vocab");
  v.save(dir / "vocab.txt");
  EXPECT_EQ(Vocabulary::load(dir / "vocab.txt"), v);
}

TEST(ToyBackbone, EncodeShapeAndDeterminism) {
  auto bb = make_toy();
  const auto tok = bb.tokenize("In Mumbai heavy rain flooded roads .", 512);
  const Matrix a = bb.encode_tokens(tok).value();
  EXPECT_EQ(a.rows(), static_cast<ad::Index>(tok.size()));
  EXPECT_EQ(a.cols(), bb.hidden_dim());
  EXPECT_TRUE(a.allFinite());
  ad::NoGradGuard guard;
  EXPECT_TRUE((bb.encode_tokens(tok).value().array() == a.array()).all());
}

TEST(ToyBackbone, DifferentDocumentsDifferentEmbeddings) {
  auto bb = make_toy();
  const auto t1 = bb.tokenize("In Mumbai rain fell .", 512);
  const auto t2 = bb.tokenize("In Delhi police arrived .", 512);
  ASSERT_EQ(t1.size(), t2.size());
  EXPECT_GT((bb.encode_tokens(t1).value() - bb.encode_tokens(t2).value()).norm(), 1e-6);
}

TEST(ToyBackbone, TeacherForcedLogitsShapeAndConditioning) {
  auto bb = make_toy();
  Rng rng(5);
  const Matrix cond = testing::random_matrix(rng, 6, bb.hidden_dim());
  const std::vector<int> gold = {5, 9, 7, Vocabulary::kEos};
  const Matrix l1 = bb.teacher_forced_logits(ad::constant(cond), gold).value();
  EXPECT_EQ(l1.rows(), 4);
  EXPECT_EQ(l1.cols(), bb.vocabulary().size());
  Matrix cond2 = cond;
  cond2(2, 3) += 0.5;
  const Matrix l2 = bb.teacher_forced_logits(ad::constant(cond2), gold).value();
  EXPECT_GT((l1 - l2).norm(), 1e-8);
}

TEST(ToyBackbone, ConditioningGradientMatchesFiniteDifferences) {
  auto bb = make_toy();
  Rng rng(6);
  ad::Var cond = ad::parameter(testing::random_matrix(rng, 3, bb.hidden_dim()));
  const std::vector<int> gold = {7, Vocabulary::kEos};
  auto loss = [&] { return cross_entropy_loss(bb.teacher_forced_logits(cond, gold), gold); };
  ad::backward(loss());
  const Matrix numeric = testing::numeric_gradient([&] { return loss().scalar(); }, cond);
  EXPECT_GT(cond.grad().norm(), 1e-6);
  EXPECT_LT(testing::relative_error(cond.grad(), numeric), 1e-3);
}

TEST(ToyBackbone, RejectsBadInputs) {
  auto bb = make_toy();
  const ad::Var cond = ad::constant(Matrix::Zero(3, bb.hidden_dim()));
  EXPECT_THROW(bb.teacher_forced_logits(cond, std::vector<int>{}), BackboneError);
  EXPECT_THROW(bb.teacher_forced_logits(cond, std::vector<int>{bb.vocabulary().size()}), BackboneError);
  EXPECT_THROW(bb.teacher_forced_logits(ad::constant(Matrix::Zero(3, 5)), std::vector<int>{3}), BackboneError);
}

/// Fixed next-token tables keyed by prefix length and last token.
class ScriptedDecoder : public StepDecoder {
 public:
  Eigen::VectorXd next_log_probs(std::span<const int> prefix) override {
    Eigen::VectorXd p(4);
    if (prefix.size() == 1) {
      p << 1e-9, 1e-9, 0.6, 0.4;  // A looks better first
    } else if (prefix.back() == 2) {
      p << 1e-9, 1.0 / 3, 1.0 / 3, 1.0 / 3;  // after A, nothing is likely
    } else {
      p << 1e-9, 0.99, 0.005, 0.005;  // after B, stop
    }
    return p.array().log();
  }
};

TEST(BeamSearch, WiderBeamFindsBetterSequence) {
  ScriptedDecoder dec;
  GenerationConfig cfg;
  cfg.max_output_tokens = 10;
  cfg.beam_size = 1;
  EXPECT_EQ(beam_search(dec, cfg), (std::vector<int>{2}));
  cfg.beam_size = 2;
  EXPECT_EQ(beam_search(dec, cfg), (std::vector<int>{3}));
}

class NeverStops : public StepDecoder {
 public:
  Eigen::VectorXd next_log_probs(std::span<const int>) override {
    Eigen::VectorXd p = Eigen::VectorXd::Constant(5, std::log(0.2));
    p(1) = -50.0;
    return p;
  }
};

TEST(BeamSearch, RespectsOutputCap) {
  NeverStops dec;
  for (int beam : {1, 3}) {
    GenerationConfig cfg;
    cfg.beam_size = beam;
    cfg.max_output_tokens = 7;
    EXPECT_LE(beam_search(dec, cfg).size(), 7u);
  }
}

TEST(BeamSearch, BeamOneIsGreedyOnToyBackbone) {
  auto bb = make_toy();
  Rng rng(8);
  const Matrix cond = testing::random_matrix(rng, 5, bb.hidden_dim());
  GenerationConfig cfg;
  cfg.beam_size = 1;
  cfg.max_output_tokens = 12;
  auto dec = bb.step_decoder(cond);
  std::vector<int> prefix = {cfg.start_token}, greedy;
  while (greedy.size() < cfg.max_output_tokens) {
    const Eigen::VectorXd lp = dec->next_log_probs(prefix);
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < lp.size(); ++i) {
      if (lp(i) > lp(best)) best = i;
    }
    if (best == cfg.end_token) break;
    greedy.push_back(static_cast<int>(best));
    prefix.push_back(static_cast<int>(best));
  }
  if (greedy.size() == cfg.max_output_tokens) greedy.pop_back();
  const auto ids = bb.generate_ids(cond, cfg);
  EXPECT_EQ(std::vector<int>(ids.begin(), ids.begin() + std::min(ids.size(), greedy.size())),
            std::vector<int>(greedy.begin(), greedy.begin() + std::min(ids.size(), greedy.size())));
  EXPECT_LE(ids.size(), cfg.max_output_tokens);
}

TEST(FrozenEncoder, UnchangedByTrainingWhileLiveEncoderMoves) {
  auto bb = make_toy();
  const auto tok = bb.tokenize("In Mumbai heavy rain flooded roads .", 512);
  const auto frozen = bb.frozen_pretrained_encoder();
  const Matrix frozen_before = frozen->encode(tok);
  const Matrix live_before = bb.encode_tokens(tok).value();
  const std::uint64_t checksum = frozen->checksum();
  EXPECT_TRUE((frozen_before.array() == live_before.array()).all());

  AdamGroup opt("text", AdamSettings{.lr = 1e-2, .weight_decay = 0.01, .decoupled_decay = true});
  for (const auto& p : bb.parameters().entries()) opt.add(p);
  const std::vector<int> gold = {5, 6, Vocabulary::kEos};
  for (int step = 0; step < 3; ++step) {
    ad::backward(cross_entropy_loss(bb.teacher_forced_logits(bb.encode_tokens(tok), gold), gold));
    opt.step();
    opt.zero_grad();
  }
  EXPECT_TRUE((frozen->encode(tok).array() == frozen_before.array()).all());
  EXPECT_EQ(frozen->checksum(), checksum);
  EXPECT_GT((bb.encode_tokens(tok).value() - frozen_before).norm(), 1e-8);
}

TEST(ToyBackbone, WeightExportImportRoundTrip) {
  auto a = make_toy(64, 1);
  auto b = make_toy(64, 2);
  Rng rng(3);
  const Matrix cond = testing::random_matrix(rng, 4, a.hidden_dim());
  const std::vector<int> gold = {4, 5};
  b.import_weights(a.export_weights());
  EXPECT_TRUE((a.teacher_forced_logits(ad::constant(cond), gold).value().array() ==
               b.teacher_forced_logits(ad::constant(cond), gold).value().array())
                  .all());
  EXPECT_EQ(a.frozen_pretrained_encoder()->checksum(), b.frozen_pretrained_encoder()->checksum());
}

}  // namespace
}  // namespace modee
