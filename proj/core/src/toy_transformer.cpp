#include "modee/toy_transformer.hpp"

#include <cmath>
#include <numeric>
#include <unordered_map>

#include "modee/errors.hpp"

namespace modee {

namespace {

using ad::Matrix;
using ad::Var;
using Attention = ToyTransformer::Attention;
using EncoderWeights = ToyTransformer::EncoderWeights;
using DecoderWeights = ToyTransformer::DecoderWeights;

constexpr double kMaskedOut = -1e30;

Var ffn(const Var& x, const Var& w1, const Var& b1, const Var& w2, const Var& b2) {
  Var h = ad::relu(ad::add_row(ad::matmul_bt(x, w1), b1));
  return ad::add_row(ad::matmul_bt(h, w2), b2);
}

Var attend(const Attention& w, const Var& query_in, const Var& kv_in, int heads,
           const Matrix& mask) {
  const Var q = ad::matmul_bt(query_in, w.q);
  const Var k = ad::matmul_bt(kv_in, w.k);
  const Var v = ad::matmul_bt(kv_in, w.v);
  const ad::Index d = q.cols();
  const ad::Index dk = d / heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dk));
  std::vector<Var> outs;
  outs.reserve(static_cast<std::size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const Var qh = ad::slice_cols(q, h * dk, dk);
    const Var kh = ad::slice_cols(k, h * dk, dk);
    const Var vh = ad::slice_cols(v, h * dk, dk);
    const Var weights = ad::softmax_rows(ad::scale(ad::matmul_bt(qh, kh), inv_sqrt), mask);
    outs.push_back(ad::matmul(weights, vh));
  }
  const Var merged = heads == 1 ? outs.front() : ad::concat_cols(std::span<const Var>(outs));
  return ad::matmul_bt(merged, w.o);
}

std::vector<int> iota_ids(std::size_t n) {
  std::vector<int> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

Matrix causal_mask(ad::Index m) {
  Matrix mask = Matrix::Zero(m, m);
  for (ad::Index i = 0; i < m; ++i) {
    for (ad::Index j = i + 1; j < m; ++j) mask(i, j) = kMaskedOut;
  }
  return mask;
}

void check_ids(std::span<const int> ids, const ToyTransformerConfig& cfg, int vocab) {
  if (ids.empty()) throw BackboneError("empty token sequence");
  if (static_cast<int>(ids.size()) > cfg.max_positions) {
    throw BackboneError("sequence of " + std::to_string(ids.size()) + " tokens exceeds " +
                        std::to_string(cfg.max_positions) + " positions");
  }
  for (int id : ids) {
    if (id < 0 || id >= vocab) throw BackboneError("token id out of vocabulary range");
  }
}

Var run_encoder(const EncoderWeights& w, const ToyTransformerConfig& cfg, std::span<const int> ids) {
  const auto pos = iota_ids(ids.size());
  Var x = ad::add(ad::gather_rows(w.embed, ids), ad::gather_rows(w.pos, pos));
  for (const auto& layer : w.layers) {
    Var h = ad::layer_norm_rows(x, layer.ln1_g, layer.ln1_b);
    x = x + attend(layer.self_attn, h, h, cfg.heads, Matrix());
    h = ad::layer_norm_rows(x, layer.ln2_g, layer.ln2_b);
    x = x + ffn(h, layer.w1, layer.b1, layer.w2, layer.b2);
  }
  return ad::layer_norm_rows(x, w.lnf_g, w.lnf_b);
}

Var run_decoder(const DecoderWeights& w, const ToyTransformerConfig& cfg, const Var& cond,
                std::span<const int> ids) {
  const auto pos = iota_ids(ids.size());
  Var y = ad::add(ad::gather_rows(w.embed, ids), ad::gather_rows(w.pos, pos));
  const Matrix mask = causal_mask(static_cast<ad::Index>(ids.size()));
  for (const auto& layer : w.layers) {
    Var h = ad::layer_norm_rows(y, layer.ln1_g, layer.ln1_b);
    y = y + attend(layer.self_attn, h, h, cfg.heads, mask);
    h = ad::layer_norm_rows(y, layer.ln2_g, layer.ln2_b);
    y = y + attend(layer.cross_attn, h, cond, cfg.heads, Matrix());
    h = ad::layer_norm_rows(y, layer.ln3_g, layer.ln3_b);
    y = y + ffn(h, layer.w1, layer.b1, layer.w2, layer.b2);
  }
  y = ad::layer_norm_rows(y, w.lnf_g, w.lnf_b);
  return ad::add_row(ad::matmul_bt(y, w.out_w), w.out_b);
}

Var frozen_copy(const Var& v) { return ad::constant(v.value()); }

EncoderWeights clone_as_constants(const EncoderWeights& w) {
  EncoderWeights out;
  out.embed = frozen_copy(w.embed);
  out.pos = frozen_copy(w.pos);
  out.lnf_g = frozen_copy(w.lnf_g);
  out.lnf_b = frozen_copy(w.lnf_b);
  for (const auto& l : w.layers) {
    ToyTransformer::EncoderLayer c;
    c.ln1_g = frozen_copy(l.ln1_g);
    c.ln1_b = frozen_copy(l.ln1_b);
    c.ln2_g = frozen_copy(l.ln2_g);
    c.ln2_b = frozen_copy(l.ln2_b);
    c.self_attn = {frozen_copy(l.self_attn.q), frozen_copy(l.self_attn.k),
                   frozen_copy(l.self_attn.v), frozen_copy(l.self_attn.o)};
    c.w1 = frozen_copy(l.w1);
    c.b1 = frozen_copy(l.b1);
    c.w2 = frozen_copy(l.w2);
    c.b2 = frozen_copy(l.b2);
    out.layers.push_back(std::move(c));
  }
  return out;
}

// Visits encoder weights in a fixed order with their parameter names.
template <typename Fn>
void for_each_encoder_weight(const EncoderWeights& w, Fn&& fn) {
  fn("encoder.embed", w.embed);
  fn("encoder.pos", w.pos);
  for (std::size_t i = 0; i < w.layers.size(); ++i) {
    const auto& l = w.layers[i];
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    fn(p + "ln1.g", l.ln1_g);
    fn(p + "ln1.b", l.ln1_b);
    fn(p + "attn.q", l.self_attn.q);
    fn(p + "attn.k", l.self_attn.k);
    fn(p + "attn.v", l.self_attn.v);
    fn(p + "attn.o", l.self_attn.o);
    fn(p + "ln2.g", l.ln2_g);
    fn(p + "ln2.b", l.ln2_b);
    fn(p + "ffn.w1", l.w1);
    fn(p + "ffn.b1", l.b1);
    fn(p + "ffn.w2", l.w2);
    fn(p + "ffn.b2", l.b2);
  }
  fn("encoder.lnf.g", w.lnf_g);
  fn("encoder.lnf.b", w.lnf_b);
}

}  // namespace

class ToyTransformer::Frozen final : public FrozenEncoder {
 public:
  Frozen(EncoderWeights w, ToyTransformerConfig cfg, int vocab)
      : w_(std::move(w)), cfg_(cfg), vocab_(vocab) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for_each_encoder_weight(w_, [&](const std::string&, const Var& v) { h = matrix_checksum(v.value(), h); });
    checksum_ = h;
  }

  ad::Matrix encode(const Tokenization& tok) const override {
    check_ids(tok.token_ids, cfg_, vocab_);
    ad::NoGradGuard no_grad;
    return run_encoder(w_, cfg_, tok.token_ids).value();
  }

  std::uint64_t checksum() const override { return checksum_; }
  const EncoderWeights& weights() const { return w_; }

 private:
  EncoderWeights w_;
  ToyTransformerConfig cfg_;
  int vocab_;
  std::uint64_t checksum_ = 0;
};

class ToyTransformer::Stepper final : public StepDecoder {
 public:
  Stepper(const ToyTransformer& owner, const ad::Matrix& cond)
      : owner_(owner), cond_(ad::constant(cond)) {}

  Eigen::VectorXd next_log_probs(std::span<const int> prefix) override {
    ad::NoGradGuard no_grad;
    check_ids(prefix, owner_.cfg_, owner_.vocab_.size());
    const Var logits = run_decoder(owner_.dec_, owner_.cfg_, cond_, prefix);
    const ad::Matrix last = logits.value().bottomRows(1);
    return ad::log_softmax_rows(last).row(0).transpose();
  }

 private:
  const ToyTransformer& owner_;
  Var cond_;
};

ToyTransformer::ToyTransformer(Vocabulary vocab, ToyTransformerConfig cfg)
    : vocab_(std::move(vocab)), cfg_(cfg) {
  if (cfg_.d_model < 1 || cfg_.heads < 1 || cfg_.d_model % cfg_.heads != 0) {
    throw ConfigError("d_model must be a positive multiple of heads");
  }
  if (cfg_.encoder_layers < 0 || cfg_.decoder_layers < 0 || cfg_.ffn_dim < 1 ||
      cfg_.max_positions < 1) {
    throw ConfigError("invalid toy transformer dimensions");
  }
  Rng rng(cfg_.init_seed);
  const int d = cfg_.d_model;
  const int f = cfg_.ffn_dim;
  const int V = vocab_.size();
  const int P = cfg_.max_positions;

  auto ones = [](int n) { return Matrix::Ones(1, n).eval(); };
  auto zeros = [](int r, int c) { return Matrix::Zero(r, c).eval(); };
  auto attn = [&](const std::string& prefix, ModuleTag tag) {
    Attention a;
    a.q = params_.add(prefix + ".q", tag, xavier_uniform(rng, d, d));
    a.k = params_.add(prefix + ".k", tag, xavier_uniform(rng, d, d));
    a.v = params_.add(prefix + ".v", tag, xavier_uniform(rng, d, d));
    a.o = params_.add(prefix + ".o", tag, xavier_uniform(rng, d, d));
    return a;
  };

  const auto E = ModuleTag::TextEncoder;
  enc_.embed = params_.add("encoder.embed", E, normal_matrix(rng, V, d, 1.0));
  enc_.pos = params_.add("encoder.pos", E, normal_matrix(rng, P, d, 0.5));
  for (int i = 0; i < cfg_.encoder_layers; ++i) {
    const std::string p = "encoder.layer" + std::to_string(i) + ".";
    EncoderLayer l;
    l.ln1_g = params_.add(p + "ln1.g", E, ones(d));
    l.ln1_b = params_.add(p + "ln1.b", E, zeros(1, d));
    l.self_attn = attn(p + "attn", E);
    l.ln2_g = params_.add(p + "ln2.g", E, ones(d));
    l.ln2_b = params_.add(p + "ln2.b", E, zeros(1, d));
    l.w1 = params_.add(p + "ffn.w1", E, xavier_uniform(rng, f, d));
    l.b1 = params_.add(p + "ffn.b1", E, zeros(1, f));
    l.w2 = params_.add(p + "ffn.w2", E, xavier_uniform(rng, d, f));
    l.b2 = params_.add(p + "ffn.b2", E, zeros(1, d));
    enc_.layers.push_back(std::move(l));
  }
  enc_.lnf_g = params_.add("encoder.lnf.g", E, ones(d));
  enc_.lnf_b = params_.add("encoder.lnf.b", E, zeros(1, d));

  const auto D = ModuleTag::Decoder;
  dec_.embed = params_.add("decoder.embed", D, normal_matrix(rng, V, d, 1.0));
  dec_.pos = params_.add("decoder.pos", D, normal_matrix(rng, P, d, 0.5));
  for (int i = 0; i < cfg_.decoder_layers; ++i) {
    const std::string p = "decoder.layer" + std::to_string(i) + ".";
    DecoderLayer l;
    l.ln1_g = params_.add(p + "ln1.g", D, ones(d));
    l.ln1_b = params_.add(p + "ln1.b", D, zeros(1, d));
    l.self_attn = attn(p + "self_attn", D);
    l.ln2_g = params_.add(p + "ln2.g", D, ones(d));
    l.ln2_b = params_.add(p + "ln2.b", D, zeros(1, d));
    l.cross_attn = attn(p + "cross_attn", D);
    l.ln3_g = params_.add(p + "ln3.g", D, ones(d));
    l.ln3_b = params_.add(p + "ln3.b", D, zeros(1, d));
    l.w1 = params_.add(p + "ffn.w1", D, xavier_uniform(rng, f, d));
    l.b1 = params_.add(p + "ffn.b1", D, zeros(1, f));
    l.w2 = params_.add(p + "ffn.w2", D, xavier_uniform(rng, d, f));
    l.b2 = params_.add(p + "ffn.b2", D, zeros(1, d));
    dec_.layers.push_back(std::move(l));
  }
  dec_.lnf_g = params_.add("decoder.lnf.g", D, ones(d));
  dec_.lnf_b = params_.add("decoder.lnf.b", D, zeros(1, d));
  dec_.out_w = params_.add("decoder.out.w", D, xavier_uniform(rng, V, d));
  dec_.out_b = params_.add("decoder.out.b", D, zeros(1, V));

  snapshot_frozen();
}

ToyTransformer::~ToyTransformer() = default;

void ToyTransformer::snapshot_frozen() {
  frozen_ = std::make_shared<Frozen>(clone_as_constants(enc_), cfg_, vocab_.size());
}

Var ToyTransformer::encode_tokens(const Tokenization& tok) {
  check_ids(tok.token_ids, cfg_, vocab_.size());
  return run_encoder(enc_, cfg_, tok.token_ids);
}

Var ToyTransformer::decode_logits(const Var& cond, std::span<const int> input_ids) const {
  if (cond.cols() != cfg_.d_model || cond.rows() < 1) {
    throw BackboneError("conditioning matrix must be n x " + std::to_string(cfg_.d_model));
  }
  check_ids(input_ids, cfg_, vocab_.size());
  return run_decoder(dec_, cfg_, cond, input_ids);
}

Var ToyTransformer::teacher_forced_logits(const Var& cond, std::span<const int> gold_ids) {
  if (gold_ids.empty()) throw BackboneError("teacher forcing needs at least one gold token");
  check_ids(gold_ids, cfg_, vocab_.size());
  std::vector<int> inputs;
  inputs.reserve(gold_ids.size());
  inputs.push_back(Vocabulary::kPad);
  inputs.insert(inputs.end(), gold_ids.begin(), gold_ids.end() - 1);
  return decode_logits(cond, inputs);
}

std::unique_ptr<StepDecoder> ToyTransformer::step_decoder(const ad::Matrix& cond) const {
  if (cond.cols() != cfg_.d_model || cond.rows() < 1) {
    throw BackboneError("conditioning matrix must be n x " + std::to_string(cfg_.d_model));
  }
  return std::make_unique<Stepper>(*this, cond);
}

std::vector<NamedMatrix> ToyTransformer::export_weights() const {
  std::vector<NamedMatrix> out;
  for (const auto& e : params_.entries()) out.push_back({e.name, e.var.value()});
  const auto& frozen = static_cast<const Frozen&>(*frozen_);
  for_each_encoder_weight(frozen.weights(), [&](const std::string& name, const Var& v) {
    out.push_back({"frozen." + name, v.value()});
  });
  return out;
}

void ToyTransformer::import_weights(const std::vector<NamedMatrix>& items) {
  std::unordered_map<std::string, const Matrix*> by_name;
  for (const auto& it : items) by_name[it.name] = &it.value;

  auto assign = [&](const std::string& name, ad::Var& dst) {
    auto found = by_name.find(name);
    if (found == by_name.end()) throw BackboneError("checkpoint lacks weight '" + name + "'");
    if (found->second->rows() != dst.rows() || found->second->cols() != dst.cols()) {
      throw BackboneError("shape mismatch for weight '" + name + "'");
    }
    dst.mutable_value() = *found->second;
  };
  for (auto& e : params_.entries()) assign(e.name, e.var);

  if (by_name.count("frozen.encoder.embed")) {
    EncoderWeights frozen = clone_as_constants(enc_);
    for_each_encoder_weight(frozen, [&](const std::string& name, const Var& v) {
      Var dst = v;
      assign("frozen." + name, dst);
    });
    frozen_ = std::make_shared<Frozen>(std::move(frozen), cfg_, vocab_.size());
  } else {
    snapshot_frozen();
  }
}

}  // namespace modee
