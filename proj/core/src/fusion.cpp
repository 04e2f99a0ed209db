#include "modee/fusion.hpp"

#include <string>

#include "modee/errors.hpp"
#include "modee/rng.hpp"

namespace modee {

namespace {

void require_same_shape(const ad::Var& a, const ad::Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ValueError(std::string(op) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()));
  }
}

ad::Var gate_scores(const ad::Var& h_text, const ad::Var& h_graph, const ad::Var& w_text,
                    const ad::Var& w_graph, const ad::Var& v_attn, const ad::Var* b_text,
                    const ad::Var* b_graph) {
  require_same_shape(h_text, h_graph, "gating_vector");
  const ad::Index d = h_text.cols();
  if (w_text.rows() != d || w_text.cols() != d || w_graph.rows() != d || w_graph.cols() != d ||
      v_attn.rows() != d || v_attn.cols() != 1) {
    throw ValueError("gating_vector: fusion weights do not match embedding dimension");
  }
  ad::Var text_proj = ad::matmul_bt(h_text, w_text);
  ad::Var graph_proj = ad::matmul_bt(h_graph, w_graph);
  if (b_text) text_proj = ad::add_row(text_proj, *b_text);
  if (b_graph) graph_proj = ad::add_row(graph_proj, *b_graph);
  const ad::Var hidden = ad::tanh(text_proj + graph_proj);
  return ad::matmul(hidden, v_attn);
}

}  // namespace

GatedFusion::GatedFusion(int dim, FusionConfig cfg, std::uint64_t init_seed) : dim_(dim), cfg_(cfg) {
  if (dim < 1) throw ConfigError("fusion dimension must be positive");
  Rng rng(init_seed);
  const auto F = ModuleTag::Fusion;
  w_text_ = params_.add("fusion.text_proj", F, xavier_uniform(rng, dim, dim));
  w_graph_ = params_.add("fusion.graph_proj", F, xavier_uniform(rng, dim, dim));
  v_attn_ = params_.add("fusion.attn_v", F, xavier_uniform(rng, dim, 1));
  if (cfg_.projection_bias) {
    b_text_ = params_.add("fusion.text_proj.b", F, ad::Matrix::Zero(1, dim));
    b_graph_ = params_.add("fusion.graph_proj.b", F, ad::Matrix::Zero(1, dim));
  }
}

ad::Var GatedFusion::gating_vector(const ad::Var& h_text, const ad::Var& h_graph) const {
  const ad::Var scores = gate_scores(h_text, h_graph, w_text_, w_graph_, v_attn_,
                                     cfg_.projection_bias ? &b_text_ : nullptr,
                                     cfg_.projection_bias ? &b_graph_ : nullptr);
  if (cfg_.softmax_gate) return ad::transpose(ad::softmax_rows(ad::transpose(scores)));
  return ad::sigmoid(scores);
}

ad::Var GatedFusion::fuse(const ad::Var& h_text, const ad::Var& h_graph) const {
  return integrate(h_text, gating_vector(h_text, h_graph));
}

ad::Var gating_vector(const ad::Var& h_text, const ad::Var& h_graph, const ad::Var& w_text,
                      const ad::Var& w_graph, const ad::Var& v_attn) {
  return ad::sigmoid(gate_scores(h_text, h_graph, w_text, w_graph, v_attn, nullptr, nullptr));
}

ad::Var integrate(const ad::Var& h_text, const ad::Var& alpha) {
  if (alpha.cols() != 1 || alpha.rows() != h_text.rows()) {
    throw ValueError("integrate: gate must be " + std::to_string(h_text.rows()) + "x1");
  }
  return ad::mul_col(h_text, alpha);
}

ad::Var fuse_additive(const ad::Var& h_text, const ad::Var& h_graph) {
  require_same_shape(h_text, h_graph, "fuse_additive");
  return h_text + h_graph;
}

}  // namespace modee
