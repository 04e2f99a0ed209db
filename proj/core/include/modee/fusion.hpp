#pragma once

#include <cstdint>

#include "modee/autodiff.hpp"
#include "modee/params.hpp"

namespace modee {

struct FusionConfig {
  // Bias terms on the two projections. Off: the projections are pure matrix
  // products.
  bool projection_bias = false;
  // Normalize the token scores with a softmax over tokens instead of an
  // independent sigmoid per token. Experimental.
  bool softmax_gate = false;
};

/// Attention-based gated fusion of text and graph token embeddings.
///
///   hidden = tanh(H_text W_text^T + H_graph W_graph^T)      (n x d)
///   alpha  = sigmoid(hidden v)                               (n x 1)
///   H_integrated[i, :] = alpha[i] * H_text[i, :]
///
/// Graph cues reach the output only through alpha.
class GatedFusion {
 public:
  GatedFusion(int dim, FusionConfig cfg, std::uint64_t init_seed);

  int dim() const { return dim_; }
  const FusionConfig& config() const { return cfg_; }

  ad::Var gating_vector(const ad::Var& h_text, const ad::Var& h_graph) const;
  /// integrate(h_text, gating_vector(h_text, h_graph)).
  ad::Var fuse(const ad::Var& h_text, const ad::Var& h_graph) const;

  ad::Var& text_projection() { return w_text_; }
  ad::Var& graph_projection() { return w_graph_; }
  ad::Var& attention_vector() { return v_attn_; }

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

 private:
  int dim_;
  FusionConfig cfg_;
  ParameterSet params_;
  ad::Var w_text_, w_graph_, v_attn_;
  ad::Var b_text_, b_graph_;
};

/// Free-function form over explicit weights (d x d, d x d, d x 1).
ad::Var gating_vector(const ad::Var& h_text, const ad::Var& h_graph, const ad::Var& w_text,
                      const ad::Var& w_graph, const ad::Var& v_attn);

/// Row-wise gate: output row i is alpha[i] * h_text row i.
ad::Var integrate(const ad::Var& h_text, const ad::Var& alpha);

/// Element-wise sum; the fusion-free ablation.
ad::Var fuse_additive(const ad::Var& h_text, const ad::Var& h_graph);

}  // namespace modee
