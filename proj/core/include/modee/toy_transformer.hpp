#pragma once

#include <memory>
#include <vector>

#include "modee/backbone.hpp"

namespace modee {

struct ToyTransformerConfig {
  int d_model = 16;
  int heads = 2;
  int encoder_layers = 2;
  int decoder_layers = 2;
  int ffn_dim = 32;
  int max_positions = 1024;
  std::uint64_t init_seed = 1;
};

/// Small pre-norm Transformer encoder-decoder with learned absolute
/// positions. Stands in for a pretrained checkpoint at desk scale.
class ToyTransformer final : public Backbone {
 public:
  ToyTransformer(Vocabulary vocab, ToyTransformerConfig cfg);
  ~ToyTransformer() override;

  std::string identifier() const override { return "toy-transformer"; }
  int hidden_dim() const override { return cfg_.d_model; }
  const Vocabulary& vocabulary() const override { return vocab_; }
  const ToyTransformerConfig& config() const { return cfg_; }

  ad::Var encode_tokens(const Tokenization& tok) override;
  ad::Var teacher_forced_logits(const ad::Var& cond, std::span<const int> gold_ids) override;
  std::unique_ptr<StepDecoder> step_decoder(const ad::Matrix& cond) const override;
  std::shared_ptr<const FrozenEncoder> frozen_pretrained_encoder() const override { return frozen_; }

  ParameterSet& parameters() override { return params_; }
  const ParameterSet& parameters() const override { return params_; }

  /// Live weights plus the frozen snapshot under a "frozen." prefix.
  std::vector<NamedMatrix> export_weights() const;
  /// Restores live weights by name. Frozen entries, when present, replace
  /// the snapshot; otherwise the loaded live encoder becomes the new
  /// pretrained snapshot.
  void import_weights(const std::vector<NamedMatrix>& items);

  struct Attention {
    ad::Var q, k, v, o;
  };
  struct EncoderLayer {
    ad::Var ln1_g, ln1_b, ln2_g, ln2_b;
    Attention self_attn;
    ad::Var w1, b1, w2, b2;
  };
  struct DecoderLayer {
    ad::Var ln1_g, ln1_b, ln2_g, ln2_b, ln3_g, ln3_b;
    Attention self_attn, cross_attn;
    ad::Var w1, b1, w2, b2;
  };
  struct EncoderWeights {
    ad::Var embed, pos, lnf_g, lnf_b;
    std::vector<EncoderLayer> layers;
  };
  struct DecoderWeights {
    ad::Var embed, pos, lnf_g, lnf_b, out_w, out_b;
    std::vector<DecoderLayer> layers;
  };

 private:
  class Frozen;
  class Stepper;

  void snapshot_frozen();
  ad::Var decode_logits(const ad::Var& cond, std::span<const int> input_ids) const;

  Vocabulary vocab_;
  ToyTransformerConfig cfg_;
  ParameterSet params_;
  EncoderWeights enc_;
  DecoderWeights dec_;
  std::shared_ptr<const FrozenEncoder> frozen_;
};

}  // namespace modee
