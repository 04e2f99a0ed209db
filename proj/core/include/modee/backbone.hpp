#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "modee/autodiff.hpp"
#include "modee/params.hpp"
#include "modee/tokenizer.hpp"

namespace modee {

struct GenerationConfig {
  int beam_size = 5;
  std::size_t max_output_tokens = 512;
  int start_token = Vocabulary::kPad;
  int end_token = Vocabulary::kEos;
};

/// One decoding session over a fixed conditioning matrix.
class StepDecoder {
 public:
  virtual ~StepDecoder() = default;
  /// Log-probabilities of the next token given a prefix that begins with the
  /// start token.
  virtual Eigen::VectorXd next_log_probs(std::span<const int> prefix) = 0;
};

/// Beam search without length normalization; beam_size 1 is greedy decoding.
/// Returns generated ids without the start and end tokens; at most
/// max_output_tokens ids are produced, counting the end token.
std::vector<int> beam_search(StepDecoder& decoder, const GenerationConfig& cfg);

/// An encoder whose weights are a snapshot of the pretrained checkpoint and
/// never change afterwards.
class FrozenEncoder {
 public:
  virtual ~FrozenEncoder() = default;
  virtual ad::Matrix encode(const Tokenization& tok) const = 0;
  virtual std::uint64_t checksum() const = 0;
};

/// Pretrained encoder-decoder language model seen through the operations the
/// extraction pipeline needs.
class Backbone {
 public:
  virtual ~Backbone() = default;

  virtual std::string identifier() const = 0;
  virtual int hidden_dim() const = 0;
  virtual const Vocabulary& vocabulary() const = 0;

  Tokenization tokenize(std::string_view text, std::size_t cap) const {
    return modee::tokenize(vocabulary(), text, cap);
  }

  /// Live, trainable encoder: n x d contextual embeddings.
  virtual ad::Var encode_tokens(const Tokenization& tok) = 0;

  /// Row t holds next-token logits for gold[t] given gold[0..t) and
  /// cross-attention over cond.
  virtual ad::Var teacher_forced_logits(const ad::Var& cond, std::span<const int> gold_ids) = 0;

  virtual std::unique_ptr<StepDecoder> step_decoder(const ad::Matrix& cond) const = 0;

  std::vector<int> generate_ids(const ad::Matrix& cond, const GenerationConfig& cfg) const;
  std::string generate(const ad::Matrix& cond, const GenerationConfig& cfg) const;

  virtual std::shared_ptr<const FrozenEncoder> frozen_pretrained_encoder() const = 0;

  /// Trainable parameters (text encoder + decoder).
  virtual ParameterSet& parameters() = 0;
  virtual const ParameterSet& parameters() const = 0;
};

}  // namespace modee
