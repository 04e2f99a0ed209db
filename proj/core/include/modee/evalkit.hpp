#pragma once

#include <array>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "modee/corpus.hpp"

namespace modee {

struct PRF {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// 2PR / (P + R), or 0 when P + R == 0.
double harmonic_f1(double precision, double recall);

struct SlotCounts {
  std::size_t predicted = 0;  // slots present in the prediction
  std::size_t gold = 0;       // slots present in the gold record
  std::size_t correct = 0;    // exact matches (EM only)
  std::size_t support = 0;    // documents averaged over (ROUGE-L / embed)
};

struct SlotScores {
  std::array<PRF, kSlotCount> per_w{};
  PRF overall;
  std::array<SlotCounts, kSlotCount> counts{};
  SlotCounts overall_counts;
};

/// Lowercase (ASCII), trim, collapse internal whitespace, strip trailing
/// punctuation.
std::string normalize_answer(std::string_view s);

struct ExactMatchOptions {
  // false: compare raw strings.
  bool normalize = true;
  // false: micro-average over pooled slots; true: mean of the per-W scores.
  bool macro_overall = false;
};

/// Slot-level exact match. A slot is correct when both sides are present and
/// equal after normalization; both-absent slots count nowhere.
SlotScores exact_match_scores(std::span<const EventRecord> preds, std::span<const EventRecord> golds,
                              const ExactMatchOptions& options = {});

std::size_t lcs_length(std::span<const std::string> a, std::span<const std::string> b);
std::vector<std::string> whitespace_tokens(std::string_view s);
/// LCS-based P/R/F over whitespace tokens of the normalized strings.
PRF rouge_l(std::string_view pred, std::string_view gold);

/// Scores one string pair; higher is more similar.
class EmbeddingScorer {
 public:
  virtual ~EmbeddingScorer() = default;
  virtual PRF score(std::string_view pred, std::string_view gold) const = 0;
};

/// Greedy max-cosine matching over token embeddings: precision averages the
/// best match of each predicted token, recall of each gold token.
class TokenEmbeddingScorer : public EmbeddingScorer {
 public:
  PRF score(std::string_view pred, std::string_view gold) const override;
  virtual Eigen::VectorXd embed(std::string_view token) const = 0;
};

/// Deterministic test scorer: each distinct token maps to a one-hot unit
/// vector chosen by hashing, so distinct tokens are (almost surely)
/// orthogonal.
class HashStubScorer final : public TokenEmbeddingScorer {
 public:
  explicit HashStubScorer(int dim = 1 << 12) : dim_(dim) {}
  Eigen::VectorXd embed(std::string_view token) const override;

 private:
  int dim_;
};

/// Per-document scoring: each slot present on either side yields P/R/F
/// (0 when one side is absent); a document's score is the mean over those
/// slots and the corpus score is the mean over documents.
SlotScores rouge_l_scores(std::span<const EventRecord> preds, std::span<const EventRecord> golds);
SlotScores embed_scores(std::span<const EventRecord> preds, std::span<const EventRecord> golds,
                        const EmbeddingScorer& scorer);

enum class MetricSet { ExactMatch, RougeL, Embed, All };
std::optional<MetricSet> metric_set_from_name(std::string_view name);

struct EvalReport {
  SlotScores em;
  std::optional<SlotScores> rouge_l;
  std::optional<SlotScores> embed;
  std::size_t n_docs = 0;
  std::size_t parse_failures = 0;
};

EvalReport evaluate_records(std::span<const EventRecord> preds, std::span<const EventRecord> golds,
                            MetricSet metrics, const EmbeddingScorer* scorer = nullptr);

std::string report_json(const EvalReport& report);
/// Aligned plain-text table: rows Overall and the five Ws; columns P/R/F1 (%)
/// for each metric block present.
std::string report_table(const EvalReport& report);

}  // namespace modee
