#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "modee/autodiff.hpp"
#include "modee/corpus.hpp"

namespace modee {

/// -sum_t log softmax(logits[t])[gold[t]]; mean over t when requested.
ad::Var cross_entropy_loss(const ad::Var& logits, std::span<const int> gold_ids,
                           bool mean_reduction = false);

/// Node rows drawn for one contrastive batch, grouped by class in the order
/// WHERE, WHEN, WHAT, WHO, WHY, NONE.
struct ContrastiveSample {
  std::vector<int> indices;
  std::vector<TokenClass> labels;
};

/// Up to per_class uniformly drawn tokens of each class. Returns nullopt (skip
/// the contrastive term) when no class contributes two or more tokens.
std::optional<ContrastiveSample> sample_contrastive_nodes(const TokenLabeling& labeling,
                                                          int per_class, std::uint64_t seed);

struct ContrastiveOptions {
  double tau = 0.1;
  // false: the denominator holds the positive plus every other-class node.
  // true: it sums over every sampled node, the anchor included.
  bool all_in_denominator = false;
  // Whether two NONE tokens form a positive pair.
  bool none_as_class = true;
};

/// Mean over ordered positive pairs (i, j), y_i == y_j, i != j, of
///   -log exp(s_ij / tau) / sum_{l in D(i,j)} exp(s_il / tau)
/// with s the cosine similarity of the embedding rows. Returns nullopt when
/// the batch has no positive pair; throws ValueError when tau <= 0.
std::optional<ad::Var> contrastive_loss(const ad::Var& embeddings,
                                        std::span<const TokenClass> labels,
                                        const ContrastiveOptions& options);

}  // namespace modee
