#include "modee/losses.hpp"

#include <array>
#include <cmath>

#include "modee/errors.hpp"
#include "modee/rng.hpp"

namespace modee {

ad::Var cross_entropy_loss(const ad::Var& logits, std::span<const int> gold_ids, bool mean_reduction) {
  return ad::cross_entropy(logits, gold_ids, mean_reduction);
}

std::optional<ContrastiveSample> sample_contrastive_nodes(const TokenLabeling& labeling,
                                                          int per_class, std::uint64_t seed) {
  if (labeling.labels.empty()) throw ValueError("contrastive sampling needs a non-empty labeling");
  if (per_class < 1) throw ValueError("per_class must be >= 1");
  std::array<std::vector<int>, kTokenClassCount> members;
  for (std::size_t t = 0; t < labeling.labels.size(); ++t) {
    members[static_cast<std::size_t>(labeling.labels[t])].push_back(static_cast<int>(t));
  }
  Rng rng(seed);
  ContrastiveSample out;
  bool has_pair = false;
  for (std::size_t c = 0; c < kTokenClassCount; ++c) {
    const auto& pool = members[c];
    const auto picks = rng.sample(static_cast<int>(pool.size()), per_class);
    has_pair = has_pair || picks.size() >= 2;
    for (int p : picks) {
      out.indices.push_back(pool[static_cast<std::size_t>(p)]);
      out.labels.push_back(static_cast<TokenClass>(c));
    }
  }
  if (!has_pair) return std::nullopt;
  return out;
}

std::optional<ad::Var> contrastive_loss(const ad::Var& embeddings,
                                        std::span<const TokenClass> labels,
                                        const ContrastiveOptions& options) {
  if (!(options.tau > 0.0)) throw ValueError("contrastive temperature must be > 0");
  const auto k = static_cast<ad::Index>(labels.size());
  if (embeddings.rows() != k) throw ValueError("contrastive_loss: one label per embedding row");

  std::vector<std::pair<ad::Index, ad::Index>> pairs;
  for (ad::Index i = 0; i < k; ++i) {
    if (!options.none_as_class && labels[i] == TokenClass::None) continue;
    for (ad::Index j = 0; j < k; ++j) {
      if (i != j && labels[i] == labels[j]) pairs.emplace_back(i, j);
    }
  }
  if (pairs.empty()) return std::nullopt;

  const ad::Var unit = ad::l2_normalize_rows(embeddings);
  const ad::Var sims = ad::scale(ad::matmul_bt(unit, unit), 1.0 / options.tau);

  std::vector<TokenClass> y(labels.begin(), labels.end());
  const ad::Matrix& S = sims.value();
  const double inv_pairs = 1.0 / static_cast<double>(pairs.size());
  // d loss / d S, filled alongside the forward value.
  ad::Matrix dS = ad::Matrix::Zero(k, k);
  // Running mean: equal per-pair terms reproduce that term exactly.
  double loss = 0.0;
  std::size_t seen = 0;
  std::vector<ad::Index> denom;
  for (const auto& [i, j] : pairs) {
    denom.clear();
    for (ad::Index l = 0; l < k; ++l) {
      const bool keep = options.all_in_denominator ? true : (l == j || y[l] != y[i]);
      if (keep) denom.push_back(l);
    }
    double mx = -INFINITY;
    for (ad::Index l : denom) mx = std::max(mx, S(i, l));
    double z = 0.0;
    for (ad::Index l : denom) z += std::exp(S(i, l) - mx);
    const double term = std::log(z) + (mx - S(i, j));
    loss += (term - loss) / static_cast<double>(++seen);
    dS(i, j) -= inv_pairs;
    for (ad::Index l : denom) dS(i, l) += std::exp(S(i, l) - mx) / z * inv_pairs;
  }

  return ad::make_result(ad::Matrix::Constant(1, 1, loss), {sims},
                         [dS = std::move(dS)](ad::Node& self) {
                           ad::Node& in = *self.inputs[0];
                           if (in.requires_grad) in.accumulate(dS * self.grad(0, 0));
                         });
}

}  // namespace modee
