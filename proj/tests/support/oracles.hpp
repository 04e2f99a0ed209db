#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <string>
#include <vector>

#include "modee/corpus.hpp"
#include "modee/fusion.hpp"
#include "modee/graphnet.hpp"
#include "modee/losses.hpp"
#include "support.hpp"

namespace modee::testing {

/// Worst relative gradient error of sum(fuse(H_text, H_graph)) over both
/// inputs and all fusion weights, for random n <= 4, d <= 8.
inline double fusion_gradient_trial(Rng& rng) {
  const int n = 1 + static_cast<int>(rng.index(4));
  const int d = 1 + static_cast<int>(rng.index(8));
  GatedFusion fusion(d, FusionConfig{}, rng.next());
  for (auto& p : fusion.parameters().entries()) p.var.mutable_value() = random_matrix(rng, p.var.rows(), p.var.cols());
  ad::Var h_text = ad::parameter(random_matrix(rng, n, d, 2.0));
  ad::Var h_graph = ad::parameter(random_matrix(rng, n, d, 2.0));
  auto loss = [&] { return ad::sum_all(fusion.fuse(h_text, h_graph)); };
  ad::backward(loss());
  std::vector<ad::Var*> leaves = {&h_text, &h_graph, &fusion.text_projection(), &fusion.graph_projection(),
                                  &fusion.attention_vector()};
  double worst = 0.0;
  for (ad::Var* leaf : leaves) {
    const ad::Matrix numeric = numeric_gradient([&] { return loss().scalar(); }, *leaf);
    worst = std::max(worst, relative_error(grad_or_zero(*leaf), numeric));
    leaf->zero_grad();
  }
  return worst;
}

/// Worst relative gradient error of a weighted sum of the graph encoder output
/// over the features and every encoder weight, for n <= 6.
inline double graph_gradient_trial(Rng& rng, Topology topology) {
  const int n = 1 + static_cast<int>(rng.index(6));
  const int d = 2 + static_cast<int>(rng.index(4));
  GraphEncoder enc(d, GraphEncoderConfig{}, rng.next());
  const TokenGraph graph = build_token_graph(static_cast<std::size_t>(n), topology);
  ad::Var x = ad::parameter(random_matrix(rng, n, d));
  const ad::Matrix weights = random_matrix(rng, n, d);
  const std::uint64_t seed = rng.next();
  auto loss = [&] { return ad::sum_all(ad::hadamard(enc.encode(graph, x, seed), ad::constant(weights))); };
  ad::backward(loss());
  double worst = relative_error(grad_or_zero(x), numeric_gradient([&] { return loss().scalar(); }, x));
  for (auto& p : enc.parameters().entries()) {
    const ad::Matrix numeric = numeric_gradient([&] { return loss().scalar(); }, p.var);
    worst = std::max(worst, relative_error(grad_or_zero(p.var), numeric));
  }
  return worst;
}

/// Perturbs each node of a LINEAR graph in turn and reports whether any node
/// further than two hops changed. Exact comparison.
inline bool linear_locality_holds(int n, int d, std::uint64_t seed) {
  Rng rng(seed);
  GraphEncoder enc(d, GraphEncoderConfig{}, rng.next());
  const TokenGraph graph = build_token_graph(static_cast<std::size_t>(n), Topology::Linear);
  const ad::Matrix x = random_matrix(rng, n, d);
  ad::NoGradGuard guard;
  const ad::Matrix base = enc.encode(graph, ad::constant(x), seed).value();
  for (int j = 0; j < n; ++j) {
    ad::Matrix xp = x;
    xp.row(j).array() += 0.75;
    const ad::Matrix out = enc.encode(graph, ad::constant(xp), seed).value();
    for (int i = 0; i < n; ++i) {
      if (std::abs(i - j) > 2 && !(out.row(i).array() == base.row(i).array()).all()) return false;
    }
  }
  return true;
}

/// Explicit double loop over ordered positive pairs.
inline double brute_force_contrastive(const ad::Matrix& emb, const std::vector<TokenClass>& labels,
                                      const ContrastiveOptions& opt) {
  const auto k = static_cast<int>(labels.size());
  auto sim = [&](int a, int b) {
    return emb.row(a).dot(emb.row(b)) / (emb.row(a).norm() * emb.row(b).norm());
  };
  auto positive = [&](int a, int b) {
    return labels[a] == labels[b] && (opt.none_as_class || labels[a] != TokenClass::None);
  };
  double total = 0.0;
  int pairs = 0;
  for (int i = 0; i < k; ++i) {
    for (int j = 0; j < k; ++j) {
      if (i == j || !positive(i, j)) continue;
      double denom = 0.0;
      for (int l = 0; l < k; ++l) {
        const bool in = opt.all_in_denominator ? true : (l == j || labels[l] != labels[i]);
        if (in) denom += std::exp(sim(i, l) / opt.tau);
      }
      total += -(sim(i, j) / opt.tau - std::log(denom));
      ++pairs;
    }
  }
  return pairs == 0 ? std::nan("") : total / pairs;
}

struct ContrastiveBatch {
  ad::Matrix embeddings;
  std::vector<TokenClass> labels;
};

/// k in [2, 12] rows over a few classes, with at least one positive pair.
inline ContrastiveBatch random_contrastive_batch(Rng& rng) {
  const int k = 2 + static_cast<int>(rng.index(11));
  const int d = 2 + static_cast<int>(rng.index(7));
  ContrastiveBatch b{random_matrix(rng, k, d), {}};
  for (int i = 0; i < k; ++i) b.labels.push_back(static_cast<TokenClass>(rng.index(kTokenClassCount)));
  b.labels[1] = b.labels[0];
  return b;
}

/// Slot values over an alphabet with the separator characters the codec must
/// survive; present_mask selects the slots that get a value.
inline EventRecord random_codec_record(Rng& rng, unsigned present_mask) {
  static const std::string alphabet = "abcXYZ 019,.-'";
  EventRecord r;
  for (Slot s : kSlots) {
    if (!(present_mask & (1u << static_cast<unsigned>(s)))) continue;
    std::string v;
    while (true) {
      v.clear();
      const auto len = 1 + rng.index(12);
      for (std::uint64_t i = 0; i < len; ++i) v += alphabet[rng.index(alphabet.size())];
      v = collapse_whitespace(v);
      std::string lower;
      for (char c : v) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
      if (!v.empty() && lower != "none") break;
    }
    r.set(s, v);
  }
  return r;
}

/// Arbitrary bytes biased toward codec syntax.
inline std::string random_fuzz_string(Rng& rng) {
  static const std::vector<std::string> pieces = {"where:", "when:", "what:", "who:", "why:", ";", ":",
                                                  "none", " ", "x",      "\n",   "\xff", "WHERE"};
  std::string s;
  const auto len = rng.index(20);
  for (std::uint64_t i = 0; i < len; ++i) {
    if (rng.bernoulli(0.5)) {
      s += rng.pick(pieces);
    } else {
      s += static_cast<char>(rng.index(256));
    }
  }
  return s;
}

}  // namespace modee::testing
