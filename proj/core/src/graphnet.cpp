#include "modee/graphnet.hpp"

#include <algorithm>
#include <cstdlib>

#include "modee/errors.hpp"
#include "modee/rng.hpp"

namespace modee {

using ad::Matrix;
using ad::Var;

std::string_view topology_name(Topology t) {
  return t == Topology::Complete ? "complete" : "linear";
}

std::optional<Topology> topology_from_name(std::string_view name) {
  if (name == "complete") return Topology::Complete;
  if (name == "linear") return Topology::Linear;
  return std::nullopt;
}

TokenGraph::TokenGraph(std::size_t n, Topology topology) : n_(n), topology_(topology) {
  if (n < 1) throw ValueError("token graph needs at least one node");
}

std::size_t TokenGraph::edge_count() const {
  return topology_ == Topology::Complete ? n_ * (n_ - 1) / 2 : n_ - 1;
}

std::size_t TokenGraph::degree(std::size_t node) const {
  if (topology_ == Topology::Complete) return n_ - 1;
  return static_cast<std::size_t>(node > 0) + static_cast<std::size_t>(node + 1 < n_);
}

bool TokenGraph::has_edge(std::size_t a, std::size_t b) const {
  if (a == b || a >= n_ || b >= n_) return false;
  if (topology_ == Topology::Complete) return true;
  return (a > b ? a - b : b - a) == 1;
}

std::vector<int> TokenGraph::neighbors(std::size_t node) const {
  std::vector<int> out;
  if (topology_ == Topology::Complete) {
    out.reserve(n_ - 1);
    for (std::size_t j = 0; j < n_; ++j) {
      if (j != node) out.push_back(static_cast<int>(j));
    }
  } else {
    if (node > 0) out.push_back(static_cast<int>(node - 1));
    if (node + 1 < n_) out.push_back(static_cast<int>(node + 1));
  }
  return out;
}

TokenGraph build_token_graph(std::size_t n, Topology topology) { return TokenGraph(n, topology); }

GraphEncoder::GraphEncoder(int dim, GraphEncoderConfig cfg, std::uint64_t init_seed)
    : dim_(dim), cfg_(cfg) {
  if (dim < 1) throw ConfigError("graph encoder dimension must be positive");
  for (int s : cfg_.sample_sizes) {
    if (s < 1) throw ConfigError("neighbor sample sizes must be >= 1");
  }
  Rng rng(init_seed);
  const auto G = ModuleTag::GraphEncoder;
  for (int l = 0; l < 2; ++l) {
    const std::string p = "graph.layer" + std::to_string(l) + ".";
    Layer& layer = layers_[static_cast<std::size_t>(l)];
    layer.w_ih = params_.add(p + "lstm.w_ih", G, xavier_uniform(rng, 4 * dim, dim));
    layer.w_hh = params_.add(p + "lstm.w_hh", G, xavier_uniform(rng, 4 * dim, dim));
    Matrix bias = Matrix::Zero(1, 4 * dim);
    bias.middleCols(dim, dim).setOnes();  // forget gate
    layer.b_lstm = params_.add(p + "lstm.b", G, std::move(bias));
    layer.w_out = params_.add(p + "linear.w", G, xavier_uniform(rng, dim, 2 * dim));
    layer.b_out = params_.add(p + "linear.b", G, Matrix::Zero(1, dim));
  }
}

std::vector<std::vector<int>> GraphEncoder::neighbor_orders(const TokenGraph& graph, int layer,
                                                            std::uint64_t seed) const {
  Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(layer)}));
  const int budget = cfg_.sample_sizes[static_cast<std::size_t>(layer)];
  std::vector<std::vector<int>> orders(graph.size());
  for (std::size_t i = 0; i < graph.size(); ++i) {
    const int deg = static_cast<int>(graph.degree(i));
    const int k = cfg_.full_neighborhood ? deg : std::min(budget, deg);
    const auto picks = rng.sample(deg, k);
    auto& order = orders[i];
    order.reserve(picks.size());
    if (graph.topology() == Topology::Complete) {
      // Index j among the n-1 others maps past the node itself.
      for (int j : picks) order.push_back(j < static_cast<int>(i) ? j : j + 1);
    } else {
      const auto nbrs = graph.neighbors(i);
      for (int j : picks) order.push_back(nbrs[static_cast<std::size_t>(j)]);
    }
  }
  return orders;
}

Var GraphEncoder::run_layer(const Layer& layer, const Var& x,
                            const std::vector<std::vector<int>>& orders) const {
  const auto n = static_cast<std::size_t>(x.rows());
  const ad::Index d = dim_;
  std::size_t steps = 0;
  bool ragged = false;
  for (const auto& o : orders) steps = std::max(steps, o.size());
  for (const auto& o : orders) ragged = ragged || o.size() != steps;

  // Batched over nodes: step t feeds every node its t-th neighbor. Nodes
  // whose sequence already ended keep their state through a 0/1 mask.
  Var h = ad::constant(Matrix::Zero(static_cast<ad::Index>(n), d));
  Var c = h;
  std::vector<int> idx(n);
  for (std::size_t t = 0; t < steps; ++t) {
    Matrix active(static_cast<ad::Index>(n), 1);
    for (std::size_t i = 0; i < n; ++i) {
      const bool on = t < orders[i].size();
      idx[i] = on ? orders[i][t] : static_cast<int>(i);
      active(static_cast<ad::Index>(i), 0) = on ? 1.0 : 0.0;
    }
    const Var xt = ad::gather_rows(x, idx);
    const Var gates =
        ad::add_row(ad::matmul_bt(xt, layer.w_ih) + ad::matmul_bt(h, layer.w_hh), layer.b_lstm);
    const Var in_gate = ad::sigmoid(ad::slice_cols(gates, 0, d));
    const Var forget = ad::sigmoid(ad::slice_cols(gates, d, d));
    const Var cell = ad::tanh(ad::slice_cols(gates, 2 * d, d));
    const Var out_gate = ad::sigmoid(ad::slice_cols(gates, 3 * d, d));
    Var c_next = ad::hadamard(forget, c) + ad::hadamard(in_gate, cell);
    Var h_next = ad::hadamard(out_gate, ad::tanh(c_next));
    const bool all_on = !ragged || active.minCoeff() > 0.5;
    if (all_on) {
      c = c_next;
      h = h_next;
    } else {
      const Var on = ad::constant(active);
      const Var off = ad::constant(Matrix::Ones(static_cast<ad::Index>(n), 1) - active);
      c = ad::mul_col(c_next, on) + ad::mul_col(c, off);
      h = ad::mul_col(h_next, on) + ad::mul_col(h, off);
    }
  }
  // No neighbors leaves h at the zero vector.
  return ad::add_row(ad::matmul_bt(ad::concat_cols(x, h), layer.w_out), layer.b_out);
}

Var GraphEncoder::encode(const TokenGraph& graph, const Var& features, std::uint64_t seed) const {
  if (static_cast<std::size_t>(features.rows()) != graph.size()) {
    throw ValueError("graph has " + std::to_string(graph.size()) + " nodes but features have " +
                     std::to_string(features.rows()) + " rows");
  }
  if (features.cols() != dim_) {
    throw ValueError("feature dimension " + std::to_string(features.cols()) + " != encoder dimension " +
                     std::to_string(dim_));
  }
  Var h1 = run_layer(layers_[0], features, neighbor_orders(graph, 0, seed));
  h1 = ad::l2_normalize_rows(ad::relu(h1));
  return run_layer(layers_[1], h1, neighbor_orders(graph, 1, seed));
}

Matrix init_node_features(const Tokenization& tok, const FrozenEncoder& frozen) {
  return frozen.encode(tok);
}

FeatureCache::FeatureCache(std::optional<std::filesystem::path> dir) : dir_(std::move(dir)) {
  if (dir_) std::filesystem::create_directories(*dir_);
}

FeatureCache FeatureCache::from_environment() {
  const char* env = std::getenv("MODEE_CACHE_DIR");
  if (env && *env) return FeatureCache(std::filesystem::path(env));
  return FeatureCache();
}

Matrix FeatureCache::get(const Tokenization& tok, const FrozenEncoder& frozen) {
  const std::uint64_t ids_hash =
      fnv1a(tok.token_ids.data(), tok.token_ids.size() * sizeof(int));
  const std::string key = hex64(frozen.checksum()) + "-" + hex64(ids_hash);
  {
    std::lock_guard<std::mutex> lock(mu_);
    if (auto it = memory_.find(key); it != memory_.end()) {
      ++hits_;
      return it->second;
    }
  }
  Matrix value;
  bool loaded = false;
  if (dir_) {
    const auto file = *dir_ / (key + ".bin");
    if (std::filesystem::exists(file)) {
      auto items = read_matrices(file);
      if (items.size() == 1 && static_cast<std::size_t>(items[0].value.rows()) == tok.size()) {
        value = std::move(items[0].value);
        loaded = true;
      }
    }
  }
  if (!loaded) {
    value = init_node_features(tok, frozen);
    if (dir_) {
      const auto tmp = *dir_ / (key + ".tmp");
      write_matrices(tmp, {{"features", value}});
      std::filesystem::rename(tmp, *dir_ / (key + ".bin"));
    }
  }
  std::lock_guard<std::mutex> lock(mu_);
  if (loaded) {
    ++hits_;
  } else {
    ++misses_;
  }
  memory_.emplace(key, value);
  return value;
}

}  // namespace modee
