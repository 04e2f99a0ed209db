#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "modee/autodiff.hpp"
#include "modee/backbone.hpp"
#include "modee/params.hpp"

namespace modee {

enum class Topology { Complete, Linear };

std::string_view topology_name(Topology t);
std::optional<Topology> topology_from_name(std::string_view name);

/// Undirected token graph without self-loops. A complete graph is kept
/// symbolic; only the linear chain has explicit adjacency.
class TokenGraph {
 public:
  TokenGraph(std::size_t n, Topology topology);

  std::size_t size() const { return n_; }
  Topology topology() const { return topology_; }
  std::size_t edge_count() const;
  std::size_t degree(std::size_t node) const;
  bool has_edge(std::size_t a, std::size_t b) const;
  std::vector<int> neighbors(std::size_t node) const;

 private:
  std::size_t n_;
  Topology topology_;
};

/// Throws ValueError when n < 1.
TokenGraph build_token_graph(std::size_t n, Topology topology);

struct GraphEncoderConfig {
  // Neighbors sampled per node for layer 1 and layer 2.
  std::array<int, 2> sample_sizes = {25, 10};
  // Aggregate every neighbor (in a seeded random order) instead of sampling.
  bool full_neighborhood = false;
};

/// Two-layer GraphSAGE with an LSTM aggregator. Per layer each node runs the
/// LSTM over a seeded random ordering of sampled neighbors, concatenates its
/// own representation with the final hidden state and applies a linear map.
/// Layer 1 is followed by ReLU and row L2 normalization; layer 2 is linear.
class GraphEncoder {
 public:
  GraphEncoder(int dim, GraphEncoderConfig cfg, std::uint64_t init_seed);

  int dim() const { return dim_; }
  const GraphEncoderConfig& config() const { return cfg_; }

  ad::Var encode(const TokenGraph& graph, const ad::Var& features, std::uint64_t seed) const;

  /// The neighbor sequence each node aggregates at the given layer.
  std::vector<std::vector<int>> neighbor_orders(const TokenGraph& graph, int layer,
                                                std::uint64_t seed) const;

  ParameterSet& parameters() { return params_; }
  const ParameterSet& parameters() const { return params_; }

 private:
  struct Layer {
    ad::Var w_ih, w_hh, b_lstm, w_out, b_out;
  };
  ad::Var run_layer(const Layer& layer, const ad::Var& x,
                    const std::vector<std::vector<int>>& orders) const;

  int dim_;
  GraphEncoderConfig cfg_;
  ParameterSet params_;
  std::array<Layer, 2> layers_;
};

/// Node features from the frozen pretrained encoder: row i embeds token i.
ad::Matrix init_node_features(const Tokenization& tok, const FrozenEncoder& frozen);

/// Memoizes frozen features per (frozen checksum, token ids). Because the
/// encoder never changes the cache is exact. With a directory, entries are
/// also persisted there.
class FeatureCache {
 public:
  explicit FeatureCache(std::optional<std::filesystem::path> dir = std::nullopt);
  /// Uses $MODEE_CACHE_DIR when set.
  static FeatureCache from_environment();

  ad::Matrix get(const Tokenization& tok, const FrozenEncoder& frozen);
  std::size_t hits() const { return hits_; }
  std::size_t misses() const { return misses_; }

 private:
  std::optional<std::filesystem::path> dir_;
  std::map<std::string, ad::Matrix> memory_;
  std::mutex mu_;
  std::size_t hits_ = 0;
  std::size_t misses_ = 0;
};

}  // namespace modee
