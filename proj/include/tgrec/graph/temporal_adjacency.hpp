#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "tgrec/data/events.hpp"

namespace tgrec::graph {

using NodeId = std::uint32_t;

struct NeighborEntry {
  NodeId neighbor = 0;
  double timestamp = 0.0;
  std::size_t event_ref = 0;      // global event index
  std::size_t feature_offset = 0;  // into the adjacency's feature table

  friend auto operator==(const NeighborEntry&, const NeighborEntry&)
      -> bool = default;
};

// Fixed-size neighbour sample. Slots are left-padded: real entries occupy the
// tail in chronological order, so the last slot is the most recent one.
struct NeighborSample {
  std::vector<NodeId> neighbors;
  std::vector<double> timestamps;
  std::vector<std::size_t> event_refs;
  std::vector<double> edge_features;  // size() * feature_dim, row-major
  std::vector<std::uint8_t> mask;     // 1 = real, 0 = padding

  [[nodiscard]] auto size() const -> std::size_t { return neighbors.size(); }
  [[nodiscard]] auto num_real() const -> std::size_t;
};

enum class SamplingPolicy { kMostRecent, kUniform };

// Continuous-time bipartite adjacency over the unified node space: users are
// [0, num_users), items are offset by num_users. Each edge is stored in both
// endpoints' lists, and every list is sorted by timestamp.
class TemporalAdjacency {
 public:
  TemporalAdjacency() = default;
  TemporalAdjacency(std::size_t num_users, std::size_t num_items,
                    std::size_t feature_dim);

  // Sorts once; insertion order may be arbitrary. Event refs are
  // log.first_index + position.
  static auto build(const data::EventLog& log) -> TemporalAdjacency;

  // Streaming insert; timestamps must not decrease across calls.
  void insert_event(const data::InteractionEvent& event, std::size_t event_ref);

  // The n_nbr incident edges with the largest timestamps strictly below t.
  // Ties at the cut keep the later-inserted edges.
  [[nodiscard]] auto recent_neighbors(NodeId node, double t,
                                      std::size_t n_nbr) const -> NeighborSample;
  // n_nbr draws with replacement among edges strictly below t, sorted by
  // time. Deterministic in (seed, node, t).
  [[nodiscard]] auto uniform_neighbors(NodeId node, double t, std::size_t n_nbr,
                                       std::uint64_t seed) const
      -> NeighborSample;
  [[nodiscard]] auto sample(NodeId node, double t, std::size_t n_nbr,
                            SamplingPolicy policy, std::uint64_t seed) const
      -> NeighborSample;

  // layers[0] holds the sample of `node`; layers[l + 1] holds one sample per
  // real entry of layers[l], in order, all at the same query time t.
  [[nodiscard]] auto k_hop_neighborhood(NodeId node, double t, std::size_t n_nbr,
                                        std::size_t num_layers) const
      -> std::vector<std::vector<NeighborSample>>;

  [[nodiscard]] auto neighbors(NodeId node) const
      -> std::span<const NeighborEntry>;
  [[nodiscard]] auto num_nodes() const -> std::size_t { return lists_.size(); }
  [[nodiscard]] auto num_users() const -> std::size_t { return num_users_; }
  [[nodiscard]] auto feature_dim() const -> std::size_t { return feature_dim_; }
  [[nodiscard]] auto num_edges() const -> std::size_t { return num_edges_; }
  [[nodiscard]] auto item_node(std::uint32_t item) const -> NodeId {
    return static_cast<NodeId>(num_users_ + item);
  }
  void clear();

 private:
  [[nodiscard]] auto make_sample(std::span<const NeighborEntry> chosen,
                                 std::size_t n_nbr) const -> NeighborSample;
  void append(const data::InteractionEvent& event, std::size_t event_ref);

  std::size_t num_users_ = 0;
  std::size_t feature_dim_ = 0;
  std::size_t num_edges_ = 0;
  double last_time_ = 0.0;
  std::vector<std::vector<NeighborEntry>> lists_;
  std::vector<double> features_;
};

}  // namespace tgrec::graph
