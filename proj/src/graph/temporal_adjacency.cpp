#include "tgrec/graph/temporal_adjacency.hpp"

#include <algorithm>
#include <bit>
#include <random>
#include <stdexcept>
#include <string>

#include "tgrec/autodiff/params.hpp"

namespace tgrec::graph {

namespace {

auto splitmix64(std::uint64_t x) -> std::uint64_t {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

auto NeighborSample::num_real() const -> std::size_t {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), 1));
}

TemporalAdjacency::TemporalAdjacency(std::size_t num_users, std::size_t num_items,
                                     std::size_t feature_dim)
    : num_users_(num_users),
      feature_dim_(feature_dim),
      lists_(num_users + num_items) {}

void TemporalAdjacency::append(const data::InteractionEvent& event,
                               std::size_t event_ref) {
  const std::size_t user = event.user;
  const std::size_t item_node = num_users_ + event.item;
  if (user >= num_users_ || item_node >= lists_.size()) {
    throw std::out_of_range("edge (" + std::to_string(event.user) + ", " +
                            std::to_string(event.item) +
                            ") outside the node space");
  }
  if (event.features.size() != feature_dim_) {
    throw std::invalid_argument("edge feature width " +
                                std::to_string(event.features.size()) +
                                " != " + std::to_string(feature_dim_));
  }
  const std::size_t offset = features_.size();
  features_.insert(features_.end(), event.features.begin(), event.features.end());
  lists_[user].push_back(NeighborEntry{static_cast<NodeId>(item_node),
                                       event.timestamp, event_ref, offset});
  lists_[item_node].push_back(NeighborEntry{static_cast<NodeId>(user),
                                            event.timestamp, event_ref, offset});
  ++num_edges_;
}

void TemporalAdjacency::insert_event(const data::InteractionEvent& event,
                                     std::size_t event_ref) {
  if (num_edges_ > 0 && event.timestamp < last_time_) {
    throw std::invalid_argument("streaming insert out of time order");
  }
  append(event, event_ref);
  last_time_ = event.timestamp;
}

auto TemporalAdjacency::build(const data::EventLog& log) -> TemporalAdjacency {
  TemporalAdjacency adj(log.num_users, log.num_items, log.feature_dim);
  for (std::size_t i = 0; i < log.events.size(); ++i) {
    adj.append(log.events[i], log.first_index + i);
    adj.last_time_ = std::max(adj.last_time_, log.events[i].timestamp);
  }
  for (auto& list : adj.lists_) {
    std::stable_sort(list.begin(), list.end(),
                     [](const NeighborEntry& a, const NeighborEntry& b) {
                       return a.timestamp < b.timestamp;
                     });
  }
  return adj;
}

auto TemporalAdjacency::neighbors(NodeId node) const
    -> std::span<const NeighborEntry> {
  if (node >= lists_.size()) throw std::out_of_range("node out of range");
  return lists_[node];
}

auto TemporalAdjacency::make_sample(std::span<const NeighborEntry> chosen,
                                    std::size_t n_nbr) const -> NeighborSample {
  NeighborSample s;
  s.neighbors.assign(n_nbr, 0);
  s.timestamps.assign(n_nbr, 0.0);
  s.event_refs.assign(n_nbr, 0);
  s.edge_features.assign(n_nbr * feature_dim_, 0.0);
  s.mask.assign(n_nbr, 0);
  const std::size_t pad = n_nbr - chosen.size();
  for (std::size_t k = 0; k < chosen.size(); ++k) {
    const auto& e = chosen[k];
    const std::size_t slot = pad + k;
    s.neighbors[slot] = e.neighbor;
    s.timestamps[slot] = e.timestamp;
    s.event_refs[slot] = e.event_ref;
    s.mask[slot] = 1;
    std::copy_n(features_.begin() + static_cast<std::ptrdiff_t>(e.feature_offset),
                feature_dim_,
                s.edge_features.begin() +
                    static_cast<std::ptrdiff_t>(slot * feature_dim_));
  }
  return s;
}

auto TemporalAdjacency::recent_neighbors(NodeId node, double t,
                                         std::size_t n_nbr) const
    -> NeighborSample {
  if (n_nbr == 0) throw std::invalid_argument("n_nbr must be >= 1");
  const auto list = neighbors(node);
  const auto cut = std::lower_bound(
      list.begin(), list.end(), t,
      [](const NeighborEntry& e, double q) { return e.timestamp < q; });
  const auto available = static_cast<std::size_t>(cut - list.begin());
  const std::size_t take = std::min(n_nbr, available);
  return make_sample(list.subspan(available - take, take), n_nbr);
}

auto TemporalAdjacency::uniform_neighbors(NodeId node, double t,
                                          std::size_t n_nbr,
                                          std::uint64_t seed) const
    -> NeighborSample {
  if (n_nbr == 0) throw std::invalid_argument("n_nbr must be >= 1");
  const auto list = neighbors(node);
  const auto cut = std::lower_bound(
      list.begin(), list.end(), t,
      [](const NeighborEntry& e, double q) { return e.timestamp < q; });
  const auto available = static_cast<std::size_t>(cut - list.begin());
  if (available == 0) return make_sample({}, n_nbr);
  ad::Rng rng(splitmix64(seed ^ splitmix64(node) ^
                         splitmix64(std::bit_cast<std::uint64_t>(t))));
  std::vector<std::size_t> picks(n_nbr);
  for (auto& p : picks) p = ad::uniform_index(rng, available);
  std::sort(picks.begin(), picks.end());
  std::vector<NeighborEntry> chosen;
  chosen.reserve(n_nbr);
  for (auto p : picks) chosen.push_back(list[p]);
  return make_sample(chosen, n_nbr);
}

auto TemporalAdjacency::sample(NodeId node, double t, std::size_t n_nbr,
                               SamplingPolicy policy, std::uint64_t seed) const
    -> NeighborSample {
  return policy == SamplingPolicy::kMostRecent
             ? recent_neighbors(node, t, n_nbr)
             : uniform_neighbors(node, t, n_nbr, seed);
}

auto TemporalAdjacency::k_hop_neighborhood(NodeId node, double t,
                                           std::size_t n_nbr,
                                           std::size_t num_layers) const
    -> std::vector<std::vector<NeighborSample>> {
  if (num_layers == 0) throw std::invalid_argument("num_layers must be >= 1");
  std::vector<std::vector<NeighborSample>> layers;
  layers.push_back({recent_neighbors(node, t, n_nbr)});
  for (std::size_t l = 1; l < num_layers; ++l) {
    std::vector<NeighborSample> next;
    for (const auto& s : layers.back()) {
      for (std::size_t k = 0; k < s.size(); ++k) {
        if (s.mask[k]) next.push_back(recent_neighbors(s.neighbors[k], t, n_nbr));
      }
    }
    layers.push_back(std::move(next));
  }
  return layers;
}

void TemporalAdjacency::clear() {
  for (auto& l : lists_) l.clear();
  features_.clear();
  num_edges_ = 0;
  last_time_ = 0.0;
}

}  // namespace tgrec::graph
