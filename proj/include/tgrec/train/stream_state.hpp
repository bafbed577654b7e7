#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <unordered_map>
#include <vector>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/data/events.hpp"
#include "tgrec/graph/temporal_adjacency.hpp"
#include "tgrec/memory/memory.hpp"
#include "tgrec/train/model.hpp"

namespace tgrec::train {

// Per-user items seen so far, each with the time of its first interaction.
class PositiveIndex {
 public:
  PositiveIndex() = default;
  explicit PositiveIndex(std::size_t num_users) : items_(num_users) {}

  void add(std::uint32_t user, std::uint32_t item, double t);
  [[nodiscard]] auto contains(std::uint32_t user, std::uint32_t item) const -> bool;
  // True when the first interaction happened strictly before t.
  [[nodiscard]] auto contains_before(std::uint32_t user, std::uint32_t item,
                                     double t) const -> bool;
  [[nodiscard]] auto items(std::uint32_t user) const
      -> const std::unordered_map<std::uint32_t, double>& {
    return items_.at(user);
  }
  [[nodiscard]] auto num_users() const -> std::size_t { return items_.size(); }
  void reset();

 private:
  std::vector<std::unordered_map<std::uint32_t, double>> items_;
};

// Everything the stream mutates: memories with pending messages, the
// adjacency built so far and the positive index.
struct StreamState {
  StreamState() = default;
  StreamState(std::size_t num_users, std::size_t num_items, std::size_t feature_dim,
              std::size_t mem_dim);

  memory::MemoryStore memory;
  graph::TemporalAdjacency graph;
  PositiveIndex positives;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  // Global index of the next event to be absorbed.
  std::size_t next_ref = 0;
  double last_time = 0.0;

  void reset();
  [[nodiscard]] auto item_node(std::uint32_t item) const -> graph::NodeId {
    return static_cast<graph::NodeId>(num_users + item);
  }
};

auto make_state(const data::EventLog& log, const ModelConfig& config) -> StreamState;

// Applies every pending message and writes the results (no gradients).
void apply_pending_now(StreamState& state, const ad::ModelParams& params,
                       const memory::MemoryConfig& config);

// After a batch has been scored: installs its last messages as pending,
// inserts its edges and records its positives. Throws DataError when the
// batch starts before the previous one ended.
void absorb_batch(StreamState& state, std::span<const data::InteractionEvent> events,
                  std::size_t first_ref, const memory::MemoryConfig& config);

// Streams a log through the state without scoring or gradients, in batches of
// batch_size.
void replay(StreamState& state, const ad::ModelParams& params, const ModelConfig& config,
            const data::EventLog& log, std::size_t batch_size);

}  // namespace tgrec::train
