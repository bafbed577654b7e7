#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <vector>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/autodiff/tape.hpp"
#include "tgrec/data/events.hpp"
#include "tgrec/graph/temporal_adjacency.hpp"

namespace tgrec::memory {

using graph::NodeId;

enum class UpdaterKind { kGru, kRnn };
// How the elapsed time enters a message.
enum class TimeInMessage { kEncoded, kRaw };
// When the counterpart's memory is read into a message.
enum class CounterpartRead { kAtApplication, kAtCreation };

struct MemoryConfig {
  std::size_t dim = 31;
  std::size_t time_dim = 100;
  std::size_t feature_dim = 0;
  UpdaterKind updater = UpdaterKind::kGru;
  TimeInMessage time_mode = TimeInMessage::kEncoded;
  CounterpartRead counterpart = CounterpartRead::kAtApplication;

  // 2 * dim + (time_dim or 1) + feature_dim
  [[nodiscard]] auto message_dim() const -> std::size_t;
};

// Deferred message for one node. The message vector
// s_i || s_j || time(dt) || e_ij is materialised when it is applied.
struct RawMessage {
  NodeId counterpart = 0;
  double event_time = 0.0;
  double delta_t = 0.0;
  std::vector<double> features;
  // Filled only in kAtCreation mode.
  std::vector<double> counterpart_snapshot;

  friend auto operator==(const RawMessage&, const RawMessage&) -> bool = default;
};

// Per-node memory rows, last-update times and at most one pending message.
class MemoryStore {
 public:
  MemoryStore() = default;
  MemoryStore(std::size_t num_nodes, std::size_t dim);

  [[nodiscard]] auto num_nodes() const -> std::size_t { return last_update_.size(); }
  [[nodiscard]] auto dim() const -> std::size_t { return dim_; }
  [[nodiscard]] auto table() const -> const ad::Tensor& { return memory_; }
  [[nodiscard]] auto row(NodeId node) const -> std::span<const double>;
  [[nodiscard]] auto last_update(NodeId node) const -> double;
  [[nodiscard]] auto pending(NodeId node) const -> const std::optional<RawMessage>&;
  [[nodiscard]] auto pending_nodes() const -> std::vector<NodeId>;

  void set_pending(NodeId node, RawMessage message);
  // Overwrites a row, advances last_update and clears the pending message.
  void write(NodeId node, std::span<const double> values, double time);
  void reset();

  friend auto operator==(const MemoryStore&, const MemoryStore&) -> bool = default;

 private:
  std::size_t dim_ = 0;
  ad::Tensor memory_;
  std::vector<double> last_update_;
  std::vector<std::optional<RawMessage>> pending_;
};

using MessageLists = std::map<NodeId, std::vector<RawMessage>>;

// One message per endpoint per event: the user's names the item as its
// counterpart and vice versa. dt is measured against each node's
// last_update; a negative dt throws std::logic_error.
auto build_messages(std::span<const data::InteractionEvent> events,
                    const MemoryStore& store, std::size_t num_users,
                    CounterpartRead read = CounterpartRead::kAtApplication)
    -> MessageLists;

// Latest message per node; on equal timestamps the last one in the list.
auto aggregate_last(const MessageLists& lists) -> std::map<NodeId, RawMessage>;

void install_pending(MemoryStore& store,
                     const std::map<NodeId, RawMessage>& messages);

// Parameters "memory.gru.{W,U,b}_{z,r,h}" or "memory.rnn.{W,U,b}".
void add_updater_params(ad::ModelParams& params, const MemoryConfig& config,
                        ad::Rng& rng);

// New memory rows for `nodes` computed on a tape; the store is untouched
// until commit().
struct MemoryUpdate {
  std::vector<NodeId> nodes;
  ad::Var rows;  // [nodes.size() x dim]; unbound when nodes is empty
  std::vector<double> times;
};

// Runs the recurrent cell for every node in `nodes` that has a pending
// message; nodes without one are skipped. All messages read the memories as
// they stand in `store`.
auto apply_pending(ad::Tape& tape, const MemoryStore& store,
                   std::span<const NodeId> nodes, const ad::ModelParams& params,
                   const MemoryConfig& config) -> MemoryUpdate;
auto apply_pending(ad::Tape& tape, const MemoryStore& store,
                   const ad::ModelParams& params, const MemoryConfig& config)
    -> MemoryUpdate;

void commit(MemoryStore& store, const MemoryUpdate& update);

void reset_memory(MemoryStore& store);

}  // namespace tgrec::memory
