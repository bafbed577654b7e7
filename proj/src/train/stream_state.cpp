#include "tgrec/train/stream_state.hpp"

#include <string>

#include "tgrec/autodiff/tape.hpp"
#include "tgrec/errors.hpp"

namespace tgrec::train {

void PositiveIndex::add(std::uint32_t user, std::uint32_t item, double t) {
  items_.at(user).try_emplace(item, t);
}

auto PositiveIndex::contains(std::uint32_t user, std::uint32_t item) const -> bool {
  return items_.at(user).contains(item);
}

auto PositiveIndex::contains_before(std::uint32_t user, std::uint32_t item,
                                    double t) const -> bool {
  const auto& m = items_.at(user);
  const auto it = m.find(item);
  return it != m.end() && it->second < t;
}

void PositiveIndex::reset() {
  for (auto& m : items_) m.clear();
}

StreamState::StreamState(std::size_t users, std::size_t items, std::size_t feature_dim,
                         std::size_t mem_dim)
    : memory(users + items, mem_dim),
      graph(users, items, feature_dim),
      positives(users),
      num_users(users),
      num_items(items) {}

void StreamState::reset() {
  memory.reset();
  graph.clear();
  positives.reset();
  next_ref = 0;
  last_time = 0.0;
}

auto make_state(const data::EventLog& log, const ModelConfig& config) -> StreamState {
  if (log.feature_dim != config.memory.feature_dim) {
    throw ConfigError("data has " + std::to_string(log.feature_dim) +
                      " edge features but the model expects " +
                      std::to_string(config.memory.feature_dim));
  }
  return StreamState(log.num_users, log.num_items, log.feature_dim, config.memory.dim);
}

void apply_pending_now(StreamState& state, const ad::ModelParams& params,
                       const memory::MemoryConfig& config) {
  ad::Tape tape(false);
  memory::commit(state.memory, memory::apply_pending(tape, state.memory, params, config));
}

void absorb_batch(StreamState& state, std::span<const data::InteractionEvent> events,
                  std::size_t first_ref, const memory::MemoryConfig& config) {
  if (events.empty()) return;
  if (events.front().timestamp < state.last_time) {
    throw DataError("batch starting at event " + std::to_string(first_ref) +
                    " is earlier than the previous batch");
  }
  auto messages = memory::build_messages(events, state.memory, state.num_users,
                                         config.counterpart);
  memory::install_pending(state.memory, memory::aggregate_last(messages));
  for (std::size_t k = 0; k < events.size(); ++k) {
    state.graph.insert_event(events[k], first_ref + k);
    state.positives.add(events[k].user, events[k].item, events[k].timestamp);
  }
  state.last_time = events.back().timestamp;
  state.next_ref = first_ref + events.size();
}

void replay(StreamState& state, const ad::ModelParams& params, const ModelConfig& config,
            const data::EventLog& log, std::size_t batch_size) {
  for (const auto& batch : data::make_batches(log, batch_size)) {
    apply_pending_now(state, params, config.memory);
    absorb_batch(state, batch.events, batch.first_event, config.memory);
  }
}

}  // namespace tgrec::train
