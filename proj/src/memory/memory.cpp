#include "tgrec/memory/memory.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>
#include <string>

#include "tgrec/autodiff/ops.hpp"
#include "tgrec/embedding/time_encoder.hpp"

namespace tgrec::memory {

auto MemoryConfig::message_dim() const -> std::size_t {
  return 2 * dim + (time_mode == TimeInMessage::kEncoded ? time_dim : 1) +
         feature_dim;
}

MemoryStore::MemoryStore(std::size_t num_nodes, std::size_t dim)
    : dim_(dim),
      memory_({num_nodes, dim}, 0.0),
      last_update_(num_nodes, 0.0),
      pending_(num_nodes) {}

auto MemoryStore::row(NodeId node) const -> std::span<const double> {
  return memory_.row(node);
}

auto MemoryStore::last_update(NodeId node) const -> double {
  return last_update_.at(node);
}

auto MemoryStore::pending(NodeId node) const -> const std::optional<RawMessage>& {
  return pending_.at(node);
}

auto MemoryStore::pending_nodes() const -> std::vector<NodeId> {
  std::vector<NodeId> out;
  for (std::size_t i = 0; i < pending_.size(); ++i) {
    if (pending_[i]) out.push_back(static_cast<NodeId>(i));
  }
  return out;
}

void MemoryStore::set_pending(NodeId node, RawMessage message) {
  pending_.at(node) = std::move(message);
}

void MemoryStore::write(NodeId node, std::span<const double> values, double time) {
  if (values.size() != dim_) throw std::invalid_argument("memory row width mismatch");
  if (time < last_update_.at(node)) {
    throw std::logic_error("memory update would move last_update backwards");
  }
  std::copy(values.begin(), values.end(), memory_.row(node).begin());
  last_update_[node] = time;
  pending_[node].reset();
}

void MemoryStore::reset() {
  memory_.fill(0.0);
  std::fill(last_update_.begin(), last_update_.end(), 0.0);
  for (auto& p : pending_) p.reset();
}

auto build_messages(std::span<const data::InteractionEvent> events,
                    const MemoryStore& store, std::size_t num_users,
                    CounterpartRead read) -> MessageLists {
  MessageLists out;
  auto emit = [&](NodeId self, NodeId other, const data::InteractionEvent& ev) {
    const double dt = ev.timestamp - store.last_update(self);
    if (dt < 0.0) {
      throw std::logic_error("negative time delta for node " + std::to_string(self) +
                             ": events processed out of order");
    }
    RawMessage msg{other, ev.timestamp, dt, ev.features, {}};
    if (read == CounterpartRead::kAtCreation) {
      const auto r = store.row(other);
      msg.counterpart_snapshot.assign(r.begin(), r.end());
    }
    out[self].push_back(std::move(msg));
  };
  for (const auto& ev : events) {
    const auto user = static_cast<NodeId>(ev.user);
    const auto item = static_cast<NodeId>(num_users + ev.item);
    emit(user, item, ev);
    emit(item, user, ev);
  }
  return out;
}

auto aggregate_last(const MessageLists& lists) -> std::map<NodeId, RawMessage> {
  std::map<NodeId, RawMessage> out;
  for (const auto& [node, msgs] : lists) {
    if (msgs.empty()) continue;
    std::size_t best = 0;
    for (std::size_t i = 1; i < msgs.size(); ++i) {
      if (msgs[i].event_time >= msgs[best].event_time) best = i;
    }
    out.emplace(node, msgs[best]);
  }
  return out;
}

void install_pending(MemoryStore& store,
                     const std::map<NodeId, RawMessage>& messages) {
  for (const auto& [node, msg] : messages) store.set_pending(node, msg);
}

namespace {

constexpr std::array<const char*, 3> kGates = {"z", "r", "h"};

auto gru_name(const char* kind, const char* gate) -> std::string {
  return std::string("memory.gru.") + kind + "_" + gate;
}

}  // namespace

void add_updater_params(ad::ModelParams& params, const MemoryConfig& config,
                        ad::Rng& rng) {
  const std::size_t in = config.message_dim();
  const std::size_t d = config.dim;
  if (config.updater == UpdaterKind::kGru) {
    for (const char* g : kGates) {
      params.add(gru_name("W", g), ad::glorot_uniform(in, d, rng));
      params.add(gru_name("U", g), ad::glorot_uniform(d, d, rng));
      params.add(gru_name("b", g), ad::Tensor({d}, 0.0));
    }
  } else {
    params.add("memory.rnn.W", ad::glorot_uniform(in, d, rng));
    params.add("memory.rnn.U", ad::glorot_uniform(d, d, rng));
    params.add("memory.rnn.b", ad::Tensor({d}, 0.0));
  }
}

auto apply_pending(ad::Tape& tape, const MemoryStore& store,
                   std::span<const NodeId> nodes, const ad::ModelParams& params,
                   const MemoryConfig& config) -> MemoryUpdate {
  MemoryUpdate update;
  for (NodeId n : nodes) {
    if (store.pending(n)) update.nodes.push_back(n);
  }
  if (update.nodes.empty()) return update;
  const std::size_t n = update.nodes.size();
  const std::size_t d = store.dim();
  if (d != config.dim) throw std::invalid_argument("memory width does not match config");
  const std::size_t fd = config.feature_dim;

  ad::Tensor own({n, d}, 0.0);
  ad::Tensor pair({n, 2 * d}, 0.0);
  ad::Tensor feats({n, fd}, 0.0);
  std::vector<double> deltas(n);
  update.times.resize(n);
  for (std::size_t k = 0; k < n; ++k) {
    const NodeId node = update.nodes[k];
    const auto& msg = *store.pending(node);
    const auto self = store.row(node);
    const auto other = msg.counterpart_snapshot.empty()
                           ? store.row(msg.counterpart)
                           : std::span<const double>(msg.counterpart_snapshot);
    if (msg.features.size() != fd) {
      throw std::invalid_argument("message feature width does not match config");
    }
    std::copy(self.begin(), self.end(), own.row(k).begin());
    std::copy(self.begin(), self.end(), pair.row(k).begin());
    std::copy(other.begin(), other.end(), pair.row(k).begin() + static_cast<std::ptrdiff_t>(d));
    std::copy(msg.features.begin(), msg.features.end(), feats.row(k).begin());
    deltas[k] = msg.delta_t;
    update.times[k] = msg.event_time;
  }

  std::vector<ad::Var> blocks = {tape.constant(std::move(pair))};
  if (config.time_mode == TimeInMessage::kEncoded) {
    blocks.push_back(embed::time_encoder::encode(tape, params, deltas));
  } else {
    blocks.push_back(tape.constant(ad::Tensor({n, 1}, deltas)));
  }
  if (fd > 0) blocks.push_back(tape.constant(std::move(feats)));
  const ad::Var x = ad::concat(blocks, 1);
  const ad::Var h = tape.constant(std::move(own));

  auto p = [&](const std::string& name) { return tape.param(params, name); };
  if (config.updater == UpdaterKind::kGru) {
    auto gate = [&](const char* g, const ad::Var& hidden) {
      return ad::add(ad::add(ad::matmul(x, p(gru_name("W", g))),
                             ad::matmul(hidden, p(gru_name("U", g)))),
                     p(gru_name("b", g)));
    };
    const ad::Var z = ad::sigmoid(gate("z", h));
    const ad::Var r = ad::sigmoid(gate("r", h));
    const ad::Var candidate = ad::tanh(gate("h", ad::mul(r, h)));
    // (1 - z) * h + z * candidate
    update.rows = ad::add(h, ad::mul(z, ad::sub(candidate, h)));
  } else {
    update.rows = ad::tanh(ad::add(
        ad::add(ad::matmul(x, p("memory.rnn.W")), ad::matmul(h, p("memory.rnn.U"))),
        p("memory.rnn.b")));
  }
  return update;
}

auto apply_pending(ad::Tape& tape, const MemoryStore& store,
                   const ad::ModelParams& params, const MemoryConfig& config)
    -> MemoryUpdate {
  const auto nodes = store.pending_nodes();
  return apply_pending(tape, store, nodes, params, config);
}

void commit(MemoryStore& store, const MemoryUpdate& update) {
  if (update.nodes.empty()) return;
  const auto& rows = update.rows.value();
  for (std::size_t k = 0; k < update.nodes.size(); ++k) {
    store.write(update.nodes[k], rows.row(k), update.times[k]);
  }
}

void reset_memory(MemoryStore& store) { store.reset(); }

}  // namespace tgrec::memory
