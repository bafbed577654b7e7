#include "tgrec/train/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>
#include <string>

#include "tgrec/autodiff/ops.hpp"
#include "tgrec/embedding/embedding.hpp"
#include "tgrec/errors.hpp"

namespace tgrec::train {

auto sample_negatives(std::span<const std::uint32_t> batch_items,
                      const std::function<bool(std::uint32_t)>& is_positive,
                      std::size_t n_neg, ad::Rng& rng) -> NegativeDraw {
  NegativeDraw out;
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t v : batch_items) {
    if (!is_positive(v)) eligible.push_back(v);
  }
  if (eligible.empty()) {
    out.skipped = true;
    return out;
  }
  if (eligible.size() < n_neg) {
    out.with_replacement = true;
    for (std::size_t k = 0; k < n_neg; ++k) {
      out.items.push_back(eligible[ad::uniform_index(rng, eligible.size())]);
    }
    return out;
  }
  for (std::size_t k = 0; k < n_neg; ++k) {
    std::swap(eligible[k], eligible[k + ad::uniform_index(rng, eligible.size() - k)]);
  }
  out.items.assign(eligible.begin(), eligible.begin() + static_cast<std::ptrdiff_t>(n_neg));
  return out;
}

auto draw_examples(std::span<const data::InteractionEvent> events,
                   const PositiveIndex& index, std::size_t n_neg, ad::Rng& rng)
    -> BatchExamples {
  if (n_neg == 0) throw ConfigError("n_neg must be positive");
  std::vector<std::uint32_t> items;
  std::map<std::pair<std::uint32_t, std::uint32_t>, double> in_batch;
  for (const auto& ev : events) {
    items.push_back(ev.item);
    in_batch.try_emplace({ev.user, ev.item}, ev.timestamp);
  }
  std::sort(items.begin(), items.end());
  items.erase(std::unique(items.begin(), items.end()), items.end());

  BatchExamples out;
  for (const auto& ev : events) {
    auto is_positive = [&](std::uint32_t v) {
      if (index.contains(ev.user, v)) return true;
      const auto it = in_batch.find({ev.user, v});
      return it != in_batch.end() && it->second <= ev.timestamp;
    };
    auto draw = sample_negatives(items, is_positive, n_neg, rng);
    if (draw.skipped) {
      ++out.skipped;
      continue;
    }
    out.with_replacement += draw.with_replacement ? 1 : 0;
    out.examples.push_back({ev.user, ev.item, std::move(draw.items), ev.timestamp});
  }
  return out;
}

auto bpr_loss(const ad::Var& z_user, const ad::Var& z_pos, const ad::Var& z_neg,
              std::size_t n_neg) -> ad::Var {
  if (n_neg == 0) throw std::invalid_argument("bpr_loss: n_neg must be positive");
  const ad::Var pos = ad::batched_row_dot(z_user, z_pos, 1);
  const ad::Var neg = ad::batched_row_dot(z_user, z_neg, n_neg);
  const ad::Var pos_wide =
      n_neg == 1 ? pos : ad::concat(std::vector<ad::Var>(n_neg, pos), 1);
  return ad::scale(ad::sum(ad::log_sigmoid(ad::sub(pos_wide, neg))), -1.0);
}

auto forward_batch_loss(ad::Tape& tape, const ad::ModelParams& params,
                        const ModelConfig& model, const StreamState& state,
                        std::span<const TrainExample> examples) -> ForwardResult {
  ForwardResult out;
  out.update = memory::apply_pending(tape, state.memory, params, model.memory);
  if (examples.empty()) return out;
  const std::size_t n_neg = examples.front().negatives.size();
  const std::size_t count = examples.size();
  std::vector<graph::NodeId> nodes(count * (2 + n_neg));
  std::vector<double> times(nodes.size());
  for (std::size_t e = 0; e < count; ++e) {
    const auto& ex = examples[e];
    if (ex.negatives.size() != n_neg) {
      throw std::invalid_argument("examples disagree on the number of negatives");
    }
    nodes[e] = ex.user;
    nodes[count + e] = state.item_node(ex.positive);
    times[e] = times[count + e] = ex.time;
    for (std::size_t k = 0; k < n_neg; ++k) {
      const std::size_t slot = 2 * count + e * n_neg + k;
      nodes[slot] = state.item_node(ex.negatives[k]);
      times[slot] = ex.time;
    }
  }
  const embed::MemoryView view = embed::view_with_update(tape, state.memory, out.update);
  const embed::EmbeddingContext ctx{params, model.embedding, state.graph, view};
  const ad::Var z = embed::embed_batch(tape, ctx, nodes, times);
  out.loss = bpr_loss(ad::slice(z, 0, 0, count), ad::slice(z, 0, count, 2 * count),
                      ad::slice(z, 0, 2 * count, nodes.size()), n_neg);
  out.pairs = count * n_neg;
  return out;
}

auto train_batch(StreamState& state, ad::ModelParams& params, ad::Adam& optimizer,
                 const ModelConfig& model, const data::Batch& batch, std::size_t n_neg,
                 ad::Rng& rng, const ScoredHook& on_scored) -> BatchStats {
  BatchStats stats;
  if (batch.events.empty()) return stats;
  if (batch.events.front().timestamp < state.last_time || batch.first_event < state.next_ref) {
    throw DataError("batch " + std::to_string(batch.index) +
                    " is out of chronological order");
  }
  const BatchExamples drawn = draw_examples(batch.events, state.positives, n_neg, rng);
  stats.examples = drawn.examples.size();
  stats.skipped = drawn.skipped;
  stats.with_replacement = drawn.with_replacement;

  ad::Tape tape;
  const ForwardResult fwd = forward_batch_loss(tape, params, model, state, drawn.examples);
  if (on_scored) on_scored(state, drawn);
  if (fwd.loss.valid()) {
    stats.loss = fwd.loss.value().item();
    stats.pairs = fwd.pairs;
    tape.backward(fwd.loss);
    const ad::Gradients grads = tape.gradients(params);
    double sq = 0.0;
    for (const auto& [name, g] : grads) {
      for (double x : g.values()) sq += x * x;
    }
    stats.grad_norm = std::sqrt(sq);
    optimizer.step(params, grads);
  }
  memory::commit(state.memory, fwd.update);
  absorb_batch(state, batch.events, batch.first_event, model.memory);
  return stats;
}

auto train(const ModelConfig& model, const TrainConfig& config,
           const data::ChronologicalSplit& data, ad::ModelParams params,
           const EpochCallback& on_epoch) -> TrainResult {
  validate(model);
  if (config.batch_size == 0) throw ConfigError("batch_size must be positive");
  eval::EvalConfig eval_cfg = config.eval;
  if (eval_cfg.chunk_size == 0) eval_cfg.chunk_size = config.batch_size;

  TrainResult result;
  result.best_params = params;
  StreamState state = make_state(data.train, model);
  ad::Adam optimizer(config.adam);
  ad::Rng rng(config.seed);
  double best = -std::numeric_limits<double>::infinity();
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    state.reset();
    EpochStats stats;
    stats.epoch = epoch;
    double loss_sum = 0.0;
    for (const auto& batch : data::make_batches(data.train, config.batch_size)) {
      const BatchStats b =
          train_batch(state, params, optimizer, model, batch, config.n_neg, rng);
      loss_sum += b.loss;
      stats.pairs += b.pairs;
      stats.skipped += b.skipped;
      stats.with_replacement += b.with_replacement;
    }
    stats.train_loss = stats.pairs > 0 ? loss_sum / static_cast<double>(stats.pairs) : 0.0;
    stats.val = eval::evaluate_split(params, model, state, data.val, eval_cfg);
    stats.wall_ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();

    const double r10 = stats.val.recall.at(10);
    if (r10 > best) {
      best = r10;
      result.best_params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else {
      ++since_best;
    }
    result.epochs.push_back(stats);
    if (on_epoch) on_epoch(stats);
    if (config.early_stopping && since_best >= config.patience) {
      result.stopped_early = true;
      break;
    }
  }
  result.final_params = std::move(params);
  return result;
}

}  // namespace tgrec::train
