#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "tgrec/autodiff/adam.hpp"
#include "tgrec/autodiff/params.hpp"
#include "tgrec/autodiff/tape.hpp"
#include "tgrec/data/events.hpp"
#include "tgrec/eval/evaluation.hpp"
#include "tgrec/memory/memory.hpp"
#include "tgrec/train/model.hpp"
#include "tgrec/train/stream_state.hpp"

namespace tgrec::train {

struct TrainConfig {
  std::size_t batch_size = 1000;
  std::size_t epochs = 10;
  ad::AdamConfig adam;
  std::size_t n_neg = 1;
  std::uint64_t seed = 0;
  bool early_stopping = false;
  std::size_t patience = 3;
  eval::EvalConfig eval;
};

struct TrainExample {
  std::uint32_t user = 0;
  std::uint32_t positive = 0;
  std::vector<std::uint32_t> negatives;
  double time = 0.0;
};

struct NegativeDraw {
  std::vector<std::uint32_t> items;
  bool skipped = false;           // nothing eligible
  bool with_replacement = false;  // fewer eligible items than requested
};

// n_neg items from batch_items minus the positives. Without replacement when
// enough items are eligible; otherwise with replacement.
auto sample_negatives(std::span<const std::uint32_t> batch_items,
                      const std::function<bool(std::uint32_t)>& is_positive,
                      std::size_t n_neg, ad::Rng& rng) -> NegativeDraw;

struct BatchExamples {
  std::vector<TrainExample> examples;
  std::size_t skipped = 0;
  std::size_t with_replacement = 0;
};

// One example per event. Negatives come from the batch's distinct items,
// excluding everything the user interacted with up to and including the
// event time (the index plus earlier-or-equal events of this batch).
auto draw_examples(std::span<const data::InteractionEvent> events,
                   const PositiveIndex& index, std::size_t n_neg, ad::Rng& rng)
    -> BatchExamples;

// sum over rows and negatives of -log sigmoid(z_u.z_p - z_u.z_n). z_neg holds
// n_neg consecutive rows per user row.
auto bpr_loss(const ad::Var& z_user, const ad::Var& z_pos, const ad::Var& z_neg,
              std::size_t n_neg) -> ad::Var;

struct ForwardResult {
  ad::Var loss;  // unbound when there are no examples
  memory::MemoryUpdate update;
  std::size_t pairs = 0;
};

// Applies pending messages on the tape and scores the examples against the
// resulting memory. Does not modify `state`.
auto forward_batch_loss(ad::Tape& tape, const ad::ModelParams& params,
                        const ModelConfig& model, const StreamState& state,
                        std::span<const TrainExample> examples) -> ForwardResult;

struct BatchStats {
  double loss = 0.0;  // summed over pairs
  std::size_t examples = 0;
  std::size_t pairs = 0;
  std::size_t skipped = 0;
  std::size_t with_replacement = 0;
  double grad_norm = 0.0;
};

// Called after the batch's examples are scored and before any of its events
// touch the state.
using ScoredHook = std::function<void(const StreamState&, const BatchExamples&)>;

auto train_batch(StreamState& state, ad::ModelParams& params, ad::Adam& optimizer,
                 const ModelConfig& model, const data::Batch& batch, std::size_t n_neg,
                 ad::Rng& rng, const ScoredHook& on_scored = {}) -> BatchStats;

struct EpochStats {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;  // mean per (example, negative) pair
  std::size_t pairs = 0;
  std::size_t skipped = 0;
  std::size_t with_replacement = 0;
  eval::MetricsReport val;
  double wall_ms = 0.0;
};

struct TrainResult {
  ad::ModelParams best_params;
  ad::ModelParams final_params;
  std::vector<EpochStats> epochs;
  std::size_t best_epoch = 0;  // 0: no epoch improved on the initial params
  bool stopped_early = false;
};

using EpochCallback = std::function<void(const EpochStats&)>;

// Epoch loop: memory, adjacency and positives are reset at the start of each
// epoch, the train split is streamed with gradient steps, then the validation
// split is scored. Keeps the params with the best validation Recall@10.
auto train(const ModelConfig& model, const TrainConfig& config,
           const data::ChronologicalSplit& data, ad::ModelParams params,
           const EpochCallback& on_epoch = {}) -> TrainResult;

}  // namespace tgrec::train
