#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <vector>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/data/events.hpp"
#include "tgrec/train/model.hpp"
#include "tgrec/train/stream_state.hpp"

namespace tgrec::eval {

struct EvalConfig {
  std::size_t n_neg = 100;
  // Events scored against the same state; 0 means "use the training batch size".
  std::size_t chunk_size = 0;
  // Draw negatives from the chunk's items instead of the whole catalogue.
  bool batch_negatives = false;
  std::vector<std::size_t> ks = {5, 10, 20};
  std::uint64_t seed = 0;
  // Cases embedded together on one tape; bounds peak memory only.
  std::size_t cases_per_pass = 32;
};

struct RankedCase {
  std::uint32_t user = 0;
  std::uint32_t positive = 0;
  double time = 0.0;
  std::size_t event_ref = 0;
  // candidates[0] is the positive, the rest are distinct negatives.
  std::vector<std::uint32_t> candidates;
  std::size_t rank = 0;  // 1-based
  // Fewer eligible negatives than requested.
  bool short_negatives = false;
};

struct MetricsReport {
  std::map<std::size_t, double> recall;
  std::size_t cases = 0;
  std::size_t flagged = 0;

  friend auto operator==(const MetricsReport&, const MetricsReport&) -> bool = default;
};

// |{r <= k}| / |ranks|; throws std::invalid_argument on an empty list.
auto recall_at_k(std::span<const std::size_t> ranks, std::size_t k) -> double;

// 1 + number of candidates beating candidates[0]: a higher score, or an
// equal score with a smaller item index.
auto rank_of_positive(std::span<const double> scores,
                      std::span<const std::uint32_t> candidates) -> std::size_t;

auto summarize(std::span<const RankedCase> cases, std::span<const std::size_t> ks)
    -> MetricsReport;

// Chunk-local record of interactions not yet in the positive index.
using RecentItems = std::map<std::pair<std::uint32_t, std::uint32_t>, double>;

// Candidates for one case. Negatives exclude the positive and every item the
// user interacted with strictly before t (index plus `recent`). `pool`, when
// non-empty, restricts negatives to those items (sorted, distinct).
auto draw_candidates(std::uint32_t user, std::uint32_t positive, double t,
                     const train::PositiveIndex& index, const RecentItems& recent,
                     std::size_t num_items, std::size_t n_neg,
                     std::span<const std::uint32_t> pool, ad::Rng& rng) -> RankedCase;

struct ScoredChunk {
  std::vector<std::vector<double>> scores;  // per case, aligned with candidates
  std::vector<std::vector<double>> user_embeddings;  // optional
};

class CaseScorer {
 public:
  virtual ~CaseScorer() = default;
  virtual void before_chunk() {}
  virtual auto score(std::span<const RankedCase> cases) -> ScoredChunk = 0;
  virtual void after_chunk(std::span<const data::InteractionEvent> events,
                           std::size_t first_ref) = 0;
  [[nodiscard]] virtual auto state() const -> const train::StreamState* { return nullptr; }
};

struct CaseView {
  const RankedCase& ranked;
  std::span<const double> scores;
  std::span<const double> user_embedding;
  const train::StreamState* state;
};
using CaseObserver = std::function<void(const CaseView&)>;

// Scores every event of `split` chunk by chunk. Candidates for a chunk are
// drawn before it is scored; the chunk's events reach the scorer's state and
// `index` only afterwards.
auto run_protocol(const data::EventLog& split, train::PositiveIndex& index,
                  std::size_t num_items, const EvalConfig& config, CaseScorer& scorer,
                  const CaseObserver& observer = {}) -> std::vector<RankedCase>;

// Dot-product scores of the TGN embeddings. `state` must already hold the
// replayed history; it is advanced through the split.
auto evaluate_split(const ad::ModelParams& params, const train::ModelConfig& model,
                    train::StreamState& state, const data::EventLog& split,
                    const EvalConfig& config, const CaseObserver& observer = {})
    -> MetricsReport;

// Fresh state, replay of `history` in order, then evaluate_split.
auto evaluate_after_replay(const ad::ModelParams& params, const train::ModelConfig& model,
                           const std::vector<const data::EventLog*>& history,
                           const data::EventLog& split, std::size_t batch_size,
                           const EvalConfig& config) -> MetricsReport;

// Candidates ranked by their interaction counts in `train`, under the same
// protocol (and the same candidate draws for a given seed).
auto popularity_baseline(const data::EventLog& split, const data::EventLog& train,
                         const std::vector<const data::EventLog*>& history,
                         const EvalConfig& config) -> MetricsReport;

struct SyntheticConfig {
  std::size_t groups = 2;
  std::size_t users = 200;
  std::size_t items = 200;
  std::size_t events = 20000;
  double noise = 0.2;
  std::uint64_t seed = 0;
  double time_step = 1.0;
};

struct SyntheticData {
  data::EventLog log;
  std::vector<std::size_t> user_group;
  std::vector<std::size_t> item_group;
  // True where the event took the preference branch rather than noise.
  std::vector<bool> planted;
};

// Users and items are split into `groups` groups round-robin. Each event
// picks a uniform user; with probability 1 - noise the item comes from the
// user's preferred group (group g before the midpoint, g + 1 after),
// otherwise from the whole catalogue. Timestamps advance by time_step.
auto generate_synthetic(const SyntheticConfig& config) -> SyntheticData;

}  // namespace tgrec::eval
