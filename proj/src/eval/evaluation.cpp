#include "tgrec/eval/evaluation.hpp"

#include <algorithm>
#include <stdexcept>

#include "tgrec/autodiff/tape.hpp"
#include "tgrec/embedding/embedding.hpp"

namespace tgrec::eval {

auto recall_at_k(std::span<const std::size_t> ranks, std::size_t k) -> double {
  if (ranks.empty()) throw std::invalid_argument("recall_at_k: no ranks");
  const auto hits = std::count_if(ranks.begin(), ranks.end(),
                                  [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(ranks.size());
}

auto rank_of_positive(std::span<const double> scores,
                      std::span<const std::uint32_t> candidates) -> std::size_t {
  if (scores.size() != candidates.size() || scores.empty()) {
    throw std::invalid_argument("rank_of_positive: scores and candidates differ");
  }
  const double s = scores[0];
  const std::uint32_t p = candidates[0];
  std::size_t rank = 1;
  for (std::size_t j = 1; j < scores.size(); ++j) {
    if (scores[j] > s || (scores[j] == s && candidates[j] < p)) ++rank;
  }
  return rank;
}

auto summarize(std::span<const RankedCase> cases, std::span<const std::size_t> ks)
    -> MetricsReport {
  MetricsReport report;
  report.cases = cases.size();
  std::vector<std::size_t> ranks;
  ranks.reserve(cases.size());
  for (const auto& c : cases) {
    ranks.push_back(c.rank);
    report.flagged += c.short_negatives ? 1 : 0;
  }
  for (std::size_t k : ks) report.recall[k] = ranks.empty() ? 0.0 : recall_at_k(ranks, k);
  return report;
}

auto draw_candidates(std::uint32_t user, std::uint32_t positive, double t,
                     const train::PositiveIndex& index, const RecentItems& recent,
                     std::size_t num_items, std::size_t n_neg,
                     std::span<const std::uint32_t> pool, ad::Rng& rng) -> RankedCase {
  RankedCase c;
  c.user = user;
  c.positive = positive;
  c.time = t;
  c.candidates.push_back(positive);

  auto excluded = [&](std::uint32_t v) {
    if (v == positive || index.contains_before(user, v, t)) return true;
    const auto it = recent.find({user, v});
    return it != recent.end() && it->second < t;
  };

  if (!pool.empty()) {
    std::vector<std::uint32_t> eligible;
    for (std::uint32_t v : pool) {
      if (!excluded(v)) eligible.push_back(v);
    }
    const std::size_t take = std::min(n_neg, eligible.size());
    for (std::size_t i = 0; i < take; ++i) {
      std::swap(eligible[i], eligible[i + ad::uniform_index(rng, eligible.size() - i)]);
    }
    c.candidates.insert(c.candidates.end(), eligible.begin(),
                        eligible.begin() + static_cast<std::ptrdiff_t>(take));
    c.short_negatives = eligible.size() < n_neg;
    return c;
  }

  // Count the excluded items exactly, then either take every eligible item or
  // rejection-sample distinct ones.
  std::vector<std::uint32_t> blocked = {positive};
  for (const auto& [v, first] : index.items(user)) {
    if (first < t) blocked.push_back(v);
  }
  for (auto it = recent.lower_bound({user, 0}); it != recent.end() && it->first.first == user;
       ++it) {
    if (it->second < t) blocked.push_back(it->first.second);
  }
  std::sort(blocked.begin(), blocked.end());
  blocked.erase(std::unique(blocked.begin(), blocked.end()), blocked.end());
  const std::size_t eligible = num_items - blocked.size();

  if (eligible <= n_neg) {
    for (std::uint32_t v = 0; v < num_items; ++v) {
      if (!std::binary_search(blocked.begin(), blocked.end(), v)) c.candidates.push_back(v);
    }
    c.short_negatives = eligible < n_neg;
    return c;
  }
  std::vector<std::uint32_t> chosen;
  chosen.reserve(n_neg);
  while (chosen.size() < n_neg) {
    const auto v = static_cast<std::uint32_t>(ad::uniform_index(rng, num_items));
    if (std::binary_search(blocked.begin(), blocked.end(), v)) continue;
    if (std::find(chosen.begin(), chosen.end(), v) != chosen.end()) continue;
    chosen.push_back(v);
  }
  c.candidates.insert(c.candidates.end(), chosen.begin(), chosen.end());
  return c;
}

auto run_protocol(const data::EventLog& split, train::PositiveIndex& index,
                  std::size_t num_items, const EvalConfig& config, CaseScorer& scorer,
                  const CaseObserver& observer) -> std::vector<RankedCase> {
  if (config.chunk_size == 0) throw std::invalid_argument("evaluation chunk size is 0");
  ad::Rng rng(config.seed);
  std::vector<RankedCase> out;
  out.reserve(split.size());
  for (const auto& chunk : data::make_batches(split, config.chunk_size)) {
    std::vector<std::uint32_t> pool;
    if (config.batch_negatives) {
      for (const auto& ev : chunk.events) pool.push_back(ev.item);
      std::sort(pool.begin(), pool.end());
      pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
    }
    RecentItems recent;
    std::vector<RankedCase> cases;
    cases.reserve(chunk.events.size());
    for (std::size_t k = 0; k < chunk.events.size(); ++k) {
      const auto& ev = chunk.events[k];
      cases.push_back(draw_candidates(ev.user, ev.item, ev.timestamp, index, recent,
                                      num_items, config.n_neg, pool, rng));
      cases.back().event_ref = chunk.first_event + k;
      recent.try_emplace({ev.user, ev.item}, ev.timestamp);
    }
    scorer.before_chunk();
    const ScoredChunk scored = scorer.score(cases);
    for (std::size_t k = 0; k < cases.size(); ++k) {
      cases[k].rank = rank_of_positive(scored.scores[k], cases[k].candidates);
      if (observer) {
        std::span<const double> emb;
        if (k < scored.user_embeddings.size()) emb = scored.user_embeddings[k];
        observer(CaseView{cases[k], scored.scores[k], emb, scorer.state()});
      }
    }
    scorer.after_chunk(chunk.events, chunk.first_event);
    for (const auto& ev : chunk.events) index.add(ev.user, ev.item, ev.timestamp);
    for (auto& c : cases) out.push_back(std::move(c));
  }
  return out;
}

namespace {

class TgnScorer final : public CaseScorer {
 public:
  TgnScorer(const ad::ModelParams& params, const train::ModelConfig& model,
            train::StreamState& state, std::size_t cases_per_pass)
      : params_(params), model_(model), state_(state),
        per_pass_(std::max<std::size_t>(1, cases_per_pass)) {}

  void before_chunk() override {
    train::apply_pending_now(state_, params_, model_.memory);
  }

  auto score(std::span<const RankedCase> cases) -> ScoredChunk override {
    ScoredChunk out;
    out.scores.resize(cases.size());
    out.user_embeddings.resize(cases.size());
    const embed::MemoryView view(state_.memory);
    const embed::EmbeddingContext ctx{params_, model_.embedding, state_.graph, view};
    const std::size_t d = model_.embedding.node_dim;
    for (std::size_t start = 0; start < cases.size(); start += per_pass_) {
      const std::size_t end = std::min(cases.size(), start + per_pass_);
      std::vector<graph::NodeId> nodes;
      std::vector<double> times;
      for (std::size_t c = start; c < end; ++c) {
        nodes.push_back(cases[c].user);
        times.push_back(cases[c].time);
        for (std::uint32_t v : cases[c].candidates) {
          nodes.push_back(state_.item_node(v));
          times.push_back(cases[c].time);
        }
      }
      ad::Tape tape(false);
      const ad::Tensor z = embed::embed_batch(tape, ctx, nodes, times).value();
      std::size_t row = 0;
      for (std::size_t c = start; c < end; ++c) {
        const auto zu = z.row(row++);
        out.user_embeddings[c].assign(zu.begin(), zu.end());
        auto& s = out.scores[c];
        for (std::size_t j = 0; j < cases[c].candidates.size(); ++j) {
          const auto zv = z.row(row++);
          double acc = 0.0;
          for (std::size_t k = 0; k < d; ++k) acc += zu[k] * zv[k];
          s.push_back(acc);
        }
      }
    }
    return out;
  }

  void after_chunk(std::span<const data::InteractionEvent> events,
                   std::size_t first_ref) override {
    train::absorb_batch(state_, events, first_ref, model_.memory);
  }

  [[nodiscard]] auto state() const -> const train::StreamState* override { return &state_; }

 private:
  const ad::ModelParams& params_;
  const train::ModelConfig& model_;
  train::StreamState& state_;
  std::size_t per_pass_;
};

class PopularityScorer final : public CaseScorer {
 public:
  explicit PopularityScorer(std::vector<double> counts) : counts_(std::move(counts)) {}

  auto score(std::span<const RankedCase> cases) -> ScoredChunk override {
    ScoredChunk out;
    for (const auto& c : cases) {
      auto& s = out.scores.emplace_back();
      for (std::uint32_t v : c.candidates) s.push_back(counts_.at(v));
    }
    return out;
  }
  void after_chunk(std::span<const data::InteractionEvent>, std::size_t) override {}

 private:
  std::vector<double> counts_;
};

}  // namespace

auto evaluate_split(const ad::ModelParams& params, const train::ModelConfig& model,
                    train::StreamState& state, const data::EventLog& split,
                    const EvalConfig& config, const CaseObserver& observer)
    -> MetricsReport {
  TgnScorer scorer(params, model, state, config.cases_per_pass);
  const auto cases = run_protocol(split, state.positives, split.num_items, config, scorer,
                                  observer);
  return summarize(cases, config.ks);
}

auto evaluate_after_replay(const ad::ModelParams& params, const train::ModelConfig& model,
                           const std::vector<const data::EventLog*>& history,
                           const data::EventLog& split, std::size_t batch_size,
                           const EvalConfig& config) -> MetricsReport {
  auto state = train::make_state(split, model);
  for (const auto* log : history) train::replay(state, params, model, *log, batch_size);
  EvalConfig cfg = config;
  if (cfg.chunk_size == 0) cfg.chunk_size = batch_size;
  return evaluate_split(params, model, state, split, cfg);
}

auto popularity_baseline(const data::EventLog& split, const data::EventLog& train,
                         const std::vector<const data::EventLog*>& history,
                         const EvalConfig& config) -> MetricsReport {
  std::vector<double> counts(split.num_items, 0.0);
  for (const auto& ev : train.events) counts.at(ev.item) += 1.0;
  train::PositiveIndex index(split.num_users);
  for (const auto* log : history) {
    for (const auto& ev : log->events) index.add(ev.user, ev.item, ev.timestamp);
  }
  PopularityScorer scorer(std::move(counts));
  const auto cases = run_protocol(split, index, split.num_items, config, scorer);
  return summarize(cases, config.ks);
}

auto generate_synthetic(const SyntheticConfig& c) -> SyntheticData {
  if (c.groups == 0 || c.users < c.groups || c.items < c.groups || c.events == 0) {
    throw std::invalid_argument("synthetic: need at least one user and item per group");
  }
  if (!(c.noise >= 0.0 && c.noise <= 1.0)) {
    throw std::invalid_argument("synthetic: noise must lie in [0, 1]");
  }
  if (!(c.time_step > 0.0)) throw std::invalid_argument("synthetic: time_step must be > 0");
  SyntheticData out;
  out.user_group.resize(c.users);
  out.item_group.resize(c.items);
  std::vector<std::vector<std::uint32_t>> members(c.groups);
  for (std::size_t u = 0; u < c.users; ++u) out.user_group[u] = u % c.groups;
  for (std::size_t i = 0; i < c.items; ++i) {
    out.item_group[i] = i % c.groups;
    members[i % c.groups].push_back(static_cast<std::uint32_t>(i));
  }

  auto ids = std::make_shared<data::IdMaps>();
  for (std::size_t u = 0; u < c.users; ++u) ids->intern_user("u" + std::to_string(u));
  for (std::size_t i = 0; i < c.items; ++i) ids->intern_item("i" + std::to_string(i));

  ad::Rng rng(c.seed);
  auto& log = out.log;
  log.num_users = c.users;
  log.num_items = c.items;
  log.ids = ids;
  log.events.reserve(c.events);
  out.planted.reserve(c.events);
  const std::size_t midpoint = c.events / 2;
  for (std::size_t k = 0; k < c.events; ++k) {
    const auto user = static_cast<std::uint32_t>(ad::uniform_index(rng, c.users));
    const bool planted = ad::uniform01(rng) >= c.noise;
    std::uint32_t item = 0;
    if (planted) {
      const std::size_t shift = k < midpoint ? 0 : 1;
      const auto& group = members[(out.user_group[user] + shift) % c.groups];
      item = group[ad::uniform_index(rng, group.size())];
    } else {
      item = static_cast<std::uint32_t>(ad::uniform_index(rng, c.items));
    }
    log.events.push_back({user, item, static_cast<double>(k + 1) * c.time_step, {}});
    out.planted.push_back(planted);
  }
  return out;
}

}  // namespace tgrec::eval
