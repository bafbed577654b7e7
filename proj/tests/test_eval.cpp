#include <gtest/gtest.h>

#include <cmath>
#include <set>

#include "tgrec/eval/evaluation.hpp"
#include "tgrec/train/trainer.hpp"

using namespace tgrec;
using eval::RankedCase;

namespace {

// Scores each candidate with a caller-supplied function; keeps no state.
class FnScorer : public eval::CaseScorer {
 public:
  using Fn = std::function<double(const RankedCase&, std::size_t)>;
  explicit FnScorer(Fn fn) : fn_(std::move(fn)) {}
  auto score(std::span<const RankedCase> cases) -> eval::ScoredChunk override {
    eval::ScoredChunk out;
    for (const auto& c : cases) {
      std::vector<double> s;
      for (std::size_t k = 0; k < c.candidates.size(); ++k) s.push_back(fn_(c, k));
      out.scores.push_back(std::move(s));
    }
    return out;
  }
  void after_chunk(std::span<const data::InteractionEvent>, std::size_t) override {}

 private:
  Fn fn_;
};

auto random_log(std::size_t users, std::size_t items, std::size_t n, std::uint64_t seed) -> data::EventLog {
  ad::Rng rng(seed);
  data::EventLog log;
  log.num_users = users;
  log.num_items = items;
  for (std::size_t k = 0; k < n; ++k) {
    log.events.push_back({static_cast<std::uint32_t>(ad::uniform_index(rng, users)),
                          static_cast<std::uint32_t>(ad::uniform_index(rng, items)),
                          static_cast<double>(k / 3 + 1), {}});
  }
  return log;
}

auto config(std::size_t n_neg, std::size_t chunk) -> eval::EvalConfig {
  eval::EvalConfig c;
  c.n_neg = n_neg;
  c.chunk_size = chunk;
  return c;
}

}  // namespace

TEST(Recall, WorkedExamples) {
  const std::vector<std::size_t> a = {1, 2, 3};
  EXPECT_EQ(eval::recall_at_k(a, 5), 1.0);
  const std::vector<std::size_t> b = {6, 7};
  EXPECT_EQ(eval::recall_at_k(b, 5), 0.0);
  const std::vector<std::size_t> c = {1, 10, 50, 101};
  EXPECT_EQ(eval::recall_at_k(c, 10), 0.5);
  EXPECT_THROW(eval::recall_at_k(std::span<const std::size_t>(), 10), std::invalid_argument);
}

TEST(Recall, RankTieBreakByItemIndex) {
  const std::vector<double> scores = {0.5, 0.9, 0.5, 0.5, 0.1};
  const std::vector<std::uint32_t> cands = {7, 1, 3, 9, 0};
  // Beaten by item 1 (higher) and item 3 (equal, smaller index).
  EXPECT_EQ(eval::rank_of_positive(scores, cands), 3u);
}

// Property: rank_of_positive agrees with sorting the candidates.
TEST(Recall, RankMatchesSortOracle) {
  ad::Rng rng(1);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + ad::uniform_index(rng, 30);
    std::vector<std::uint32_t> cands(n);
    std::vector<double> scores(n);
    std::set<std::uint32_t> used;
    for (std::size_t k = 0; k < n; ++k) {
      std::uint32_t v;
      do {
        v = static_cast<std::uint32_t>(ad::uniform_index(rng, 1000));
      } while (!used.insert(v).second);
      cands[k] = v;
      scores[k] = static_cast<double>(ad::uniform_index(rng, 5));  // many ties
    }
    std::vector<std::size_t> order(n);
    for (std::size_t k = 0; k < n; ++k) order[k] = k;
    std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
      return scores[x] != scores[y] ? scores[x] > scores[y] : cands[x] < cands[y];
    });
    const auto pos = std::find(order.begin(), order.end(), 0u) - order.begin();
    EXPECT_EQ(eval::rank_of_positive(scores, cands), static_cast<std::size_t>(pos) + 1);
  }
}

TEST(Protocol, PerfectRankerScoresOne) {
  const auto log = random_log(20, 300, 400, 2);
  train::PositiveIndex index(20);
  FnScorer perfect([](const RankedCase&, std::size_t k) { return k == 0 ? 1.0 : 0.0; });
  const auto cases = eval::run_protocol(log, index, 300, config(100, 50), perfect);
  const auto report = eval::summarize(cases, std::vector<std::size_t>{5, 10, 20});
  EXPECT_EQ(report.cases, 400u);
  for (const auto& [k, r] : report.recall) EXPECT_EQ(r, 1.0);
}

// Random scores put the positive uniformly among 101 candidates.
TEST(Protocol, RandomScoresCalibrated) {
  const auto log = random_log(50, 2000, 5000, 3);
  train::PositiveIndex index(50);
  ad::Rng noise(4);
  FnScorer random([&](const RankedCase&, std::size_t) { return ad::uniform01(noise); });
  const auto cases = eval::run_protocol(log, index, 2000, config(100, 500), random);
  const auto report = eval::summarize(cases, std::vector<std::size_t>{5, 10, 20});
  EXPECT_EQ(report.flagged, 0u);
  for (std::size_t k : {5u, 10u, 20u}) {
    const double p = static_cast<double>(k) / 101.0;
    const double sigma = std::sqrt(p * (1 - p) / 5000.0);
    // 3 sigma at the headline cutoff; the other two get 4 so that three
    // correlated checks do not fail on one unlucky draw.
    EXPECT_NEAR(report.recall.at(k), p, (k == 10 ? 3 : 4) * sigma) << k;
  }
}

// With more requested negatives than eligible items the candidate set is the
// whole eligible set, which must be exactly the items the user has not
// touched strictly before t, minus the positive.
TEST(Protocol, NegativesAreExactlyUnseenItems) {
  const auto history = random_log(6, 15, 60, 5);
  auto split = random_log(6, 15, 90, 6);
  for (auto& e : split.events) e.timestamp += 100.0;
  train::PositiveIndex index(6);
  for (const auto& e : history.events) index.add(e.user, e.item, e.timestamp);
  FnScorer zero([](const RankedCase&, std::size_t) { return 0.0; });
  const auto cases = eval::run_protocol(split, index, 15, config(50, 7), zero);
  ASSERT_EQ(cases.size(), split.size());
  for (std::size_t c = 0; c < cases.size(); ++c) {
    const auto& rc = cases[c];
    std::set<std::uint32_t> seen;
    for (const auto& e : history.events) {
      if (e.user == rc.user) seen.insert(e.item);
    }
    for (const auto& e : split.events) {
      if (e.user == rc.user && e.timestamp < rc.time) seen.insert(e.item);
    }
    std::set<std::uint32_t> expect;
    for (std::uint32_t v = 0; v < 15; ++v) {
      if (v != rc.positive && !seen.count(v)) expect.insert(v);
    }
    EXPECT_EQ(rc.candidates[0], rc.positive);
    const std::set<std::uint32_t> got(rc.candidates.begin() + 1, rc.candidates.end());
    EXPECT_EQ(got.size(), rc.candidates.size() - 1);
    EXPECT_EQ(got, expect) << "case " << c;
    EXPECT_TRUE(rc.short_negatives);
    EXPECT_EQ(rc.event_ref, c);
  }
  // Chunk events reach the index afterwards.
  EXPECT_TRUE(index.contains(split.events.back().user, split.events.back().item));
}

TEST(Protocol, DrawCandidatesFlagsShortPools) {
  train::PositiveIndex index(1);
  index.add(0, 1, 1.0);
  ad::Rng rng(0);
  const eval::RecentItems recent = {{{0, 2}, 2.0}, {{0, 3}, 5.0}};
  const auto rc = eval::draw_candidates(0, 0, 4.0, index, recent, 5, 100, {}, rng);
  // Items 1 and 2 are history; item 3 happens later, so it stays eligible.
  EXPECT_EQ(std::set<std::uint32_t>(rc.candidates.begin() + 1, rc.candidates.end()),
            (std::set<std::uint32_t>{3, 4}));
  EXPECT_TRUE(rc.short_negatives);
  const auto full = eval::draw_candidates(0, 0, 4.0, index, recent, 5, 2, {}, rng);
  EXPECT_FALSE(full.short_negatives);
  EXPECT_EQ(full.candidates.size(), 3u);
}

TEST(Popularity, WorkedExample) {
  data::EventLog train;
  train.num_users = 4;
  train.num_items = 4;
  train.events = {{0, 2, 1.0, {}}, {1, 2, 2.0, {}}, {2, 2, 3.0, {}}, {0, 0, 4.0, {}}};
  auto test = train.with_events({{3, 0, 10.0, {}}, {3, 1, 11.0, {}}, {3, 3, 12.0, {}}}, 4);
  auto cfg = config(100, 10);
  cfg.ks = {1, 2};
  const auto report = eval::popularity_baseline(test, train, {&train}, cfg);
  // Ranks 2, 2, 2: item 2 is the most popular and always a candidate.
  EXPECT_EQ(report.recall.at(1), 0.0);
  EXPECT_EQ(report.recall.at(2), 1.0);
  EXPECT_EQ(report.flagged, 3u);
}

namespace {

auto small_model() -> train::ModelConfig {
  train::ModelConfig m;
  m.memory.dim = 5;
  m.memory.time_dim = 3;
  m.embedding.heads = 2;
  m.embedding.neighbors = 4;
  m.embedding.mem_dim = 5;
  m.embedding.node_dim = 5;
  m.embedding.time_dim = 3;
  return m;
}

}  // namespace

// Every score handed to the ranker equals a dot product of independently
// computed single-node embeddings on the observed state.
TEST(EvaluateSplit, RanksMatchBruteForce) {
  const auto model = small_model();
  const auto params = train::init_params(model, 5);
  const auto log = random_log(10, 40, 400, 7);
  const auto split = data::chronological_split(log, {0.5, 0.25, 0.25});
  auto state = train::make_state(log, model);
  train::replay(state, params, model, split.train, 37);
  train::replay(state, params, model, split.val, 37);
  std::size_t checked = 0;
  const auto report = eval::evaluate_split(
      params, model, state, split.test, config(20, 13), [&](const eval::CaseView& view) {
        const auto& s = *view.state;
        const embed::MemoryView mem(s.memory);
        const embed::EmbeddingContext ctx{params, model.embedding, s.graph, mem};
        auto embed_one = [&](graph::NodeId node) {
          ad::Tape tape(false);
          double t = view.ranked.time;
          return embed::embed_batch(tape, ctx, std::span(&node, 1), std::span(&t, 1)).value();
        };
        const auto zu = embed_one(view.ranked.user);
        std::vector<double> scores;
        for (auto v : view.ranked.candidates) {
          const auto zv = embed_one(s.item_node(v));
          double dot = 0.0;
          for (std::size_t c = 0; c < zu.size(); ++c) dot += zu[c] * zv[c];
          scores.push_back(dot);
        }
        ASSERT_EQ(scores.size(), view.scores.size());
        for (std::size_t k = 0; k < scores.size(); ++k) EXPECT_EQ(scores[k], view.scores[k]);
        std::size_t beaten = 0;
        for (std::size_t k = 1; k < scores.size(); ++k) {
          beaten += scores[k] > scores[0] ||
                    (scores[k] == scores[0] && view.ranked.candidates[k] < view.ranked.candidates[0]);
        }
        EXPECT_EQ(view.ranked.rank, beaten + 1);
        ++checked;
      });
  EXPECT_EQ(checked, split.test.size());
  EXPECT_EQ(report.cases, split.test.size());
  EXPECT_LE(report.recall.at(5), report.recall.at(10));
  EXPECT_LE(report.recall.at(10), report.recall.at(20));
}

TEST(Synthetic, Shape) {
  eval::SyntheticConfig c;
  c.events = 1000;
  const auto data = eval::generate_synthetic(c);
  EXPECT_EQ(data.log.size(), 1000u);
  EXPECT_EQ(data.log.events.back().timestamp, 1000.0);
  EXPECT_EQ(data.log.ids->users[5], "u5");
  EXPECT_EQ(eval::generate_synthetic(c).log.events, data.log.events);
  c.noise = 1.5;
  EXPECT_THROW(eval::generate_synthetic(c), std::invalid_argument);
}

TEST(Synthetic, NoiseOneIsUniformOverItems) {
  eval::SyntheticConfig c;
  c.noise = 1.0;
  c.items = 10;
  c.events = 20000;
  const auto data = eval::generate_synthetic(c);
  std::vector<double> counts(10, 0.0);
  for (const auto& e : data.log.events) counts[e.item] += 1.0;
  double chi2 = 0.0;
  for (double x : counts) chi2 += (x - 2000.0) * (x - 2000.0) / 2000.0;
  EXPECT_LT(chi2, 9.0 + 3.0 * std::sqrt(18.0));
}

TEST(Synthetic, NoiseZeroStaysInGroupThenShifts) {
  eval::SyntheticConfig c;
  c.noise = 0.0;
  c.groups = 3;
  c.events = 3000;
  const auto data = eval::generate_synthetic(c);
  for (std::size_t k = 0; k < data.log.size(); ++k) {
    const auto& e = data.log.events[k];
    const std::size_t shift = k < 1500 ? 0 : 1;
    EXPECT_EQ(data.item_group[e.item], (data.user_group[e.user] + shift) % 3) << k;
  }
}

TEST(Synthetic, PlantedRateAndAlignment) {
  const auto data = eval::generate_synthetic({});
  std::size_t planted = 0;
  std::size_t aligned = 0;
  for (std::size_t k = 0; k < data.log.size(); ++k) {
    const auto& e = data.log.events[k];
    planted += data.planted[k];
    const std::size_t shift = k < data.log.size() / 2 ? 0 : 1;
    aligned += data.item_group[e.item] == (data.user_group[e.user] + shift) % 2;
  }
  const double n = static_cast<double>(data.log.size());
  EXPECT_NEAR(planted / n, 0.8, 0.02);
  EXPECT_NEAR(aligned / n, 0.9, 0.02);
}
