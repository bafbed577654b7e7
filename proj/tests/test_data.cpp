#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <sstream>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/data/events.hpp"
#include "tgrec/errors.hpp"

using namespace tgrec;
using data::CsvSchema;
using data::EventLog;

namespace {

auto parse(const std::string& text, const CsvSchema& schema = {}) -> EventLog {
  std::istringstream in(text);
  return data::parse_events(in, schema, "mem.csv");
}

auto error_of(const std::string& text, const CsvSchema& schema = {}) -> std::string {
  try {
    parse(text, schema);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

auto log_of_size(std::size_t n, bool equal_times = false) -> EventLog {
  EventLog log;
  log.num_users = 3;
  log.num_items = 5;
  for (std::size_t i = 0; i < n; ++i) {
    log.events.push_back({static_cast<std::uint32_t>(i % 3), static_cast<std::uint32_t>(i % 5),
                          equal_times ? 7.0 : static_cast<double>(i), {}});
  }
  return log;
}

}  // namespace

TEST(ParseEvents, ReindexesInFirstAppearanceOrder) {
  const auto log = parse("user_id,item_id,timestamp\nA,x,1\nB,y,2\nA,x,3\n");
  EXPECT_EQ(log.num_users, 2u);
  EXPECT_EQ(log.num_items, 2u);
  ASSERT_EQ(log.size(), 3u);
  EXPECT_EQ(log.events[0].user, 0u);
  EXPECT_EQ(log.events[1].user, 1u);
  EXPECT_EQ(log.events[2].item, 0u);
  EXPECT_EQ(log.ids->users[1], "B");
  EXPECT_EQ(log.ids->item_index.at("y"), 1u);
}

TEST(ParseEvents, EmptyFileHasNoEvents) {
  EXPECT_NE(error_of("").find("no events"), std::string::npos);
  EXPECT_NE(error_of("user_id,item_id,timestamp\n").find("no events"), std::string::npos);
}

TEST(ParseEvents, SortsByTimestampStably) {
  const auto log = parse("user_id,item_id,timestamp\na,p,5\nb,q,1\nc,r,3\nd,s,3\n");
  std::vector<double> times;
  for (const auto& e : log.events) times.push_back(e.timestamp);
  std::vector<double> expected = {5, 1, 3, 3};
  std::stable_sort(expected.begin(), expected.end());
  EXPECT_EQ(times, expected);
  // The tie at t=3 keeps file order: c before d.
  EXPECT_EQ(log.ids->users[log.events[1].user], "c");
  EXPECT_EQ(log.ids->users[log.events[2].user], "d");
}

TEST(ParseEvents, ErrorsCarryLineNumbers) {
  EXPECT_NE(error_of("user_id,item_id,timestamp\na,b,1\na,b\n").find("mem.csv:3:"),
            std::string::npos);
  EXPECT_NE(error_of("user_id,item_id,timestamp\na,b,soon\n").find("non-numeric timestamp"),
            std::string::npos);
  EXPECT_NE(error_of("user_id,item_id,timestamp\na,b,-4\n").find("negative"), std::string::npos);
  EXPECT_NE(error_of("user,item_id,timestamp\na,b,1\n").find("user_id"), std::string::npos);
}

TEST(ParseEvents, FeatureColumnsAndArity) {
  const auto log = parse("user_id,item_id,timestamp,f0,f1\na,b,1,0.5,2\nc,d,2,1,-1\n");
  EXPECT_EQ(log.feature_dim, 2u);
  EXPECT_EQ(log.events[1].features, (std::vector<double>{1.0, -1.0}));
  EXPECT_NE(error_of("user_id,item_id,timestamp,f0\na,b,1,0.5\nc,d,2\n").find("mem.csv:3:"),
            std::string::npos);
}

TEST(ParseEvents, CommentsAndPresets) {
  const auto log = parse("# synthetic noise=0.2\nuser_id,item_id,timestamp\n\na,b,1\n");
  EXPECT_EQ(log.size(), 1u);

  const auto rr = parse(
      "timestamp,visitorid,event,itemid,transactionid\n"
      "2000,7,view,100,\n1000,7,transaction,100,1\n3000,8,transaction,101,2\n",
      CsvSchema::retailrocket());
  ASSERT_EQ(rr.size(), 2u);
  EXPECT_DOUBLE_EQ(rr.events[0].timestamp, 1.0);
  EXPECT_EQ(rr.num_users, 2u);

  const auto ml = parse("1::1193::5::978300760\n2::661::3::978300000\n", CsvSchema::movielens());
  ASSERT_EQ(ml.size(), 2u);
  EXPECT_EQ(ml.ids->users[ml.events[0].user], "2");
}

TEST(ParseEvents, WriteThenParseRoundTrips) {
  const auto log = parse("user_id,item_id,timestamp,f0\nu1,i1,0.1,0.25\nu2,i1,2.5,-3\n");
  std::stringstream out;
  data::write_events_csv(out, log);
  const auto back = data::parse_events(out, CsvSchema{}, "round");
  EXPECT_EQ(back.events, log.events);
  EXPECT_EQ(back.ids->users, log.ids->users);
}

TEST(ParseEvents, IdMapsAreBijections) {
  ad::Rng rng(2);
  std::ostringstream text;
  text << "user_id,item_id,timestamp\n";
  for (int i = 0; i < 500; ++i) {
    text << "u" << ad::uniform_index(rng, 40) << ",i" << ad::uniform_index(rng, 70) << ","
         << ad::uniform_index(rng, 1000) << "\n";
  }
  const auto log = parse(text.str());
  ASSERT_EQ(log.ids->users.size(), log.num_users);
  for (std::size_t u = 0; u < log.num_users; ++u) {
    EXPECT_EQ(log.ids->user_index.at(log.ids->users[u]), u);
  }
  for (std::size_t i = 0; i < log.num_items; ++i) {
    EXPECT_EQ(log.ids->item_index.at(log.ids->items[i]), i);
  }
  for (std::size_t k = 1; k < log.size(); ++k) {
    EXPECT_LE(log.events[k - 1].timestamp, log.events[k].timestamp);
  }
}

TEST(ChronologicalSplit, Sizes) {
  auto sizes = [](std::size_t n) {
    const auto s = data::chronological_split(log_of_size(n), {});
    return std::vector<std::size_t>{s.train.size(), s.val.size(), s.test.size()};
  };
  EXPECT_EQ(sizes(10), (std::vector<std::size_t>{8, 1, 1}));
  EXPECT_EQ(sizes(1003), (std::vector<std::size_t>{802, 100, 101}));
  const auto ties = data::chronological_split(log_of_size(100, true), {});
  EXPECT_EQ(ties.train.size(), 80u);
  EXPECT_EQ(ties.val.events.front().user, log_of_size(100, true).events[80].user);
}

// Property: floor arithmetic and concatenation for every N in a range.
TEST(ChronologicalSplit, ConcatenationReproducesLog) {
  for (std::size_t n = 10; n < 400; n += 7) {
    const auto log = log_of_size(n);
    const auto s = data::chronological_split(log, {});
    EXPECT_EQ(s.train.size(), static_cast<std::size_t>(0.8 * static_cast<double>(n) + 1e-9));
    EXPECT_EQ(s.val.size(), static_cast<std::size_t>(0.1 * static_cast<double>(n) + 1e-9));
    std::vector<data::InteractionEvent> joined = s.train.events;
    joined.insert(joined.end(), s.val.events.begin(), s.val.events.end());
    joined.insert(joined.end(), s.test.events.begin(), s.test.events.end());
    EXPECT_EQ(joined, log.events);
    EXPECT_EQ(s.val.first_index, s.train.size());
    EXPECT_EQ(s.test.first_index, s.train.size() + s.val.size());
    EXPECT_EQ(s.test.num_items, log.num_items);
  }
}

TEST(ChronologicalSplit, RejectsEmptyPartsAndBadRatios) {
  EXPECT_THROW(data::chronological_split(log_of_size(9), {}), DataError);
  EXPECT_THROW(data::chronological_split(log_of_size(100), {0.8, 0.1, 0.2}), DataError);
  EXPECT_THROW(data::chronological_split(log_of_size(100), {0.9, 0.1, 0.0}), DataError);
}

TEST(MakeBatches, Partition) {
  auto sizes = [](std::size_t n, std::size_t b) {
    std::vector<std::size_t> out;
    for (const auto& batch : data::make_batches(log_of_size(n), b)) out.push_back(batch.events.size());
    return out;
  };
  EXPECT_EQ(sizes(2500, 1000), (std::vector<std::size_t>{1000, 1000, 500}));
  EXPECT_EQ(sizes(1000, 1000), (std::vector<std::size_t>{1000}));
  EXPECT_TRUE(sizes(0, 1000).empty());
  EXPECT_THROW(data::make_batches(log_of_size(3), 0), std::invalid_argument);

  const auto log = log_of_size(37);
  std::vector<data::InteractionEvent> joined;
  std::size_t index = 0;
  for (const auto& b : data::make_batches(log, 5)) {
    EXPECT_EQ(b.index, index++);
    EXPECT_EQ(b.first_event, joined.size());
    joined.insert(joined.end(), b.events.begin(), b.events.end());
  }
  EXPECT_EQ(joined, log.events);
}
