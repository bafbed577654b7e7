#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace tgrec::data {

// One timestamped user -> item interaction.
struct InteractionEvent {
  std::uint32_t user = 0;
  std::uint32_t item = 0;
  double timestamp = 0.0;
  std::vector<double> features;

  friend auto operator==(const InteractionEvent&, const InteractionEvent&)
      -> bool = default;
};

// Raw <-> dense id maps. Dense ids follow first appearance in the file.
struct IdMaps {
  std::vector<std::string> users;  // dense -> raw
  std::vector<std::string> items;
  std::unordered_map<std::string, std::uint32_t> user_index;  // raw -> dense
  std::unordered_map<std::string, std::uint32_t> item_index;

  auto intern_user(const std::string& raw) -> std::uint32_t;
  auto intern_item(const std::string& raw) -> std::uint32_t;
};

// A time-ordered stream of events. Splits of one parsed log share its id maps
// and record where they start in the parent via `first_index`.
struct EventLog {
  std::vector<InteractionEvent> events;
  std::size_t num_users = 0;
  std::size_t num_items = 0;
  std::size_t feature_dim = 0;
  std::size_t first_index = 0;
  std::shared_ptr<const IdMaps> ids;

  [[nodiscard]] auto size() const -> std::size_t { return events.size(); }
  [[nodiscard]] auto empty() const -> bool { return events.empty(); }
  [[nodiscard]] auto num_nodes() const -> std::size_t {
    return num_users + num_items;
  }
  // Same id space and feature width, different events.
  [[nodiscard]] auto with_events(std::vector<InteractionEvent> ev,
                                 std::size_t first) const -> EventLog;
};

// Column mapping for delimited text input.
struct CsvSchema {
  std::string user_column = "user_id";
  std::string item_column = "item_id";
  std::string time_column = "timestamp";
  // Names of edge-feature columns. Empty with auto_features=true picks up
  // every column named f<digits>, in header order.
  std::vector<std::string> feature_columns;
  bool auto_features = true;
  std::string delimiter = ",";
  bool has_header = true;
  // Timestamps are multiplied by this to obtain seconds.
  double time_scale = 1.0;
  // Keep only rows where filter_column == filter_value (when set).
  std::string filter_column;
  std::string filter_value;

  // Presets for the public dataset shapes.
  static auto retailrocket() -> CsvSchema;  // events.csv, transactions only
  static auto movielens() -> CsvSchema;     // ratings.dat, "::"-separated
};

// Lines starting with '#' are treated as comments.
auto parse_events(const std::filesystem::path& path, const CsvSchema& schema)
    -> EventLog;
auto parse_events(std::istream& in, const CsvSchema& schema,
                  const std::string& source_name) -> EventLog;

struct SplitRatios {
  double train = 0.8;
  double val = 0.1;
  double test = 0.1;
};

struct ChronologicalSplit {
  EventLog train;
  EventLog val;
  EventLog test;
};

// train = first floor(r_train * N) events, val = next floor(r_val * N),
// test = the rest. Throws DataError if any part would be empty.
auto chronological_split(const EventLog& log, const SplitRatios& ratios)
    -> ChronologicalSplit;

struct Batch {
  std::span<const InteractionEvent> events;
  std::size_t index = 0;
  std::size_t first_event = 0;  // global index of events[0]
};

auto make_batches(const EventLog& log, std::size_t batch_size)
    -> std::vector<Batch>;

void write_events_csv(std::ostream& out, const EventLog& log);

}  // namespace tgrec::data
