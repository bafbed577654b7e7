#include "tgrec/data/events.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <istream>
#include <ostream>

#include "tgrec/errors.hpp"

namespace tgrec::data {

namespace {

auto trim(std::string_view s) -> std::string_view {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

auto split(std::string_view line, std::string_view delim)
    -> std::vector<std::string_view> {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(delim, start);
    if (pos == std::string_view::npos) {
      out.push_back(trim(line.substr(start)));
      break;
    }
    out.push_back(trim(line.substr(start, pos - start)));
    start = pos + delim.size();
  }
  return out;
}

auto parse_double(std::string_view s, double& out) -> bool {
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, out);
  return ec == std::errc() && ptr == end && std::isfinite(out);
}

auto is_auto_feature(std::string_view name) -> bool {
  if (name.size() < 2 || name[0] != 'f') return false;
  return std::all_of(name.begin() + 1, name.end(),
                     [](char c) { return c >= '0' && c <= '9'; });
}

auto location(const std::string& source, std::size_t line) -> std::string {
  return source + ":" + std::to_string(line) + ": ";
}

}  // namespace

auto IdMaps::intern_user(const std::string& raw) -> std::uint32_t {
  auto [it, inserted] =
      user_index.try_emplace(raw, static_cast<std::uint32_t>(users.size()));
  if (inserted) users.push_back(raw);
  return it->second;
}

auto IdMaps::intern_item(const std::string& raw) -> std::uint32_t {
  auto [it, inserted] =
      item_index.try_emplace(raw, static_cast<std::uint32_t>(items.size()));
  if (inserted) items.push_back(raw);
  return it->second;
}

auto EventLog::with_events(std::vector<InteractionEvent> ev,
                           std::size_t first) const -> EventLog {
  EventLog out;
  out.events = std::move(ev);
  out.num_users = num_users;
  out.num_items = num_items;
  out.feature_dim = feature_dim;
  out.first_index = first;
  out.ids = ids;
  return out;
}

auto CsvSchema::retailrocket() -> CsvSchema {
  CsvSchema s;
  s.user_column = "visitorid";
  s.item_column = "itemid";
  s.time_column = "timestamp";
  s.auto_features = false;
  s.time_scale = 1e-3;  // milliseconds
  s.filter_column = "event";
  s.filter_value = "transaction";
  return s;
}

auto CsvSchema::movielens() -> CsvSchema {
  CsvSchema s;
  s.user_column = "0";
  s.item_column = "1";
  s.time_column = "3";
  s.auto_features = false;
  s.delimiter = "::";
  s.has_header = false;
  return s;
}

auto parse_events(const std::filesystem::path& path, const CsvSchema& schema)
    -> EventLog {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open data file " + path.string());
  return parse_events(in, schema, path.string());
}

auto parse_events(std::istream& in, const CsvSchema& schema,
                  const std::string& source_name) -> EventLog {
  if (schema.delimiter.empty()) throw DataError("empty column delimiter");
  auto ids = std::make_shared<IdMaps>();
  std::vector<InteractionEvent> events;

  std::size_t user_col = 0;
  std::size_t item_col = 0;
  std::size_t time_col = 0;
  std::size_t filter_col = 0;
  std::vector<std::size_t> feature_cols;
  std::size_t expected_cols = 0;
  bool have_columns = false;

  auto resolve = [&](const std::vector<std::string_view>& header,
                     const std::string& name, std::size_t line_no) {
    if (!schema.has_header) {
      std::size_t idx = 0;
      auto [ptr, ec] = std::from_chars(name.data(), name.data() + name.size(), idx);
      if (ec != std::errc() || ptr != name.data() + name.size()) {
        throw DataError(location(source_name, line_no) + "column '" + name +
                        "' must be a 0-based index when the file has no header");
      }
      return idx;
    }
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) {
      throw DataError(location(source_name, line_no) + "missing column '" +
                      name + "' in header");
    }
    return static_cast<std::size_t>(it - header.begin());
  };

  auto setup = [&](const std::vector<std::string_view>& header,
                   std::size_t line_no) {
    user_col = resolve(header, schema.user_column, line_no);
    item_col = resolve(header, schema.item_column, line_no);
    time_col = resolve(header, schema.time_column, line_no);
    if (!schema.filter_column.empty()) {
      filter_col = resolve(header, schema.filter_column, line_no);
    }
    if (!schema.feature_columns.empty()) {
      for (const auto& f : schema.feature_columns) {
        feature_cols.push_back(resolve(header, f, line_no));
      }
    } else if (schema.auto_features && schema.has_header) {
      for (std::size_t i = 0; i < header.size(); ++i) {
        if (is_auto_feature(header[i])) feature_cols.push_back(i);
      }
    }
    expected_cols = schema.has_header ? header.size() : 0;
    std::size_t max_col = std::max({user_col, item_col, time_col});
    if (!schema.filter_column.empty()) max_col = std::max(max_col, filter_col);
    for (auto c : feature_cols) max_col = std::max(max_col, c);
    expected_cols = std::max(expected_cols, max_col + 1);
    have_columns = true;
  };

  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto view = trim(line);
    if (view.empty() || view.front() == '#') continue;
    auto fields = split(view, schema.delimiter);
    if (!have_columns) {
      if (schema.has_header) {
        setup(fields, line_no);
        continue;
      }
      setup({}, line_no);
    }
    if (fields.size() < expected_cols ||
        (schema.has_header && fields.size() != expected_cols)) {
      throw DataError(location(source_name, line_no) + "malformed row: expected " +
                      std::to_string(expected_cols) + " columns, got " +
                      std::to_string(fields.size()));
    }
    if (!schema.filter_column.empty() && fields[filter_col] != schema.filter_value) {
      continue;
    }
    InteractionEvent ev;
    double ts = 0.0;
    if (!parse_double(fields[time_col], ts)) {
      throw DataError(location(source_name, line_no) + "non-numeric timestamp '" +
                      std::string(fields[time_col]) + "'");
    }
    ev.timestamp = ts * schema.time_scale;
    if (ev.timestamp < 0.0) {
      throw DataError(location(source_name, line_no) + "negative timestamp");
    }
    if (fields[user_col].empty() || fields[item_col].empty()) {
      throw DataError(location(source_name, line_no) + "malformed row: empty id");
    }
    ev.features.reserve(feature_cols.size());
    for (auto c : feature_cols) {
      double f = 0.0;
      if (!parse_double(fields[c], f)) {
        throw DataError(location(source_name, line_no) +
                        "inconsistent feature arity: non-numeric feature '" +
                        std::string(fields[c]) + "'");
      }
      ev.features.push_back(f);
    }
    ev.user = ids->intern_user(std::string(fields[user_col]));
    ev.item = ids->intern_item(std::string(fields[item_col]));
    events.push_back(std::move(ev));
  }
  if (events.empty()) throw DataError(source_name + ": no events");

  std::stable_sort(events.begin(), events.end(),
                   [](const InteractionEvent& a, const InteractionEvent& b) {
                     return a.timestamp < b.timestamp;
                   });
  EventLog log;
  log.events = std::move(events);
  log.num_users = ids->users.size();
  log.num_items = ids->items.size();
  log.feature_dim = feature_cols.size();
  log.ids = std::move(ids);
  return log;
}

auto chronological_split(const EventLog& log, const SplitRatios& r)
    -> ChronologicalSplit {
  if (r.train <= 0 || r.val <= 0 || r.test <= 0) {
    throw DataError("split ratios must be positive");
  }
  if (std::abs(r.train + r.val + r.test - 1.0) > 1e-9) {
    throw DataError("split ratios must sum to 1");
  }
  const std::size_t n = log.size();
  const auto nd = static_cast<double>(n);
  // The epsilon absorbs representation error such as 0.8 * 10 = 7.999...
  const auto n_train = static_cast<std::size_t>(std::floor(r.train * nd + 1e-9));
  const auto n_val = static_cast<std::size_t>(std::floor(r.val * nd + 1e-9));
  if (n_train == 0 || n_val == 0 || n_train + n_val >= n) {
    throw DataError("chronological split of " + std::to_string(n) +
                    " events leaves an empty part");
  }
  auto part = [&](std::size_t begin, std::size_t end) {
    std::vector<InteractionEvent> ev(
        log.events.begin() + static_cast<std::ptrdiff_t>(begin),
        log.events.begin() + static_cast<std::ptrdiff_t>(end));
    return log.with_events(std::move(ev), log.first_index + begin);
  };
  return {part(0, n_train), part(n_train, n_train + n_val),
          part(n_train + n_val, n)};
}

auto make_batches(const EventLog& log, std::size_t batch_size)
    -> std::vector<Batch> {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
  std::vector<Batch> out;
  const std::span<const InteractionEvent> all(log.events);
  for (std::size_t start = 0, idx = 0; start < all.size(); start += batch_size, ++idx) {
    const std::size_t len = std::min(batch_size, all.size() - start);
    out.push_back(Batch{all.subspan(start, len), idx, log.first_index + start});
  }
  return out;
}

void write_events_csv(std::ostream& out, const EventLog& log) {
  out << "user_id,item_id,timestamp";
  for (std::size_t f = 0; f < log.feature_dim; ++f) out << ",f" << f;
  out << '\n';
  char buf[32];
  for (const auto& ev : log.events) {
    if (log.ids) {
      out << log.ids->users[ev.user] << ',' << log.ids->items[ev.item];
    } else {
      out << ev.user << ',' << ev.item;
    }
    std::snprintf(buf, sizeof(buf), "%.17g", ev.timestamp);
    out << ',' << buf;
    for (double f : ev.features) {
      std::snprintf(buf, sizeof(buf), "%.17g", f);
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace tgrec::data
