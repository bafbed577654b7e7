#include "tgrec/cli/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "tgrec/errors.hpp"

namespace tgrec::cli {

namespace {

enum class Kind { kInt, kFloat, kBool, kString, kChoice };

struct Entry {
  const char* key;
  Kind kind;
  RunConfig::Value fallback;
  std::vector<std::string> choices = {};
  std::int64_t min_int = 1;
};

auto table() -> const std::vector<Entry>& {
  using S = std::string;
  static const std::vector<Entry> entries = {
      {"data.source", Kind::kChoice, S("file"), {"file", "synthetic"}},
      {"data.path", Kind::kString, S("events.csv")},
      {"data.format", Kind::kChoice, S("csv"), {"csv", "retailrocket", "movielens"}},
      {"data.user_column", Kind::kString, S("user_id")},
      {"data.item_column", Kind::kString, S("item_id")},
      {"data.time_column", Kind::kString, S("timestamp")},
      {"data.delimiter", Kind::kString, S(",")},
      {"data.has_header", Kind::kBool, true},
      {"data.time_scale", Kind::kFloat, 1.0},
      {"data.filter_column", Kind::kString, S("")},
      {"data.filter_value", Kind::kString, S("")},
      {"split.train", Kind::kFloat, 0.8},
      {"split.val", Kind::kFloat, 0.1},
      {"split.test", Kind::kFloat, 0.1},
      {"train.batch_size", Kind::kInt, std::int64_t{1000}},
      {"train.epochs", Kind::kInt, std::int64_t{10}, {}, 0},
      {"train.lr", Kind::kFloat, 1e-4},
      {"train.n_neg", Kind::kInt, std::int64_t{1}},
      {"train.early_stopping", Kind::kBool, false},
      {"train.patience", Kind::kInt, std::int64_t{3}},
      {"model.d_mem", Kind::kInt, std::int64_t{31}},
      {"model.d_node", Kind::kInt, std::int64_t{31}},
      {"model.d_time", Kind::kInt, std::int64_t{100}},
      {"model.init", Kind::kChoice, S("glorot"), {"glorot", "zero"}},
      {"memory.updater", Kind::kChoice, S("gru"), {"gru", "rnn"}},
      {"memory.time_encoding", Kind::kChoice, S("encoded"), {"encoded", "raw"}},
      {"memory.counterpart", Kind::kChoice, S("application"), {"application", "creation"}},
      {"embedding.variant", Kind::kChoice, S("attn"), {"attn", "sum", "gcn"}},
      {"embedding.heads", Kind::kInt, std::int64_t{2}},
      {"embedding.layers", Kind::kInt, std::int64_t{1}},
      {"embedding.neighbors", Kind::kInt, std::int64_t{10}},
      {"embedding.sampling", Kind::kChoice, S("recent"), {"recent", "uniform"}},
      {"eval.n_neg", Kind::kInt, std::int64_t{100}},
      {"eval.chunk_size", Kind::kInt, std::int64_t{0}, {}, 0},
      {"eval.negatives", Kind::kChoice, S("global"), {"global", "batch"}},
      {"eval.split", Kind::kChoice, S("test"), {"test", "val"}},
      {"eval.cases_per_pass", Kind::kInt, std::int64_t{32}},
      {"run.seed", Kind::kInt, std::int64_t{0}, {}, 0},
      {"run.output_dir", Kind::kString, S("out")},
      {"run.deterministic", Kind::kBool, true},
      {"run.parallel", Kind::kBool, false},
      {"run.baseline", Kind::kBool, true},
      {"synthetic.groups", Kind::kInt, std::int64_t{2}},
      {"synthetic.users", Kind::kInt, std::int64_t{200}},
      {"synthetic.items", Kind::kInt, std::int64_t{200}},
      {"synthetic.events", Kind::kInt, std::int64_t{20000}},
      {"synthetic.noise", Kind::kFloat, 0.2},
  };
  return entries;
}

auto find_entry(const std::string& key) -> const Entry& {
  for (const auto& e : table()) {
    if (key == e.key) return e;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

auto trim(std::string_view s) -> std::string {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

auto parse_value(const Entry& e, const std::string& text) -> RunConfig::Value {
  auto bad = [&](const std::string& what) -> ConfigError {
    return ConfigError("config key '" + std::string(e.key) + "': " + what + " (got '" +
                       text + "')");
  };
  const char* first = text.data();
  const char* last = text.data() + text.size();
  switch (e.kind) {
    case Kind::kInt: {
      std::int64_t v = 0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last) throw bad("expected an integer");
      if (v < e.min_int) throw bad("must be >= " + std::to_string(e.min_int));
      return v;
    }
    case Kind::kFloat: {
      double v = 0.0;
      const auto [ptr, ec] = std::from_chars(first, last, v);
      if (ec != std::errc() || ptr != last || !std::isfinite(v)) throw bad("expected a number");
      return v;
    }
    case Kind::kBool:
      if (text == "true") return true;
      if (text == "false") return false;
      throw bad("expected true or false");
    case Kind::kString:
      return text;
    case Kind::kChoice: {
      if (std::find(e.choices.begin(), e.choices.end(), text) == e.choices.end()) {
        std::string list;
        for (const auto& c : e.choices) list += (list.empty() ? "" : "|") + c;
        throw bad("expected one of " + list);
      }
      return text;
    }
  }
  throw bad("unsupported kind");
}

auto format_value(const RunConfig::Value& v) -> std::string {
  if (const auto* i = std::get_if<std::int64_t>(&v)) return std::to_string(*i);
  if (const auto* d = std::get_if<double>(&v)) {
    char buf[64];
    const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, *d);
    return std::string(buf, ptr);
  }
  if (const auto* b = std::get_if<bool>(&v)) return *b ? "true" : "false";
  return std::get<std::string>(v);
}

}  // namespace

RunConfig::RunConfig() {
  for (const auto& e : table()) values_.emplace(e.key, e.fallback);
}

auto RunConfig::parse(std::istream& in, const std::string& source) -> RunConfig {
  RunConfig cfg;
  std::map<std::string, std::size_t> seen;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = trim(line);
    if (body.empty() || body.front() == '#') continue;
    const auto eq = body.find('=');
    const std::string where = source + ":" + std::to_string(line_no) + ": ";
    if (eq == std::string::npos) throw ConfigError(where + "expected 'key = value'");
    const std::string key = trim(std::string_view(body).substr(0, eq));
    const std::string value = trim(std::string_view(body).substr(eq + 1));
    if (const auto it = seen.find(key); it != seen.end()) {
      throw ConfigError(where + "key '" + key + "' already set on line " +
                        std::to_string(it->second));
    }
    seen.emplace(key, line_no);
    try {
      cfg.set(key, value);
    } catch (const ConfigError& e) {
      throw ConfigError(where + e.what());
    }
  }
  return cfg;
}

auto RunConfig::load(const std::filesystem::path& path) -> RunConfig {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  return parse(in, path.string());
}

auto RunConfig::from_json(const std::string& json_text) -> RunConfig {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(json_text);
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config echo is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config echo must be a JSON object");
  RunConfig cfg;
  for (const auto& [key, value] : j.items()) {
    const Entry& e = find_entry(key);
    switch (e.kind) {
      case Kind::kInt:
        if (!value.is_number_integer()) throw ConfigError("config key '" + key + "' must be an integer");
        cfg.values_[key] = value.get<std::int64_t>();
        break;
      case Kind::kFloat:
        if (!value.is_number()) throw ConfigError("config key '" + key + "' must be a number");
        cfg.values_[key] = value.get<double>();
        break;
      case Kind::kBool:
        if (!value.is_boolean()) throw ConfigError("config key '" + key + "' must be a boolean");
        cfg.values_[key] = value.get<bool>();
        break;
      default:
        if (!value.is_string()) throw ConfigError("config key '" + key + "' must be a string");
        cfg.set(key, value.get<std::string>());
    }
  }
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& text) {
  values_[key] = parse_value(find_entry(key), text);
}

auto RunConfig::get(const std::string& key) const -> const Value& {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

auto RunConfig::get_int(const std::string& key) const -> std::int64_t {
  return std::get<std::int64_t>(get(key));
}
auto RunConfig::get_double(const std::string& key) const -> double {
  return std::get<double>(get(key));
}
auto RunConfig::get_bool(const std::string& key) const -> bool {
  return std::get<bool>(get(key));
}
auto RunConfig::get_string(const std::string& key) const -> std::string {
  return std::get<std::string>(get(key));
}

auto RunConfig::keys() -> std::vector<std::string> {
  std::vector<std::string> out;
  for (const auto& e : table()) out.emplace_back(e.key);
  return out;
}

auto RunConfig::changed_keys() const -> std::vector<std::string> {
  std::vector<std::string> out;
  for (const auto& e : table()) {
    if (values_.at(e.key) != e.fallback) out.emplace_back(e.key);
  }
  return out;
}

void RunConfig::validate() const {
  const double r[3] = {get_double("split.train"), get_double("split.val"),
                       get_double("split.test")};
  for (double x : r) {
    if (!(x > 0.0)) throw ConfigError("split ratios must be positive");
  }
  if (std::abs(r[0] + r[1] + r[2] - 1.0) > 1e-9) {
    throw ConfigError("split ratios must sum to 1");
  }
  if (!(get_double("train.lr") > 0.0)) throw ConfigError("train.lr must be positive");
  if (!(get_double("data.time_scale") > 0.0)) {
    throw ConfigError("data.time_scale must be positive");
  }
  const double noise = get_double("synthetic.noise");
  if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("synthetic.noise must lie in [0, 1]");
  const auto groups = get_int("synthetic.groups");
  if (get_int("synthetic.users") < groups || get_int("synthetic.items") < groups) {
    throw ConfigError("synthetic.users and synthetic.items must be >= synthetic.groups");
  }
  if (get_string("data.source") == "file" && get_string("data.path").empty()) {
    throw ConfigError("data.path is empty");
  }
}

auto RunConfig::to_json() const -> std::string {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [key, value] : values_) {
    std::visit([&](const auto& v) { j[key] = v; }, value);
  }
  return j.dump();
}

auto RunConfig::to_text() const -> std::string {
  std::ostringstream out;
  for (const auto& e : table()) out << e.key << " = " << format_value(values_.at(e.key)) << '\n';
  return out.str();
}

auto RunConfig::model() const -> train::ModelConfig {
  train::ModelConfig m;
  const auto dim = [&](const char* key) { return static_cast<std::size_t>(get_int(key)); };
  m.memory.dim = m.embedding.mem_dim = dim("model.d_mem");
  m.memory.time_dim = m.embedding.time_dim = dim("model.d_time");
  m.embedding.node_dim = dim("model.d_node");
  m.memory.updater = get_string("memory.updater") == "gru" ? memory::UpdaterKind::kGru
                                                           : memory::UpdaterKind::kRnn;
  m.memory.time_mode = get_string("memory.time_encoding") == "encoded"
                           ? memory::TimeInMessage::kEncoded
                           : memory::TimeInMessage::kRaw;
  m.memory.counterpart = get_string("memory.counterpart") == "application"
                             ? memory::CounterpartRead::kAtApplication
                             : memory::CounterpartRead::kAtCreation;
  m.embedding.variant = embed::parse_variant(get_string("embedding.variant"));
  m.embedding.heads = dim("embedding.heads");
  m.embedding.layers = dim("embedding.layers");
  m.embedding.neighbors = dim("embedding.neighbors");
  m.embedding.sampling = get_string("embedding.sampling") == "recent"
                             ? graph::SamplingPolicy::kMostRecent
                             : graph::SamplingPolicy::kUniform;
  m.embedding.sampling_seed = static_cast<std::uint64_t>(get_int("run.seed"));
  m.init = get_string("model.init") == "zero" ? train::InitScheme::kZero
                                              : train::InitScheme::kGlorot;
  return m;
}

auto RunConfig::evaluation() const -> eval::EvalConfig {
  eval::EvalConfig e;
  e.n_neg = static_cast<std::size_t>(get_int("eval.n_neg"));
  e.chunk_size = static_cast<std::size_t>(get_int("eval.chunk_size"));
  e.batch_negatives = get_string("eval.negatives") == "batch";
  e.seed = static_cast<std::uint64_t>(get_int("run.seed")) + 1;
  e.cases_per_pass = static_cast<std::size_t>(get_int("eval.cases_per_pass"));
  return e;
}

auto RunConfig::training() const -> train::TrainConfig {
  train::TrainConfig t;
  t.batch_size = static_cast<std::size_t>(get_int("train.batch_size"));
  t.epochs = static_cast<std::size_t>(get_int("train.epochs"));
  t.adam.lr = get_double("train.lr");
  t.n_neg = static_cast<std::size_t>(get_int("train.n_neg"));
  t.seed = static_cast<std::uint64_t>(get_int("run.seed"));
  t.early_stopping = get_bool("train.early_stopping");
  t.patience = static_cast<std::size_t>(get_int("train.patience"));
  t.eval = evaluation();
  return t;
}

auto RunConfig::schema() const -> data::CsvSchema {
  const std::string format = get_string("data.format");
  if (format == "retailrocket") return data::CsvSchema::retailrocket();
  if (format == "movielens") return data::CsvSchema::movielens();
  data::CsvSchema s;
  s.user_column = get_string("data.user_column");
  s.item_column = get_string("data.item_column");
  s.time_column = get_string("data.time_column");
  s.delimiter = get_string("data.delimiter");
  if (s.delimiter == "\\t") s.delimiter = "\t";
  s.has_header = get_bool("data.has_header");
  s.time_scale = get_double("data.time_scale");
  s.filter_column = get_string("data.filter_column");
  s.filter_value = get_string("data.filter_value");
  return s;
}

auto RunConfig::ratios() const -> data::SplitRatios {
  return {get_double("split.train"), get_double("split.val"), get_double("split.test")};
}

auto RunConfig::synthetic() const -> eval::SyntheticConfig {
  eval::SyntheticConfig s;
  s.groups = static_cast<std::size_t>(get_int("synthetic.groups"));
  s.users = static_cast<std::size_t>(get_int("synthetic.users"));
  s.items = static_cast<std::size_t>(get_int("synthetic.items"));
  s.events = static_cast<std::size_t>(get_int("synthetic.events"));
  s.noise = get_double("synthetic.noise");
  s.seed = static_cast<std::uint64_t>(get_int("run.seed"));
  return s;
}

}  // namespace tgrec::cli
