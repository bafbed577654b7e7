#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "tgrec/data/events.hpp"
#include "tgrec/eval/evaluation.hpp"
#include "tgrec/train/model.hpp"
#include "tgrec/train/trainer.hpp"

namespace tgrec::cli {

// Text format, one setting per line:
//
//   # comment
//   key = value
//
// Keys are dotted names from the fixed table in config.cpp; anything else is
// rejected. Values: integers, decimals, true/false, or bare strings (the rest
// of the line, trimmed). Blank lines are ignored; a key may appear once.
class RunConfig {
 public:
  using Value = std::variant<std::int64_t, double, bool, std::string>;

  RunConfig();  // all defaults

  static auto parse(std::istream& in, const std::string& source) -> RunConfig;
  static auto load(const std::filesystem::path& path) -> RunConfig;
  static auto from_json(const std::string& json_text) -> RunConfig;

  // Throws ConfigError naming the key for unknown keys or unparsable values.
  void set(const std::string& key, const std::string& text);
  [[nodiscard]] auto get(const std::string& key) const -> const Value&;
  [[nodiscard]] auto get_int(const std::string& key) const -> std::int64_t;
  [[nodiscard]] auto get_double(const std::string& key) const -> double;
  [[nodiscard]] auto get_bool(const std::string& key) const -> bool;
  [[nodiscard]] auto get_string(const std::string& key) const -> std::string;

  [[nodiscard]] static auto keys() -> std::vector<std::string>;
  // Keys whose value differs from the default.
  [[nodiscard]] auto changed_keys() const -> std::vector<std::string>;

  // Cross-key checks (ratios, positive sizes). Throws ConfigError.
  void validate() const;

  [[nodiscard]] auto to_json() const -> std::string;  // compact, sorted keys
  [[nodiscard]] auto to_text() const -> std::string;

  [[nodiscard]] auto model() const -> train::ModelConfig;
  [[nodiscard]] auto training() const -> train::TrainConfig;
  [[nodiscard]] auto evaluation() const -> eval::EvalConfig;
  [[nodiscard]] auto schema() const -> data::CsvSchema;
  [[nodiscard]] auto ratios() const -> data::SplitRatios;
  [[nodiscard]] auto synthetic() const -> eval::SyntheticConfig;

  friend auto operator==(const RunConfig&, const RunConfig&) -> bool = default;

 private:
  std::map<std::string, Value> values_;
};

}  // namespace tgrec::cli
