#pragma once

#include <exception>
#include <filesystem>
#include <iosfwd>
#include <string>

#include "tgrec/cli/config.hpp"
#include "tgrec/data/events.hpp"

namespace tgrec::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kData = 2, kNumeric = 3 };

// Maps ConfigError -> 1, DataError -> 2, NumericError -> 3; anything else is
// reported as a usage error.
auto exit_code_for(const std::exception& e) -> int;

// Runs fn, printing "error: ..." to err on failure.
template <typename Fn>
auto guarded(std::ostream& err, Fn&& fn) -> int;

// Synthetic stream or parsed file, per data.source.
auto load_events(const RunConfig& config) -> data::EventLog;

struct TrainPaths {
  std::filesystem::path checkpoint;
  std::filesystem::path stats;
  std::filesystem::path report;
};
auto default_train_paths(const RunConfig& config) -> TrainPaths;

// Each command throws on failure; wrap in guarded() for an exit code.
void cmd_train(const RunConfig& config, const TrainPaths& paths, std::ostream& log);
void cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                  const std::string& split, const std::filesystem::path& report,
                  std::ostream& log);
void cmd_ablate(const RunConfig& config, const std::filesystem::path& out_dir,
                std::ostream& log);
void cmd_synthetic(const RunConfig& config, const std::filesystem::path& output,
                   std::ostream& log);

}  // namespace tgrec::cli

#include <ostream>

namespace tgrec::cli {

template <typename Fn>
auto guarded(std::ostream& err, Fn&& fn) -> int {
  try {
    fn();
    return kOk;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e);
  }
}

}  // namespace tgrec::cli
