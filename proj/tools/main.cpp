#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "tgrec/cli/commands.hpp"
#include "tgrec/errors.hpp"

using tgrec::cli::RunConfig;

namespace {

// Applies "--key value" and "--key=value" pairs left over after CLI11 parsing.
void apply_overrides(RunConfig& config, const std::vector<std::string>& extras) {
  for (std::size_t i = 0; i < extras.size(); ++i) {
    const std::string& arg = extras[i];
    if (arg.rfind("--", 0) != 0) throw tgrec::ConfigError("unexpected argument '" + arg + "'");
    std::string key = arg.substr(2);
    std::string value;
    if (const auto eq = key.find('='); eq != std::string::npos) {
      value = key.substr(eq + 1);
      key.resize(eq);
    } else {
      if (i + 1 >= extras.size()) throw tgrec::ConfigError("missing value for --" + key);
      value = extras[++i];
    }
    config.set(key, value);
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Temporal graph recommender: train, evaluate, ablate, synthetic"};
  app.require_subcommand(1);
  app.footer("Any config key can be overridden with --<key> <value>, e.g. --embedding.variant sum");

  std::string config_path;
  std::string checkpoint;
  std::string split;
  std::string report;
  std::string stats;
  std::string output;

  auto* train = app.add_subcommand("train", "Train a model; writes checkpoint.bin, stats.jsonl, report.json");
  auto* evaluate = app.add_subcommand("evaluate", "Score a checkpoint on a split; writes report.json");
  auto* ablate = app.add_subcommand("ablate", "Run the {gru,rnn} x {attn,sum,gcn} grid; writes ablation.json");
  auto* synthetic = app.add_subcommand("synthetic", "Write the planted-preference synthetic stream as CSV");
  for (auto* sub : {train, evaluate, ablate, synthetic}) {
    sub->add_option("-c,--config", config_path, "Config file (key = value lines)");
    sub->allow_extras();
  }
  train->add_option("--checkpoint", checkpoint, "Checkpoint path [<output_dir>/checkpoint.bin]");
  train->add_option("--stats", stats, "Per-epoch stats path [<output_dir>/stats.jsonl]");
  train->add_option("--report", report, "Test report path [<output_dir>/report.json]");
  evaluate->add_option("--checkpoint", checkpoint, "Checkpoint to evaluate")->required();
  evaluate->add_option("--split", split, "val or test [eval.split]");
  evaluate->add_option("--report", report, "Report path [<output_dir>/report.json]");
  ablate->add_option("-o,--output", output, "Output directory [run.output_dir]");
  synthetic->add_option("-o,--output", output, "CSV path [<output_dir>/synthetic.csv]");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : tgrec::cli::kUsage;
  }

  return tgrec::cli::guarded(std::cerr, [&] {
    RunConfig config = config_path.empty() ? RunConfig() : RunConfig::load(config_path);
    const std::filesystem::path dir = [&] {
      for (auto* sub : {train, evaluate, ablate, synthetic}) {
        if (*sub) apply_overrides(config, sub->remaining());
      }
      return std::filesystem::path(config.get_string("run.output_dir"));
    }();
    config.validate();
    if (*train) {
      auto paths = tgrec::cli::default_train_paths(config);
      if (!checkpoint.empty()) paths.checkpoint = checkpoint;
      if (!stats.empty()) paths.stats = stats;
      if (!report.empty()) paths.report = report;
      tgrec::cli::cmd_train(config, paths, std::cerr);
    } else if (*evaluate) {
      tgrec::cli::cmd_evaluate(config, checkpoint,
                               split.empty() ? config.get_string("eval.split") : split,
                               report.empty() ? dir / "report.json" : std::filesystem::path(report),
                               std::cerr);
    } else if (*ablate) {
      tgrec::cli::cmd_ablate(config, output.empty() ? dir : std::filesystem::path(output),
                             std::cerr);
    } else {
      tgrec::cli::cmd_synthetic(config,
                                output.empty() ? dir / "synthetic.csv" : std::filesystem::path(output),
                                std::cerr);
    }
  });
}
