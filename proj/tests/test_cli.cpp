#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "tgrec/cli/commands.hpp"
#include "tgrec/cli/config.hpp"
#include "tgrec/errors.hpp"

using namespace tgrec;
using cli::RunConfig;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

auto parse(const std::string& text) -> RunConfig {
  std::istringstream in(text);
  return RunConfig::parse(in, "test.cfg");
}

auto slurp(const fs::path& p) -> std::string {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

auto scratch(const std::string& name) -> fs::path {
  const auto dir = fs::temp_directory_path() / ("tgrec_cli_test_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

// A synthetic run small enough for unit tests.
auto tiny(const fs::path& dir) -> RunConfig {
  return parse(
      "data.source = synthetic\n"
      "synthetic.users = 20\nsynthetic.items = 20\nsynthetic.events = 400\n"
      "train.batch_size = 50\ntrain.epochs = 2\ntrain.lr = 0.001\n"
      "model.d_mem = 4\nmodel.d_node = 4\nmodel.d_time = 3\n"
      "embedding.neighbors = 3\neval.n_neg = 10\n"
      "run.output_dir = " + dir.string() + "\n");
}

auto run_cli(const std::string& args) -> int {
  const std::string cmd = std::string(TGREC_CLI) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

}  // namespace

TEST(Config, DefaultsAndParsing) {
  const RunConfig defaults;
  EXPECT_EQ(defaults.get_int("train.batch_size"), 1000);
  EXPECT_EQ(defaults.get_double("train.lr"), 1e-4);
  EXPECT_EQ(defaults.get_int("model.d_mem"), 31);
  EXPECT_EQ(defaults.get_int("model.d_time"), 100);
  EXPECT_EQ(defaults.get_string("embedding.variant"), "attn");
  EXPECT_TRUE(defaults.changed_keys().empty());

  const auto c = parse("# comment\n\nembedding.variant = sum\ntrain.lr = 0.01  \n");
  EXPECT_EQ(c.get_string("embedding.variant"), "sum");
  EXPECT_EQ(c.get_double("train.lr"), 0.01);
  EXPECT_EQ(c.changed_keys().size(), 2u);
  EXPECT_EQ(c.model().embedding.variant, embed::Variant::kSum);
}

TEST(Config, RejectsUnknownDuplicateAndBadValues) {
  auto message = [](const std::string& text) {
    try {
      parse(text);
    } catch (const ConfigError& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_NE(message("train.lrr = 1\n").find("train.lrr"), std::string::npos);
  EXPECT_NE(message("train.lr = 1\ntrain.lr = 2\n").find("test.cfg:2:"), std::string::npos);
  EXPECT_NE(message("train.epochs = many\n").find("train.epochs"), std::string::npos);
  EXPECT_NE(message("no equals sign\n").find("test.cfg:1:"), std::string::npos);
  EXPECT_THROW(parse("embedding.variant = mean\n").model(), ConfigError);
  EXPECT_THROW(parse("split.train = 0.9\n").validate(), ConfigError);
  EXPECT_THROW(RunConfig().set("train.batch_size", "0"), ConfigError);
}

// Property: text and JSON serializations both round-trip.
TEST(Config, RoundTrips) {
  auto c = parse("embedding.variant = gcn\nmemory.updater = rnn\ntrain.lr = 0.003\nrun.seed = 9\n"
                 "data.delimiter = ;\n");
  EXPECT_EQ(parse(c.to_text()), c);
  EXPECT_EQ(RunConfig::from_json(c.to_json()), c);
  const auto j = json::parse(c.to_json());
  EXPECT_EQ(j.at("memory.updater"), "rnn");
  EXPECT_EQ(j.at("run.seed"), 9);
}

TEST(Config, OverridesViaSet) {
  RunConfig c;
  c.set("embedding.variant", "gcn");
  c.set("train.early_stopping", "true");
  EXPECT_EQ(c.training().early_stopping, true);
  EXPECT_THROW(c.set("nope", "1"), ConfigError);
}

TEST(ExitCodes, MapExceptionTypes) {
  EXPECT_EQ(cli::exit_code_for(ConfigError("x")), 1);
  EXPECT_EQ(cli::exit_code_for(DataError("x")), 2);
  EXPECT_EQ(cli::exit_code_for(NumericError("x")), 3);
  EXPECT_EQ(cli::exit_code_for(std::runtime_error("x")), 1);
  std::ostringstream err;
  EXPECT_EQ(cli::guarded(err, [] { throw DataError("cannot open data file a.csv"); }), 2);
  EXPECT_EQ(err.str(), "error: cannot open data file a.csv\n");
}

TEST(Commands, SyntheticFileIsDeterministic) {
  const auto dir = scratch("synthetic");
  RunConfig c;
  c.set("data.source", "synthetic");
  std::ostringstream log;
  cli::cmd_synthetic(c, dir / "a.csv", log);
  cli::cmd_synthetic(c, dir / "b.csv", log);
  const auto a = slurp(dir / "a.csv");
  EXPECT_EQ(a, slurp(dir / "b.csv"));
  EXPECT_EQ(a.rfind("# synthetic groups=2 users=200 items=200 events=20000 noise=0.2 seed=0", 0), 0u);
  std::istringstream in(a);
  const auto parsed = data::parse_events(in, {}, "a.csv");
  EXPECT_EQ(parsed.size(), 20000u);
}

TEST(Commands, TrainIsByteIdenticalAndEvaluateAgrees) {
  const auto dir = scratch("train");
  const auto c = tiny(dir);
  std::ostringstream log;
  cli::TrainPaths a{dir / "a.bin", dir / "a.jsonl", dir / "a.json"};
  cli::TrainPaths b{dir / "b.bin", dir / "b.jsonl", dir / "b.json"};
  cli::cmd_train(c, a, log);
  cli::cmd_train(c, b, log);
  EXPECT_EQ(slurp(a.checkpoint), slurp(b.checkpoint));
  EXPECT_EQ(slurp(a.stats), slurp(b.stats));
  EXPECT_EQ(slurp(a.report), slurp(b.report));

  std::ifstream stats(a.stats);
  std::string line;
  std::getline(stats, line);
  EXPECT_TRUE(json::parse(line).contains("config"));
  std::size_t epochs = 0;
  while (std::getline(stats, line)) {
    const auto j = json::parse(line);
    EXPECT_EQ(j.at("epoch"), ++epochs);
    EXPECT_TRUE(std::isfinite(j.at("train_loss").get<double>()));
  }
  EXPECT_EQ(epochs, 2u);

  const auto report = json::parse(slurp(a.report));
  EXPECT_LE(report.at("recall@5").get<double>(), report.at("recall@10").get<double>());
  EXPECT_LE(report.at("recall@10").get<double>(), report.at("recall@20").get<double>());

  // Re-scoring the checkpoint reproduces the trained test metrics.
  cli::cmd_evaluate(c, a.checkpoint, "test", dir / "eval.json", log);
  const auto again = json::parse(slurp(dir / "eval.json"));
  for (const char* k : {"recall@5", "recall@10", "recall@20"}) EXPECT_EQ(again.at(k), report.at(k)) << k;
  cli::cmd_evaluate(c, a.checkpoint, "test", dir / "eval2.json", log);
  EXPECT_EQ(slurp(dir / "eval.json"), slurp(dir / "eval2.json"));
}

TEST(Commands, EvaluateRejectsMismatchedCheckpoint) {
  const auto dir = scratch("mismatch");
  const auto c = tiny(dir);
  std::ostringstream log;
  cli::cmd_train(c, cli::default_train_paths(c), log);
  auto other = c;
  other.set("model.d_mem", "6");
  other.set("model.d_node", "6");
  try {
    cli::cmd_evaluate(other, dir / "checkpoint.bin", "test", dir / "r.json", log);
    FAIL() << "expected a ConfigError";
  } catch (const ConfigError& e) {
    EXPECT_NE(std::string(e.what()).find("d_mem=4"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("d_mem=6"), std::string::npos) << e.what();
  }
}

TEST(Commands, AblateFillsSixCells) {
  const auto dir = scratch("ablate");
  auto c = tiny(dir);
  c.set("train.epochs", "1");
  c.set("run.baseline", "false");
  std::ostringstream log;
  cli::cmd_ablate(c, dir, log);
  const auto j = json::parse(slurp(dir / "ablation.json"));
  std::size_t cells = 0;
  for (const char* u : {"gru", "rnn"}) {
    for (const char* v : {"attn", "sum", "gcn"}) {
      const auto& cell = j.at("table").at(u).at(v);
      for (const char* k : {"recall@5", "recall@10", "recall@20"}) {
        const double r = cell.at(k);
        EXPECT_TRUE(r >= 0.0 && r <= 1.0);
      }
      ++cells;
    }
  }
  EXPECT_EQ(cells, 6u);
  EXPECT_TRUE(fs::exists(dir / "ablation.txt"));
}

TEST(Binary, ExitCodes) {
  const auto dir = scratch("binary");
  const std::string out = " --run.output_dir " + dir.string();
  EXPECT_EQ(run_cli("synthetic --synthetic.events 200 -o " + (dir / "s.csv").string()), 0);
  EXPECT_EQ(run_cli("train --no.such.key 1" + out), 1);
  EXPECT_EQ(run_cli("frobnicate"), 1);
  EXPECT_EQ(run_cli("train --data.path " + (dir / "missing.csv").string() + out), 2);
  {
    std::ofstream bad(dir / "bad.csv");
    bad << "user_id,item_id,timestamp\na,b,1\na,b\n";
  }
  EXPECT_EQ(run_cli("train --data.path " + (dir / "bad.csv").string() + out), 2);
  // A learning rate this large drives the loss to overflow.
  EXPECT_EQ(run_cli("train --data.path " + (dir / "s.csv").string() +
                    " --train.lr 1e300 --train.batch_size 20 --train.epochs 1" + out),
            3);
}
