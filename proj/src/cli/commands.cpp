#include "tgrec/cli/commands.hpp"

#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "tgrec/autodiff/checkpoint.hpp"
#include "tgrec/errors.hpp"
#include "tgrec/eval/evaluation.hpp"
#include "tgrec/train/trainer.hpp"

namespace tgrec::cli {

using nlohmann::json;

auto exit_code_for(const std::exception& e) -> int {
  if (dynamic_cast<const ConfigError*>(&e) != nullptr) return kUsage;
  if (dynamic_cast<const DataError*>(&e) != nullptr) return kData;
  if (dynamic_cast<const NumericError*>(&e) != nullptr) return kNumeric;
  return kUsage;
}

auto load_events(const RunConfig& config) -> data::EventLog {
  config.validate();
  if (config.get_string("data.source") == "synthetic") {
    return eval::generate_synthetic(config.synthetic()).log;
  }
  return data::parse_events(config.get_string("data.path"), config.schema());
}

auto default_train_paths(const RunConfig& config) -> TrainPaths {
  const std::filesystem::path dir = config.get_string("run.output_dir");
  return {dir / "checkpoint.bin", dir / "stats.jsonl", dir / "report.json"};
}

namespace {

auto metrics_json(const eval::MetricsReport& m) -> json {
  json j = json::object();
  for (const auto& [k, r] : m.recall) j["recall@" + std::to_string(k)] = r;
  j["cases"] = m.cases;
  j["flagged_cases"] = m.flagged;
  return j;
}

auto model_for(const RunConfig& config, const data::EventLog& log) -> train::ModelConfig {
  auto model = config.model();
  model.memory.feature_dim = model.embedding.feature_dim = log.feature_dim;
  return model;
}

auto open_output(const std::filesystem::path& path) -> std::ofstream {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    if (ec) throw DataError("cannot create directory " + path.parent_path().string());
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

auto history_for(const data::ChronologicalSplit& split, const std::string& which)
    -> std::vector<const data::EventLog*> {
  if (which == "val") return {&split.train};
  return {&split.train, &split.val};
}

auto split_named(const data::ChronologicalSplit& split, const std::string& which)
    -> const data::EventLog& {
  if (which == "val") return split.val;
  if (which == "test") return split.test;
  throw ConfigError("unknown split '" + which + "' (expected val or test)");
}

struct TrainOutcome {
  eval::MetricsReport test;
  std::optional<eval::MetricsReport> popularity;
  std::size_t best_epoch = 0;
};

auto run_training(const RunConfig& config, const data::EventLog& log, const TrainPaths& paths,
                  std::ostream& log_out, const std::string& tag) -> TrainOutcome {
  const auto model = model_for(config, log);
  const auto tcfg = config.training();
  const auto split = data::chronological_split(log, config.ratios());
  const bool deterministic = config.get_bool("run.deterministic");
  const std::string echo = config.to_json();

  auto stats = open_output(paths.stats);
  stats << json{{"config", json::parse(echo)}}.dump() << '\n';
  auto params = train::init_params(model, static_cast<std::uint64_t>(config.get_int("run.seed")));

  std::mutex log_mutex;
  const auto result = train::train(model, tcfg, split, std::move(params),
                                   [&](const train::EpochStats& s) {
    json line = {{"epoch", s.epoch},
                 {"train_loss", s.train_loss},
                 {"skipped_examples", s.skipped},
                 {"with_replacement_examples", s.with_replacement},
                 {"wall_ms", deterministic ? 0.0 : s.wall_ms}};
    for (const auto& [k, r] : s.val.recall) line["val_recall@" + std::to_string(k)] = r;
    stats << line.dump() << '\n';
    stats.flush();
    const std::lock_guard lock(log_mutex);
    log_out << tag << "epoch " << s.epoch << " loss " << s.train_loss << " val R@10 "
            << s.val.recall.at(10) << '\n';
    if (s.with_replacement > 0) {
      log_out << tag << "warning: " << s.with_replacement
              << " examples had too few negative candidates and were sampled with replacement\n";
    }
  });

  ad::Checkpoint ckpt;
  ckpt.metadata = train::describe(model);
  ckpt.metadata["config"] = echo;
  ckpt.metadata["best_epoch"] = std::to_string(result.best_epoch);
  ad::put_params(ckpt, result.best_params);
  {
    auto out = open_output(paths.checkpoint);
    ad::write_checkpoint(out, ckpt);
    if (!out) throw DataError("failed writing " + paths.checkpoint.string());
  }

  TrainOutcome outcome;
  outcome.best_epoch = result.best_epoch;
  const auto ecfg = [&] {
    auto e = tcfg.eval;
    if (e.chunk_size == 0) e.chunk_size = tcfg.batch_size;
    return e;
  }();
  outcome.test = eval::evaluate_after_replay(result.best_params, model,
                                             history_for(split, "test"), split.test,
                                             tcfg.batch_size, ecfg);
  if (config.get_bool("run.baseline")) {
    outcome.popularity = eval::popularity_baseline(split.test, split.train,
                                                   history_for(split, "test"), ecfg);
  }

  json report = metrics_json(outcome.test);
  report["split"] = "test";
  report["model"] = config.get_string("memory.updater") + "+" +
                    config.get_string("embedding.variant");
  report["best_epoch"] = result.best_epoch;
  report["epochs_run"] = result.epochs.size();
  if (outcome.popularity) report["popularity_baseline"] = metrics_json(*outcome.popularity);
  report["config"] = json::parse(echo);
  report["changed_keys"] = config.changed_keys();
  auto out = open_output(paths.report);
  out << report.dump(2) << '\n';
  return outcome;
}

}  // namespace

void cmd_train(const RunConfig& config, const TrainPaths& paths, std::ostream& log) {
  const auto events = load_events(config);
  const auto outcome = run_training(config, events, paths, log, "");
  log << "test R@10 " << outcome.test.recall.at(10);
  if (outcome.popularity) log << " (popularity " << outcome.popularity->recall.at(10) << ")";
  log << "\nwrote " << paths.checkpoint.string() << ", " << paths.stats.string() << ", "
      << paths.report.string() << '\n';
}

void cmd_evaluate(const RunConfig& config, const std::filesystem::path& checkpoint,
                  const std::string& split_name, const std::filesystem::path& report_path,
                  std::ostream& log) {
  const auto events = load_events(config);
  const auto model = model_for(config, events);
  const auto ckpt = ad::load_checkpoint(checkpoint);
  for (const auto& [key, expected] : train::describe(model)) {
    const auto it = ckpt.metadata.find(key);
    if (it == ckpt.metadata.end()) {
      throw ConfigError("checkpoint " + checkpoint.string() + " lacks '" + key + "'");
    }
    if (it->second != expected) {
      throw ConfigError("checkpoint has " + key + "=" + it->second + " but the config has " +
                        key + "=" + expected);
    }
  }
  auto params = ad::take_params(ckpt);
  const auto reference = train::init_params(model, 0);
  for (const auto& [name, tensor] : reference) {
    if (!params.contains(name) || params.get(name).shape() != tensor.shape()) {
      throw ConfigError("checkpoint parameter '" + name + "' is missing or has the wrong shape");
    }
  }
  if (params.size() != reference.size()) {
    throw ConfigError("checkpoint holds parameters the config does not describe");
  }

  const auto tcfg = config.training();
  const auto split = data::chronological_split(events, config.ratios());
  auto ecfg = tcfg.eval;
  if (ecfg.chunk_size == 0) ecfg.chunk_size = tcfg.batch_size;
  const auto& target = split_named(split, split_name);
  const auto metrics = eval::evaluate_after_replay(params, model, history_for(split, split_name),
                                                   target, tcfg.batch_size, ecfg);
  json report = metrics_json(metrics);
  report["split"] = split_name;
  report["model"] = config.get_string("memory.updater") + "+" +
                    config.get_string("embedding.variant");
  report["checkpoint"] = checkpoint.filename().string();
  report["config"] = json::parse(config.to_json());
  report["changed_keys"] = config.changed_keys();
  auto out = open_output(report_path);
  out << report.dump(2) << '\n';
  log << split_name << " R@5 " << metrics.recall.at(5) << " R@10 " << metrics.recall.at(10)
      << " R@20 " << metrics.recall.at(20) << "\nwrote " << report_path.string() << '\n';
}

void cmd_ablate(const RunConfig& config, const std::filesystem::path& out_dir,
                std::ostream& log) {
  const auto events = load_events(config);
  const std::vector<std::string> updaters = {"gru", "rnn"};
  const std::vector<std::string> variants = {"attn", "sum", "gcn"};
  struct Cell {
    std::string updater, variant;
    RunConfig config;
    eval::MetricsReport metrics;
    std::exception_ptr error;
  };
  std::vector<Cell> cells;
  for (const auto& u : updaters) {
    for (const auto& v : variants) {
      RunConfig c = config;
      c.set("memory.updater", u);
      c.set("embedding.variant", v);
      c.set("run.baseline", "false");
      cells.push_back({u, v, c, {}, nullptr});
    }
  }
  std::mutex log_mutex;
  auto run_cell = [&](Cell& cell) {
    try {
      const auto dir = out_dir / (cell.updater + "_" + cell.variant);
      const std::string tag = "[" + cell.updater + "+" + cell.variant + "] ";
      std::ostringstream buffer;
      cell.metrics = run_training(cell.config, events,
                                  {dir / "checkpoint.bin", dir / "stats.jsonl", dir / "report.json"},
                                  buffer, tag)
                         .test;
      const std::lock_guard lock(log_mutex);
      log << buffer.str();
    } catch (...) {
      cell.error = std::current_exception();
    }
  };
  if (config.get_bool("run.parallel")) {
    std::vector<std::jthread> threads;
    for (auto& cell : cells) threads.emplace_back([&run_cell, &cell] { run_cell(cell); });
  } else {
    for (auto& cell : cells) run_cell(cell);
  }
  for (const auto& cell : cells) {
    if (cell.error) std::rethrow_exception(cell.error);
  }

  json table = json::object();
  std::ostringstream text;
  text << std::left << std::setw(6) << "R@10";
  for (const auto& v : variants) text << std::right << std::setw(10) << v;
  text << '\n';
  for (const auto& u : updaters) {
    text << std::left << std::setw(6) << u;
    for (const auto& cell : cells) {
      if (cell.updater != u) continue;
      table[u][cell.variant] = metrics_json(cell.metrics);
      text << std::right << std::setw(10) << std::fixed << std::setprecision(4)
           << cell.metrics.recall.at(10);
    }
    text << '\n';
  }
  json doc = {{"rows", updaters},
              {"columns", variants},
              {"split", "test"},
              {"table", table},
              {"config", json::parse(config.to_json())}};
  auto out = open_output(out_dir / "ablation.json");
  out << doc.dump(2) << '\n';
  auto txt = open_output(out_dir / "ablation.txt");
  txt << text.str();
  log << text.str() << "wrote " << (out_dir / "ablation.json").string() << '\n';
}

void cmd_synthetic(const RunConfig& config, const std::filesystem::path& output,
                   std::ostream& log) {
  config.validate();
  const auto sc = config.synthetic();
  const auto generated = eval::generate_synthetic(sc);
  auto out = open_output(output);
  std::ostringstream noise;
  noise << sc.noise;
  out << "# synthetic groups=" << sc.groups << " users=" << sc.users << " items=" << sc.items
      << " events=" << sc.events << " noise=" << noise.str() << " seed=" << sc.seed << '\n';
  data::write_events_csv(out, generated.log);
  out.flush();
  if (!out) throw DataError("failed writing " + output.string());
  log << "wrote " << sc.events << " events to " << output.string() << '\n';
}

}  // namespace tgrec::cli
