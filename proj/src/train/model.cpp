#include "tgrec/train/model.hpp"

#include <algorithm>

#include "tgrec/embedding/time_encoder.hpp"
#include "tgrec/errors.hpp"

namespace tgrec::train {

void validate(const ModelConfig& c) {
  const auto& m = c.memory;
  const auto& e = c.embedding;
  if (m.dim == 0 || m.time_dim == 0 || e.node_dim == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (m.dim != e.mem_dim) throw ConfigError("memory and embedding disagree on mem_dim");
  if (m.time_dim != e.time_dim) throw ConfigError("memory and embedding disagree on time_dim");
  if (m.feature_dim != e.feature_dim) {
    throw ConfigError("memory and embedding disagree on feature_dim");
  }
  if (e.heads == 0 || e.layers == 0 || e.neighbors == 0) {
    throw ConfigError("embedding heads, layers and neighbors must be positive");
  }
}

auto init_params(const ModelConfig& config, std::uint64_t seed) -> ad::ModelParams {
  validate(config);
  ad::Rng rng(seed);
  ad::ModelParams params;
  embed::time_encoder::add_params(params, config.memory.time_dim);
  memory::add_updater_params(params, config.memory, rng);
  embed::add_params(params, config.embedding, rng);
  if (config.init == InitScheme::kZero) {
    for (const auto& [name, value] : params) {
      if (name == embed::time_encoder::kOmega) continue;
      auto span = params.mutable_values(name);
      std::fill(span.begin(), span.end(), 0.0);
    }
  }
  return params;
}

auto describe(const ModelConfig& c) -> std::map<std::string, std::string> {
  return {
      {"d_mem", std::to_string(c.memory.dim)},
      {"d_time", std::to_string(c.memory.time_dim)},
      {"d_node", std::to_string(c.embedding.node_dim)},
      {"d_edge", std::to_string(c.memory.feature_dim)},
      {"memory_updater", c.memory.updater == memory::UpdaterKind::kGru ? "gru" : "rnn"},
      {"time_in_message", c.memory.time_mode == memory::TimeInMessage::kEncoded ? "encoded" : "raw"},
      {"embedding.variant", embed::variant_name(c.embedding.variant)},
      {"embedding.heads", std::to_string(c.embedding.heads)},
      {"embedding.layers", std::to_string(c.embedding.layers)},
  };
}

}  // namespace tgrec::train
