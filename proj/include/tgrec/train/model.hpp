#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/embedding/embedding.hpp"
#include "tgrec/memory/memory.hpp"

namespace tgrec::train {

enum class InitScheme { kGlorot, kZero };

struct ModelConfig {
  memory::MemoryConfig memory;
  embed::EmbeddingConfig embedding;
  InitScheme init = InitScheme::kGlorot;
};

// Throws ConfigError when the memory and embedding halves disagree on shared
// widths or a dimension is zero.
void validate(const ModelConfig& config);

// Time encoder, memory updater and embedding weights. kZero zeroes every
// parameter except the time-encoder frequencies.
auto init_params(const ModelConfig& config, std::uint64_t seed) -> ad::ModelParams;

// Shape-defining settings, stored next to the weights in checkpoints.
auto describe(const ModelConfig& config) -> std::map<std::string, std::string>;

}  // namespace tgrec::train
