#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>

#include "tgrec/autodiff/params.hpp"
#include "tgrec/autodiff/tape.hpp"
#include "tgrec/graph/temporal_adjacency.hpp"
#include "tgrec/memory/memory.hpp"

namespace tgrec::embed {

using graph::NodeId;

enum class Variant { kAttention, kSum, kGcn };

auto parse_variant(const std::string& name) -> Variant;  // ConfigError if unknown
auto variant_name(Variant v) -> std::string;

struct EmbeddingConfig {
  Variant variant = Variant::kAttention;
  std::size_t heads = 2;
  std::size_t layers = 1;
  std::size_t neighbors = 10;
  graph::SamplingPolicy sampling = graph::SamplingPolicy::kMostRecent;
  std::uint64_t sampling_seed = 0;
  std::size_t mem_dim = 31;
  std::size_t node_dim = 31;
  std::size_t time_dim = 100;
  std::size_t feature_dim = 0;
};

// Creates the parameters of config.variant, one set per layer:
//   attn: embed.attn.l<L>.h<H>.{W_q,W_k,W_v}, .W_o, .ffn.{W1,b1,W2,b2}
//   sum:  embed.sum.l<L>.{W1,W2}
//   gcn:  embed.gcn.l<L>.{W,b}
// Each head projects to node_dim columns.
void add_params(ad::ModelParams& params, const EmbeddingConfig& config,
                ad::Rng& rng);

// Layer-0 node representations: the memory table, optionally with rows
// replaced by freshly updated (differentiable) memories.
class MemoryView {
 public:
  explicit MemoryView(const memory::MemoryStore& store) : store_(&store) {}
  // `table` must be the full [num_nodes x dim] memory on the same tape.
  MemoryView(const memory::MemoryStore& store, ad::Var table)
      : store_(&store), table_(table) {}

  [[nodiscard]] auto gather(ad::Tape& tape, std::span<const NodeId> nodes) const
      -> ad::Var;

 private:
  const memory::MemoryStore* store_;
  std::optional<ad::Var> table_;
};

// Full memory table with the update's rows swapped in, or a view of the
// plain store when the update is empty.
auto view_with_update(ad::Tape& tape, const memory::MemoryStore& store,
                      const memory::MemoryUpdate& update) -> MemoryView;

struct EmbeddingContext {
  const ad::ModelParams& params;
  const EmbeddingConfig& config;
  const graph::TemporalAdjacency& graph;
  const MemoryView& memory;
};

// Row k is the embedding z of nodes[k] at times[k], shape
// [nodes.size() x node_dim], using ctx.config.variant.
auto embed_batch(ad::Tape& tape, const EmbeddingContext& ctx,
                 std::span<const NodeId> nodes, std::span<const double> times)
    -> ad::Var;
auto embed_batch(ad::Tape& tape, const EmbeddingContext& ctx,
                 std::span<const NodeId> nodes, std::span<const double> times,
                 Variant variant) -> ad::Var;

// Single-node forms; each returns a [1 x node_dim] row.
auto embed_attention(ad::Tape& tape, const EmbeddingContext& ctx, NodeId node,
                     double t) -> ad::Var;
auto embed_sum(ad::Tape& tape, const EmbeddingContext& ctx, NodeId node,
               double t) -> ad::Var;
auto embed_gcn(ad::Tape& tape, const EmbeddingContext& ctx, NodeId node,
               double t) -> ad::Var;

// Attention weights of the first layer for one node (heads x n_nbr), for
// inspection and tests.
auto attention_weights(const EmbeddingContext& ctx, NodeId node, double t)
    -> ad::Tensor;

}  // namespace tgrec::embed
