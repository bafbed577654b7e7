#include "tgrec/embedding/embedding.hpp"

#include <cmath>
#include <stdexcept>

#include "tgrec/autodiff/ops.hpp"
#include "tgrec/embedding/time_encoder.hpp"
#include "tgrec/errors.hpp"

namespace tgrec::embed {

auto parse_variant(const std::string& name) -> Variant {
  if (name == "attn") return Variant::kAttention;
  if (name == "sum") return Variant::kSum;
  if (name == "gcn") return Variant::kGcn;
  throw ConfigError("unknown embedding variant '" + name +
                    "' (expected attn, sum or gcn)");
}

auto variant_name(Variant v) -> std::string {
  switch (v) {
    case Variant::kAttention: return "attn";
    case Variant::kSum: return "sum";
    case Variant::kGcn: return "gcn";
  }
  return "?";
}

namespace {

auto prefix(Variant v, std::size_t layer) -> std::string {
  return "embed." + variant_name(v) + ".l" + std::to_string(layer) + ".";
}

auto head_prefix(std::size_t layer, std::size_t head) -> std::string {
  return prefix(Variant::kAttention, layer) + "h" + std::to_string(head) + ".";
}

auto input_dim(const EmbeddingConfig& c, std::size_t layer) -> std::size_t {
  return layer == 1 ? c.mem_dim : c.node_dim;
}

// Flattened neighbour samples for a list of queries. Padding slots point at
// the query node itself with a zero time delta; the mask removes them.
struct Neighborhood {
  std::size_t group = 0;
  std::vector<NodeId> nodes;
  std::vector<double> times;
  std::vector<double> deltas;
  std::vector<double> features;
  std::vector<std::uint8_t> mask;
  std::vector<double> degree;
};

auto sample_all(const EmbeddingContext& ctx, std::span<const NodeId> nodes,
                std::span<const double> times) -> Neighborhood {
  const auto& cfg = ctx.config;
  const std::size_t n = cfg.neighbors;
  const std::size_t fd = ctx.graph.feature_dim();
  if (fd != cfg.feature_dim) {
    throw std::invalid_argument("graph feature width does not match embedding config");
  }
  Neighborhood nb;
  nb.group = n;
  nb.nodes.reserve(nodes.size() * n);
  nb.times.reserve(nodes.size() * n);
  nb.deltas.reserve(nodes.size() * n);
  nb.mask.reserve(nodes.size() * n);
  nb.features.reserve(nodes.size() * n * fd);
  nb.degree.reserve(nodes.size());
  for (std::size_t q = 0; q < nodes.size(); ++q) {
    const auto s = ctx.graph.sample(nodes[q], times[q], n, cfg.sampling, cfg.sampling_seed);
    std::size_t real = 0;
    for (std::size_t k = 0; k < n; ++k) {
      const bool is_real = s.mask[k] != 0;
      nb.nodes.push_back(is_real ? s.neighbors[k] : nodes[q]);
      nb.times.push_back(times[q]);
      nb.deltas.push_back(is_real ? times[q] - s.timestamps[k] : 0.0);
      nb.mask.push_back(s.mask[k]);
      real += is_real ? 1 : 0;
    }
    nb.features.insert(nb.features.end(), s.edge_features.begin(), s.edge_features.end());
    nb.degree.push_back(static_cast<double>(real));
  }
  return nb;
}

// [memory-or-embedding of neighbour || edge features || phi(t - t_j)]
auto neighbor_inputs(ad::Tape& tape, const EmbeddingContext& ctx,
                     const Neighborhood& nb, const ad::Var& neighbor_rep) -> ad::Var {
  std::vector<ad::Var> blocks = {neighbor_rep};
  const std::size_t fd = ctx.config.feature_dim;
  if (fd > 0) {
    blocks.push_back(tape.constant(ad::Tensor({nb.nodes.size(), fd}, nb.features)));
  }
  blocks.push_back(time_encoder::encode(tape, ctx.params, nb.deltas));
  return ad::concat(blocks, 1);
}

auto embed_layer(ad::Tape& tape, const EmbeddingContext& ctx,
                 std::span<const NodeId> nodes, std::span<const double> times,
                 std::size_t layer, Variant variant,
                 std::vector<ad::Tensor>* weights_out) -> ad::Var;

auto attention_layer(ad::Tape& tape, const EmbeddingContext& ctx,
                     const Neighborhood& nb, const ad::Var& self,
                     const ad::Var& neighbor_rep, std::size_t layer,
                     std::vector<ad::Tensor>* weights_out) -> ad::Var {
  const auto& cfg = ctx.config;
  const std::size_t count = self.value().rows();
  const std::size_t heads = cfg.heads;
  const std::size_t dh = cfg.node_dim;
  auto p = [&](const std::string& name) { return tape.param(ctx.params, name); };

  const std::vector<double> zeros(count, 0.0);
  const ad::Var query_in =
      ad::concat({self, time_encoder::encode(tape, ctx.params, zeros)}, 1);
  const ad::Var kv_in = neighbor_inputs(tape, ctx, nb, neighbor_rep);

  std::vector<ad::Var> wq;
  std::vector<ad::Var> wkv;
  for (std::size_t h = 0; h < heads; ++h) {
    wq.push_back(p(head_prefix(layer, h) + "W_q"));
    wkv.push_back(p(head_prefix(layer, h) + "W_k"));
  }
  for (std::size_t h = 0; h < heads; ++h) wkv.push_back(p(head_prefix(layer, h) + "W_v"));
  const ad::Var q_all = ad::matmul(query_in, heads == 1 ? wq[0] : ad::concat(wq, 1));
  const ad::Var kv_all = ad::matmul(kv_in, ad::concat(wkv, 1));

  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  std::vector<ad::Var> outputs;
  for (std::size_t h = 0; h < heads; ++h) {
    const ad::Var qh = heads == 1 ? q_all : ad::slice(q_all, 1, h * dh, (h + 1) * dh);
    const ad::Var kh = ad::slice(kv_all, 1, h * dh, (h + 1) * dh);
    const ad::Var vh = ad::slice(kv_all, 1, (heads + h) * dh, (heads + h + 1) * dh);
    const ad::Var logits = ad::scale(ad::batched_row_dot(qh, kh, nb.group), inv_sqrt);
    const ad::Var weights = ad::masked_softmax(logits, nb.mask);
    if (weights_out != nullptr) weights_out->push_back(weights.value());
    outputs.push_back(ad::batched_weighted_sum(weights, vh, nb.group));
  }
  const ad::Var heads_out = heads == 1 ? outputs[0] : ad::concat(outputs, 1);
  const std::string pre = prefix(Variant::kAttention, layer);
  const ad::Var attended = ad::matmul(heads_out, p(pre + "W_o"));
  const ad::Var merged = ad::concat({attended, self}, 1);
  const ad::Var hidden =
      ad::relu(ad::add(ad::matmul(merged, p(pre + "ffn.W1")), p(pre + "ffn.b1")));
  return ad::add(ad::matmul(hidden, p(pre + "ffn.W2")), p(pre + "ffn.b2"));
}

auto sum_layer(ad::Tape& tape, const EmbeddingContext& ctx, const Neighborhood& nb,
               const ad::Var& self, const ad::Var& neighbor_rep, std::size_t layer)
    -> ad::Var {
  const std::string pre = prefix(Variant::kSum, layer);
  const ad::Var kv_in = neighbor_inputs(tape, ctx, nb, neighbor_rep);
  const ad::Var projected = ad::matmul(kv_in, tape.param(ctx.params, pre + "W1"));
  const std::size_t count = self.value().rows();
  std::vector<double> w(nb.mask.begin(), nb.mask.end());
  const ad::Var weights = tape.constant(ad::Tensor({count, nb.group}, std::move(w)));
  const ad::Var h = ad::relu(ad::batched_weighted_sum(weights, projected, nb.group));
  return ad::matmul(ad::concat({self, h}, 1), tape.param(ctx.params, pre + "W2"));
}

auto gcn_layer(ad::Tape& tape, const EmbeddingContext& ctx, const Neighborhood& nb,
               const ad::Var& self, const ad::Var& neighbor_rep, std::size_t layer)
    -> ad::Var {
  const std::string pre = prefix(Variant::kGcn, layer);
  const std::size_t count = self.value().rows();
  const std::size_t width = self.value().cols();
  ad::Tensor self_scale({count, width}, 0.0);
  ad::Tensor nbr_weights({count, nb.group}, 0.0);
  for (std::size_t q = 0; q < count; ++q) {
    const double inv = 1.0 / (nb.degree[q] + 1.0);
    for (std::size_t c = 0; c < width; ++c) self_scale.at(q, c) = inv;
    for (std::size_t k = 0; k < nb.group; ++k) {
      nbr_weights.at(q, k) = nb.mask[q * nb.group + k] ? inv : 0.0;
    }
  }
  const ad::Var mean_rep = ad::add(
      ad::mul(self, tape.constant(std::move(self_scale))),
      ad::batched_weighted_sum(tape.constant(std::move(nbr_weights)), neighbor_rep,
                               nb.group));
  return ad::relu(ad::add(ad::matmul(mean_rep, tape.param(ctx.params, pre + "W")),
                          tape.param(ctx.params, pre + "b")));
}

auto embed_layer(ad::Tape& tape, const EmbeddingContext& ctx,
                 std::span<const NodeId> nodes, std::span<const double> times,
                 std::size_t layer, Variant variant,
                 std::vector<ad::Tensor>* weights_out) -> ad::Var {
  if (layer == 0) return ctx.memory.gather(tape, nodes);
  const Neighborhood nb = sample_all(ctx, nodes, times);
  const ad::Var self = embed_layer(tape, ctx, nodes, times, layer - 1, variant, nullptr);
  const ad::Var neighbor_rep =
      embed_layer(tape, ctx, nb.nodes, nb.times, layer - 1, variant, nullptr);
  switch (variant) {
    case Variant::kAttention:
      return attention_layer(tape, ctx, nb, self, neighbor_rep, layer, weights_out);
    case Variant::kSum:
      return sum_layer(tape, ctx, nb, self, neighbor_rep, layer);
    case Variant::kGcn:
      return gcn_layer(tape, ctx, nb, self, neighbor_rep, layer);
  }
  throw ConfigError("unknown embedding variant");
}

}  // namespace

void add_params(ad::ModelParams& params, const EmbeddingConfig& c, ad::Rng& rng) {
  if (c.layers == 0 || c.neighbors == 0 || c.heads == 0 || c.node_dim == 0) {
    throw ConfigError("embedding layers, neighbors, heads and node_dim must be positive");
  }
  for (std::size_t layer = 1; layer <= c.layers; ++layer) {
    const std::size_t d_in = input_dim(c, layer);
    const std::size_t d_kv = d_in + c.feature_dim + c.time_dim;
    const std::string pre = prefix(c.variant, layer);
    switch (c.variant) {
      case Variant::kAttention: {
        for (std::size_t h = 0; h < c.heads; ++h) {
          const std::string hp = head_prefix(layer, h);
          params.add(hp + "W_q", ad::glorot_uniform(d_in + c.time_dim, c.node_dim, rng));
          params.add(hp + "W_k", ad::glorot_uniform(d_kv, c.node_dim, rng));
          params.add(hp + "W_v", ad::glorot_uniform(d_kv, c.node_dim, rng));
        }
        params.add(pre + "W_o", ad::glorot_uniform(c.heads * c.node_dim, c.node_dim, rng));
        params.add(pre + "ffn.W1", ad::glorot_uniform(c.node_dim + d_in, c.node_dim, rng));
        params.add(pre + "ffn.b1", ad::Tensor({c.node_dim}, 0.0));
        params.add(pre + "ffn.W2", ad::glorot_uniform(c.node_dim, c.node_dim, rng));
        params.add(pre + "ffn.b2", ad::Tensor({c.node_dim}, 0.0));
        break;
      }
      case Variant::kSum:
        params.add(pre + "W1", ad::glorot_uniform(d_kv, c.node_dim, rng));
        params.add(pre + "W2", ad::glorot_uniform(d_in + c.node_dim, c.node_dim, rng));
        break;
      case Variant::kGcn:
        params.add(pre + "W", ad::glorot_uniform(d_in, c.node_dim, rng));
        params.add(pre + "b", ad::Tensor({c.node_dim}, 0.0));
        break;
    }
  }
}

auto MemoryView::gather(ad::Tape& tape, std::span<const NodeId> nodes) const
    -> ad::Var {
  if (table_) {
    std::vector<std::size_t> idx(nodes.begin(), nodes.end());
    return ad::gather_rows(*table_, idx);
  }
  const std::size_t d = store_->dim();
  ad::Tensor rows({nodes.size(), d}, 0.0);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const auto src = store_->row(nodes[k]);
    std::copy(src.begin(), src.end(), rows.row(k).begin());
  }
  return tape.constant(std::move(rows));
}

auto view_with_update(ad::Tape& tape, const memory::MemoryStore& store,
                      const memory::MemoryUpdate& update) -> MemoryView {
  if (update.nodes.empty()) return MemoryView(store);
  std::vector<std::size_t> rows(update.nodes.begin(), update.nodes.end());
  const ad::Var table =
      ad::overwrite_rows(tape.constant(store.table()), rows, update.rows);
  return MemoryView(store, table);
}

auto embed_batch(ad::Tape& tape, const EmbeddingContext& ctx,
                 std::span<const NodeId> nodes, std::span<const double> times,
                 Variant variant) -> ad::Var {
  if (nodes.size() != times.size()) {
    throw std::invalid_argument("embed_batch: nodes and times differ in length");
  }
  if (nodes.empty()) throw std::invalid_argument("embed_batch: no nodes");
  return embed_layer(tape, ctx, nodes, times, ctx.config.layers, variant, nullptr);
}

auto embed_batch(ad::Tape& tape, const EmbeddingContext& ctx,
                 std::span<const NodeId> nodes, std::span<const double> times)
    -> ad::Var {
  return embed_batch(tape, ctx, nodes, times, ctx.config.variant);
}

auto embed_attention(ad::Tape& tape, const EmbeddingContext& ctx, NodeId node,
                     double t) -> ad::Var {
  return embed_batch(tape, ctx, std::span(&node, 1), std::span(&t, 1),
                     Variant::kAttention);
}

auto embed_sum(ad::Tape& tape, const EmbeddingContext& ctx, NodeId node, double t)
    -> ad::Var {
  return embed_batch(tape, ctx, std::span(&node, 1), std::span(&t, 1), Variant::kSum);
}

auto embed_gcn(ad::Tape& tape, const EmbeddingContext& ctx, NodeId node, double t)
    -> ad::Var {
  return embed_batch(tape, ctx, std::span(&node, 1), std::span(&t, 1), Variant::kGcn);
}

auto attention_weights(const EmbeddingContext& ctx, NodeId node, double t)
    -> ad::Tensor {
  ad::Tape tape(false);
  std::vector<ad::Tensor> weights;
  embed_layer(tape, ctx, std::span(&node, 1), std::span(&t, 1), ctx.config.layers,
              Variant::kAttention, &weights);
  const std::size_t n = ctx.config.neighbors;
  ad::Tensor out({weights.size(), n}, 0.0);
  for (std::size_t h = 0; h < weights.size(); ++h) {
    for (std::size_t k = 0; k < n; ++k) out.at(h, k) = weights[h][k];
  }
  return out;
}

}  // namespace tgrec::embed
