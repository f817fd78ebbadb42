#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "kucnet/binary_io.hpp"
#include "kucnet/common.hpp"
#include "kucnet/loss.hpp"
#include "kucnet/rng.hpp"
#include "kucnet/subgraph.hpp"

namespace kucnet {

enum class Activation : std::uint8_t { identity = 0, tanh = 1, relu = 2 };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::identity: return "identity";
    case Activation::tanh: return "tanh";
    case Activation::relu: return "relu";
  }
  return "?";
}

inline Activation parse_activation(const std::string& s) {
  if (s == "identity") return Activation::identity;
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "'");
}

struct ModelConfig {
  Index dim = 48;
  Index attention_dim = 5;
  int depth = 3;
  RelationId relation_count = 0;
  Activation activation = Activation::relu;
  bool use_attention = true;
  std::vector<std::string> relation_names;

  bool operator==(const ModelConfig&) const = default;

  void validate() const {
    if (dim < 1 || attention_dim < 1 || depth < 1) throw ConfigError("d, d_alpha and L must be >= 1");
    if (relation_count < 1) throw ConfigError("model needs at least one relation");
    if (!relation_names.empty() && relation_names.size() != relation_count) {
      throw ConfigError("relation vocabulary size does not match relation count");
    }
  }
};

// All learnable parameters in one flat buffer. Per layer l = 1..L:
//   W^l (d x d), relation embeddings H^l (d x R, one column per relation),
//   attention vector w_a^l (d_a), W_as^l (d_a x d), W_ar^l (d_a x d);
// then the shared attention bias b_a (d_a) and the scoring vector w (d).
// Matrices are column-major. Gradients use the same type and layout.
class ModelParams {
 public:
  using Mat = Eigen::Map<Eigen::MatrixXd>;
  using ConstMat = Eigen::Map<const Eigen::MatrixXd>;
  using Vec = Eigen::Map<Eigen::VectorXd>;
  using ConstVec = Eigen::Map<const Eigen::VectorXd>;

  ModelParams() = default;
  explicit ModelParams(ModelConfig config) : config_(std::move(config)) {
    config_.validate();
    values_.assign(total_size(), 0.0);
  }

  const ModelConfig& config() const { return config_; }
  std::size_t size() const { return values_.size(); }
  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }

  Mat message(int l) { return {ptr(l, 0), d(), d()}; }
  ConstMat message(int l) const { return {ptr(l, 0), d(), d()}; }
  Mat relations(int l) { return {ptr(l, 1), d(), r()}; }
  ConstMat relations(int l) const { return {ptr(l, 1), d(), r()}; }
  Vec attention_vector(int l) { return {ptr(l, 2), da()}; }
  ConstVec attention_vector(int l) const { return {ptr(l, 2), da()}; }
  Mat attention_source(int l) { return {ptr(l, 3), da(), d()}; }
  ConstMat attention_source(int l) const { return {ptr(l, 3), da(), d()}; }
  Mat attention_relation(int l) { return {ptr(l, 4), da(), d()}; }
  ConstMat attention_relation(int l) const { return {ptr(l, 4), da(), d()}; }
  Vec attention_bias() { return {values_.data() + shared_offset(), da()}; }
  ConstVec attention_bias() const { return {values_.data() + shared_offset(), da()}; }
  Vec score_vector() { return {values_.data() + shared_offset() + da(), d()}; }
  ConstVec score_vector() const { return {values_.data() + shared_offset() + da(), d()}; }

  bool all_finite() const {
    return std::all_of(values_.begin(), values_.end(), [](double x) { return std::isfinite(x); });
  }

  void set_zero() { std::fill(values_.begin(), values_.end(), 0.0); }

  ModelParams& operator+=(const ModelParams& other) {
    for (std::size_t k = 0; k < values_.size(); ++k) values_[k] += other.values_[k];
    return *this;
  }

  bool operator==(const ModelParams&) const = default;

 private:
  Eigen::Index d() const { return config_.dim; }
  Eigen::Index da() const { return config_.attention_dim; }
  Eigen::Index r() const { return config_.relation_count; }

  std::size_t block_size(int part) const {
    const std::size_t dd = config_.dim, a = config_.attention_dim, rr = config_.relation_count;
    switch (part) {
      case 0: return dd * dd;
      case 1: return dd * rr;
      case 2: return a;
      default: return a * dd;
    }
  }
  std::size_t layer_size() const {
    std::size_t n = 0;
    for (int p = 0; p < 5; ++p) n += block_size(p);
    return n;
  }
  std::size_t shared_offset() const { return layer_size() * static_cast<std::size_t>(config_.depth); }
  std::size_t total_size() const { return shared_offset() + config_.attention_dim + config_.dim; }

  double* ptr(int l, int part) { return values_.data() + offset(l, part); }
  const double* ptr(int l, int part) const { return values_.data() + offset(l, part); }
  std::size_t offset(int l, int part) const {
    std::size_t off = layer_size() * static_cast<std::size_t>(l - 1);
    for (int p = 0; p < part; ++p) off += block_size(p);
    return off;
  }

  ModelConfig config_;
  std::vector<double> values_;
};

// Matrices uniform in +-sqrt(6 / (fan_in + fan_out)) (vectors count as one
// column), relation embeddings uniform in +-sqrt(6 / d), attention bias zero.
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  ModelParams p(config);
  Rng rng(derive_seed(seed, 0x1417));
  auto fill = [&](auto&& block, double bound) {
    for (Eigen::Index k = 0; k < block.size(); ++k) block.data()[k] = rng.uniform(-bound, bound);
  };
  const double d = config.dim, da = config.attention_dim;
  for (int l = 1; l <= config.depth; ++l) {
    fill(p.message(l), std::sqrt(6.0 / (d + d)));
    fill(p.relations(l), std::sqrt(6.0 / d));
    fill(p.attention_vector(l), std::sqrt(6.0 / (da + 1.0)));
    fill(p.attention_source(l), std::sqrt(6.0 / (d + da)));
    fill(p.attention_relation(l), std::sqrt(6.0 / (d + da)));
  }
  p.attention_bias().setZero();
  fill(p.score_vector(), std::sqrt(6.0 / (d + 1.0)));
  return p;
}

inline double activate(Activation a, double x) {
  switch (a) {
    case Activation::identity: return x;
    case Activation::tanh: return std::tanh(x);
    case Activation::relu: return x > 0 ? x : 0.0;
  }
  return x;
}

// Derivative from the pre-activation x and output y; ReLU uses 0 at 0.
inline double activate_grad(Activation a, double x, double y) {
  switch (a) {
    case Activation::identity: return 1.0;
    case Activation::tanh: return 1.0 - y * y;
    case Activation::relu: return x > 0 ? 1.0 : 0.0;
  }
  return 1.0;
}

// sigma(w_a^T ReLU(W_as h_s + W_ar h_r + b_a)) for a single edge.
inline double attention_weight(const Eigen::VectorXd& h_s, const Eigen::VectorXd& h_r, const ModelParams& p, int l) {
  const Eigen::VectorXd z = p.attention_source(l) * h_s + p.attention_relation(l) * h_r + p.attention_bias();
  return sigmoid(p.attention_vector(l).dot(z.cwiseMax(0.0)));
}

struct ItemRange {
  NodeId first = 0;
  Index count = 0;
  bool contains(NodeId n) const { return n >= first && n - first < count; }
};

struct LayerTape {
  Eigen::MatrixXd pre;       // d x |V^l|, summed messages before the activation
  Eigen::MatrixXd hidden;    // d x |V^l|, h^l
  Eigen::MatrixXd head_msg;  // W h_s for every head in V^{l-1}
  Eigen::MatrixXd rel_msg;   // W h_r for every relation
  Eigen::MatrixXd head_att;  // W_as h_s
  Eigen::MatrixXd rel_att;   // W_ar h_r
  Eigen::MatrixXd att_pre;   // d_a x |E^l|, argument of the attention ReLU
  std::vector<double> attention;
  std::vector<double> edge_scale;  // dropout scaling, empty when dropout is off
};

struct ForwardTape {
  std::vector<LayerTape> layers;  // layers[l - 1]
  Eigen::VectorXd logits;         // w^T h^L for every node of V^L
  ItemRange items;
  std::uint64_t signature = 0;

  const LayerTape& layer(int l) const { return layers[static_cast<std::size_t>(l - 1)]; }
};

struct ForwardOptions {
  double dropout = 0.0;
  Rng* rng = nullptr;  // required when dropout > 0
};

// FNV-1a over the edge arrays, so a tape can be matched to its graph.
inline std::uint64_t graph_signature(const LayeredGraph& g) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  auto mix = [&](std::uint64_t v) {
    h ^= v;
    h *= 0x100000001b3ULL;
  };
  mix(g.user);
  mix(static_cast<std::uint64_t>(g.depth));
  for (const auto& layer : g.edges) {
    mix(layer.size());
    for (const auto& e : layer) {
      mix(e.head);
      mix(e.relation);
      mix(e.tail);
      mix((std::uint64_t{e.head_index} << 32) | e.tail_index);
    }
  }
  return h;
}

// Runs L steps of attention message passing from h^0_u = 0:
//   h^l_o = act( sum_{(s,r,o) in E^l} alpha * W^l (h^{l-1}_s + h^l_r) )
// and scores every node of the last layer with w^T h^L.
inline ForwardTape forward(const LayeredGraph& graph, const ModelParams& params, ItemRange items,
                           const ForwardOptions& options = {}) {
  const auto& cfg = params.config();
  if (graph.depth != cfg.depth) throw ConfigError("graph depth does not match model depth");
  if (options.dropout > 0 && !options.rng) throw ConfigError("dropout needs an rng");
  const Eigen::Index d = cfg.dim;
  ForwardTape tape;
  tape.items = items;
  tape.signature = graph_signature(graph);
  tape.layers.resize(static_cast<std::size_t>(cfg.depth));
  const Eigen::MatrixXd origin = Eigen::MatrixXd::Zero(d, 1);
  const auto bias = params.attention_bias();
  const double keep = 1.0 - options.dropout;

  for (int l = 1; l <= cfg.depth; ++l) {
    auto& t = tape.layers[static_cast<std::size_t>(l - 1)];
    const Eigen::MatrixXd& prev = l == 1 ? origin : tape.layers[static_cast<std::size_t>(l - 2)].hidden;
    const auto& edges = graph.layer(l);
    const auto n_tail = static_cast<Eigen::Index>(graph.nodes[static_cast<std::size_t>(l)].size());
    t.head_msg.noalias() = params.message(l) * prev;
    t.rel_msg.noalias() = params.message(l) * params.relations(l);
    t.pre = Eigen::MatrixXd::Zero(d, n_tail);
    t.attention.assign(edges.size(), 1.0);
    if (cfg.use_attention) {
      t.head_att.noalias() = params.attention_source(l) * prev;
      t.rel_att.noalias() = params.attention_relation(l) * params.relations(l);
      t.att_pre.resize(cfg.attention_dim, static_cast<Eigen::Index>(edges.size()));
    }
    if (options.dropout > 0) t.edge_scale.resize(edges.size());
    const auto w_att = params.attention_vector(l);

    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      if (e.relation >= cfg.relation_count) throw ConfigError("relation id outside model vocabulary");
      double alpha = 1.0;
      if (cfg.use_attention) {
        auto z = t.att_pre.col(static_cast<Eigen::Index>(k));
        z = t.head_att.col(e.head_index) + t.rel_att.col(e.relation) + bias;
        alpha = sigmoid(w_att.dot(z.cwiseMax(0.0)));
        t.attention[k] = alpha;
      }
      double scale = alpha;
      if (options.dropout > 0) {
        t.edge_scale[k] = options.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
        scale *= t.edge_scale[k];
      }
      if (scale == 0.0) continue;
      t.pre.col(e.tail_index) += scale * (t.head_msg.col(e.head_index) + t.rel_msg.col(e.relation));
    }
    t.hidden = t.pre.unaryExpr([a = cfg.activation](double x) { return activate(a, x); });
  }
  tape.logits = tape.layers.back().hidden.transpose() * params.score_vector();
  return tape;
}

// Dense per-item logits; items outside V^L score exactly 0.
inline std::vector<double> item_scores(const ForwardTape& tape, const LayeredGraph& graph) {
  std::vector<double> scores(tape.items.count, 0.0);
  const auto& last = graph.nodes[static_cast<std::size_t>(graph.depth)];
  for (std::size_t k = 0; k < last.size(); ++k) {
    if (tape.items.contains(last[k])) scores[last[k] - tape.items.first] = tape.logits[static_cast<Eigen::Index>(k)];
  }
  return scores;
}

// Reverse-mode pass for the tape above. `d_item_logits[i]` is dLoss/d(logit
// of item i); entries of items outside V^L are ignored since those logits
// are constant. Returns gradients in the ModelParams layout.
inline ModelParams backward(const ForwardTape& tape, const LayeredGraph& graph, const ModelParams& params,
                            std::span<const double> d_item_logits) {
  const auto& cfg = params.config();
  if (tape.signature != graph_signature(graph) || tape.layers.size() != static_cast<std::size_t>(cfg.depth)) {
    throw ContractError("forward tape does not belong to this graph");
  }
  if (d_item_logits.size() != tape.items.count) throw ContractError("gradient vector must cover every item");
  const Eigen::Index d = cfg.dim;
  ModelParams grads(cfg);

  const auto& last = graph.nodes[static_cast<std::size_t>(cfg.depth)];
  const auto& top = tape.layers.back();
  Eigen::MatrixXd d_hidden = Eigen::MatrixXd::Zero(d, static_cast<Eigen::Index>(last.size()));
  for (std::size_t k = 0; k < last.size(); ++k) {
    if (!tape.items.contains(last[k])) continue;
    const double g = d_item_logits[last[k] - tape.items.first];
    if (g == 0.0) continue;
    const auto col = static_cast<Eigen::Index>(k);
    grads.score_vector() += g * top.hidden.col(col);
    d_hidden.col(col) = g * params.score_vector();
  }

  const Eigen::MatrixXd origin = Eigen::MatrixXd::Zero(d, 1);
  for (int l = cfg.depth; l >= 1; --l) {
    const auto& t = tape.layer(l);
    const auto& edges = graph.layer(l);
    const Eigen::MatrixXd& prev = l == 1 ? origin : tape.layer(l - 1).hidden;
    Eigen::MatrixXd d_pre(d, t.pre.cols());
    for (Eigen::Index c = 0; c < t.pre.cols(); ++c) {
      for (Eigen::Index k = 0; k < d; ++k) {
        d_pre(k, c) = d_hidden(k, c) * activate_grad(cfg.activation, t.pre(k, c), t.hidden(k, c));
      }
    }
    Eigen::MatrixXd d_head_msg = Eigen::MatrixXd::Zero(d, prev.cols());
    Eigen::MatrixXd d_rel_msg = Eigen::MatrixXd::Zero(d, cfg.relation_count);
    Eigen::MatrixXd d_head_att, d_rel_att;
    if (cfg.use_attention) {
      d_head_att = Eigen::MatrixXd::Zero(cfg.attention_dim, prev.cols());
      d_rel_att = Eigen::MatrixXd::Zero(cfg.attention_dim, cfg.relation_count);
    }
    const auto w_att = params.attention_vector(l);
    auto g_w_att = grads.attention_vector(l);
    auto g_bias = grads.attention_bias();
    Eigen::VectorXd dz(cfg.attention_dim);

    for (std::size_t k = 0; k < edges.size(); ++k) {
      const auto& e = edges[k];
      const double scale = t.edge_scale.empty() ? 1.0 : t.edge_scale[k];
      if (scale == 0.0) continue;
      const Eigen::VectorXd g = scale * d_pre.col(e.tail_index);
      const double alpha = t.attention[k];
      d_head_msg.col(e.head_index) += alpha * g;
      d_rel_msg.col(e.relation) += alpha * g;
      if (!cfg.use_attention) continue;
      const double d_alpha = g.dot(t.head_msg.col(e.head_index) + t.rel_msg.col(e.relation));
      const double d_logit = d_alpha * alpha * (1.0 - alpha);
      const auto z = t.att_pre.col(static_cast<Eigen::Index>(k));
      for (Eigen::Index j = 0; j < cfg.attention_dim; ++j) {
        const bool on = z[j] > 0;
        g_w_att[j] += d_logit * (on ? z[j] : 0.0);
        dz[j] = on ? d_logit * w_att[j] : 0.0;
      }
      d_head_att.col(e.head_index) += dz;
      d_rel_att.col(e.relation) += dz;
      g_bias += dz;
    }

    const auto H = params.relations(l);
    grads.message(l).noalias() += d_head_msg * prev.transpose() + d_rel_msg * H.transpose();
    grads.relations(l).noalias() += params.message(l).transpose() * d_rel_msg;
    if (cfg.use_attention) {
      grads.attention_source(l).noalias() += d_head_att * prev.transpose();
      grads.attention_relation(l).noalias() += d_rel_att * H.transpose();
      grads.relations(l).noalias() += params.attention_relation(l).transpose() * d_rel_att;
    }
    if (l > 1) {
      d_hidden = params.message(l).transpose() * d_head_msg;
      if (cfg.use_attention) d_hidden.noalias() += params.attention_source(l).transpose() * d_head_att;
    }
  }
  return grads;
}

// Checkpoint, layout (little-endian):
//   magic "KUCNCKPT", u32 version = 1, u32 d, u32 d_a, i32 L,
//   u32 relation_count, u8 activation, u8 use_attention,
//   u32 name_count + names (u32 length + bytes each),
//   array<f64> parameter values in ModelParams layout.
inline constexpr io::Magic kCheckpointMagic{'K', 'U', 'C', 'N', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const ModelParams& p, const std::filesystem::path& path) {
  io::write_atomically(path, [&](std::ostream& out) {
    io::BinaryWriter w(out);
    const auto& c = p.config();
    w.magic(kCheckpointMagic);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint32_t>(c.dim);
    w.put<std::uint32_t>(c.attention_dim);
    w.put<std::int32_t>(c.depth);
    w.put<std::uint32_t>(c.relation_count);
    w.put<std::uint8_t>(static_cast<std::uint8_t>(c.activation));
    w.put<std::uint8_t>(c.use_attention ? 1 : 0);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(c.relation_names.size()));
    for (const auto& n : c.relation_names) w.put_string(n);
    w.put_array<double>(p.values());
    w.check(path.string());
  });
}

inline ModelParams load_checkpoint(const std::filesystem::path& path) {
  auto in = io::open_input(path, true);
  io::BinaryReader r(in, path.string());
  r.expect_magic(kCheckpointMagic);
  if (r.get<std::uint32_t>() != kCheckpointVersion) throw FormatError(path.string() + ": unsupported checkpoint");
  ModelConfig c;
  c.dim = r.get<std::uint32_t>();
  c.attention_dim = r.get<std::uint32_t>();
  c.depth = r.get<std::int32_t>();
  c.relation_count = r.get<std::uint32_t>();
  const auto act = r.get<std::uint8_t>();
  if (act > 2) throw FormatError(path.string() + ": bad activation code");
  c.activation = static_cast<Activation>(act);
  c.use_attention = r.get<std::uint8_t>() != 0;
  const auto names = r.get<std::uint32_t>();
  for (std::uint32_t k = 0; k < names; ++k) c.relation_names.push_back(r.get_string());
  ModelParams p(c);
  const auto values = r.get_array<double>();
  if (values.size() != p.size()) throw FormatError(path.string() + ": parameter count mismatch");
  std::copy(values.begin(), values.end(), p.values().begin());
  return p;
}

}  // namespace kucnet
