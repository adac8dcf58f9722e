#pragma once

#include <memory>
#include <random>
#include <string>
#include <vector>

#include "mmvap/nn/graph.hpp"

namespace mmvap::nn {

/// Owns all trainable parameters of a model, in creation order.
class ParamStore {
 public:
  explicit ParamStore(uint64_t seed) : rng_(seed) {}

  Param& create(const std::string& name, Eigen::Index rows, Eigen::Index cols, double init_scale) {
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value.resize(rows, cols);
    if (init_scale == 0.0) {
      p->value.setZero();
    } else {
      std::normal_distribution<double> dist(0.0, init_scale);
      for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) p->value(i, j) = dist(rng_);
    }
    p->zero_grad();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  Param& create_ones(const std::string& name, Eigen::Index cols) {
    auto p = std::make_unique<Param>();
    p->name = name;
    p->value.setOnes(1, cols);
    p->zero_grad();
    params_.push_back(std::move(p));
    return *params_.back();
  }

  std::vector<Param*> all() {
    std::vector<Param*> out;
    out.reserve(params_.size());
    for (auto& p : params_) out.push_back(p.get());
    return out;
  }

  size_t total_size() const {
    size_t n = 0;
    for (const auto& p : params_) n += p->size();
    return n;
  }

 private:
  std::mt19937_64 rng_;
  std::vector<std::unique_ptr<Param>> params_;
};

/// Per-forward context: training mode drives dropout; the rng is owned by the
/// caller so a fixed seed reproduces the exact mask sequence.
struct ForwardCtx {
  Tape tape;
  bool training = false;
  double dropout = 0.0;
  std::mt19937_64* rng = nullptr;

  NodePtr dropout_apply(NodePtr x) {
    if (!training || dropout <= 0.0 || rng == nullptr) return x;
    std::bernoulli_distribution keep(1.0 - dropout);
    Mat m(x->val.rows(), x->val.cols());
    for (Eigen::Index i = 0; i < m.rows(); ++i)
      for (Eigen::Index j = 0; j < m.cols(); ++j)
        m(i, j) = keep(*rng) ? 1.0 / (1.0 - dropout) : 0.0;
    return tape.mask(x, std::move(m));
  }
};

class Linear {
 public:
  Linear() = default;
  Linear(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index out)
      : w_(&store.create(name + ".w", in, out, std::sqrt(2.0 / static_cast<double>(in + out)))),
        b_(&store.create(name + ".b", 1, out, 0.0)) {}

  NodePtr apply(ForwardCtx& ctx, NodePtr x) const {
    return ctx.tape.add_row(ctx.tape.matmul(x, ctx.tape.leaf(*w_)), ctx.tape.leaf(*b_));
  }

 private:
  Param* w_ = nullptr;
  Param* b_ = nullptr;
};

class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(ParamStore& store, const std::string& name, Eigen::Index dims)
      : gain_(&store.create_ones(name + ".gain", dims)),
        bias_(&store.create(name + ".bias", 1, dims, 0.0)) {}

  NodePtr apply(ForwardCtx& ctx, NodePtr x) const {
    return ctx.tape.layer_norm(x, ctx.tape.leaf(*gain_), ctx.tape.leaf(*bias_));
  }

 private:
  Param* gain_ = nullptr;
  Param* bias_ = nullptr;
};

/// Multi-head attention with causal masking; queries at frame t attend keys
/// at frames <= t, for both self- and cross-stream use.
class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(ParamStore& store, const std::string& name, Eigen::Index d_model,
                     Eigen::Index n_heads)
      : n_heads_(n_heads),
        d_model_(d_model),
        wq_(store, name + ".q", d_model, d_model),
        wk_(store, name + ".k", d_model, d_model),
        wv_(store, name + ".v", d_model, d_model),
        wo_(store, name + ".o", d_model, d_model) {}

  NodePtr apply(ForwardCtx& ctx, NodePtr q_in, NodePtr kv_in) const {
    auto& t = ctx.tape;
    NodePtr q = wq_.apply(ctx, q_in);
    NodePtr k = wk_.apply(ctx, kv_in);
    NodePtr v = wv_.apply(ctx, kv_in);
    Eigen::Index dh = d_model_ / n_heads_;
    double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<NodePtr> heads;
    for (Eigen::Index h = 0; h < n_heads_; ++h) {
      NodePtr qh = t.slice_cols(q, h * dh, dh);
      NodePtr kh = t.slice_cols(k, h * dh, dh);
      NodePtr vh = t.slice_cols(v, h * dh, dh);
      NodePtr attn = t.causal_softmax(t.scale(t.matmul_nt(qh, kh), scl));
      heads.push_back(t.matmul(attn, vh));
    }
    return wo_.apply(ctx, t.concat_cols(heads));
  }

 private:
  Eigen::Index n_heads_ = 1;
  Eigen::Index d_model_ = 0;
  Linear wq_, wk_, wv_, wo_;
};

/// Pre-norm transformer decoder layer with a GeLU feed-forward. The same
/// layer serves self-attention (q = kv) and cross-attention (separate kv
/// normalization), with weights shared across however many streams it is
/// applied to.
class TransformerLayer {
 public:
  TransformerLayer() = default;
  TransformerLayer(ParamStore& store, const std::string& name, Eigen::Index d_model,
                   Eigen::Index n_heads, Eigen::Index ff_dim, bool cross)
      : attn_(store, name + ".attn", d_model, n_heads),
        ln_q_(store, name + ".ln_q", d_model),
        ln_ff_(store, name + ".ln_ff", d_model),
        ff1_(store, name + ".ff1", d_model, ff_dim),
        ff2_(store, name + ".ff2", ff_dim, d_model) {
    if (cross) ln_kv_ = LayerNorm(store, name + ".ln_kv", d_model);
    cross_ = cross;
  }

  NodePtr apply(ForwardCtx& ctx, NodePtr x_q, NodePtr x_kv) const {
    auto& t = ctx.tape;
    NodePtr nq = ln_q_.apply(ctx, x_q);
    NodePtr nkv = (x_kv == x_q) ? nq : (cross_ ? ln_kv_ : ln_q_).apply(ctx, x_kv);
    NodePtr h = t.add(x_q, ctx.dropout_apply(attn_.apply(ctx, nq, nkv)));
    NodePtr ff = ff2_.apply(ctx, t.gelu(ff1_.apply(ctx, ln_ff_.apply(ctx, h))));
    return t.add(h, ctx.dropout_apply(ff));
  }

  NodePtr apply_self(ForwardCtx& ctx, NodePtr x) const { return apply(ctx, x, x); }

 private:
  MultiHeadAttention attn_;
  LayerNorm ln_q_, ln_kv_, ln_ff_;
  Linear ff1_, ff2_;
  bool cross_ = false;
};

class SelfAttnBlock {
 public:
  SelfAttnBlock() = default;
  SelfAttnBlock(ParamStore& store, const std::string& name, Eigen::Index d_model,
                Eigen::Index n_heads, Eigen::Index ff_dim, Eigen::Index n_layers) {
    for (Eigen::Index i = 0; i < n_layers; ++i)
      layers_.emplace_back(store, name + ".l" + std::to_string(i), d_model, n_heads, ff_dim, false);
  }

  NodePtr apply(ForwardCtx& ctx, NodePtr x) const {
    for (const auto& l : layers_) x = l.apply_self(ctx, x);
    return x;
  }

 private:
  std::vector<TransformerLayer> layers_;
};

/// Cross-attention block: per layer, two transformer applications with shared
/// weights, one per stream direction. joint() returns the symmetric
/// layer-normalized GeLU of the summed streams; per_speaker() keeps the two
/// directed streams separate for the speaker-level readout.
class CrossAttnBlock {
 public:
  CrossAttnBlock() = default;
  CrossAttnBlock(ParamStore& store, const std::string& name, Eigen::Index d_model,
                 Eigen::Index n_heads, Eigen::Index ff_dim, Eigen::Index n_layers)
      : out_norm_(store, name + ".out_norm", d_model) {
    for (Eigen::Index i = 0; i < n_layers; ++i)
      layers_.emplace_back(store, name + ".l" + std::to_string(i), d_model, n_heads, ff_dim, true);
  }

  NodePtr joint(ForwardCtx& ctx, NodePtr x1, NodePtr x2) const {
    auto [y12, y21] = run(ctx, x1, x2);
    return sigma(ctx, ctx.tape.add(y12, y21));
  }

  std::pair<NodePtr, NodePtr> per_speaker(ForwardCtx& ctx, NodePtr x1, NodePtr x2) const {
    auto [y12, y21] = run(ctx, x1, x2);
    return {sigma(ctx, y12), sigma(ctx, y21)};
  }

 private:
  std::pair<NodePtr, NodePtr> run(ForwardCtx& ctx, NodePtr x1, NodePtr x2) const {
    for (const auto& l : layers_) {
      NodePtr y12 = l.apply(ctx, x1, x2);
      NodePtr y21 = l.apply(ctx, x2, x1);
      x1 = y12;
      x2 = y21;
    }
    return {x1, x2};
  }

  NodePtr sigma(ForwardCtx& ctx, NodePtr x) const {
    return ctx.tape.gelu(out_norm_.apply(ctx, x));
  }

  std::vector<TransformerLayer> layers_;
  LayerNorm out_norm_;
};

/// Single-hidden-layer MLP used to project input features to d_model.
class ProjectionMlp {
 public:
  ProjectionMlp() = default;
  ProjectionMlp(ParamStore& store, const std::string& name, Eigen::Index in, Eigen::Index hidden,
                Eigen::Index out)
      : l1_(store, name + ".h", in, hidden), l2_(store, name + ".out", hidden, out) {}

  NodePtr apply(ForwardCtx& ctx, NodePtr x) const {
    return l2_.apply(ctx, ctx.tape.gelu(l1_.apply(ctx, x)));
  }

 private:
  Linear l1_, l2_;
};

}  // namespace mmvap::nn
