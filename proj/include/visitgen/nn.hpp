// Parameter storage, Adam updates, and transformer building blocks (post-norm
// encoder layers and single-query cross-attention heads) expressed as tape
// operations.
#pragma once

#include <cmath>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "visitgen/autograd.hpp"
#include "visitgen/rng.hpp"
#include "visitgen/tensor.hpp"

namespace visitgen::nn {

using ag::Tape;
using ag::Var;

// Named parameter tensors with Adam state. std::map keeps iteration order
// deterministic, which checkpoint layout and update order rely on.
class ParamStore {
public:
    Matrix& create(const std::string& name, Matrix init) {
        auto [it, inserted] = params_.emplace(name, std::move(init));
        if (!inserted) throw ArgumentError("parameter already exists: " + name);
        return it->second;
    }

    Matrix& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
        return it->second;
    }
    const Matrix& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw ArgumentError("unknown parameter: " + name);
        return it->second;
    }
    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    const std::map<std::string, Matrix>& all() const { return params_; }
    std::map<std::string, Matrix>& all() { return params_; }

    void zero_grads() { grads_.clear(); }

    void add_grad(const std::string& name, const Matrix& g, double scale = 1.0) {
        auto it = grads_.find(name);
        if (it == grads_.end()) {
            Matrix m = g;
            if (scale != 1.0)
                for (double& v : m.a) v *= scale;
            grads_.emplace(name, std::move(m));
        } else {
            Matrix& m = it->second;
            for (std::size_t i = 0; i < g.size(); ++i) m.a[i] += scale * g.a[i];
        }
    }

    const std::map<std::string, Matrix>& grads() const { return grads_; }

    // One Adam step over the accumulated gradients (scaled by grad_scale).
    void adam_step(double lr, double grad_scale = 1.0, double beta1 = 0.9, double beta2 = 0.999,
                   double eps = 1e-8) {
        ++step_;
        const double bc1 = 1.0 - std::pow(beta1, double(step_));
        const double bc2 = 1.0 - std::pow(beta2, double(step_));
        for (const auto& [name, g] : grads_) {
            Matrix& p = at(name);
            Matrix& m = state(m_, name, p);
            Matrix& v = state(v_, name, p);
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double gi = g.a[i] * grad_scale;
                m.a[i] = beta1 * m.a[i] + (1.0 - beta1) * gi;
                v.a[i] = beta2 * v.a[i] + (1.0 - beta2) * gi * gi;
                const double mh = m.a[i] / bc1;
                const double vh = v.a[i] / bc2;
                p.a[i] -= lr * mh / (std::sqrt(vh) + eps);
            }
        }
    }

    std::int64_t step() const { return step_; }

    // Deep copy of parameter values only (used to keep the best checkpoint).
    std::map<std::string, Matrix> snapshot() const { return params_; }
    void restore(const std::map<std::string, Matrix>& snap) {
        for (const auto& [name, m] : snap) at(name) = m;
    }

private:
    static Matrix& state(std::map<std::string, Matrix>& bag, const std::string& name,
                         const Matrix& like) {
        auto it = bag.find(name);
        if (it == bag.end()) it = bag.emplace(name, Matrix(like.rows, like.cols)).first;
        return it->second;
    }

    std::map<std::string, Matrix> params_;
    std::map<std::string, Matrix> grads_;
    std::map<std::string, Matrix> m_, v_;
    std::int64_t step_ = 0;
};

// Binds store parameters to leaf nodes on a tape, once per name, and flushes
// node gradients back after backward().
class BoundParams {
public:
    BoundParams(Tape& tape, ParamStore& store) : tape_(&tape), store_(&store) {}

    Var operator()(const std::string& name) {
        auto it = bound_.find(name);
        if (it != bound_.end()) return it->second;
        Var v = tape_->leaf(store_->at(name));
        bound_.emplace(name, v);
        return v;
    }

    void flush_grads() {
        for (const auto& [name, var] : bound_) {
            const Matrix& g = tape_->grad(var);
            if (g.size() != 0) store_->add_grad(name, g);
        }
    }

private:
    Tape* tape_;
    ParamStore* store_;
    std::map<std::string, Var> bound_;
};

// ---------------------------------------------------------------------------
// Initialization
// ---------------------------------------------------------------------------

inline Matrix glorot_uniform(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    const double limit = std::sqrt(6.0 / double(rows + cols));
    for (double& v : m.a) v = rng.uniform(-limit, limit);
    return m;
}

inline Matrix normal_init(int rows, int cols, double std, Rng& rng) {
    Matrix m(rows, cols);
    for (double& v : m.a) v = rng.normal(0.0, std);
    return m;
}

inline Matrix constant_init(int rows, int cols, double value) { return Matrix(rows, cols, value); }

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

struct DropoutCtx {
    bool enabled = false;
    double p = 0.0;
    Rng* rng = nullptr;

    Var apply(Tape& t, Var x) const {
        if (!enabled || p <= 0.0) return x;
        const Matrix& X = t.val(x);
        Matrix mask(X.rows, X.cols);
        const double keep = 1.0 - p;
        for (double& v : mask.a) v = rng->uniform() < keep ? 1.0 / keep : 0.0;
        return t.mul_const(x, std::move(mask));
    }
};

// ---------------------------------------------------------------------------
// Attention masks (constants)
// ---------------------------------------------------------------------------

inline constexpr double kMaskOff = -std::numeric_limits<double>::infinity();

// Causal self-attention with PAD keys knocked out; the diagonal stays open so
// PAD rows still normalize.
inline Matrix causal_mask(const std::vector<bool>& is_pad) {
    const int L = static_cast<int>(is_pad.size());
    Matrix m(L, L);
    for (int r = 0; r < L; ++r)
        for (int c = 0; c < L; ++c) {
            const bool open = c <= r && (!is_pad[static_cast<std::size_t>(c)] || c == r);
            m(r, c) = open ? 0.0 : kMaskOff;
        }
    return m;
}

// Cross-attention for target rows: row i (predicting token i+1) may see
// encoder positions <= i.
inline Matrix cross_mask(const std::vector<bool>& is_pad, int n_targets) {
    const int L = static_cast<int>(is_pad.size());
    Matrix m(n_targets, L);
    for (int r = 0; r < n_targets; ++r)
        for (int c = 0; c < L; ++c) {
            const bool open = c <= r && !is_pad[static_cast<std::size_t>(c)];
            m(r, c) = open ? 0.0 : kMaskOff;
        }
    return m;
}

// ---------------------------------------------------------------------------
// Blocks
// ---------------------------------------------------------------------------

struct BlockDims {
    int n_heads = 1;
    int ff_dim = 1;
    double ln_eps = 1e-5;
};

// Multi-head attention with separate query/key-value sources. q: T x dq,
// kv: L x dkv. Heads split dq; output is T x dq.
inline Var multi_head_attention(Tape& t, BoundParams& P, const std::string& prefix, Var q, Var kv,
                                const Matrix& mask, int n_heads) {
    const int dq = t.val(q).cols;
    if (dq % n_heads != 0) throw ConfigError("attention: query dim not divisible by heads");
    const int dh = dq / n_heads;
    Var Q = t.add_rowvec(t.matmul(q, P(prefix + ".wq")), P(prefix + ".bq"));
    Var K = t.add_rowvec(t.matmul(kv, P(prefix + ".wk")), P(prefix + ".bk"));
    Var V = t.add_rowvec(t.matmul(kv, P(prefix + ".wv")), P(prefix + ".bv"));
    const double scale = 1.0 / std::sqrt(double(dh));
    std::vector<Var> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Var Qh = t.slice_cols(Q, h * dh, (h + 1) * dh);
        Var Kh = t.slice_cols(K, h * dh, (h + 1) * dh);
        Var Vh = t.slice_cols(V, h * dh, (h + 1) * dh);
        Var scores = t.affine(t.matmul_nt(Qh, Kh), scale, 0.0);
        Var probs = t.softmax_rows(scores, &mask);
        heads.push_back(t.matmul(probs, Vh));
    }
    Var cat = n_heads == 1 ? heads[0] : t.concat_cols(heads);
    return t.add_rowvec(t.matmul(cat, P(prefix + ".wo")), P(prefix + ".bo"));
}

inline Var feed_forward(Tape& t, BoundParams& P, const std::string& prefix, Var x) {
    Var h = t.relu(t.add_rowvec(t.matmul(x, P(prefix + ".w1")), P(prefix + ".b1")));
    return t.add_rowvec(t.matmul(h, P(prefix + ".w2")), P(prefix + ".b2"));
}

// Post-norm encoder layer: LN(x + MHA(x)), then LN(x + FF(x)).
inline Var encoder_layer(Tape& t, BoundParams& P, const std::string& prefix, Var x,
                         const Matrix& mask, const BlockDims& dims, const DropoutCtx& drop) {
    Var att = multi_head_attention(t, P, prefix + ".attn", x, x, mask, dims.n_heads);
    Var x1 = t.layernorm_rows(t.add(x, drop.apply(t, att)), P(prefix + ".ln1.g"),
                              P(prefix + ".ln1.b"), dims.ln_eps);
    Var ff = feed_forward(t, P, prefix + ".ff", x1);
    return t.layernorm_rows(t.add(x1, drop.apply(t, ff)), P(prefix + ".ln2.g"),
                            P(prefix + ".ln2.b"), dims.ln_eps);
}

inline Var encoder_stack(Tape& t, BoundParams& P, const std::string& prefix, Var x,
                         const Matrix& mask, int n_layers, const BlockDims& dims,
                         const DropoutCtx& drop) {
    for (int l = 0; l < n_layers; ++l)
        x = encoder_layer(t, P, prefix + ".layer" + std::to_string(l), x, mask, dims, drop);
    return x;
}

// Decoder-style cross-attention block around per-target queries: the query
// attends over encoder states, then a feed-forward refines it; residuals and
// layer normalization as in the standard decoder sublayers.
inline Var cross_attention_block(Tape& t, BoundParams& P, const std::string& prefix, Var queries,
                                 Var enc, const Matrix& mask, const BlockDims& dims,
                                 const DropoutCtx& drop) {
    Var att = multi_head_attention(t, P, prefix + ".attn", queries, enc, mask, dims.n_heads);
    Var x1 = t.layernorm_rows(t.add(queries, drop.apply(t, att)), P(prefix + ".ln1.g"),
                              P(prefix + ".ln1.b"), dims.ln_eps);
    Var ff = feed_forward(t, P, prefix + ".ff", x1);
    return t.layernorm_rows(t.add(x1, drop.apply(t, ff)), P(prefix + ".ln2.g"),
                            P(prefix + ".ln2.b"), dims.ln_eps);
}

// ---------------------------------------------------------------------------
// Parameter creation for the blocks above
// ---------------------------------------------------------------------------

inline void create_attention_params(ParamStore& s, const std::string& prefix, int dq, int dkv,
                                    Rng& rng) {
    s.create(prefix + ".wq", glorot_uniform(dq, dq, rng));
    s.create(prefix + ".bq", Matrix(1, dq));
    s.create(prefix + ".wk", glorot_uniform(dkv, dq, rng));
    s.create(prefix + ".bk", Matrix(1, dq));
    s.create(prefix + ".wv", glorot_uniform(dkv, dq, rng));
    s.create(prefix + ".bv", Matrix(1, dq));
    s.create(prefix + ".wo", glorot_uniform(dq, dq, rng));
    s.create(prefix + ".bo", Matrix(1, dq));
}

inline void create_ff_params(ParamStore& s, const std::string& prefix, int d, int ff, Rng& rng) {
    s.create(prefix + ".w1", glorot_uniform(d, ff, rng));
    s.create(prefix + ".b1", Matrix(1, ff));
    s.create(prefix + ".w2", glorot_uniform(ff, d, rng));
    s.create(prefix + ".b2", Matrix(1, d));
}

inline void create_layernorm_params(ParamStore& s, const std::string& prefix, int d) {
    s.create(prefix + ".g", Matrix(1, d, 1.0));
    s.create(prefix + ".b", Matrix(1, d));
}

inline void create_encoder_layer_params(ParamStore& s, const std::string& prefix, int d, int ff,
                                        Rng& rng) {
    create_attention_params(s, prefix + ".attn", d, d, rng);
    create_layernorm_params(s, prefix + ".ln1", d);
    create_ff_params(s, prefix + ".ff", d, ff, rng);
    create_layernorm_params(s, prefix + ".ln2", d);
}

inline void create_encoder_stack_params(ParamStore& s, const std::string& prefix, int n_layers,
                                        int d, int ff, Rng& rng) {
    for (int l = 0; l < n_layers; ++l)
        create_encoder_layer_params(s, prefix + ".layer" + std::to_string(l), d, ff, rng);
}

inline void create_cross_block_params(ParamStore& s, const std::string& prefix, int dq, int dkv,
                                      int ff, Rng& rng) {
    create_attention_params(s, prefix + ".attn", dq, dkv, rng);
    create_layernorm_params(s, prefix + ".ln1", dq);
    create_ff_params(s, prefix + ".ff", dq, ff, rng);
    create_layernorm_params(s, prefix + ".ln2", dq);
}

}  // namespace visitgen::nn
