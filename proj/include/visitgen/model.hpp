// The joint spatiotemporal sequence model: a causal transformer encoder over
// embedded visit tokens, a region classification head (second encoder stack +
// linear), and two mixture-density heads (travel time, duration) driven by
// cross-attention queries built from teacher-forced targets.
//
// Factorization per predicted visit: region first, then travel time
// conditioned on the region, then duration conditioned on region and arrival.
// Special-token positions contribute only the classification term.
#pragma once

#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "visitgen/autograd.hpp"
#include "visitgen/core.hpp"
#include "visitgen/encoders.hpp"
#include "visitgen/gmm.hpp"
#include "visitgen/nn.hpp"
#include "visitgen/rng.hpp"
#include "visitgen/tensor.hpp"
#include "visitgen/vocab.hpp"

namespace visitgen::model {

using ag::Tape;
using ag::Var;

enum class Variant { Full, Independence, Regression };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::Full: return "full";
        case Variant::Independence: return "independence";
        case Variant::Regression: return "regression";
    }
    return "?";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "full") return Variant::Full;
    if (s == "independence") return Variant::Independence;
    if (s == "regression") return Variant::Regression;
    throw ConfigError("unknown variant: " + s);
}

struct ModelConfig {
    int n_layers = 2;
    int n_heads = 8;
    int ff_dim = 32;
    int gmm_components = 3;
    double dropout = 0.1;
    double ln_eps = 1e-5;
    double learning_rate = 1e-4;
    int batch_size = 64;
    int max_seq_len = 512;
    enc::EncoderConfig enc;

    int model_dim() const { return enc.model_dim(); }

    void validate() const {
        enc.validate();
        if (n_layers < 1 || n_heads < 1 || ff_dim < 1 || gmm_components < 1 || batch_size < 1 ||
            max_seq_len < 2)
            throw ConfigError("model: all sizes must be positive");
        if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout outside [0,1)");
        if (!(ln_eps > 0.0) || !(learning_rate > 0.0))
            throw ConfigError("model: ln_eps and learning_rate must be positive");
        if (model_dim() % n_heads != 0)
            throw ConfigError("model: model_dim " + std::to_string(model_dim()) +
                              " not divisible by n_heads " + std::to_string(n_heads));
        if (enc.region_emb_dim % n_heads != 0)
            throw ConfigError("model: region_emb_dim not divisible by n_heads");
        if ((enc.region_emb_dim + enc.t2v_dim) % n_heads != 0)
            throw ConfigError("model: region_emb_dim + t2v_dim not divisible by n_heads");
    }

    // Published settings for the two reference datasets.
    static ModelConfig geolife() {
        ModelConfig c;
        c.n_layers = 2;
        c.n_heads = 8;
        c.ff_dim = 32;
        c.gmm_components = 3;
        c.batch_size = 64;
        c.enc.region_emb_dim = 32;
        c.enc.s2v_scales = 64;
        c.enc.t2v_dim = 16;
        return c;
    }
    static ModelConfig mobilitysim() {
        ModelConfig c;
        c.n_layers = 4;
        c.n_heads = 2;
        c.ff_dim = 256;
        c.gmm_components = 5;
        c.batch_size = 128;
        c.enc.region_emb_dim = 64;
        c.enc.s2v_scales = 64;
        c.enc.t2v_dim = 16;
        return c;
    }
    // Small setting for fast CPU runs.
    static ModelConfig desk() {
        ModelConfig c;
        c.n_layers = 2;
        c.n_heads = 4;
        c.ff_dim = 64;
        c.gmm_components = 3;
        c.dropout = 0.0;
        c.learning_rate = 1e-3;
        c.batch_size = 32;
        c.enc.s2v_scales = 6;
        c.enc.s2v_max = 0.0;  // resolved from the data extent
        c.enc.t2v_dim = 8;
        c.enc.region_emb_dim = 16;
        return c;
    }
};

inline void to_json(nlohmann::json& j, const ModelConfig& c) {
    j = nlohmann::json{{"n_layers", c.n_layers},
                       {"n_heads", c.n_heads},
                       {"ff_dim", c.ff_dim},
                       {"gmm_components", c.gmm_components},
                       {"dropout", c.dropout},
                       {"ln_eps", c.ln_eps},
                       {"learning_rate", c.learning_rate},
                       {"batch_size", c.batch_size},
                       {"max_seq_len", c.max_seq_len},
                       {"s2v_scales", c.enc.s2v_scales},
                       {"s2v_min", c.enc.s2v_min},
                       {"s2v_max", c.enc.s2v_max},
                       {"t2v_dim", c.enc.t2v_dim},
                       {"region_emb_dim", c.enc.region_emb_dim}};
}

inline void from_json(const nlohmann::json& j, ModelConfig& c) {
    c.n_layers = j.value("n_layers", c.n_layers);
    c.n_heads = j.value("n_heads", c.n_heads);
    c.ff_dim = j.value("ff_dim", c.ff_dim);
    c.gmm_components = j.value("gmm_components", c.gmm_components);
    c.dropout = j.value("dropout", c.dropout);
    c.ln_eps = j.value("ln_eps", c.ln_eps);
    c.learning_rate = j.value("learning_rate", c.learning_rate);
    c.batch_size = j.value("batch_size", c.batch_size);
    c.max_seq_len = j.value("max_seq_len", c.max_seq_len);
    c.enc.s2v_scales = j.value("s2v_scales", c.enc.s2v_scales);
    c.enc.s2v_min = j.value("s2v_min", c.enc.s2v_min);
    c.enc.s2v_max = j.value("s2v_max", c.enc.s2v_max);
    c.enc.t2v_dim = j.value("t2v_dim", c.enc.t2v_dim);
    c.enc.region_emb_dim = j.value("region_emb_dim", c.enc.region_emb_dim);
}

// ---------------------------------------------------------------------------
// Model input: one token sequence with teacher-forced targets
// ---------------------------------------------------------------------------

struct ModelInstance {
    // Per token (length L)
    std::vector<int> token_ids;
    std::vector<bool> is_visit;
    std::vector<bool> is_pad;
    std::vector<double> arr_days, dep_days;  // encoder times; 0 for specials
    std::vector<Point> locations;            // zeroed for specials

    // Per target position p = row + 1 (length L-1)
    std::vector<int> target_ids;
    std::vector<bool> target_counted;   // enters the loss denominator
    std::vector<bool> target_is_visit;
    std::vector<bool> target_has_travel;
    std::vector<double> travel_hours;        // scaled travel targets
    std::vector<double> duration_days;       // scaled duration targets
    std::vector<double> target_arrival_days; // duration-head query times
    std::vector<bool> eval_mark;             // metric positions (task-dependent)

    int length() const { return static_cast<int>(token_ids.size()); }
    int n_targets() const { return length() - 1; }
};

inline ModelInstance build_instance(const std::vector<Token>& tokens, const RegionVocabulary& vocab,
                                    const TimeScaling& scaling) {
    if (tokens.size() < 2) throw ArgumentError("instance needs at least 2 tokens");
    ModelInstance in;
    const std::size_t L = tokens.size();
    in.token_ids.reserve(L);
    for (const auto& tk : tokens) {
        in.token_ids.push_back(vocab.token_id(tk));
        in.is_visit.push_back(tk.is_visit());
        in.is_pad.push_back(tk.kind == TokenKind::Pad);
        if (tk.is_visit()) {
            in.arr_days.push_back(scaling.encoder_time(tk.visit.arrival));
            in.dep_days.push_back(scaling.encoder_time(tk.visit.departure));
            in.locations.push_back(tk.visit.location);
        } else {
            in.arr_days.push_back(0.0);
            in.dep_days.push_back(0.0);
            in.locations.push_back(Point{});
        }
    }
    for (std::size_t p = 1; p < L; ++p) {
        const Token& tk = tokens[p];
        in.target_ids.push_back(in.token_ids[p]);
        in.target_counted.push_back(tk.kind != TokenKind::Pad);
        in.target_is_visit.push_back(tk.is_visit());
        const bool has_travel = tk.is_visit() && tk.anchor_departure >= 0;
        in.target_has_travel.push_back(has_travel);
        in.travel_hours.push_back(
            has_travel ? scaling.travel_target(tk.visit.arrival - tk.anchor_departure) : 0.0);
        in.duration_days.push_back(tk.is_visit() ? scaling.duration_target(duration(tk.visit))
                                                  : 0.0);
        in.target_arrival_days.push_back(tk.is_visit() ? scaling.encoder_time(tk.visit.arrival)
                                                        : 0.0);
        in.eval_mark.push_back(false);
    }
    return in;
}

// ---------------------------------------------------------------------------
// Forward results
// ---------------------------------------------------------------------------

struct HeadVars {
    // Mixture heads: T x K each. Regression: `mu` holds the T x 1 prediction.
    Var weights, mu, sigma;
};

struct ForwardVars {
    Var H;              // L x d
    Var region_logits;  // L x V (row i scores token i+1)
    HeadVars travel;    // rows = targets 1..L-1
    HeadVars duration;
};

struct LossBreakdown {
    Var total;          // 1x1 node: summed NLL over counted positions
    double count = 0;   // positions in the denominator
};

// ---------------------------------------------------------------------------
// The model
// ---------------------------------------------------------------------------

class VisitModel {
public:
    VisitModel(ModelConfig config, Variant variant, int vocab_size, std::uint64_t init_seed)
        : cfg_(std::move(config)), variant_(variant), vocab_size_(vocab_size) {
        cfg_.validate();
        if (vocab_size_ < 6) throw ConfigError("model: vocabulary too small");
        Rng rng(mix_seed(init_seed, 0xC0DE));
        const int d = cfg_.model_dim();
        const int emb = cfg_.enc.region_emb_dim;
        const int t2v = cfg_.enc.t2v_dim;

        store_.create("emb.table", nn::normal_init(vocab_size_, emb, 0.1, rng));
        Matrix omega(1, t2v), phi(1, t2v);
        omega(0, 0) = 1.0;
        for (int i = 1; i < t2v; ++i) omega(0, i) = 2.0 * 3.14159265358979323846 * i;
        store_.create("t2v.omega", std::move(omega));
        store_.create("t2v.phi", std::move(phi));

        nn::create_encoder_stack_params(store_, "backbone", cfg_.n_layers, d, cfg_.ff_dim, rng);
        nn::create_encoder_stack_params(store_, "regionhead", cfg_.n_layers, d, cfg_.ff_dim, rng);
        store_.create("regionhead.out.w", nn::glorot_uniform(d, vocab_size_, rng));
        store_.create("regionhead.out.b", Matrix(1, vocab_size_));

        create_temporal_head("travel", emb, d, rng);
        create_temporal_head("duration", emb + t2v, d, rng);
        if (variant_ == Variant::Independence) {
            store_.create("travel.query", nn::normal_init(1, emb, 0.1, rng));
            store_.create("duration.query", nn::normal_init(1, emb + t2v, 0.1, rng));
        }
    }

    const ModelConfig& config() const { return cfg_; }
    Variant variant() const { return variant_; }
    int vocab_size() const { return vocab_size_; }
    nn::ParamStore& store() { return store_; }
    const nn::ParamStore& store() const { return store_; }

    // Resolve the data-dependent spatial encoding diameter once per dataset.
    void resolve_s2v_max(double value) {
        if (cfg_.enc.s2v_max <= 0.0) cfg_.enc.s2v_max = std::max(value, 2.0 * cfg_.enc.s2v_min);
    }

    // ------------------------------------------------------------------
    // Forward
    // ------------------------------------------------------------------

    ForwardVars forward(Tape& t, nn::BoundParams& P, const ModelInstance& in,
                        const nn::DropoutCtx& drop) const {
        const int L = in.length();
        if (L > cfg_.max_seq_len)
            throw ArgumentError("sequence length " + std::to_string(L) + " exceeds max_seq_len " +
                                std::to_string(cfg_.max_seq_len));
        ForwardVars out;
        out.H = encode(t, P, in, drop);
        out.region_logits = region_logits(t, P, out.H, in, drop);
        const Matrix xmask = nn::cross_mask(in.is_pad, in.n_targets());
        out.travel = temporal_head(t, P, "travel", travel_queries(t, P, in), out.H, xmask, drop);
        out.duration =
            temporal_head(t, P, "duration", duration_queries(t, P, in), out.H, xmask, drop);
        return out;
    }

    // Sequence encoder: concatenated spatiotemporal embeddings + positional
    // encoding through the causal backbone.
    Var encode(Tape& t, nn::BoundParams& P, const ModelInstance& in,
               const nn::DropoutCtx& drop) const {
        const int L = in.length();
        Var x = embed_tokens(t, P, in);
        // As in the cited transformer, inputs are scaled by sqrt(d) before
        // the positional encoding so position terms do not drown content.
        x = t.affine(x, std::sqrt(double(cfg_.model_dim())), 0.0);
        Matrix pe(L, cfg_.model_dim());
        for (int p = 0; p < L; ++p) {
            const auto row = enc::positional_encoding_row(static_cast<std::size_t>(p),
                                                          cfg_.model_dim());
            for (int c = 0; c < cfg_.model_dim(); ++c) pe(p, c) = row[static_cast<std::size_t>(c)];
        }
        x = t.add_const(x, pe);
        x = drop.apply(t, x);
        const Matrix mask = nn::causal_mask(in.is_pad);
        const nn::BlockDims dims{cfg_.n_heads, cfg_.ff_dim, cfg_.ln_eps};
        return nn::encoder_stack(t, P, "backbone", x, mask, cfg_.n_layers, dims, drop);
    }

    Var region_logits(Tape& t, nn::BoundParams& P, Var H, const ModelInstance& in,
                      const nn::DropoutCtx& drop) const {
        const Matrix mask = nn::causal_mask(in.is_pad);
        const nn::BlockDims dims{cfg_.n_heads, cfg_.ff_dim, cfg_.ln_eps};
        Var h2 = nn::encoder_stack(t, P, "regionhead", H, mask, cfg_.n_layers, dims, drop);
        return t.add_rowvec(t.matmul(h2, P("regionhead.out.w")), P("regionhead.out.b"));
    }

    // ------------------------------------------------------------------
    // Loss
    // ------------------------------------------------------------------

    LossBreakdown joint_nll_loss(Tape& t, nn::BoundParams& P, const ModelInstance& in,
                                 const nn::DropoutCtx& drop) const {
        const ForwardVars fw = forward(t, P, in, drop);
        return loss_from_forward(t, fw, in);
    }

    LossBreakdown loss_from_forward(Tape& t, const ForwardVars& fw, const ModelInstance& in) const {
        const int T = in.n_targets();
        LossBreakdown lb;

        // Classification term (region id or special-token id).
        Var logits = t.slice_rows(fw.region_logits, 0, T);
        Var lse = t.logsumexp_rows(logits);
        Var picked = t.pick_per_row(logits, std::vector<int>(in.target_ids.begin(),
                                                             in.target_ids.end()));
        Var nll_region = t.sub(lse, picked);
        Matrix w_region(T, 1);
        for (int i = 0; i < T; ++i) {
            if (in.target_counted[static_cast<std::size_t>(i)]) {
                w_region(i, 0) = 1.0;
                lb.count += 1.0;
            }
        }
        Var total = t.weighted_sum(nll_region, std::move(w_region));

        // Temporal terms only where the target is a visit.
        Matrix w_travel(T, 1), w_duration(T, 1);
        Matrix x_travel(T, 1), x_duration(T, 1);
        for (int i = 0; i < T; ++i) {
            const auto si = static_cast<std::size_t>(i);
            if (in.target_counted[si] && in.target_is_visit[si]) {
                if (in.target_has_travel[si]) w_travel(i, 0) = 1.0;
                w_duration(i, 0) = 1.0;
            }
            x_travel(i, 0) = in.travel_hours[si];
            x_duration(i, 0) = in.duration_days[si];
        }
        total = t.add(total, temporal_loss(t, fw.travel, std::move(x_travel), std::move(w_travel)));
        total = t.add(total, temporal_loss(t, fw.duration, std::move(x_duration),
                                           std::move(w_duration)));
        lb.total = total;
        return lb;
    }

    // ------------------------------------------------------------------
    // Inference-side heads: one query against the full context
    // ------------------------------------------------------------------

    struct SingleHeadResult {
        gmm::GaussianMixtureParams params;  // mixture variants
        double regression_value = 0.0;      // regression variant
    };

    SingleHeadResult travel_params_single(Tape& t, nn::BoundParams& P, Var H,
                                          const std::vector<bool>& is_pad, int region_id) const {
        Var q = variant_ == Variant::Independence
                    ? t.gather_rows(P("travel.query"), {0})
                    : t.gather_rows(P("emb.table"), {region_id});
        return head_single(t, P, "travel", q, H, is_pad);
    }

    SingleHeadResult duration_params_single(Tape& t, nn::BoundParams& P, Var H,
                                            const std::vector<bool>& is_pad, int region_id,
                                            double arrival_days) const {
        Var q;
        if (variant_ == Variant::Independence) {
            q = t.gather_rows(P("duration.query"), {0});
        } else {
            Var e = t.gather_rows(P("emb.table"), {region_id});
            Matrix tcol(1, 1);
            tcol(0, 0) = arrival_days;
            Var tv = t.time2vec(P("t2v.omega"), P("t2v.phi"), std::move(tcol));
            q = t.concat_cols({e, tv});
        }
        return head_single(t, P, "duration", q, H, is_pad);
    }

    // Extract mixture parameters for every target row of a training forward.
    std::vector<gmm::GaussianMixtureParams> mixture_rows(const Tape& t, const HeadVars& head) const {
        const Matrix& W = t.val(head.weights);
        const Matrix& M = t.val(head.mu);
        const Matrix& S = t.val(head.sigma);
        std::vector<gmm::GaussianMixtureParams> out(static_cast<std::size_t>(W.rows));
        for (int r = 0; r < W.rows; ++r) {
            auto& p = out[static_cast<std::size_t>(r)];
            p.weights.assign(W.row(r), W.row(r) + W.cols);
            p.means.assign(M.row(r), M.row(r) + M.cols);
            p.scales.assign(S.row(r), S.row(r) + S.cols);
        }
        return out;
    }

private:
    void create_temporal_head(const std::string& name, int q_dim, int d, Rng& rng) {
        nn::create_cross_block_params(store_, name, q_dim, d, cfg_.ff_dim, rng);
        const int out_dim = variant_ == Variant::Regression ? 1 : 3 * cfg_.gmm_components;
        store_.create(name + ".out.w", nn::glorot_uniform(q_dim, out_dim, rng));
        Matrix b(1, out_dim);
        if (variant_ != Variant::Regression) {
            // Spread the initial component means so the mixture starts diverse.
            const int K = cfg_.gmm_components;
            for (int k = 0; k < K; ++k)
                b(0, K + k) = K == 1 ? 0.5 : 1.5 * double(k) / double(K - 1);
        }
        store_.create(name + ".out.b", std::move(b));
    }

    Var embed_tokens(Tape& t, nn::BoundParams& P, const ModelInstance& in) const {
        const int L = in.length();
        // Constant spatial slots (zero rows for specials).
        Matrix spatial(L, cfg_.enc.spatial_dim());
        Matrix t_arr(L, 1), t_dep(L, 1);
        Matrix visit_mask(L, cfg_.enc.t2v_dim);
        for (int p = 0; p < L; ++p) {
            const auto sp = static_cast<std::size_t>(p);
            t_arr(p, 0) = in.arr_days[sp];
            t_dep(p, 0) = in.dep_days[sp];
            if (in.is_visit[sp]) {
                const auto row = enc::space2vec(in.locations[sp], cfg_.enc);
                for (int c = 0; c < cfg_.enc.spatial_dim(); ++c)
                    spatial(p, c) = row[static_cast<std::size_t>(c)];
                for (int c = 0; c < cfg_.enc.t2v_dim; ++c) visit_mask(p, c) = 1.0;
            }
        }
        Var sp = t.constant(std::move(spatial));
        Var ta = t.mul_const(t.time2vec(P("t2v.omega"), P("t2v.phi"), std::move(t_arr)), visit_mask);
        Var td = t.mul_const(t.time2vec(P("t2v.omega"), P("t2v.phi"), std::move(t_dep)),
                             std::move(visit_mask));
        Var emb = t.gather_rows(P("emb.table"),
                                std::vector<int>(in.token_ids.begin(), in.token_ids.end()));
        return t.concat_cols({sp, ta, td, emb});
    }

    Var travel_queries(Tape& t, nn::BoundParams& P, const ModelInstance& in) const {
        const int T = in.n_targets();
        if (variant_ == Variant::Independence)
            return t.gather_rows(P("travel.query"), std::vector<int>(static_cast<std::size_t>(T), 0));
        return t.gather_rows(P("emb.table"),
                             std::vector<int>(in.target_ids.begin(), in.target_ids.end()));
    }

    Var duration_queries(Tape& t, nn::BoundParams& P, const ModelInstance& in) const {
        const int T = in.n_targets();
        if (variant_ == Variant::Independence)
            return t.gather_rows(P("duration.query"),
                                 std::vector<int>(static_cast<std::size_t>(T), 0));
        Var e = t.gather_rows(P("emb.table"),
                              std::vector<int>(in.target_ids.begin(), in.target_ids.end()));
        Matrix tcol(T, 1);
        for (int i = 0; i < T; ++i) tcol(i, 0) = in.target_arrival_days[static_cast<std::size_t>(i)];
        Var tv = t.time2vec(P("t2v.omega"), P("t2v.phi"), std::move(tcol));
        return t.concat_cols({e, tv});
    }

    HeadVars temporal_head(Tape& t, nn::BoundParams& P, const std::string& name, Var queries,
                           Var H, const Matrix& xmask, const nn::DropoutCtx& drop) const {
        const nn::BlockDims dims{cfg_.n_heads, cfg_.ff_dim, cfg_.ln_eps};
        Var z = nn::cross_attention_block(t, P, name, queries, H, xmask, dims, drop);
        Var raw = t.add_rowvec(t.matmul(z, P(name + ".out.w")), P(name + ".out.b"));
        HeadVars out;
        if (variant_ == Variant::Regression) {
            out.mu = raw;
            return out;
        }
        const int K = cfg_.gmm_components;
        Var w_un = t.softplus_eps(t.slice_cols(raw, 0, K), gmm::kPositivityEps);
        out.weights = t.div_colvec(w_un, t.rowsum(w_un));
        out.mu = t.slice_cols(raw, K, 2 * K);
        out.sigma = t.softplus_eps(t.slice_cols(raw, 2 * K, 3 * K), gmm::kPositivityEps);
        return out;
    }

    // Mixture NLL (or squared error) summed over weighted rows.
    Var temporal_loss(Tape& t, const HeadVars& head, Matrix targets, Matrix weights) const {
        if (variant_ == Variant::Regression) {
            Var err = t.square(t.sub_const_col(head.mu, targets));
            return t.weighted_sum(err, std::move(weights));
        }
        Var z = t.div(t.sub_const_col(head.mu, targets), head.sigma);
        Var logn = t.sub(t.affine(t.square(z), -0.5, -gmm::kLogSqrt2Pi), t.log(head.sigma));
        Var arg = t.add(t.log(head.weights), logn);
        Var ll = t.logsumexp_rows(arg);
        for (double& w : weights.a) w = -w;  // negative log likelihood
        return t.weighted_sum(ll, std::move(weights));
    }

    SingleHeadResult head_single(Tape& t, nn::BoundParams& P, const std::string& name, Var q,
                                 Var H, const std::vector<bool>& is_pad) const {
        const int L = t.val(H).rows;
        Matrix mask(1, L);
        for (int c = 0; c < L; ++c)
            mask(0, c) = is_pad[static_cast<std::size_t>(c)] ? nn::kMaskOff : 0.0;
        const nn::BlockDims dims{cfg_.n_heads, cfg_.ff_dim, cfg_.ln_eps};
        Var z = nn::cross_attention_block(t, P, name, q, H, mask, dims, nn::DropoutCtx{});
        Var raw = t.add_rowvec(t.matmul(z, P(name + ".out.w")), P(name + ".out.b"));
        const Matrix& R = t.val(raw);
        SingleHeadResult out;
        if (variant_ == Variant::Regression) {
            out.regression_value = R(0, 0);
            return out;
        }
        out.params = gmm::positive_params(std::vector<double>(R.row(0), R.row(0) + R.cols));
        return out;
    }

    ModelConfig cfg_;
    Variant variant_;
    int vocab_size_;
    nn::ParamStore store_;
};

// ---------------------------------------------------------------------------
// Checkpoints: magic + JSON header + raw little-endian doubles
// ---------------------------------------------------------------------------

inline constexpr char kCheckpointMagic[] = "VGCKPT1\n";

struct Checkpoint {
    ModelConfig config;
    Variant variant = Variant::Full;
    int vocab_size = 0;
    TimeScaling scaling;
};

inline void save_checkpoint(const std::string& path, const Checkpoint& meta,
                            const nn::ParamStore& store) {
    nlohmann::json header;
    header["version"] = 1;
    header["config"] = meta.config;
    header["variant"] = variant_name(meta.variant);
    header["vocab_size"] = meta.vocab_size;
    header["scaling"] = {{"epoch_offset", meta.scaling.epoch_offset},
                         {"duration_divisor", meta.scaling.duration_divisor},
                         {"travel_divisor", meta.scaling.travel_divisor},
                         {"encoder_divisor", meta.scaling.encoder_divisor}};
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, m] : store.all())
        tensors.push_back({{"name", name}, {"rows", m.rows}, {"cols", m.cols}});
    header["tensors"] = tensors;

    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os.write(kCheckpointMagic, sizeof(kCheckpointMagic) - 1);
    const std::string h = header.dump();
    const std::uint64_t hlen = h.size();
    os.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    os.write(h.data(), static_cast<std::streamsize>(h.size()));
    for (const auto& [name, m] : store.all())
        os.write(reinterpret_cast<const char*>(m.a.data()),
                 static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!os) throw IoError("failed writing checkpoint: " + path);
}

struct LoadedModel {
    Checkpoint meta;
    std::unique_ptr<VisitModel> model;
};

inline LoadedModel load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    char magic[sizeof(kCheckpointMagic) - 1];
    is.read(magic, sizeof(magic));
    if (!is || std::string(magic, sizeof(magic)) != std::string(kCheckpointMagic,
                                                                sizeof(kCheckpointMagic) - 1))
        throw ParseError("not a checkpoint file: " + path);
    std::uint64_t hlen = 0;
    is.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string h(hlen, '\0');
    is.read(h.data(), static_cast<std::streamsize>(hlen));
    if (!is) throw ParseError("truncated checkpoint header: " + path);
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(h);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("checkpoint header: ") + e.what());
    }

    LoadedModel out;
    out.meta.config = header.at("config").get<ModelConfig>();
    out.meta.variant = variant_from_name(header.at("variant").get<std::string>());
    out.meta.vocab_size = header.at("vocab_size").get<int>();
    const auto& sj = header.at("scaling");
    out.meta.scaling.epoch_offset = sj.at("epoch_offset").get<Timestamp>();
    out.meta.scaling.duration_divisor = sj.at("duration_divisor").get<double>();
    out.meta.scaling.travel_divisor = sj.at("travel_divisor").get<double>();
    out.meta.scaling.encoder_divisor = sj.at("encoder_divisor").get<double>();

    out.model = std::make_unique<VisitModel>(out.meta.config, out.meta.variant,
                                             out.meta.vocab_size, /*init_seed=*/0);
    for (const auto& tj : header.at("tensors")) {
        const std::string name = tj.at("name").get<std::string>();
        const int rows = tj.at("rows").get<int>();
        const int cols = tj.at("cols").get<int>();
        if (!out.model->store().contains(name))
            throw ParseError("checkpoint tensor not in model: " + name);
        Matrix& m = out.model->store().at(name);
        if (m.rows != rows || m.cols != cols)
            throw ParseError("checkpoint tensor shape mismatch for " + name);
        is.read(reinterpret_cast<char*>(m.a.data()),
                static_cast<std::streamsize>(m.size() * sizeof(double)));
        if (!is) throw ParseError("truncated checkpoint tensors: " + path);
    }
    return out;
}

}  // namespace visitgen::model
