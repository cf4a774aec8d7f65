// Spatiotemporal feature construction: multi-scale sinusoidal location
// encoding, learnable-frequency time encoding, token embedding concatenation,
// and fixed sinusoidal positional encoding.
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "visitgen/core.hpp"

namespace visitgen::enc {

struct EncoderConfig {
    int s2v_scales = 64;        // number of geometric scales
    double s2v_min = 1.0;       // meters, smallest scale
    double s2v_max = 10000.0;   // meters, region-of-interest diameter (0 = resolve from data)
    int t2v_dim = 16;           // time-encoding width (slot 0 linear, rest sinusoidal)
    int region_emb_dim = 32;    // region / special token embedding width

    int spatial_dim() const { return 4 * s2v_scales; }
    int temporal_dim() const { return t2v_dim; }
    int model_dim() const { return spatial_dim() + 2 * t2v_dim + region_emb_dim; }

    // s2v_max == 0 means "resolve from the data extent before encoding".
    void validate() const {
        if (s2v_scales < 1 || t2v_dim < 1 || region_emb_dim < 1)
            throw ConfigError("encoder: all dims must be >= 1");
        if (!(s2v_min > 0.0) || (s2v_max != 0.0 && !(s2v_max > s2v_min)))
            throw ConfigError("encoder: need 0 < s2v_min < s2v_max");
    }
};

// lambda_s = min * (max/min)^(s/(S-1)); a single scale degenerates to min.
inline double s2v_scale(const EncoderConfig& cfg, int s) {
    if (!(cfg.s2v_max > cfg.s2v_min))
        throw ConfigError("encoder: s2v_max unresolved; set it or derive it from the data");
    if (cfg.s2v_scales <= 1) return cfg.s2v_min;
    const double g = double(s) / double(cfg.s2v_scales - 1);
    return cfg.s2v_min * std::pow(cfg.s2v_max / cfg.s2v_min, g);
}

// Scale-major layout: for each scale, [sin(x/l), cos(x/l), sin(y/l), cos(y/l)].
inline std::vector<double> space2vec(const Point& p, const EncoderConfig& cfg) {
    std::vector<double> out(static_cast<std::size_t>(cfg.spatial_dim()));
    for (int s = 0; s < cfg.s2v_scales; ++s) {
        const double l = s2v_scale(cfg, s);
        out[4 * s + 0] = std::sin(p.x / l);
        out[4 * s + 1] = std::cos(p.x / l);
        out[4 * s + 2] = std::sin(p.y / l);
        out[4 * s + 3] = std::cos(p.y / l);
    }
    return out;
}

struct Time2VecParams {
    std::vector<double> omega;  // frequencies (learnable)
    std::vector<double> phi;    // phases (learnable)
};

// Slot 0 is linear (omega_0 * t + phi_0); remaining slots are sinusoidal.
inline std::vector<double> time2vec(double t, const Time2VecParams& params) {
    if (params.omega.empty() || params.omega.size() != params.phi.size())
        throw ArgumentError("time2vec: omega/phi size mismatch");
    std::vector<double> out(params.omega.size());
    out[0] = params.omega[0] * t + params.phi[0];
    for (std::size_t i = 1; i < out.size(); ++i)
        out[i] = std::sin(params.omega[i] * t + params.phi[i]);
    return out;
}

// Fixed sinusoidal positional encoding: channel pair (2i, 2i+1) at position p
// uses angle p / 10000^(2i/d).
inline std::vector<double> positional_encoding_row(std::size_t position, int dim) {
    std::vector<double> out(static_cast<std::size_t>(dim));
    for (int i = 0; 2 * i < dim; ++i) {
        const double angle = double(position) / std::pow(10000.0, (2.0 * i) / dim);
        out[2 * i] = std::sin(angle);
        if (2 * i + 1 < dim) out[2 * i + 1] = std::cos(angle);
    }
    return out;
}

inline std::vector<std::vector<double>> positional_encode(std::vector<std::vector<double>> seq) {
    for (std::size_t p = 0; p < seq.size(); ++p) {
        const auto pe = positional_encoding_row(p, static_cast<int>(seq[p].size()));
        for (std::size_t i = 0; i < seq[p].size(); ++i) seq[p][i] += pe[i];
    }
    return seq;
}

// Embedding tables viewed as plain row vectors; the trainable copies live in
// the model's parameter store and must agree with this reference layout.
struct EmbeddingTables {
    std::vector<std::vector<double>> rows;  // vocab_size x region_emb_dim
    Time2VecParams t2v;
};

// Concatenate location encoding, arrival/departure time encodings, and the
// region (or special token) embedding. Special tokens carry zeroed
// spatiotemporal slots: a pseudo visit contributes no location or time.
inline std::vector<double> embed_input(const Token& token, RegionId vocab_id,
                                       const EmbeddingTables& tables, const EncoderConfig& cfg,
                                       const TimeScaling& scaling) {
    if (vocab_id < 0 || static_cast<std::size_t>(vocab_id) >= tables.rows.size())
        throw VocabError("embed_input: vocabulary id " + std::to_string(vocab_id) + " out of range");
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(cfg.model_dim()));
    if (token.is_visit()) {
        const auto sp = space2vec(token.visit.location, cfg);
        out.insert(out.end(), sp.begin(), sp.end());
        const auto ta = time2vec(scaling.encoder_time(token.visit.arrival), tables.t2v);
        out.insert(out.end(), ta.begin(), ta.end());
        const auto td = time2vec(scaling.encoder_time(token.visit.departure), tables.t2v);
        out.insert(out.end(), td.begin(), td.end());
    } else {
        out.assign(static_cast<std::size_t>(cfg.spatial_dim() + 2 * cfg.t2v_dim), 0.0);
    }
    const auto& emb = tables.rows[static_cast<std::size_t>(vocab_id)];
    out.insert(out.end(), emb.begin(), emb.end());
    return out;
}

}  // namespace visitgen::enc
