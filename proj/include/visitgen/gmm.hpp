// Gaussian mixture math shared by both temporal heads: stabilized
// log-density, CDF, clipped renormalization, interval probability, and
// ancestral sampling with negative-value rejection.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <string>
#include <vector>

#include "visitgen/core.hpp"
#include "visitgen/rng.hpp"

namespace visitgen::gmm {

inline constexpr double kPositivityEps = 1e-4;   // floor added after softplus
inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;  // log sqrt(2*pi)
inline constexpr double kDegenerateTail = 1e-12;

struct GaussianMixtureParams {
    std::vector<double> weights;  // K, nonnegative, sum to 1
    std::vector<double> means;    // K, in scaled time units
    std::vector<double> scales;   // K, positive

    std::size_t components() const { return weights.size(); }
};

inline void validate(const GaussianMixtureParams& p) {
    const std::size_t k = p.weights.size();
    if (k == 0 || p.means.size() != k || p.scales.size() != k)
        throw ArgumentError("mixture: inconsistent or empty parameter vectors");
    double sum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (!(p.weights[i] >= 0.0) || !std::isfinite(p.weights[i]))
            throw ArgumentError("mixture: weight " + std::to_string(i) + " negative or non-finite");
        if (!(p.scales[i] > 0.0) || !std::isfinite(p.scales[i]))
            throw ArgumentError("mixture: scale " + std::to_string(i) + " not positive");
        if (!std::isfinite(p.means[i]))
            throw ArgumentError("mixture: mean " + std::to_string(i) + " non-finite");
        sum += p.weights[i];
    }
    if (std::abs(sum - 1.0) > 1e-6)
        throw ArgumentError("mixture: weights sum to " + std::to_string(sum));
}

// Standard normal CDF.
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * 0.70710678118654752440); }

// log sum_k w_k N(x; mu_k, sigma_k^2), via log-sum-exp.
inline double log_pdf(const GaussianMixtureParams& p, double x) {
    validate(p);
    const std::size_t k = p.components();
    double max_term = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(k);
    for (std::size_t i = 0; i < k; ++i) {
        const double z = (x - p.means[i]) / p.scales[i];
        const double logw = p.weights[i] > 0.0 ? std::log(p.weights[i])
                                               : -std::numeric_limits<double>::infinity();
        terms[i] = logw - kLogSqrt2Pi - std::log(p.scales[i]) - 0.5 * z * z;
        max_term = std::max(max_term, terms[i]);
    }
    if (!std::isfinite(max_term)) return -std::numeric_limits<double>::infinity();
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - max_term);
    return max_term + std::log(acc);
}

inline double pdf(const GaussianMixtureParams& p, double x) { return std::exp(log_pdf(p, x)); }

// sum_k w_k Phi((x - mu_k)/sigma_k); monotone with limits 0 and 1.
inline double cdf(const GaussianMixtureParams& p, double x) {
    validate(p);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.components(); ++i)
        acc += p.weights[i] * normal_cdf((x - p.means[i]) / p.scales[i]);
    return std::clamp(acc, 0.0, 1.0);
}

// Probability of [lo, hi] under the mixture clipped to nonnegative support
// and renormalized. Mass below zero is discarded; if essentially all mass is
// negative the support is degenerate and the result is 0 (flag reported when
// requested).
inline double interval_prob_clipped(const GaussianMixtureParams& p, double lo, double hi,
                                    bool* degenerate_support = nullptr) {
    if (degenerate_support) *degenerate_support = false;
    if (lo > hi) throw ArgumentError("interval_prob_clipped: lo > hi");
    const double tail = 1.0 - cdf(p, 0.0);
    if (tail < kDegenerateTail) {
        if (degenerate_support) *degenerate_support = true;
        return 0.0;
    }
    if (hi <= 0.0) return 0.0;
    const double lo_eff = std::max(lo, 0.0);
    const double hi_mass = std::isinf(hi) ? 1.0 : cdf(p, hi);
    const double mass = std::max(hi_mass - cdf(p, lo_eff), 0.0);
    return std::clamp(mass / tail, 0.0, 1.0);
}

// Density of the zero-clipped, renormalized mixture (0 for x < 0).
// Inference- and metric-time only; training likelihoods are unclipped.
inline double clipped_pdf(const GaussianMixtureParams& p, double x) {
    if (x < 0.0) return 0.0;
    const double tail = 1.0 - cdf(p, 0.0);
    if (tail < kDegenerateTail) return 0.0;
    return pdf(p, x) / tail;
}

// Ancestral sampling from the clipped mixture: choose a component by weight,
// draw a normal, reject negatives.
inline double sample(const GaussianMixtureParams& p, Rng& rng, int max_rejects = 10000) {
    validate(p);
    for (int attempt = 0; attempt < max_rejects; ++attempt) {
        const double u = rng.uniform();
        double acc = 0.0;
        std::size_t comp = p.components() - 1;
        for (std::size_t i = 0; i < p.components(); ++i) {
            acc += p.weights[i];
            if (u < acc) {
                comp = i;
                break;
            }
        }
        const double x = rng.normal(p.means[comp], p.scales[comp]);
        if (x >= 0.0) return x;
    }
    throw NumericError("mixture sampling: support is essentially all negative");
}

inline double softplus(double x) {
    // Stable for large |x|.
    return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

// Map an unconstrained parameter triple (raw weights, means, raw scales) to a
// valid mixture: softplus + eps for positivity, then explicit weight
// normalization. Means pass through.
inline GaussianMixtureParams positive_params(const std::vector<double>& raw_weights,
                                             const std::vector<double>& means,
                                             const std::vector<double>& raw_scales) {
    const std::size_t k = raw_weights.size();
    if (k == 0 || means.size() != k || raw_scales.size() != k)
        throw ArgumentError("positive_params: inconsistent raw parameter vectors");
    GaussianMixtureParams p;
    p.weights.resize(k);
    p.means = means;
    p.scales.resize(k);
    double wsum = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        if (!std::isfinite(raw_weights[i]) || !std::isfinite(means[i]) || !std::isfinite(raw_scales[i]))
            throw ArgumentError("positive_params: non-finite raw value");
        p.weights[i] = softplus(raw_weights[i]) + kPositivityEps;
        p.scales[i] = softplus(raw_scales[i]) + kPositivityEps;
        wsum += p.weights[i];
    }
    for (double& w : p.weights) w /= wsum;
    return p;
}

// Layout helper: heads emit 3K values per position as [weights | means | scales].
inline GaussianMixtureParams positive_params(const std::vector<double>& raw_triples) {
    if (raw_triples.size() % 3 != 0 || raw_triples.empty())
        throw ArgumentError("positive_params: raw vector length must be 3K");
    const std::size_t k = raw_triples.size() / 3;
    std::vector<double> w(raw_triples.begin(), raw_triples.begin() + k);
    std::vector<double> m(raw_triples.begin() + k, raw_triples.begin() + 2 * k);
    std::vector<double> s(raw_triples.begin() + 2 * k, raw_triples.end());
    return positive_params(w, m, s);
}

// Mode of the clipped density: best of the component means and a fine grid
// over the support. Used as the greedy point decode.
inline double clipped_mode(const GaussianMixtureParams& p, int grid_points = 2048) {
    validate(p);
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < p.components(); ++i) {
        lo = std::min(lo, p.means[i] - 4.0 * p.scales[i]);
        hi = std::max(hi, p.means[i] + 4.0 * p.scales[i]);
    }
    lo = std::max(lo, 0.0);
    hi = std::max(hi, lo);
    double best_x = std::max(0.0, p.means[0]);
    double best_d = clipped_pdf(p, best_x);
    auto consider = [&](double x) {
        if (x < 0.0) return;
        const double d = clipped_pdf(p, x);
        if (d > best_d) {
            best_d = d;
            best_x = x;
        }
    };
    for (std::size_t i = 0; i < p.components(); ++i) consider(std::max(p.means[i], 0.0));
    consider(0.0);
    if (hi > lo) {
        const double step = (hi - lo) / grid_points;
        for (int g = 0; g <= grid_points; ++g) consider(lo + g * step);
    }
    return best_x;
}

}  // namespace visitgen::gmm
