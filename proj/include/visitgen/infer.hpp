// Autoregressive generation: next-visit prediction and gap infilling.
// Region, travel time, and duration are realized in order, each conditioning
// on the previous realizations; temporal draws come from the clipped mixture
// (mode for greedy decoding, ancestral sampling otherwise).
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "visitgen/core.hpp"
#include "visitgen/gmm.hpp"
#include "visitgen/model.hpp"
#include "visitgen/reframe.hpp"
#include "visitgen/rng.hpp"
#include "visitgen/vocab.hpp"

namespace visitgen::infer {

enum class Decode { Greedy, Sample };

inline Decode decode_from_name(const std::string& s) {
    if (s == "greedy") return Decode::Greedy;
    if (s == "sample") return Decode::Sample;
    throw ConfigError("unknown decode: " + s);
}

struct NextVisitResult {
    Visit visit;
    std::vector<double> region_probs;            // full categorical over the vocabulary
    gmm::GaussianMixtureParams travel_params;    // scaled hours (mixture variants)
    gmm::GaussianMixtureParams duration_params;  // scaled days (mixture variants)
};

namespace detail {

inline std::vector<double> softmax_row(const Matrix& m, int row) {
    std::vector<double> out(static_cast<std::size_t>(m.cols));
    double mx = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < m.cols; ++c) mx = std::max(mx, m(row, c));
    double z = 0.0;
    for (int c = 0; c < m.cols; ++c) {
        out[static_cast<std::size_t>(c)] = std::exp(m(row, c) - mx);
        z += out[static_cast<std::size_t>(c)];
    }
    for (double& v : out) v /= z;
    return out;
}

// Argmax / categorical sample over an allowed id set (renormalized).
inline int choose_id(const std::vector<double>& probs, const std::vector<int>& allowed,
                     Decode decode, Rng& rng) {
    if (allowed.empty()) throw ArgumentError("choose_id: empty candidate set");
    if (decode == Decode::Greedy) {
        int best = allowed[0];
        for (int id : allowed)
            if (probs[static_cast<std::size_t>(id)] > probs[static_cast<std::size_t>(best)])
                best = id;
        return best;
    }
    double z = 0.0;
    for (int id : allowed) z += probs[static_cast<std::size_t>(id)];
    if (z <= 0.0) return allowed[0];
    double u = rng.uniform() * z;
    for (int id : allowed) {
        u -= probs[static_cast<std::size_t>(id)];
        if (u < 0.0) return id;
    }
    return allowed.back();
}

// Point decode of a temporal head output, in scaled units.
inline double realize(const model::VisitModel::SingleHeadResult& head, bool regression,
                      Decode decode, Rng& rng) {
    if (regression) return std::max(head.regression_value, 0.0);
    if (decode == Decode::Greedy) return gmm::clipped_mode(head.params);
    return gmm::sample(head.params, rng);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Next visit prediction
// ---------------------------------------------------------------------------

inline NextVisitResult predict_next_visit(model::VisitModel& m, const model::Checkpoint& meta,
                                          const RegionVocabulary& vocab,
                                          const VisitSequence& context, Decode decode,
                                          std::uint64_t seed = 0) {
    if (context.visits.empty()) throw ArgumentError("predict_next_visit: empty context");
    // Keep the most recent window that fits the encoder.
    VisitSequence ctx = context;
    const std::size_t max_ctx = static_cast<std::size_t>(m.config().max_seq_len - 1);
    if (ctx.visits.size() > max_ctx)
        ctx.visits.erase(ctx.visits.begin(),
                         ctx.visits.end() - static_cast<std::ptrdiff_t>(max_ctx));

    std::vector<Token> tokens;
    for (const auto& v : ctx.visits) tokens.push_back(Token::from_visit(v));
    const model::ModelInstance in = model::build_instance(tokens, vocab, meta.scaling);

    Rng rng(mix_seed(seed, 0x9E77));
    ag::Tape tape;
    nn::BoundParams P(tape, m.store());
    const model::ForwardVars fw = m.forward(tape, P, in, nn::DropoutCtx{});

    NextVisitResult out;
    const Matrix& logits = tape.val(fw.region_logits);
    out.region_probs = detail::softmax_row(logits, logits.rows - 1);

    std::vector<int> regions;
    for (RegionId id = 0; id < vocab.num_cells(); ++id) regions.push_back(id);
    const int rhat = detail::choose_id(out.region_probs, regions, decode, rng);

    const bool regression = m.variant() == model::Variant::Regression;
    const auto travel =
        m.travel_params_single(tape, P, fw.H, in.is_pad, rhat);
    if (!regression) out.travel_params = travel.params;
    const double travel_scaled = detail::realize(travel, regression, decode, rng);
    const Timestamp prev_dep = ctx.visits.back().departure;
    const Timestamp arrival =
        prev_dep +
        static_cast<Timestamp>(std::llround(meta.scaling.travel_scaled_to_seconds(travel_scaled)));

    const auto dur = m.duration_params_single(tape, P, fw.H, in.is_pad, rhat,
                                              meta.scaling.encoder_time(arrival));
    if (!regression) out.duration_params = dur.params;
    const double dur_scaled = detail::realize(dur, regression, decode, rng);
    const Timestamp departure =
        arrival +
        static_cast<Timestamp>(std::llround(meta.scaling.duration_scaled_to_seconds(dur_scaled)));

    out.visit.region = rhat;
    out.visit.arrival = arrival;
    out.visit.departure = departure;
    out.visit.location = vocab.cell_center(rhat);
    return out;
}

// ---------------------------------------------------------------------------
// Infilling
// ---------------------------------------------------------------------------

struct InfillDiagnostics {
    std::vector<int> per_blank_counts;
    int ans_count = 0;
    bool chronological = true;
    bool truncated = false;  // a safety cap or the length limit forced closure
    std::string message;
};

struct InfillResult {
    VisitSequence sequence;
    InfillDiagnostics diag;
};

// Fill every BLANK of a partial token sequence. Appends SEP, generates tokens
// autoregressively, closes a blank whenever ANS is emitted, and stops when all
// blanks are closed (or the per-blank cap forces closure). The assembled
// sequence is checked for chronology; violations are flagged, not repaired.
inline InfillResult infill(model::VisitModel& m, const model::Checkpoint& meta,
                           const RegionVocabulary& vocab, const std::vector<Token>& partial,
                           Decode decode, int max_per_blank = 8, std::uint64_t seed = 0,
                           const std::string& agent = {}) {
    // Validate the partial sequence.
    std::size_t n_blanks = 0;
    for (const auto& t : partial) {
        if (t.kind == TokenKind::Sep || t.kind == TokenKind::Ans || t.kind == TokenKind::Pad)
            throw ArgumentError("infill: partial sequence may contain only visits and blanks");
        if (t.kind == TokenKind::Blank) ++n_blanks;
    }
    if (n_blanks == 0) throw ArgumentError("infill: no blanks to fill");
    if (partial.empty() || !partial.front().is_visit() || !partial.back().is_visit())
        throw ArgumentError("infill: partial sequence must start and end with a visit");
    if (max_per_blank < 1) throw ArgumentError("infill: max_per_blank must be >= 1");

    // Departure of the visit preceding each blank: the travel-time anchor for
    // the first generated visit of that blank.
    std::vector<Timestamp> blank_anchor;
    {
        Timestamp last_dep = -1;
        for (const auto& t : partial) {
            if (t.is_visit())
                last_dep = t.visit.departure;
            else
                blank_anchor.push_back(last_dep);
        }
    }

    Rng rng(mix_seed(seed, 0x1F11));
    std::vector<Token> tokens = partial;
    tokens.push_back(Token::special(TokenKind::Sep));

    InfillResult res;
    res.diag.per_blank_counts.assign(n_blanks, 0);
    std::vector<std::vector<Visit>> answers(n_blanks);
    std::size_t cur_blank = 0;

    std::vector<int> candidates;  // known cells + ANS
    for (RegionId id = 0; id < vocab.num_cells(); ++id) candidates.push_back(id);
    candidates.push_back(vocab.ans_id());

    const bool regression = m.variant() == model::Variant::Regression;
    while (cur_blank < n_blanks) {
        if (static_cast<int>(tokens.size()) >= m.config().max_seq_len - 1) {
            res.diag.truncated = true;
            res.diag.message = "length limit reached before all blanks closed";
            break;
        }
        const model::ModelInstance in = model::build_instance(tokens, vocab, meta.scaling);
        ag::Tape tape;
        nn::BoundParams P(tape, m.store());
        const model::ForwardVars fw = m.forward(tape, P, in, nn::DropoutCtx{});
        const Matrix& logits = tape.val(fw.region_logits);
        const std::vector<double> probs = detail::softmax_row(logits, logits.rows - 1);

        const bool force_ans =
            res.diag.per_blank_counts[cur_blank] >= max_per_blank;
        int id = force_ans ? vocab.ans_id() : detail::choose_id(probs, candidates, decode, rng);
        if (force_ans) res.diag.truncated = true;

        if (id == vocab.ans_id()) {
            tokens.push_back(Token::special(TokenKind::Ans));
            ++res.diag.ans_count;
            ++cur_blank;
            continue;
        }

        const Timestamp anchor_dep = answers[cur_blank].empty()
                                         ? blank_anchor[cur_blank]
                                         : answers[cur_blank].back().departure;
        const auto travel = m.travel_params_single(tape, P, fw.H, in.is_pad, id);
        const double travel_scaled = detail::realize(travel, regression, decode, rng);
        const Timestamp arrival =
            anchor_dep + static_cast<Timestamp>(
                             std::llround(meta.scaling.travel_scaled_to_seconds(travel_scaled)));
        const auto dur = m.duration_params_single(tape, P, fw.H, in.is_pad, id,
                                                  meta.scaling.encoder_time(arrival));
        const double dur_scaled = detail::realize(dur, regression, decode, rng);
        const Timestamp departure =
            arrival + static_cast<Timestamp>(
                          std::llround(meta.scaling.duration_scaled_to_seconds(dur_scaled)));

        Visit v;
        v.region = id;
        v.arrival = arrival;
        v.departure = departure;
        v.location = vocab.cell_center(id);
        answers[cur_blank].push_back(v);
        ++res.diag.per_blank_counts[cur_blank];
        tokens.push_back(Token::from_visit(v));
    }

    const visitgen::infill::ReconstructResult rec =
        visitgen::infill::reconstruct_checked(partial, answers, agent);
    res.sequence = rec.sequence;
    res.diag.chronological = rec.chronological;
    if (!rec.chronological) res.diag.message = rec.message;
    return res;
}

}  // namespace visitgen::infer
