// Rearranges visit sequences for the infilling task and reconstructs
// completed sequences. A reframed sequence keeps the partial sequence (with
// one BLANK per dropped span) before SEP and appends each dropped span, in
// blank order, terminated by ANS.
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "visitgen/core.hpp"
#include "visitgen/rng.hpp"

namespace visitgen::infill {

// Deterministic core: rearrange given an explicit drop mask. The first and
// last visits must be kept.
inline ReframedSequence reframe_with_drops(const VisitSequence& seq,
                                           const std::vector<bool>& dropped) {
    const std::size_t n = seq.visits.size();
    if (n < 3)
        throw ReframeError("reframe: sequence '" + seq.agent + "' needs >= 3 visits, has " +
                           std::to_string(n));
    if (dropped.size() != n) throw ArgumentError("reframe: drop mask size mismatch");
    if (dropped.front() || dropped.back())
        throw ArgumentError("reframe: first and last visits may not be dropped");

    auto anchor_of = [&](std::size_t i) -> Timestamp {
        return i == 0 ? Timestamp{-1} : seq.visits[i - 1].departure;
    };

    ReframedSequence out;
    std::vector<std::pair<std::size_t, std::size_t>> span_ranges;  // [begin, end) in source
    for (std::size_t i = 0; i < n;) {
        if (!dropped[i]) {
            out.tokens.push_back(Token::from_visit(seq.visits[i], static_cast<std::int64_t>(i),
                                                   anchor_of(i)));
            ++i;
        } else {
            std::size_t j = i;
            while (j < n && dropped[j]) ++j;
            out.blank_positions.push_back(out.tokens.size());
            out.tokens.push_back(Token::special(TokenKind::Blank));
            span_ranges.emplace_back(i, j);
            i = j;
        }
    }
    out.sep_position = out.tokens.size();
    out.tokens.push_back(Token::special(TokenKind::Sep));
    for (const auto& [b, e] : span_ranges) {
        AnswerSpan span;
        span.begin = out.tokens.size();
        for (std::size_t i = b; i < e; ++i)
            out.tokens.push_back(Token::from_visit(seq.visits[i], static_cast<std::int64_t>(i),
                                                   anchor_of(i)));
        span.end = out.tokens.size();
        out.tokens.push_back(Token::special(TokenKind::Ans));
        out.answer_spans.push_back(span);
    }
    return out;
}

// Drop interior visits by independent Bernoulli trials (first and last are
// never dropped), collapse each maximal dropped run to one BLANK, then append
// the dropped spans after SEP, each closed by ANS.
inline ReframedSequence reframe(const VisitSequence& seq, double mask_prob, Rng& rng) {
    const std::size_t n = seq.visits.size();
    if (n < 3)
        throw ReframeError("reframe: sequence '" + seq.agent + "' needs >= 3 visits, has " +
                           std::to_string(n));
    std::vector<bool> dropped(n, false);
    for (std::size_t i = 1; i + 1 < n; ++i) dropped[i] = rng.bernoulli(mask_prob);
    return reframe_with_drops(seq, dropped);
}

// Structural well-formedness (used by tests and by generation plumbing).
inline bool well_formed(const ReframedSequence& r) {
    std::size_t blanks = 0, seps = 0, ans = 0;
    for (std::size_t i = 0; i < r.tokens.size(); ++i) {
        switch (r.tokens[i].kind) {
            case TokenKind::Blank: ++blanks; break;
            case TokenKind::Sep:
                ++seps;
                if (i != r.sep_position) return false;
                break;
            case TokenKind::Ans:
                ++ans;
                if (i < r.sep_position) return false;
                break;
            default: break;
        }
    }
    if (seps != 1 || blanks != ans || blanks != r.blank_positions.size()) return false;
    if (r.answer_spans.size() != blanks) return false;
    for (const auto& s : r.answer_spans) {
        if (s.begin >= s.end || s.end >= r.tokens.size()) return false;
        if (r.tokens[s.end].kind != TokenKind::Ans) return false;
        for (std::size_t i = s.begin; i < s.end; ++i)
            if (!r.tokens[i].is_visit()) return false;
    }
    return true;
}

struct ReconstructResult {
    VisitSequence sequence;
    bool chronological = true;
    std::string message;
};

// Replace the k-th BLANK of the partial token list with the k-th answer list.
// Chronology violations are reported, never silently repaired.
inline ReconstructResult reconstruct_checked(const std::vector<Token>& partial,
                                             const std::vector<std::vector<Visit>>& answers,
                                             const std::string& agent = {}) {
    std::size_t blanks = 0;
    for (const auto& t : partial) {
        if (t.kind == TokenKind::Sep || t.kind == TokenKind::Ans)
            throw ArgumentError("reconstruct: partial sequence contains SEP/ANS");
        if (t.kind == TokenKind::Blank) ++blanks;
    }
    if (blanks != answers.size())
        throw ArgumentError("reconstruct: " + std::to_string(blanks) + " blanks but " +
                            std::to_string(answers.size()) + " answer lists");

    ReconstructResult res;
    res.sequence.agent = agent;
    std::size_t next_answer = 0;
    for (const auto& t : partial) {
        if (t.is_visit()) {
            res.sequence.visits.push_back(t.visit);
        } else if (t.kind == TokenKind::Blank) {
            const auto& span = answers[next_answer++];
            res.sequence.visits.insert(res.sequence.visits.end(), span.begin(), span.end());
        }
    }
    for (std::size_t i = 0; i < res.sequence.visits.size(); ++i) {
        const Visit& v = res.sequence.visits[i];
        if (v.departure < v.arrival ||
            (i > 0 && v.arrival < res.sequence.visits[i - 1].departure)) {
            res.chronological = false;
            res.message = "chronology violated at visit " + std::to_string(i);
            break;
        }
    }
    return res;
}

inline VisitSequence reconstruct(const std::vector<Token>& partial,
                                 const std::vector<std::vector<Visit>>& answers,
                                 const std::string& agent = {}) {
    ReconstructResult res = reconstruct_checked(partial, answers, agent);
    if (!res.chronological) throw MalformedSequenceError("reconstruct: " + res.message);
    return res.sequence;
}

inline std::vector<Token> partial_tokens(const ReframedSequence& r) {
    return std::vector<Token>(r.tokens.begin(), r.tokens.begin() + r.sep_position);
}

inline std::vector<std::vector<Visit>> answer_visits(const ReframedSequence& r) {
    std::vector<std::vector<Visit>> out;
    out.reserve(r.answer_spans.size());
    for (const auto& s : r.answer_spans) {
        std::vector<Visit> span;
        for (std::size_t i = s.begin; i < s.end; ++i) span.push_back(r.tokens[i].visit);
        out.push_back(std::move(span));
    }
    return out;
}

}  // namespace visitgen::infill
