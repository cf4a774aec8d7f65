// Core domain types for visit-sequence modeling: visits, token streams,
// and the two arithmetic temporal derivations everything else builds on.
#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace visitgen {

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ParseError : Error { using Error::Error; };
struct MalformedSequenceError : Error { using Error::Error; };
struct OutOfExtentError : Error { using Error::Error; };
struct ConfigError : Error { using Error::Error; };
struct VocabError : Error { using Error::Error; };
struct ArgumentError : Error { using Error::Error; };
struct NumericError : Error { using Error::Error; };
struct ReframeError : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

using RegionId = std::int32_t;
using Timestamp = std::int64_t;  // integer seconds since the dataset's oldest arrival

struct Point {
    double x = 0.0;  // meters, planar
    double y = 0.0;

    friend bool operator==(const Point& a, const Point& b) { return a.x == b.x && a.y == b.y; }
};

// One stay: where the agent was and for how long.
struct Visit {
    RegionId region = 0;
    Timestamp arrival = 0;
    Timestamp departure = 0;
    Point location{};  // planar meters, kept from preprocessing for encoding

    friend bool operator==(const Visit& a, const Visit& b) {
        return a.region == b.region && a.arrival == b.arrival && a.departure == b.departure &&
               a.location == b.location;
    }
};

inline bool visit_valid(const Visit& v) {
    return v.departure >= v.arrival && std::isfinite(v.location.x) && std::isfinite(v.location.y);
}

// All visits made by a single agent, strictly chronological.
struct VisitSequence {
    std::string agent;
    std::vector<Visit> visits;

    friend bool operator==(const VisitSequence& a, const VisitSequence& b) {
        return a.agent == b.agent && a.visits == b.visits;
    }
};

inline void validate_sequence(const VisitSequence& seq) {
    if (seq.visits.empty()) throw MalformedSequenceError("sequence '" + seq.agent + "' is empty");
    for (std::size_t i = 0; i < seq.visits.size(); ++i) {
        const Visit& v = seq.visits[i];
        if (!visit_valid(v))
            throw MalformedSequenceError("sequence '" + seq.agent + "': invalid visit at index " +
                                         std::to_string(i));
        if (i > 0 && v.arrival < seq.visits[i - 1].departure)
            throw MalformedSequenceError("sequence '" + seq.agent +
                                         "': non-chronological visit at index " + std::to_string(i));
    }
}

// ---------------------------------------------------------------------------
// Tokens: sequence elements fed to the model (a visit or a special marker)
// ---------------------------------------------------------------------------

enum class TokenKind { Visit, Blank, Sep, Ans, Pad };

inline const char* token_kind_name(TokenKind k) {
    switch (k) {
        case TokenKind::Visit: return "VISIT";
        case TokenKind::Blank: return "BLANK";
        case TokenKind::Sep: return "SEP";
        case TokenKind::Ans: return "ANS";
        case TokenKind::Pad: return "PAD";
    }
    return "?";
}

struct Token {
    TokenKind kind = TokenKind::Pad;
    Visit visit{};  // meaningful only when kind == Visit

    // Provenance used to build temporal training targets. For a visit token,
    // original_index is its position in the source sequence and
    // anchor_departure is the departure of its predecessor in the original
    // timeline (-1 when it has none). Specials carry -1 for both.
    std::int64_t original_index = -1;
    Timestamp anchor_departure = -1;

    bool is_visit() const { return kind == TokenKind::Visit; }

    static Token special(TokenKind k) {
        Token t;
        t.kind = k;
        return t;
    }
    static Token from_visit(const Visit& v, std::int64_t orig_index = -1,
                            Timestamp anchor_dep = -1) {
        Token t;
        t.kind = TokenKind::Visit;
        t.visit = v;
        t.original_index = orig_index;
        t.anchor_departure = anchor_dep;
        return t;
    }
};

// Index range [begin, end) of a blank's answer visits within the token list.
// The ANS terminator sits at token index `end`.
struct AnswerSpan {
    std::size_t begin = 0;
    std::size_t end = 0;
};

// A sequence rearranged for the infilling task: partial sequence with BLANKs,
// one SEP, then the dropped spans in blank order, each closed by ANS.
struct ReframedSequence {
    std::vector<Token> tokens;
    std::vector<std::size_t> blank_positions;
    std::size_t sep_position = 0;
    std::vector<AnswerSpan> answer_spans;
};

// ---------------------------------------------------------------------------
// Temporal derivations
// ---------------------------------------------------------------------------

// Gap between consecutive visits, in seconds. Throws on a reversed pair.
inline std::int64_t travel_time(const Visit& prev, const Visit& cur) {
    const std::int64_t dt = cur.arrival - prev.departure;
    if (dt < 0)
        throw MalformedSequenceError("negative travel time: previous departure " +
                                     std::to_string(prev.departure) + " after arrival " +
                                     std::to_string(cur.arrival));
    return dt;
}

// Length of a single stay, in seconds. Non-negative by the Visit invariant.
inline std::int64_t duration(const Visit& v) { return v.departure - v.arrival; }

// Scaling between raw seconds and the model-facing time units.
struct TimeScaling {
    Timestamp epoch_offset = 0;            // oldest arrival subtracted from all timestamps
    double duration_divisor = 86400.0;     // seconds per day
    double travel_divisor = 3600.0;        // seconds per hour
    double encoder_divisor = 86400.0;      // absolute times fed to the time encoder, in days

    double duration_target(std::int64_t seconds) const { return double(seconds) / duration_divisor; }
    double travel_target(std::int64_t seconds) const { return double(seconds) / travel_divisor; }
    double encoder_time(Timestamp t) const { return double(t) / encoder_divisor; }

    double travel_minutes_to_scaled(double minutes) const { return minutes * 60.0 / travel_divisor; }
    double duration_minutes_to_scaled(double minutes) const { return minutes * 60.0 / duration_divisor; }
    double travel_scaled_to_minutes(double scaled) const { return scaled * travel_divisor / 60.0; }
    double duration_scaled_to_minutes(double scaled) const { return scaled * duration_divisor / 60.0; }
    double travel_scaled_to_seconds(double scaled) const { return scaled * travel_divisor; }
    double duration_scaled_to_seconds(double scaled) const { return scaled * duration_divisor; }
};

}  // namespace visitgen
