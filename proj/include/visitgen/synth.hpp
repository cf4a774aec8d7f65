// Deterministic synthetic mobility generator: recurring weekday
// home/work/lunch schedules with weekend recreation, on the same square grid
// the preprocessing pipeline uses. Travel times draw from a two-mode mixture
// so the data exercises multimodal temporal prediction.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "visitgen/core.hpp"
#include "visitgen/rng.hpp"
#include "visitgen/vocab.hpp"

namespace visitgen::synth {

struct TravelMode {
    double mean_minutes = 10.0;
    double std_minutes = 2.0;
};

struct SynthConfig {
    int n_agents = 10;
    int n_days = 28;
    int grid_extent = 8;           // cells per side; roles are striped by row band
    double cell_size = 1000.0;     // meters
    std::uint64_t seed = 0;
    double bimodal_fraction = 0.0;  // probability a travel leg draws the slow mode
    TravelMode mode_slow{40.0, 5.0};
    TravelMode mode_fast{10.0, 2.0};
    double schedule_noise_min = 10.0;  // std of schedule times, minutes
    double lunch_prob = 1.0;           // weekday lunch outing probability
    double recreation_prob = 0.7;      // weekend outing probability
    double lunch_minutes = 60.0;
    double recreation_minutes = 120.0;

    void validate() const {
        if (n_agents < 1) throw ConfigError("synth: n_agents must be >= 1");
        if (n_days < 1) throw ConfigError("synth: n_days must be >= 1");
        if (grid_extent < 4) throw ConfigError("synth: grid_extent must be >= 4");
        if (!(cell_size > 0.0)) throw ConfigError("synth: cell_size must be positive");
        for (double p : {bimodal_fraction, lunch_prob, recreation_prob})
            if (p < 0.0 || p > 1.0) throw ConfigError("synth: probabilities must be in [0,1]");
        if (!(mode_slow.std_minutes > 0.0) || !(mode_fast.std_minutes > 0.0) ||
            !(schedule_noise_min > 0.0))
            throw ConfigError("synth: stds must be positive");
    }
};

struct SynthResult {
    std::vector<VisitSequence> sequences;
    RegionVocabulary vocab;
};

namespace detail {

// Role bands stripe the grid by row so a cell's band (land use) is globally
// consistent: agents share region semantics even when homes differ.
enum class Band { Home = 0, Work = 1, Food = 2, Park = 3 };

inline CellIndex draw_cell(Rng& rng, const SynthConfig& cfg, Band band) {
    const int rows = cfg.grid_extent / 4;
    const int y0 = static_cast<int>(band) * rows;
    return CellIndex{static_cast<std::int64_t>(rng.below(cfg.grid_extent)),
                     static_cast<std::int64_t>(y0 + rng.below(rows))};
}

struct AgentPlaces {
    CellIndex home, work, lunch, rec;
};

inline AgentPlaces draw_places(Rng& rng, const SynthConfig& cfg) {
    AgentPlaces p;
    p.home = draw_cell(rng, cfg, Band::Home);
    p.work = draw_cell(rng, cfg, Band::Work);
    p.lunch = draw_cell(rng, cfg, Band::Food);
    p.rec = draw_cell(rng, cfg, Band::Park);
    return p;
}

inline std::int64_t travel_seconds(Rng& rng, const SynthConfig& cfg) {
    const TravelMode& mode = rng.bernoulli(cfg.bimodal_fraction) ? cfg.mode_slow : cfg.mode_fast;
    const double minutes = std::max(0.2, rng.normal(mode.mean_minutes, mode.std_minutes));
    return static_cast<std::int64_t>(std::llround(minutes * 60.0));
}

inline std::int64_t noisy_minute_of_day(Rng& rng, const SynthConfig& cfg, double minute) {
    const double m = rng.normal(minute, cfg.schedule_noise_min);
    return static_cast<std::int64_t>(std::llround(m * 60.0));
}

}  // namespace detail

// All randomness derives from (seed, agent), so output is a pure function of
// the config and agent order never matters.
inline VisitSequence generate_agent(const SynthConfig& cfg, const RegionVocabulary& vocab,
                                    int agent_index) {
    Rng rng = Rng(cfg.seed).fork(0xA6E57000ULL + static_cast<std::uint64_t>(agent_index));
    const detail::AgentPlaces places = detail::draw_places(rng, cfg);

    VisitSequence seq;
    seq.agent = "agent-" + std::to_string(agent_index);

    auto place_visit = [&](const CellIndex& cell) {
        Visit v;
        v.region = vocab.id_of_cell(cell);
        v.location = Point{vocab.origin().x + (double(cell.ix) + 0.5) * cfg.cell_size,
                           vocab.origin().y + (double(cell.iy) + 0.5) * cfg.cell_size};
        return v;
    };

    constexpr std::int64_t kMinStay = 60;
    CellIndex cur_cell = places.home;
    Timestamp cur_arrival = 0;

    auto move_to = [&](const CellIndex& next, Timestamp leave_at) {
        leave_at = std::max(leave_at, cur_arrival + kMinStay);
        Visit v = place_visit(cur_cell);
        v.arrival = cur_arrival;
        v.departure = leave_at;
        seq.visits.push_back(v);
        cur_cell = next;
        cur_arrival = leave_at + detail::travel_seconds(rng, cfg);
    };

    for (int day = 0; day < cfg.n_days; ++day) {
        const Timestamp day_start = Timestamp(day) * 86400;
        const bool weekday = (day % 7) < 5;
        if (weekday) {
            move_to(places.work, day_start + detail::noisy_minute_of_day(rng, cfg, 8 * 60));
            if (rng.bernoulli(cfg.lunch_prob)) {
                move_to(places.lunch, day_start + detail::noisy_minute_of_day(rng, cfg, 12 * 60));
                const std::int64_t lunch_dur = std::max<std::int64_t>(
                    kMinStay, static_cast<std::int64_t>(std::llround(
                                  std::max(1.0, rng.normal(cfg.lunch_minutes,
                                                           cfg.schedule_noise_min)) *
                                  60.0)));
                move_to(places.work, cur_arrival + lunch_dur);
            }
            move_to(places.home, day_start + detail::noisy_minute_of_day(rng, cfg, 17 * 60 + 30));
        } else {
            if (rng.bernoulli(cfg.recreation_prob)) {
                move_to(places.rec, day_start + detail::noisy_minute_of_day(rng, cfg, 14 * 60));
                const std::int64_t rec_dur = std::max<std::int64_t>(
                    kMinStay, static_cast<std::int64_t>(std::llround(
                                  std::max(1.0, rng.normal(cfg.recreation_minutes,
                                                           cfg.schedule_noise_min)) *
                                  60.0)));
                move_to(places.home, cur_arrival + rec_dur);
            }
        }
    }
    // Close the final home stay at the end of the horizon.
    Visit last = place_visit(cur_cell);
    last.arrival = cur_arrival;
    last.departure = std::max<Timestamp>(Timestamp(cfg.n_days) * 86400, cur_arrival + kMinStay);
    seq.visits.push_back(last);
    validate_sequence(seq);
    return seq;
}

inline SynthResult generate(const SynthConfig& cfg) {
    cfg.validate();
    // First pass: collect every cell any agent uses, so the vocabulary is
    // closed over the generated data.
    std::vector<CellIndex> cells;
    for (int a = 0; a < cfg.n_agents; ++a) {
        Rng rng = Rng(cfg.seed).fork(0xA6E57000ULL + static_cast<std::uint64_t>(a));
        const detail::AgentPlaces p = detail::draw_places(rng, cfg);
        cells.insert(cells.end(), {p.home, p.work, p.lunch, p.rec});
    }
    SynthResult out;
    out.vocab = RegionVocabulary::from_cells(std::move(cells), cfg.cell_size);
    out.sequences.reserve(static_cast<std::size_t>(cfg.n_agents));
    for (int a = 0; a < cfg.n_agents; ++a)
        out.sequences.push_back(generate_agent(cfg, out.vocab, a));
    return out;
}

}  // namespace visitgen::synth
