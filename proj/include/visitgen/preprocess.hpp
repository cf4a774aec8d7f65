// Raw point trajectories -> region-discretized visit sequences and
// task-ready splits: PLT/CSV parsing, tangent-plane projection, stay-point
// detection, grid discretization, time normalization, and splitting.
#pragma once

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "visitgen/core.hpp"
#include "visitgen/rng.hpp"
#include "visitgen/vocab.hpp"

namespace visitgen::prep {

inline constexpr double kEarthRadiusMeters = 6371000.0;
inline constexpr double kMaxExtentMeters = 500000.0;  // single-city assumption
inline constexpr double kDegToRad = 0.017453292519943295;

struct RawPoint {
    double lat = 0.0;  // degrees
    double lon = 0.0;  // degrees
    std::int64_t t = 0;  // UTC seconds
};

struct PlanarPoint {
    Point p;
    std::int64_t t = 0;
};

struct SplitSpec {
    enum class Mode { ByAgent, Chronological };
    Mode mode = Mode::ByAgent;
    double ratios[3] = {0.8, 0.1, 0.1};  // train : valid : test
    int window = 128;                    // next-visit mode only
    double mask_prob = 0.2;              // infilling mode only

    void validate() const {
        const double sum = ratios[0] + ratios[1] + ratios[2];
        if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("split: ratios must sum to 1");
        if (window < 2) throw ConfigError("split: window must be >= 2");
        if (mask_prob < 0.0 || mask_prob > 1.0) throw ConfigError("split: mask_prob outside [0,1]");
    }
};

struct SplitResult {
    std::vector<VisitSequence> train;
    std::vector<VisitSequence> valid;
    std::vector<VisitSequence> test;
};

// ---------------------------------------------------------------------------
// Calendar arithmetic (UTC, proleptic Gregorian)
// ---------------------------------------------------------------------------

inline std::int64_t days_from_civil(int y, int m, int d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const unsigned yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153u * static_cast<unsigned>(m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline std::int64_t utc_seconds(int y, int mo, int d, int h, int mi, int s) {
    return days_from_civil(y, mo, d) * 86400 + h * 3600 + mi * 60 + s;
}

// ---------------------------------------------------------------------------
// GeoLife PLT parsing
// ---------------------------------------------------------------------------

namespace detail {

inline std::vector<std::string> split_fields(const std::string& line, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

inline double parse_double(const std::string& s, std::size_t line_no, const char* what) {
    double v = 0.0;
    const char* b = s.data();
    const char* e = s.data() + s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(*b))) ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc{} || p != e)
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return v;
}

inline int parse_int_exact(const std::string& s, std::size_t line_no, const char* what) {
    int v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc{} || p != s.data() + s.size())
        throw ParseError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
    return v;
}

// "2008-10-24" + "02:09:59" -> UTC seconds
inline std::int64_t parse_datetime(const std::string& date, const std::string& time,
                                   std::size_t line_no) {
    const auto dparts = split_fields(date, '-');
    const auto tparts = split_fields(time, ':');
    if (dparts.size() != 3 || tparts.size() != 3)
        throw ParseError("line " + std::to_string(line_no) + ": bad datetime '" + date + " " +
                         time + "'");
    return utc_seconds(parse_int_exact(dparts[0], line_no, "year"),
                       parse_int_exact(dparts[1], line_no, "month"),
                       parse_int_exact(dparts[2], line_no, "day"),
                       parse_int_exact(tparts[0], line_no, "hour"),
                       parse_int_exact(tparts[1], line_no, "minute"),
                       parse_int_exact(tparts[2], line_no, "second"));
}

inline std::string strip_cr(std::string s) {
    if (!s.empty() && s.back() == '\r') s.pop_back();
    return s;
}

}  // namespace detail

// PLT layout: 6 header lines, then rows `lat,lon,0,alt,serial-days,date,time`.
inline std::vector<RawPoint> parse_plt(std::istream& is) {
    std::vector<RawPoint> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line_no <= 6) continue;  // header
        if (line.empty()) continue;
        const auto fields = detail::split_fields(line, ',');
        if (fields.size() != 7)
            throw ParseError("line " + std::to_string(line_no) + ": expected 7 fields, got " +
                             std::to_string(fields.size()));
        RawPoint p;
        p.lat = detail::parse_double(fields[0], line_no, "latitude");
        p.lon = detail::parse_double(fields[1], line_no, "longitude");
        p.t = detail::parse_datetime(fields[5], fields[6], line_no);
        if (std::abs(p.lat) > 90.0 || std::abs(p.lon) > 180.0)
            throw ParseError("line " + std::to_string(line_no) + ": coordinate out of range");
        out.push_back(p);
    }
    return out;
}

inline std::vector<RawPoint> parse_plt_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return parse_plt(is);
}

// Generic CSV rows `agent,lat,lon,t`; an optional header line is skipped.
inline std::vector<std::pair<std::string, RawPoint>> parse_csv(std::istream& is) {
    std::vector<std::pair<std::string, RawPoint>> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        line = detail::strip_cr(line);
        if (line.empty()) continue;
        const auto fields = detail::split_fields(line, ',');
        if (fields.size() != 4)
            throw ParseError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                             std::to_string(fields.size()));
        if (line_no == 1 && fields[0] == "agent") continue;
        RawPoint p;
        p.lat = detail::parse_double(fields[1], line_no, "latitude");
        p.lon = detail::parse_double(fields[2], line_no, "longitude");
        p.t = static_cast<std::int64_t>(detail::parse_double(fields[3], line_no, "timestamp"));
        out.emplace_back(fields[0], p);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Projection: local tangent-plane equirectangular, origin at ref
// ---------------------------------------------------------------------------

inline Point project_point(const RawPoint& pt, double ref_lat, double ref_lon) {
    const double x = kEarthRadiusMeters * std::cos(ref_lat * kDegToRad) *
                     ((pt.lon - ref_lon) * kDegToRad);
    const double y = kEarthRadiusMeters * ((pt.lat - ref_lat) * kDegToRad);
    if (std::hypot(x, y) > kMaxExtentMeters)
        throw OutOfExtentError("point " + std::to_string(pt.lat) + "," + std::to_string(pt.lon) +
                               " beyond " + std::to_string(kMaxExtentMeters / 1000.0) +
                               " km of reference");
    return Point{x, y};
}

inline std::vector<PlanarPoint> project(const std::vector<RawPoint>& points, double ref_lat,
                                        double ref_lon) {
    std::vector<PlanarPoint> out;
    out.reserve(points.size());
    for (const auto& p : points) out.push_back(PlanarPoint{project_point(p, ref_lat, ref_lon), p.t});
    return out;
}

// ---------------------------------------------------------------------------
// Stay-point detection: anchor scan with centroid locations
// ---------------------------------------------------------------------------

// From anchor i, extend j while dist(point_j, point_i) <= radius; if the time
// span reaches min_dur, emit a candidate spanning the window with the
// centroid as location, and continue after the window; otherwise advance the
// anchor by one. Region ids are assigned later by discretization.
inline std::vector<Visit> detect_stay_points(const std::vector<PlanarPoint>& points, double radius,
                                             std::int64_t min_duration) {
    std::vector<Visit> out;
    const std::size_t n = points.size();
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i + 1;
        while (j < n && std::hypot(points[j].p.x - points[i].p.x,
                                   points[j].p.y - points[i].p.y) <= radius)
            ++j;
        const std::size_t last = j - 1;
        if (points[last].t - points[i].t >= min_duration) {
            Visit v;
            double sx = 0.0, sy = 0.0;
            for (std::size_t k = i; k <= last; ++k) {
                sx += points[k].p.x;
                sy += points[k].p.y;
            }
            const double m = double(last - i + 1);
            v.location = Point{sx / m, sy / m};
            v.arrival = points[i].t;
            v.departure = points[last].t;
            v.region = -1;
            out.push_back(v);
            i = last + 1;
        } else {
            ++i;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Discretization and normalization
// ---------------------------------------------------------------------------

struct RepairStats {
    std::size_t overlaps_repaired = 0;
};

// Overlapping consecutive visits (negative travel time) are repaired by
// truncating the earlier departure to the later arrival.
inline RepairStats repair_overlaps(VisitSequence& seq) {
    RepairStats stats;
    for (std::size_t i = 1; i < seq.visits.size(); ++i) {
        if (seq.visits[i].arrival < seq.visits[i - 1].departure) {
            seq.visits[i - 1].departure = seq.visits[i].arrival;
            if (seq.visits[i - 1].departure < seq.visits[i - 1].arrival)
                seq.visits[i - 1].departure = seq.visits[i - 1].arrival;
            ++stats.overlaps_repaired;
        }
    }
    return stats;
}

// Assign region ids from the vocabulary; cells unseen at build time map to unk.
inline void assign_regions(const RegionVocabulary& vocab, std::vector<VisitSequence>& seqs) {
    for (auto& seq : seqs)
        for (auto& v : seq.visits) v.region = vocab.id_of(v.location);
}

// Vocabulary from training sequences only, then ids for everything.
inline RegionVocabulary discretize(std::vector<VisitSequence>& all,
                                   const std::vector<std::size_t>& train_indices, double cell_size,
                                   Point origin = {}) {
    std::vector<VisitSequence> train;
    train.reserve(train_indices.size());
    for (std::size_t idx : train_indices) train.push_back(all[idx]);
    RegionVocabulary vocab = RegionVocabulary::build(train, cell_size, origin);
    assign_regions(vocab, all);
    return vocab;
}

// Rebase all timestamps to the dataset's oldest arrival; scaling constants
// for model-facing targets ride along.
inline TimeScaling normalize_times(std::vector<VisitSequence>& seqs) {
    TimeScaling scaling;
    if (seqs.empty()) return scaling;
    Timestamp oldest = std::numeric_limits<Timestamp>::max();
    for (const auto& seq : seqs)
        for (const auto& v : seq.visits) oldest = std::min(oldest, v.arrival);
    scaling.epoch_offset = oldest;
    for (auto& seq : seqs)
        for (auto& v : seq.visits) {
            v.arrival -= oldest;
            v.departure -= oldest;
        }
    return scaling;
}

// ---------------------------------------------------------------------------
// Splits
// ---------------------------------------------------------------------------

inline SplitResult split(const std::vector<VisitSequence>& seqs, const SplitSpec& spec,
                         std::uint64_t seed) {
    spec.validate();
    SplitResult out;
    if (spec.mode == SplitSpec::Mode::ByAgent) {
        const std::size_t n = seqs.size();
        if (n < 10) throw ConfigError("split: BY_AGENT needs >= 10 agents, got " + std::to_string(n));
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        Rng rng(mix_seed(seed, 0x5eed5eed));
        for (std::size_t i = n - 1; i > 0; --i)
            std::swap(order[i], order[rng.below(i + 1)]);
        const std::size_t n_train = static_cast<std::size_t>(std::floor(spec.ratios[0] * n));
        const std::size_t n_valid = static_cast<std::size_t>(std::floor(spec.ratios[1] * n));
        for (std::size_t i = 0; i < n; ++i) {
            const VisitSequence& s = seqs[order[i]];
            if (i < n_train)
                out.train.push_back(s);
            else if (i < n_train + n_valid)
                out.valid.push_back(s);
            else
                out.test.push_back(s);
        }
    } else {
        // Rolling windows with stride 1, sorted chronologically by the
        // arrival of the window's last visit; ties keep (agent, offset) order.
        struct Window {
            std::size_t seq;
            std::size_t offset;
            Timestamp end_arrival;
        };
        std::vector<Window> windows;
        for (std::size_t si = 0; si < seqs.size(); ++si) {
            const auto& visits = seqs[si].visits;
            if (visits.size() < static_cast<std::size_t>(spec.window)) continue;
            for (std::size_t off = 0; off + spec.window <= visits.size(); ++off)
                windows.push_back(Window{si, off, visits[off + spec.window - 1].arrival});
        }
        std::stable_sort(windows.begin(), windows.end(), [](const Window& a, const Window& b) {
            return a.end_arrival < b.end_arrival;
        });
        const std::size_t n = windows.size();
        const std::size_t n_train = static_cast<std::size_t>(std::floor(spec.ratios[0] * n));
        const std::size_t n_valid = static_cast<std::size_t>(std::floor(spec.ratios[1] * n));
        auto materialize = [&](const Window& w) {
            VisitSequence s;
            s.agent = seqs[w.seq].agent;
            s.visits.assign(seqs[w.seq].visits.begin() + w.offset,
                            seqs[w.seq].visits.begin() + w.offset + spec.window);
            return s;
        };
        for (std::size_t i = 0; i < n; ++i) {
            if (i < n_train)
                out.train.push_back(materialize(windows[i]));
            else if (i < n_train + n_valid)
                out.valid.push_back(materialize(windows[i]));
            else
                out.test.push_back(materialize(windows[i]));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// GeoLife directory layout: Data/<agent>/Trajectory/*.plt
// ---------------------------------------------------------------------------

inline std::vector<std::pair<std::string, std::vector<RawPoint>>> load_geolife_directory(
    const std::string& root) {
    namespace fs = std::filesystem;
    std::vector<std::pair<std::string, std::vector<RawPoint>>> out;
    const fs::path data = fs::path(root) / "Data";
    const fs::path base = fs::exists(data) ? data : fs::path(root);
    if (!fs::exists(base)) throw IoError("GeoLife directory not found: " + root);
    std::vector<fs::path> agents;
    for (const auto& entry : fs::directory_iterator(base))
        if (entry.is_directory()) agents.push_back(entry.path());
    std::sort(agents.begin(), agents.end());
    for (const auto& agent_dir : agents) {
        const fs::path traj = agent_dir / "Trajectory";
        if (!fs::exists(traj)) continue;
        std::vector<fs::path> files;
        for (const auto& entry : fs::directory_iterator(traj))
            if (entry.path().extension() == ".plt") files.push_back(entry.path());
        std::sort(files.begin(), files.end());
        std::vector<RawPoint> points;
        for (const auto& f : files) {
            auto part = parse_plt_file(f.string());
            points.insert(points.end(), part.begin(), part.end());
        }
        std::stable_sort(points.begin(), points.end(),
                         [](const RawPoint& a, const RawPoint& b) { return a.t < b.t; });
        if (!points.empty()) out.emplace_back(agent_dir.filename().string(), std::move(points));
    }
    return out;
}

}  // namespace visitgen::prep
