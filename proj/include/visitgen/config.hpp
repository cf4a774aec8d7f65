// Run configuration: a single human-editable JSON document with sections
// mirroring the in-code configs, plus the run manifest written next to every
// artifact set. Command-line flags override file values.
#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "visitgen/core.hpp"
#include "visitgen/io.hpp"
#include "visitgen/model.hpp"
#include "visitgen/preprocess.hpp"
#include "visitgen/synth.hpp"
#include "visitgen/train.hpp"
#include "visitgen/version.hpp"

namespace visitgen::config {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Section (de)serialization
// ---------------------------------------------------------------------------

inline void apply_synth(const json& j, synth::SynthConfig& c) {
    c.n_agents = j.value("n_agents", c.n_agents);
    c.n_days = j.value("n_days", c.n_days);
    c.grid_extent = j.value("grid_extent", c.grid_extent);
    c.cell_size = j.value("cell_size", c.cell_size);
    c.seed = j.value("seed", c.seed);
    c.bimodal_fraction = j.value("bimodal_fraction", c.bimodal_fraction);
    if (j.contains("mode_slow")) {
        c.mode_slow.mean_minutes = j["mode_slow"].value("mean", c.mode_slow.mean_minutes);
        c.mode_slow.std_minutes = j["mode_slow"].value("std", c.mode_slow.std_minutes);
    }
    if (j.contains("mode_fast")) {
        c.mode_fast.mean_minutes = j["mode_fast"].value("mean", c.mode_fast.mean_minutes);
        c.mode_fast.std_minutes = j["mode_fast"].value("std", c.mode_fast.std_minutes);
    }
    c.schedule_noise_min = j.value("schedule_noise_min", c.schedule_noise_min);
    c.lunch_prob = j.value("lunch_prob", c.lunch_prob);
    c.recreation_prob = j.value("recreation_prob", c.recreation_prob);
    c.lunch_minutes = j.value("lunch_minutes", c.lunch_minutes);
    c.recreation_minutes = j.value("recreation_minutes", c.recreation_minutes);
}

inline json synth_to_json(const synth::SynthConfig& c) {
    return json{{"n_agents", c.n_agents},
                {"n_days", c.n_days},
                {"grid_extent", c.grid_extent},
                {"cell_size", c.cell_size},
                {"seed", c.seed},
                {"bimodal_fraction", c.bimodal_fraction},
                {"mode_slow", {{"mean", c.mode_slow.mean_minutes}, {"std", c.mode_slow.std_minutes}}},
                {"mode_fast", {{"mean", c.mode_fast.mean_minutes}, {"std", c.mode_fast.std_minutes}}},
                {"schedule_noise_min", c.schedule_noise_min},
                {"lunch_prob", c.lunch_prob},
                {"recreation_prob", c.recreation_prob},
                {"lunch_minutes", c.lunch_minutes},
                {"recreation_minutes", c.recreation_minutes}};
}

inline void apply_split(const json& j, prep::SplitSpec& s) {
    if (j.contains("mode")) {
        const std::string m = j["mode"].get<std::string>();
        if (m == "by_agent")
            s.mode = prep::SplitSpec::Mode::ByAgent;
        else if (m == "chronological")
            s.mode = prep::SplitSpec::Mode::Chronological;
        else
            throw ConfigError("split.mode must be by_agent or chronological");
    }
    if (j.contains("ratios")) {
        const auto r = j["ratios"].get<std::vector<double>>();
        if (r.size() != 3) throw ConfigError("split.ratios must have 3 entries");
        s.ratios[0] = r[0];
        s.ratios[1] = r[1];
        s.ratios[2] = r[2];
    }
    s.window = j.value("window", s.window);
    s.mask_prob = j.value("mask_prob", s.mask_prob);
}

inline void apply_model(const json& j, model::ModelConfig& c) {
    if (j.contains("preset")) {
        const std::string p = j["preset"].get<std::string>();
        if (p == "geolife")
            c = model::ModelConfig::geolife();
        else if (p == "mobilitysim")
            c = model::ModelConfig::mobilitysim();
        else if (p == "desk")
            c = model::ModelConfig::desk();
        else
            throw ConfigError("unknown model preset: " + p);
    }
    model::from_json(j, c);
}

inline void apply_train(const json& j, train::TrainOptions& o) {
    o.max_epochs = j.value("max_epochs", o.max_epochs);
    o.patience = j.value("patience", o.patience);
    o.batch_size = j.value("batch_size", o.batch_size);
    o.learning_rate = j.value("learning_rate", o.learning_rate);
    o.mask_prob = j.value("mask_prob", o.mask_prob);
    o.dynamic_mask = j.value("dynamic_mask", o.dynamic_mask);
}

// ---------------------------------------------------------------------------
// Top-level document
// ---------------------------------------------------------------------------

struct RunConfig {
    json raw = json::object();

    static RunConfig load(const std::string& path) {
        RunConfig c;
        std::ifstream is(path);
        if (!is) throw IoError("cannot open config file: " + path);
        try {
            is >> c.raw;
        } catch (const json::exception& e) {
            throw ParseError("config file " + path + ": " + e.what());
        }
        return c;
    }

    json section(const std::string& name) const {
        return raw.contains(name) ? raw.at(name) : json::object();
    }
};

// ---------------------------------------------------------------------------
// Manifest
// ---------------------------------------------------------------------------

inline std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

inline void write_manifest(const std::string& out_dir, const std::string& command,
                           const json& effective_config, std::uint64_t seed,
                           const std::vector<std::string>& outputs) {
    json m;
    m["command"] = command;
    m["version"] = kVersion;
    m["seed"] = seed;
    m["config"] = effective_config;
    m["config_hash"] = hex64(fnv1a64(effective_config.dump()));
    m["outputs"] = outputs;
    io::write_text_file((std::filesystem::path(out_dir) / "manifest.json").string(),
                        m.dump(2) + "\n");
}

}  // namespace visitgen::config
