// File interchange: JSON Lines visit sequences (one object per agent),
// partial sequences with blank placeholders, and the vocabulary file.
#pragma once

#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "visitgen/core.hpp"
#include "visitgen/vocab.hpp"

namespace visitgen::io {

using json = nlohmann::json;

inline json visit_to_json(const Visit& v) {
    return json{{"region", v.region},
                {"arrival", v.arrival},
                {"departure", v.departure},
                {"x", v.location.x},
                {"y", v.location.y}};
}

inline Visit visit_from_json(const json& j) {
    Visit v;
    v.region = j.at("region").get<RegionId>();
    v.arrival = j.at("arrival").get<Timestamp>();
    v.departure = j.at("departure").get<Timestamp>();
    v.location.x = j.value("x", 0.0);
    v.location.y = j.value("y", 0.0);
    return v;
}

inline std::string sequence_to_jsonl(const VisitSequence& seq) {
    json visits = json::array();
    for (const auto& v : seq.visits) visits.push_back(visit_to_json(v));
    return json{{"agent", seq.agent}, {"visits", visits}}.dump();
}

inline void write_sequences(std::ostream& os, const std::vector<VisitSequence>& seqs) {
    for (const auto& seq : seqs) os << sequence_to_jsonl(seq) << '\n';
}

inline void write_sequences_file(const std::string& path, const std::vector<VisitSequence>& seqs) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    write_sequences(os, seqs);
}

inline std::vector<VisitSequence> read_sequences(std::istream& is) {
    std::vector<VisitSequence> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        VisitSequence seq;
        seq.agent = j.at("agent").is_string() ? j.at("agent").get<std::string>()
                                              : j.at("agent").dump();
        for (const auto& vj : j.at("visits")) seq.visits.push_back(visit_from_json(vj));
        out.push_back(std::move(seq));
    }
    return out;
}

inline std::vector<VisitSequence> read_sequences_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_sequences(is);
}

// ---------------------------------------------------------------------------
// Partial sequences: visit entries interleaved with {"blank": true} markers.
// ---------------------------------------------------------------------------

struct PartialSequence {
    std::string agent;
    std::vector<Token> tokens;  // Visit and Blank tokens only
};

inline std::vector<PartialSequence> read_partials(std::istream& is) {
    std::vector<PartialSequence> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw ParseError("jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
        PartialSequence p;
        p.agent = j.at("agent").is_string() ? j.at("agent").get<std::string>()
                                            : j.at("agent").dump();
        for (const auto& vj : j.at("visits")) {
            if (vj.contains("blank") && vj.at("blank").get<bool>())
                p.tokens.push_back(Token::special(TokenKind::Blank));
            else
                p.tokens.push_back(Token::from_visit(visit_from_json(vj)));
        }
        out.push_back(std::move(p));
    }
    return out;
}

inline std::vector<PartialSequence> read_partials_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    return read_partials(is);
}

inline std::string partial_to_jsonl(const PartialSequence& p) {
    json visits = json::array();
    for (const auto& t : p.tokens) {
        if (t.is_visit())
            visits.push_back(visit_to_json(t.visit));
        else
            visits.push_back(json{{"blank", true}});
    }
    return json{{"agent", p.agent}, {"visits", visits}}.dump();
}

// ---------------------------------------------------------------------------
// Vocabulary file
// ---------------------------------------------------------------------------

inline json vocabulary_to_json(const RegionVocabulary& v, Timestamp epoch_offset = 0) {
    json cells = json::array();
    for (RegionId id = 0; id < v.num_cells(); ++id) {
        const CellIndex& c = v.cell(id);
        cells.push_back(json{{"ix", c.ix}, {"iy", c.iy}, {"id", id}});
    }
    return json{{"cell_size", v.cell_size()},
                {"origin", {{"x", v.origin().x}, {"y", v.origin().y}}},
                {"cells", cells},
                {"unk_id", v.unk_id()},
                {"blank_id", v.blank_id()},
                {"sep_id", v.sep_id()},
                {"ans_id", v.ans_id()},
                {"pad_id", v.pad_id()},
                {"vocab_size", v.size()},
                {"epoch_offset", epoch_offset}};
}

inline void write_vocabulary_file(const std::string& path, const RegionVocabulary& v,
                                  Timestamp epoch_offset = 0) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << vocabulary_to_json(v, epoch_offset).dump(2) << '\n';
}

inline RegionVocabulary vocabulary_from_json(const json& j, Timestamp* epoch_offset = nullptr) {
    std::vector<CellIndex> cells;
    std::vector<RegionId> ids;
    for (const auto& cj : j.at("cells")) {
        cells.push_back(CellIndex{cj.at("ix").get<std::int64_t>(), cj.at("iy").get<std::int64_t>()});
        ids.push_back(cj.at("id").get<RegionId>());
    }
    Point origin{j.at("origin").at("x").get<double>(), j.at("origin").at("y").get<double>()};
    RegionVocabulary v =
        RegionVocabulary::from_cells(cells, j.at("cell_size").get<double>(), origin);
    // The sorted rebuild must reproduce the stored ids; otherwise the file is
    // inconsistent with the id assignment rule.
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (v.id_of_cell(cells[i]) != ids[i])
            throw VocabError("vocabulary file: id assignment does not match sorted cell order");
    if (j.contains("vocab_size") && j.at("vocab_size").get<std::int32_t>() != v.size())
        throw VocabError("vocabulary file: vocab_size mismatch");
    if (epoch_offset) *epoch_offset = j.value("epoch_offset", Timestamp{0});
    return v;
}

inline RegionVocabulary read_vocabulary_file(const std::string& path,
                                             Timestamp* epoch_offset = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    json j;
    try {
        is >> j;
    } catch (const json::exception& e) {
        throw ParseError(std::string("vocabulary file: ") + e.what());
    }
    return vocabulary_from_json(j, epoch_offset);
}

inline void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for writing: " + path);
    os << content;
}

inline std::string read_text_file(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open for reading: " + path);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

}  // namespace visitgen::io
