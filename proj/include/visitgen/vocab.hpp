// Region vocabulary: bidirectional map between square grid cells and
// contiguous integer ids, plus the unknown-cell id and special-token ids.
#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "visitgen/core.hpp"

namespace visitgen {

struct CellIndex {
    std::int64_t ix = 0;
    std::int64_t iy = 0;

    friend bool operator==(const CellIndex& a, const CellIndex& b) {
        return a.ix == b.ix && a.iy == b.iy;
    }
    friend bool operator<(const CellIndex& a, const CellIndex& b) {
        return a.ix != b.ix ? a.ix < b.ix : a.iy < b.iy;
    }
};

struct CellIndexHash {
    std::size_t operator()(const CellIndex& c) const {
        return std::hash<std::int64_t>()(c.ix * 0x9e3779b97f4a7c15LL ^ c.iy);
    }
};

class RegionVocabulary {
public:
    RegionVocabulary() = default;

    // Ids are assigned to cells sorted by (ix, iy), so the mapping is a pure
    // function of the cell set.
    static RegionVocabulary from_cells(std::vector<CellIndex> cells, double cell_size,
                                       Point origin = {}) {
        if (!(cell_size > 0.0)) throw ConfigError("vocabulary: cell size must be positive");
        std::sort(cells.begin(), cells.end());
        cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
        RegionVocabulary v;
        v.cell_size_ = cell_size;
        v.origin_ = origin;
        v.id_to_cell_ = std::move(cells);
        v.cell_to_id_.reserve(v.id_to_cell_.size());
        for (std::size_t i = 0; i < v.id_to_cell_.size(); ++i)
            v.cell_to_id_.emplace(v.id_to_cell_[i], static_cast<RegionId>(i));
        return v;
    }

    // Builds the closed region set from (training) sequences.
    static RegionVocabulary build(const std::vector<VisitSequence>& train, double cell_size,
                                  Point origin = {}) {
        std::vector<CellIndex> cells;
        RegionVocabulary probe;
        probe.cell_size_ = cell_size;
        probe.origin_ = origin;
        for (const auto& seq : train)
            for (const auto& v : seq.visits) cells.push_back(probe.cell_of(v.location));
        return from_cells(std::move(cells), cell_size, origin);
    }

    CellIndex cell_of(const Point& p) const {
        return CellIndex{static_cast<std::int64_t>(std::floor((p.x - origin_.x) / cell_size_)),
                         static_cast<std::int64_t>(std::floor((p.y - origin_.y) / cell_size_))};
    }

    // Region id of the cell containing p; unknown cells map to unk.
    RegionId id_of(const Point& p) const {
        const auto it = cell_to_id_.find(cell_of(p));
        return it == cell_to_id_.end() ? unk_id() : it->second;
    }

    RegionId id_of_cell(const CellIndex& c) const {
        const auto it = cell_to_id_.find(c);
        return it == cell_to_id_.end() ? unk_id() : it->second;
    }

    Point cell_center(RegionId id) const {
        if (!is_cell(id)) throw VocabError("cell_center: id " + std::to_string(id) + " has no cell");
        const CellIndex& c = id_to_cell_[static_cast<std::size_t>(id)];
        return Point{origin_.x + (double(c.ix) + 0.5) * cell_size_,
                     origin_.y + (double(c.iy) + 0.5) * cell_size_};
    }

    const CellIndex& cell(RegionId id) const {
        if (!is_cell(id)) throw VocabError("cell: id out of range");
        return id_to_cell_[static_cast<std::size_t>(id)];
    }

    // Id layout: [0, cells) known cells, then unk, BLANK, SEP, ANS, PAD.
    std::int32_t num_cells() const { return static_cast<std::int32_t>(id_to_cell_.size()); }
    RegionId unk_id() const { return num_cells(); }
    RegionId blank_id() const { return num_cells() + 1; }
    RegionId sep_id() const { return num_cells() + 2; }
    RegionId ans_id() const { return num_cells() + 3; }
    RegionId pad_id() const { return num_cells() + 4; }
    std::int32_t size() const { return num_cells() + 5; }

    bool is_cell(RegionId id) const { return id >= 0 && id < num_cells(); }
    bool is_region(RegionId id) const { return id >= 0 && id <= unk_id(); }
    bool is_special(RegionId id) const { return id > unk_id() && id < size(); }

    RegionId token_id(const Token& t) const {
        switch (t.kind) {
            case TokenKind::Visit:
                if (!is_region(t.visit.region))
                    throw VocabError("token_id: visit region " + std::to_string(t.visit.region) +
                                     " outside vocabulary");
                return t.visit.region;
            case TokenKind::Blank: return blank_id();
            case TokenKind::Sep: return sep_id();
            case TokenKind::Ans: return ans_id();
            case TokenKind::Pad: return pad_id();
        }
        throw VocabError("token_id: unknown token kind");
    }

    double cell_size() const { return cell_size_; }
    const Point& origin() const { return origin_; }
    const std::vector<CellIndex>& cells() const { return id_to_cell_; }

private:
    double cell_size_ = 1.0;
    Point origin_{};
    std::vector<CellIndex> id_to_cell_;
    std::unordered_map<CellIndex, RegionId, CellIndexHash> cell_to_id_;
};

}  // namespace visitgen
