#pragma once

#include "virtinh/itanium.hpp"

#include <map>
#include <set>
#include <string>
#include <vector>

namespace virtinh {

// Construction VTables needed by a pure virtual-inheritance chain of the given depth.
constexpr std::uint64_t predict_cvtables(std::uint64_t depth) { return (depth + 1) * (depth + 2) / 2 - 1; }

inline constexpr std::uint64_t kPredictionDepths = 5;

struct SurfaceReport {
    std::size_t n_construction_vtables = 0;
    std::set<std::int64_t> unique_vbase_offsets;
    std::set<std::int64_t> unique_offsets_to_top;
    std::map<std::int64_t, std::size_t> vbase_offset_histogram;
    std::map<std::int64_t, std::size_t> offset_to_top_histogram;
    std::map<std::uint64_t, std::uint64_t> per_depth_prediction;
    std::map<Addr, std::size_t> construction_per_vtt; // VTT owner -> construction subVTTs
};

// Offsets carried by construction groups only.
inline SurfaceReport offset_distribution(const VTableSet& groups, const std::vector<Vtt>& vtts = {}) {
    SurfaceReport r;
    for (auto& [id, g] : groups) {
        if (!g.is_construction)
            continue;
        ++r.n_construction_vtables;
        for (auto v : g.vbase_offsets()) {
            r.unique_vbase_offsets.insert(v);
            ++r.vbase_offset_histogram[v];
        }
        for (auto& s : g.secondaries) {
            r.unique_offsets_to_top.insert(s.offset_to_top);
            ++r.offset_to_top_histogram[s.offset_to_top];
        }
    }
    for (std::uint64_t d = 0; d <= kPredictionDepths; ++d)
        r.per_depth_prediction[d] = predict_cvtables(d);
    for (auto& t : vtts) {
        std::size_t n = 0;
        for (auto& s : t.sub_vtts)
            n += s.is_construction;
        r.construction_per_vtt[t.owner_vptr] = n;
    }
    return r;
}

// Two-column "value count" blocks separated by two blank lines, one block per distribution.
inline std::string gnuplot_dump(const SurfaceReport& r) {
    std::string out = "# vbase-offset count\n";
    for (auto& [v, n] : r.vbase_offset_histogram)
        out += std::to_string(v) + " " + std::to_string(n) + "\n";
    out += "\n\n# offset-to-top count\n";
    for (auto& [v, n] : r.offset_to_top_histogram)
        out += std::to_string(v) + " " + std::to_string(n) + "\n";
    return out;
}

} // namespace virtinh
