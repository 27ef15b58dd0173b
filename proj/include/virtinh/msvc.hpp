#pragma once

#include "virtinh/ctor.hpp"
#include "virtinh/itanium.hpp"
#include "virtinh/recovery.hpp"

#include <map>
#include <vector>

namespace virtinh {

struct VbTable {
    Addr base = 0;
    std::vector<std::int64_t> entries;
    std::int64_t first_constant = 0;

    friend bool operator==(const VbTable&, const VbTable&) = default;
};

struct VbTableOptions {
    std::int64_t constant = 0;
    std::int64_t cap_offset = 0x100000;
    unsigned entry_size = 4; // VB-Table slots are 32-bit in the MSVC layout
};

namespace detail {

inline std::optional<std::int64_t> read_entry(const BinaryImage& img, Addr a, unsigned size) {
    if (size == 8)
        return img.try_read<std::int64_t>(a);
    if (auto v = img.try_read<std::int32_t>(a))
        return *v;
    return std::nullopt;
}

} // namespace detail

// A referenced address whose first slot holds the constant starts a VB-Table; the following
// slots belong to it while each lies strictly between 0 and the cap.
inline std::map<Addr, VbTable> get_vbtables(const BinaryImage& img, const InstrStreams& streams,
                                           const VbTableOptions& opt = {}) {
    std::map<Addr, VbTable> out;
    for (Addr i : text_references(img, streams)) {
        if (i % opt.entry_size || !img.points_to_data(i))
            continue;
        auto first = detail::read_entry(img, i, opt.entry_size);
        if (!first || *first != opt.constant)
            continue;
        VbTable t{i, {}, *first};
        for (Addr loc = i + opt.entry_size;; loc += opt.entry_size) {
            auto e = detail::read_entry(img, loc, opt.entry_size);
            if (!e || *e <= 0 || *e >= opt.cap_offset)
                break;
            t.entries.push_back(*e);
        }
        if (!t.entries.empty())
            out.emplace(i, std::move(t));
    }
    return out;
}

struct MsvcRecovery {
    std::vector<InheritanceEdge> virtual_edges;
    std::vector<InheritanceEdge> intermediate_edges;
    std::map<Addr, Addr> ctor_class;
    std::map<Addr, Addr> vbptr_of; // ctor -> VB-Table it initializes first
    std::vector<Diagnostic> diagnostics;

    std::vector<InheritanceEdge> all() const {
        auto out = virtual_edges;
        out.insert(out.end(), intermediate_edges.begin(), intermediate_edges.end());
        return out;
    }
};

// Per ctor: a call whose this-displacement, measured from the ctor's first vbptr slot, is an
// entry of that VB-Table constructs a virtual base; a callee that initializes a known
// VB-Table pointer is an intermediate base.
inline MsvcRecovery recover_msvc_bases(const CtorAnalysis& ca, const std::map<Addr, VbTable>& vbtables,
                                       const VTableSet& groups) {
    MsvcRecovery out;
    ConstructionMap identity;
    std::vector<Vtt> no_vtts;
    ClassResolver res(groups, no_vtts, identity);
    for (auto& [f, s] : ca.summaries)
        if (auto cls = res.class_of_writes(s))
            out.ctor_class.emplace(f, *cls);
    auto initializes_vbtable = [&](Addr f) {
        auto it = ca.summaries.find(f);
        if (it == ca.summaries.end())
            return false;
        for (auto& w : it->second.vbptr_writes)
            if (vbtables.count(w.value))
                return true;
        return false;
    };
    for (auto& [f, s] : ca.summaries) {
        auto xc = out.ctor_class.find(f);
        if (xc == out.ctor_class.end())
            continue;
        Addr x = xc->second;
        const ThisWrite* vbptr = nullptr;
        for (auto& w : s.vbptr_writes)
            if (vbtables.count(w.value)) {
                vbptr = &w;
                break;
            }
        if (vbptr)
            out.vbptr_of[f] = vbptr->value;
        else
            out.diagnostics.push_back({Errc::MissingVbptr, f, "ctor initializes no VB-Table"});
        for (auto& c : s.calls) {
            if (!c.target)
                continue;
            auto yc = out.ctor_class.find(*c.target);
            if (yc == out.ctor_class.end() || yc->second == x)
                continue;
            if (vbptr && c.arg1.is(SymKind::ThisPlus)) {
                auto& entries = vbtables.at(vbptr->value).entries;
                std::int64_t rel = c.arg1.k - vbptr->offset;
                if (std::find(entries.begin(), entries.end(), rel) != entries.end())
                    out.virtual_edges.push_back(make_edge(x, yc->second, EdgeKind::Virtual, c.site));
            }
            if (initializes_vbtable(*c.target))
                out.intermediate_edges.push_back(make_edge(x, yc->second, EdgeKind::Intermediate, c.site));
        }
    }
    return out;
}

} // namespace virtinh
