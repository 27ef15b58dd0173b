#pragma once

#include "virtinh/ctor.hpp"
#include "virtinh/itanium.hpp"

#include <algorithm>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <tuple>
#include <vector>

namespace virtinh {

enum class EdgeKind { Virtual, Intermediate, Direct };
enum class Evidence { VbaseOffsetMatch, SubVttArg, CtorCallOffset };

constexpr std::string_view to_string(EdgeKind k) {
    switch (k) {
    case EdgeKind::Virtual: return "virtual";
    case EdgeKind::Intermediate: return "intermediate";
    case EdgeKind::Direct: return "direct";
    }
    return "direct";
}

constexpr std::string_view to_string(Evidence e) {
    switch (e) {
    case Evidence::VbaseOffsetMatch: return "VbaseOffsetMatch";
    case Evidence::SubVttArg: return "SubVttArg";
    case Evidence::CtorCallOffset: return "CtorCallOffset";
    }
    return "CtorCallOffset";
}

constexpr Evidence evidence_for(EdgeKind k) {
    switch (k) {
    case EdgeKind::Virtual: return Evidence::VbaseOffsetMatch;
    case EdgeKind::Intermediate: return Evidence::SubVttArg;
    default: return Evidence::CtorCallOffset;
    }
}

// Lower value wins when two kinds describe the same pair.
constexpr int priority(EdgeKind k) { return static_cast<int>(k); }

struct InheritanceEdge {
    Addr derived = 0;
    Addr base = 0;
    EdgeKind kind = EdgeKind::Direct;
    Evidence evidence = Evidence::CtorCallOffset;
    Addr site = 0;        // call site that produced the edge
    bool orphan = false;  // base is a construction group standing in for its class
    bool in_cycle = false;

    friend bool operator==(const InheritanceEdge&, const InheritanceEdge&) = default;
};

inline InheritanceEdge make_edge(Addr derived, Addr base, EdgeKind kind, Addr site = 0) {
    return {derived, base, kind, evidence_for(kind), site, false, false};
}

struct ClassNode {
    Addr id = 0;
    std::vector<std::int64_t> vbase_offsets;
    bool has_vtt = false;
    bool orphan = false;

    friend bool operator==(const ClassNode&, const ClassNode&) = default;
};

// One connected component holding at least one Virtual edge.
struct InheritanceTree {
    std::vector<Addr> members;
    std::vector<Addr> virtual_bases;
    std::vector<Addr> intermediate_bases;
    std::size_t n_edges = 0;
    std::size_t n_virtual_edges = 0;
    std::size_t n_intermediate_edges = 0;
    std::size_t n_direct_edges = 0;
};

struct Hierarchy {
    std::vector<ClassNode> nodes;
    std::vector<InheritanceEdge> edges;
    std::vector<InheritanceTree> trees;
    std::vector<Diagnostic> diagnostics;

    const ClassNode* node(Addr id) const {
        for (auto& n : nodes)
            if (n.id == id)
                return &n;
        return nullptr;
    }

    std::set<Addr> bases_of(Addr derived, EdgeKind kind) const {
        std::set<Addr> out;
        for (auto& e : edges)
            if (e.derived == derived && e.kind == kind)
                out.insert(e.base);
        return out;
    }
};

// Maps address points, subVTT locations, and ctor functions to class ids.
class ClassResolver {
public:
    ClassResolver(const VTableSet& groups, const std::vector<Vtt>& vtts, const ConstructionMap& cmap)
        : groups_(groups), vtts_(vtts), cmap_(cmap), members_(index_members(groups)) {}

    std::optional<Addr> class_of_vptr(Addr ap) const {
        auto it = members_.find(ap);
        if (it == members_.end())
            return std::nullopt;
        Addr g = it->second.group;
        if (groups_.at(g).is_construction && !cmap_.to_regular.count(g))
            return std::nullopt;
        return cmap_.resolve(g);
    }

    // A subVTT location: the VTT entry stored there selects the SubVtt, whose primary
    // group is mapped to its class.
    std::optional<Addr> class_of_subvtt(Addr loc) const {
        for (auto& t : vtts_) {
            auto entry = t.entry_at(loc);
            if (!entry)
                continue;
            if (auto* s = t.sub_vtt_of(*entry))
                return class_of_vptr(s->primary_vptr);
        }
        return std::nullopt;
    }

    // Class whose vptr the ctor stores last at its lowest object offset.
    std::optional<Addr> class_of_writes(const CtorSummary& s) const {
        const ThisWrite* best = nullptr;
        for (auto& w : s.vptr_writes)
            if (!best || w.offset <= best->offset)
                best = &w;
        return best ? class_of_vptr(best->value) : std::nullopt;
    }

    bool is_orphan(Addr cls) const { return cmap_.orphans.count(cls) != 0; }

private:
    const VTableSet& groups_;
    const std::vector<Vtt>& vtts_;
    const ConstructionMap& cmap_;
    std::map<Addr, MemberRef> members_;
};

struct RecoveryResult {
    std::vector<InheritanceEdge> virtual_edges;
    std::vector<InheritanceEdge> intermediate_edges;
    std::vector<InheritanceEdge> direct_edges;
    std::map<Addr, Addr> ctor_class; // function -> class id
    std::vector<Diagnostic> diagnostics;

    std::vector<InheritanceEdge> all() const {
        std::vector<InheritanceEdge> out = virtual_edges;
        out.insert(out.end(), intermediate_edges.begin(), intermediate_edges.end());
        out.insert(out.end(), direct_edges.begin(), direct_edges.end());
        return out;
    }
};

namespace detail {

// Follows a subVTT location into the called ctor and on through the special ctors it reaches,
// each receiving the location advanced by the displacement it was passed.
inline void trace_subvtt(const CtorAnalysis& ca, const ClassResolver& res, Addr func, Addr loc,
                         const std::function<void(Addr func, Addr loc, Addr cls)>& visit,
                         std::set<std::pair<Addr, Addr>>& seen) {
    if (!seen.insert({func, loc}).second)
        return;
    if (auto cls = res.class_of_subvtt(loc))
        visit(func, loc, *cls);
    auto it = ca.summaries.find(func);
    if (it == ca.summaries.end())
        return;
    for (auto& c : it->second.calls)
        if (c.target && c.arg2.is(SymKind::Arg2Plus))
            trace_subvtt(ca, res, *c.target, loc + static_cast<Addr>(c.arg2.k), visit, seen);
}

} // namespace detail

// Assigns classes to ctors: by their own vptr writes, else by the subVTTs they receive.
inline std::map<Addr, Addr> attribute_ctors(const CtorAnalysis& ca, const ClassResolver& res) {
    std::map<Addr, Addr> out;
    for (auto& [f, s] : ca.summaries)
        if (auto cls = res.class_of_writes(s))
            out.emplace(f, *cls);
    std::set<std::pair<Addr, Addr>> seen;
    for (auto& [f, s] : ca.summaries)
        for (auto& c : s.calls)
            if (c.target && c.arg2.is(SymKind::Imm) && res.class_of_subvtt(c.arg2.v))
                detail::trace_subvtt(ca, res, *c.target, c.arg2.v,
                                     [&](Addr func, Addr, Addr cls) { out.emplace(func, cls); }, seen);
    return out;
}

inline std::vector<InheritanceEdge> recover_virtual_bases(const CtorAnalysis& ca, const VTableSet& groups,
                                                          const std::map<Addr, Addr>& ctor_class,
                                                          std::vector<Diagnostic>* diags = nullptr) {
    std::vector<InheritanceEdge> out;
    for (auto& [f, s] : ca.summaries) {
        auto xc = ctor_class.find(f);
        if (xc == ctor_class.end() || !groups.count(xc->second))
            continue;
        Addr x = xc->second;
        auto vb = groups.at(x).virtual_base_displacements();
        if (vb.empty())
            continue;
        for (auto& c : s.calls) {
            if (!c.arg1.is(SymKind::ThisPlus) || !vb.count(c.arg1.k))
                continue;
            if (!c.target) {
                if (diags)
                    diags->push_back({Errc::UnresolvedTarget, c.site, "indirect call at a virtual-base offset"});
                continue;
            }
            auto yc = ctor_class.find(*c.target);
            if (yc == ctor_class.end() || yc->second == x)
                continue;
            out.push_back(make_edge(x, yc->second, EdgeKind::Virtual, c.site));
        }
    }
    return out;
}

// Every subVTT argument passed by a ctor of X names an intermediate base of X, and so does
// every subVTT a reached special ctor passes on.
inline std::vector<InheritanceEdge> recover_intermediate_bases(const CtorAnalysis& ca, const ClassResolver& res,
                                                               const std::map<Addr, Addr>& ctor_class) {
    std::vector<InheritanceEdge> out;
    for (auto& [f, s] : ca.summaries) {
        auto xc = ctor_class.find(f);
        if (xc == ctor_class.end() || s.is_special)
            continue;
        Addr x = xc->second;
        std::set<std::pair<Addr, Addr>> seen;
        for (auto& c : s.calls) {
            if (!c.arg2.is(SymKind::Imm) || std::find(s.vtt_args_seen.begin(), s.vtt_args_seen.end(), c.arg2.v) ==
                                                s.vtt_args_seen.end())
                continue;
            auto emit = [&](Addr, Addr, Addr y) {
                if (y == x)
                    return;
                auto e = make_edge(x, y, EdgeKind::Intermediate, c.site);
                e.orphan = res.is_orphan(y);
                out.push_back(e);
            };
            if (c.target)
                detail::trace_subvtt(ca, res, *c.target, c.arg2.v, emit, seen);
            else if (auto y = res.class_of_subvtt(c.arg2.v))
                emit(0, c.arg2.v, *y);
        }
    }
    return out;
}

// Ctor calls at offset 0 or at a secondary's subobject offset that is not a virtual-base offset.
inline std::vector<InheritanceEdge> recover_direct_bases(const CtorAnalysis& ca, const VTableSet& groups,
                                                         const std::map<Addr, Addr>& ctor_class) {
    std::vector<InheritanceEdge> out;
    for (auto& [f, s] : ca.summaries) {
        auto xc = ctor_class.find(f);
        if (xc == ctor_class.end() || !groups.count(xc->second))
            continue;
        Addr x = xc->second;
        auto& g = groups.at(x);
        auto vb = g.virtual_base_displacements();
        std::set<std::int64_t> offs{0};
        for (auto& sec : g.secondaries)
            offs.insert(-sec.offset_to_top);
        for (auto& c : s.calls) {
            if (!c.arg1.is(SymKind::ThisPlus) || !offs.count(c.arg1.k) || vb.count(c.arg1.k) || !c.target)
                continue;
            auto yc = ctor_class.find(*c.target);
            if (yc == ctor_class.end() || yc->second == x)
                continue;
            out.push_back(make_edge(x, yc->second, EdgeKind::Direct, c.site));
        }
    }
    return out;
}

inline RecoveryResult recover_bases(const CtorAnalysis& ca, const VTableSet& groups, const std::vector<Vtt>& vtts,
                                    const ConstructionMap& cmap) {
    RecoveryResult out;
    ClassResolver res(groups, vtts, cmap);
    out.ctor_class = attribute_ctors(ca, res);
    out.virtual_edges = recover_virtual_bases(ca, groups, out.ctor_class, &out.diagnostics);
    out.intermediate_edges = recover_intermediate_bases(ca, res, out.ctor_class);
    out.direct_edges = recover_direct_bases(ca, groups, out.ctor_class);
    return out;
}

// Class nodes: every regular group plus construction groups standing in for absent classes.
inline std::vector<ClassNode> class_nodes(const VTableSet& groups, const std::vector<Vtt>& vtts,
                                          const ConstructionMap& cmap) {
    std::set<Addr> owners;
    for (auto& t : vtts)
        owners.insert(t.owner_vptr);
    std::vector<ClassNode> out;
    for (auto& [id, g] : groups) {
        bool orphan = cmap.orphans.count(id) != 0;
        if (g.is_construction && !orphan)
            continue;
        out.push_back({id, g.vbase_offsets(), owners.count(id) != 0, orphan});
    }
    return out;
}

namespace detail {

struct UnionFind {
    std::map<Addr, Addr> parent;

    Addr find(Addr a) {
        auto it = parent.find(a);
        if (it == parent.end()) {
            parent[a] = a;
            return a;
        }
        if (it->second == a)
            return a;
        return it->second = find(it->second);
    }

    void unite(Addr a, Addr b) {
        a = find(a);
        b = find(b);
        if (a != b)
            parent[std::max(a, b)] = std::min(a, b);
    }
};

} // namespace detail

// Deduplicates edges by priority, flags cycle-closing edges, and collects components
// that contain a Virtual edge.
inline Hierarchy build_tree(std::vector<ClassNode> nodes, const std::vector<InheritanceEdge>& edges) {
    Hierarchy h;
    std::set<Addr> ids;
    for (auto& n : nodes)
        ids.insert(n.id);
    std::map<std::pair<Addr, Addr>, InheritanceEdge> best;
    for (auto& e : edges) {
        if (e.derived == e.base)
            continue;
        auto key = std::pair{e.derived, e.base};
        auto it = best.find(key);
        if (it == best.end() || priority(e.kind) < priority(it->second.kind) ||
            (e.kind == it->second.kind && e.site < it->second.site))
            best[key] = e;
    }
    for (auto& [key, e] : best)
        for (Addr id : {e.derived, e.base})
            if (ids.insert(id).second)
                nodes.push_back({id, {}, false, false});
    std::sort(nodes.begin(), nodes.end(), [](const ClassNode& a, const ClassNode& b) { return a.id < b.id; });
    h.nodes = std::move(nodes);
    for (auto& [key, e] : best)
        h.edges.push_back(e);

    // Edges whose endpoints already reach each other in derived->base direction close a cycle.
    std::map<Addr, std::vector<std::size_t>> out_edges;
    for (std::size_t i = 0; i < h.edges.size(); ++i)
        out_edges[h.edges[i].derived].push_back(i);
    std::map<Addr, int> color; // 0 white, 1 on stack, 2 done
    std::function<void(Addr)> dfs = [&](Addr u) {
        color[u] = 1;
        for (auto i : out_edges[u]) {
            Addr v = h.edges[i].base;
            if (color[v] == 1) {
                h.edges[i].in_cycle = true;
                h.diagnostics.push_back({Errc::CycleDetected, u, "edge to " + hex(v) + " closes a cycle"});
            } else if (color[v] == 0) {
                dfs(v);
            }
        }
        color[u] = 2;
    };
    for (auto& n : h.nodes)
        if (color[n.id] == 0)
            dfs(n.id);

    detail::UnionFind uf;
    for (auto& n : h.nodes)
        uf.find(n.id);
    for (auto& e : h.edges)
        uf.unite(e.derived, e.base);
    std::map<Addr, InheritanceTree> trees;
    std::set<Addr> virtual_roots;
    for (auto& e : h.edges)
        if (e.kind == EdgeKind::Virtual)
            virtual_roots.insert(uf.find(e.derived));
    for (auto& n : h.nodes) {
        Addr r = uf.find(n.id);
        if (virtual_roots.count(r))
            trees[r].members.push_back(n.id);
    }
    for (auto& e : h.edges) {
        auto it = trees.find(uf.find(e.derived));
        if (it == trees.end())
            continue;
        auto& t = it->second;
        ++t.n_edges;
        if (e.kind == EdgeKind::Virtual) {
            ++t.n_virtual_edges;
            t.virtual_bases.push_back(e.base);
        } else if (e.kind == EdgeKind::Intermediate) {
            ++t.n_intermediate_edges;
            t.intermediate_bases.push_back(e.base);
        } else {
            ++t.n_direct_edges;
        }
    }
    for (auto& [r, t] : trees) {
        for (auto* v : {&t.virtual_bases, &t.intermediate_bases}) {
            std::sort(v->begin(), v->end());
            v->erase(std::unique(v->begin(), v->end()), v->end());
        }
        h.trees.push_back(std::move(t));
    }
    return h;
}

} // namespace virtinh
