#pragma once

#include "virtinh/evalharness.hpp"
#include "virtinh/pipeline.hpp"

#include <json.hpp>

#include <cstdio>
#include <string>

namespace virtinh {

using ojson = nlohmann::ordered_json;

struct ReportOptions {
    bool include_calls = false; // per-call records in the ctors section
    const NameMap* names = nullptr;
};

namespace report_detail {

inline ojson addrs(const std::vector<Addr>& v) {
    ojson a = ojson::array();
    for (Addr x : v)
        a.push_back(hex(x));
    return a;
}

inline ojson offsets(const std::vector<std::int64_t>& v) {
    ojson a = ojson::array();
    for (auto x : v)
        a.push_back(signed_hex(x));
    return a;
}

inline ojson diagnostics(const std::vector<Diagnostic>& ds) {
    ojson a = ojson::array();
    for (auto& d : ds)
        a.push_back({{"code", std::string(to_string(d.code))}, {"addr", hex(d.addr)}, {"detail", d.detail}});
    return a;
}

inline ojson sym(const SymValue& v) {
    ojson o;
    o["kind"] = std::string(to_string(v.kind));
    if (v.is(SymKind::Imm))
        o["value"] = hex(v.v);
    else if (!v.is(SymKind::Unknown))
        o["offset"] = signed_hex(v.k);
    return o;
}

inline ojson subvtable(const SubVTable& s) {
    ojson o;
    o["address_point"] = hex(s.address_point);
    o["offset_to_top"] = signed_hex(s.offset_to_top);
    o["rtti_slot"] = hex(s.rtti_slot);
    o["fn_ptrs"] = addrs(s.fn_ptrs);
    o["vbase_offsets"] = offsets(s.vbase_offsets);
    o["vcall_region_present"] = s.vcall_region_present;
    return o;
}

inline ojson histogram(const std::map<std::int64_t, std::size_t>& h) {
    ojson a = ojson::array();
    for (auto& [v, n] : h)
        a.push_back({{"value", v}, {"hex", signed_hex(v)}, {"count", n}});
    return a;
}

inline ojson signed_set(const std::set<std::int64_t>& s) {
    ojson a = ojson::array();
    for (auto v : s)
        a.push_back({{"value", v}, {"hex", signed_hex(v)}});
    return a;
}

inline std::optional<std::string> name_of(const ReportOptions& opt, Addr id) {
    if (!opt.names)
        return std::nullopt;
    auto it = opt.names->find(id);
    if (it == opt.names->end())
        return std::nullopt;
    return it->second;
}

} // namespace report_detail

inline ojson config_json(const AnalysisConfig& c) {
    ojson o;
    o["abi"] = std::string(to_string(c.abi));
    o["word_size"] = c.word_size;
    o["disasm"] = c.disasm_mode == DisasmMode::Builtin ? std::string("builtin") : "text:" + c.disasm_file;
    o["vtt_prose_boundary"] = c.vtt_prose_boundary;
    o["vbtable_constant"] = signed_hex(c.vbtable_constant);
    o["cap_offset"] = signed_hex(c.cap_offset);
    o["vbtable_entry_size"] = c.vbtable_entry_size;
    return o;
}

inline ojson sections_json(ScanResult& r) {
    ojson items = ojson::array();
    for (auto& s : r.image.sections())
        items.push_back({{"name", s.name},
                         {"base", hex(s.base)},
                         {"size", hex(s.size)},
                         {"kind", std::string(to_string(s.kind))}});
    return {{"items", items},
            {"derived_function_set", r.image.derived_function_set()},
            {"n_functions", r.image.entry_functions().size()},
            {"errors", report_detail::diagnostics(r.errors_for("sections"))}};
}

inline ojson vtables_json(ScanResult& r) {
    using namespace report_detail;
    ojson groups = ojson::array();
    for (auto& [id, g] : r.groups) {
        ojson o;
        o["id"] = hex(id);
        o["is_construction"] = g.is_construction;
        o["fn_sum"] = hex(g.fn_sum());
        o["primary"] = subvtable(g.primary);
        ojson secs = ojson::array();
        for (auto& s : g.secondaries)
            secs.push_back(subvtable(s));
        o["secondaries"] = secs;
        groups.push_back(std::move(o));
    }
    return {{"count", r.groups.size()},
            {"construction_count", r.construction_count()},
            {"groups", groups},
            {"errors", diagnostics(r.errors_for("vtables"))}};
}

inline ojson vtts_json(ScanResult& r) {
    using namespace report_detail;
    auto one = [](const Vtt& t) {
        ojson o;
        o["base"] = hex(t.base);
        o["owner_vptr"] = hex(t.owner_vptr);
        o["entries"] = addrs(t.entries);
        ojson subs = ojson::array();
        for (auto& s : t.sub_vtts)
            subs.push_back({{"start", hex(s.start)},
                            {"primary_vptr", hex(s.primary_vptr)},
                            {"member_vptrs", addrs(s.member_vptrs)},
                            {"is_construction", s.is_construction},
                            {"valid", s.valid}});
        o["sub_vtts"] = subs;
        o["skipped_entries"] = addrs(t.skipped_entries);
        return o;
    };
    ojson items = ojson::array(), discarded = ojson::array();
    for (auto& t : r.vtts)
        items.push_back(one(t));
    for (auto& t : r.discarded_vtts)
        discarded.push_back(one(t));
    return {{"count", r.vtts.size()},
            {"boundary_rule", r.config.vtt_prose_boundary ? "prose" : "algorithm"},
            {"items", items},
            {"discarded", discarded},
            {"errors", diagnostics(r.errors_for("vtts"))}};
}

inline ojson mapping_json(ScanResult& r) {
    ojson items = ojson::array();
    for (auto& [c, g] : r.cmap.to_regular)
        items.push_back({{"construction", hex(c)}, {"regular", hex(g)}, {"orphan", r.cmap.orphans.count(g) != 0}});
    return {{"items", items}, {"errors", report_detail::diagnostics(r.errors_for("mapping"))}};
}

inline ojson ctors_json(ScanResult& r, const ReportOptions& opt) {
    using namespace report_detail;
    ojson items = ojson::array();
    for (auto& [f, s] : r.ctors.summaries) {
        ojson o;
        o["func"] = hex(f);
        auto cls = r.ctor_class.find(f);
        o["class"] = cls == r.ctor_class.end() ? ojson() : ojson(hex(cls->second));
        o["identified"] = r.ctors.ctors.count(f) != 0;
        o["is_special"] = s.is_special;
        o["partial"] = s.partial;
        ojson writes = ojson::array();
        for (auto& w : s.vptr_writes)
            writes.push_back({{"offset", signed_hex(w.offset)}, {"vptr", hex(w.value)}});
        o["vptr_writes"] = writes;
        if (!s.vbptr_writes.empty()) {
            ojson vb = ojson::array();
            for (auto& w : s.vbptr_writes)
                vb.push_back({{"offset", signed_hex(w.offset)}, {"vbtable", hex(w.value)}});
            o["vbptr_writes"] = vb;
        }
        o["vtt_args_seen"] = addrs(s.vtt_args_seen);
        if (opt.include_calls) {
            ojson calls = ojson::array();
            for (auto& c : s.calls)
                calls.push_back({{"site", hex(c.site)},
                                 {"target", c.target ? ojson(hex(*c.target)) : ojson()},
                                 {"arg1", sym(c.arg1)},
                                 {"arg2", sym(c.arg2)}});
            o["calls"] = calls;
        }
        items.push_back(std::move(o));
    }
    return {{"count", r.ctors.ctors.size()}, {"items", items}, {"errors", diagnostics(r.errors_for("ctors"))}};
}

inline ojson hierarchy_json(ScanResult& r, const ReportOptions& opt) {
    using namespace report_detail;
    auto& h = r.hierarchy;
    ojson nodes = ojson::array(), edges = ojson::array(), trees = ojson::array();
    for (auto& n : h.nodes) {
        ojson o;
        o["id"] = hex(n.id);
        if (auto nm = name_of(opt, n.id))
            o["name"] = *nm;
        o["vbase_offsets"] = offsets(n.vbase_offsets);
        o["has_vtt"] = n.has_vtt;
        o["orphan"] = n.orphan;
        nodes.push_back(std::move(o));
    }
    for (auto& e : h.edges)
        edges.push_back({{"derived", hex(e.derived)},
                         {"base", hex(e.base)},
                         {"kind", std::string(to_string(e.kind))},
                         {"evidence", std::string(to_string(e.evidence))},
                         {"site", hex(e.site)},
                         {"orphan", e.orphan},
                         {"in_cycle", e.in_cycle}});
    for (auto& t : h.trees)
        trees.push_back({{"members", addrs(t.members)},
                         {"virtual_bases", addrs(t.virtual_bases)},
                         {"intermediate_bases", addrs(t.intermediate_bases)},
                         {"n_members", t.members.size()},
                         {"n_edges", t.n_edges},
                         {"n_virtual_edges", t.n_virtual_edges},
                         {"n_intermediate_edges", t.n_intermediate_edges},
                         {"n_direct_edges", t.n_direct_edges}});
    return {{"nodes", nodes}, {"edges", edges}, {"trees", trees}, {"errors", diagnostics(r.errors_for("hierarchy"))}};
}

inline ojson surface_json(ScanResult& r) {
    using namespace report_detail;
    auto& s = r.surface;
    ojson pred = ojson::object();
    for (auto& [d, n] : s.per_depth_prediction)
        pred[std::to_string(d)] = n;
    ojson per_vtt = ojson::array();
    for (auto& [owner, n] : s.construction_per_vtt)
        per_vtt.push_back({{"owner_vptr", hex(owner)}, {"construction_vtables", n}});
    return {{"n_construction_vtables", s.n_construction_vtables},
            {"unique_vbase_offsets", signed_set(s.unique_vbase_offsets)},
            {"unique_offsets_to_top", signed_set(s.unique_offsets_to_top)},
            {"vbase_offset_histogram", histogram(s.vbase_offset_histogram)},
            {"offset_to_top_histogram", histogram(s.offset_to_top_histogram)},
            {"per_depth_prediction", pred},
            {"construction_per_vtt", per_vtt},
            {"errors", diagnostics(r.errors_for("surface"))}};
}

inline ojson vbtables_json(ScanResult& r) {
    ojson items = ojson::array();
    for (auto& [a, t] : r.vbtables)
        items.push_back({{"base", hex(a)},
                         {"first_constant", signed_hex(t.first_constant)},
                         {"entries", report_detail::offsets(t.entries)}});
    return {{"count", r.vbtables.size()}, {"items", items}, {"errors", report_detail::diagnostics(r.errors_for("vbtables"))}};
}

inline ojson report_json(ScanResult& r, const ReportOptions& opt = {}) {
    ojson j;
    j["abi"] = std::string(to_string(r.config.abi));
    j["config"] = config_json(r.config);
    j["warnings"] = r.warnings;
    j["sections"] = sections_json(r);
    j["vtables"] = vtables_json(r);
    j["vtts"] = vtts_json(r);
    j["mapping"] = mapping_json(r);
    j["ctors"] = ctors_json(r, opt);
    j["hierarchy"] = hierarchy_json(r, opt);
    j["surface"] = surface_json(r);
    if (r.config.abi == Abi::Msvc)
        j["vbtables"] = vbtables_json(r);
    return j;
}

inline std::string dot_escape(const std::string& s) {
    std::string out;
    for (char c : s) {
        if (c == '"' || c == '\\')
            out += '\\';
        out += c;
    }
    return out;
}

// solid = direct, dashed = intermediate, bold = virtual.
inline std::string hierarchy_dot(const Hierarchy& h, const NameMap* names = nullptr) {
    std::string out = "digraph hierarchy {\n  rankdir=BT;\n  node [shape=box];\n";
    for (auto& n : h.nodes) {
        std::string label = hex(n.id);
        if (names)
            if (auto it = names->find(n.id); it != names->end())
                label += "\\n" + dot_escape(it->second);
        out += "  \"" + hex(n.id) + "\" [label=\"" + label + "\"" + (n.orphan ? ", style=dotted" : "") + "];\n";
    }
    for (auto& e : h.edges) {
        const char* style = e.kind == EdgeKind::Virtual ? "bold" : e.kind == EdgeKind::Intermediate ? "dashed" : "solid";
        out += "  \"" + hex(e.derived) + "\" -> \"" + hex(e.base) + "\" [style=" + style + ", label=\"" +
               std::string(to_string(e.kind)) + "\"" + (e.in_cycle ? ", color=red" : "") + "];\n";
    }
    out += "}\n";
    return out;
}

inline std::string report_table(ScanResult& r, const NameMap* names = nullptr) {
    auto label = [&](Addr a) {
        std::string s = hex(a);
        if (names)
            if (auto it = names->find(a); it != names->end())
                s += " (" + it->second + ")";
        return s;
    };
    std::string out;
    out += "abi: " + std::string(to_string(r.config.abi)) + "\n";
    for (auto& w : r.warnings)
        out += "warning: " + w + "\n";
    out += "vtable groups: " + std::to_string(r.groups.size()) + " (" + std::to_string(r.construction_count()) +
           " construction)\n";
    out += "vtts: " + std::to_string(r.vtts.size()) + "\n";
    out += "construction mapping: " + std::to_string(r.cmap.to_regular.size()) + "\n";
    for (auto& [c, g] : r.cmap.to_regular)
        out += "  " + hex(c) + " -> " + label(g) + "\n";
    out += "ctors: " + std::to_string(r.ctors.ctors.size()) + "\n";
    if (r.config.abi == Abi::Msvc)
        out += "vb-tables: " + std::to_string(r.vbtables.size()) + "\n";
    out += "classes: " + std::to_string(r.hierarchy.nodes.size()) + "\n";
    out += "edges:\n";
    for (auto& e : r.hierarchy.edges)
        out += "  " + label(e.derived) + " -> " + label(e.base) + "  " + std::string(to_string(e.kind)) +
               (e.in_cycle ? "  [cycle]" : "") + "\n";
    out += "virtual-inheritance trees: " + std::to_string(r.hierarchy.trees.size()) + "\n";
    for (auto& [section, ds] : r.errors)
        for (auto& d : ds)
            out += "note [" + section + "] " + std::string(to_string(d.code)) + " " + hex(d.addr) + " " + d.detail + "\n";
    return out;
}

// One-line verdict and exit status for the detect command.
inline std::pair<int, std::string> detect_verdict(const ScanResult& r) {
    if (!r.has_virtual_inheritance())
        return {1, "virtual inheritance: no"};
    if (r.config.abi == Abi::Itanium)
        return {0, "virtual inheritance: yes (" + std::to_string(r.vtts.size()) + " VTTs)"};
    return {0, "virtual inheritance: yes (" + std::to_string(r.vbtables_with_virtual_edge()) + " VB-Tables)"};
}

} // namespace virtinh
