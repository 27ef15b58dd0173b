#pragma once

#include "virtinh/config.hpp"
#include "virtinh/ctor.hpp"
#include "virtinh/disasm.hpp"
#include "virtinh/itanium.hpp"
#include "virtinh/loader.hpp"
#include "virtinh/msvc.hpp"
#include "virtinh/recovery.hpp"
#include "virtinh/surface.hpp"
#include "virtinh/text_disasm.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace virtinh {

struct ScanResult {
    AnalysisConfig config;
    std::vector<std::string> warnings;
    BinaryImage image;
    InstrStreams streams;
    VTableSet groups;
    std::vector<Vtt> vtts;
    std::vector<Vtt> discarded_vtts;
    ConstructionMap cmap;
    CtorAnalysis ctors;
    std::map<Addr, Addr> ctor_class;
    std::map<Addr, VbTable> vbtables;
    std::map<Addr, Addr> vbptr_of;
    Hierarchy hierarchy;
    SurfaceReport surface;
    // Report section -> problems found while producing it.
    std::map<std::string, std::vector<Diagnostic>> errors;

    std::vector<Diagnostic>& errors_for(const std::string& section) { return errors[section]; }

    std::size_t construction_count() const {
        std::size_t n = 0;
        for (auto& [id, g] : groups)
            n += g.is_construction;
        return n;
    }

    bool has_virtual_inheritance() const {
        if (config.abi == Abi::Itanium)
            return !vtts.empty();
        for (auto& e : hierarchy.edges)
            if (e.kind == EdgeKind::Virtual)
                return true;
        return false;
    }

    // VB-Tables that back a recovered Virtual edge.
    std::size_t vbtables_with_virtual_edge() const {
        std::set<Addr> used;
        for (auto& e : hierarchy.edges) {
            if (e.kind != EdgeKind::Virtual)
                continue;
            for (auto& [f, cls] : ctor_class)
                if (cls == e.derived)
                    if (auto it = vbptr_of.find(f); it != vbptr_of.end())
                        used.insert(it->second);
        }
        return used.size();
    }
};

namespace pipeline_detail {

template <typename F>
void guarded(ScanResult& r, const std::string& section, F&& f) {
    try {
        f();
    } catch (const Error& e) {
        r.errors_for(section).push_back({e.code(), 0, e.what()});
    } catch (const std::exception& e) {
        r.errors_for(section).push_back({Errc::MalformedContainer, 0, e.what()});
    }
}

inline void append(std::vector<Diagnostic>& dst, const std::vector<Diagnostic>& src) {
    dst.insert(dst.end(), src.begin(), src.end());
}

} // namespace pipeline_detail

inline InstrStreams instruction_streams(const BinaryImage& img, const AnalysisConfig& cfg) {
    if (cfg.disasm_mode == DisasmMode::TextIngest) {
        auto bytes = read_file(cfg.disasm_file);
        return ingest_text_disasm(std::string(bytes.begin(), bytes.end()));
    }
    return decode_all(img);
}

// Runs every pass in dependency order. A failing pass leaves its section empty and records
// the failure under that section.
inline ScanResult scan(BinaryImage img, const AnalysisConfig& cfg, std::optional<InstrStreams> streams = {}) {
    using pipeline_detail::append;
    using pipeline_detail::guarded;
    ScanResult r;
    r.config = cfg;
    r.warnings = cfg.warnings();
    r.image = std::move(img);
    r.errors_for("sections");
    const BinaryImage& im = r.image;

    guarded(r, "ctors", [&] {
        r.streams = streams ? std::move(*streams) : instruction_streams(im, cfg);
        for (auto& [f, fn] : r.streams)
            if (fn.stalled)
                r.errors_for("ctors").push_back({Errc::DecodeStall, f, "decoding stopped early"});
    });

    const bool msvc = cfg.abi == Abi::Msvc;
    guarded(r, "vtables", [&] {
        r.groups = find_vtables(im, r.streams, msvc ? VptrRule::Relaxed : VptrRule::Itanium, &r.errors_for("vtables"));
        if (msvc && !r.groups.empty())
            r.errors_for("vtables").push_back(
                {Errc::RelaxedPredicate, 0, "address points validated without the offset-to-top condition"});
    });

    r.errors_for("vtts");
    r.errors_for("mapping");
    if (!msvc) {
        guarded(r, "vtts", [&] {
            auto found = find_vtts(im, r.groups, VttOptions{cfg.vtt_prose_boundary});
            auto va = analyze_vtts(im, r.groups, std::move(found));
            r.vtts = std::move(va.vtts);
            r.discarded_vtts = std::move(va.discarded);
            append(r.errors_for("vtts"), va.diagnostics);
        });
        guarded(r, "mapping", [&] {
            r.cmap = map_construction_to_regular(r.groups);
            append(r.errors_for("mapping"), r.cmap.diagnostics);
        });
    } else {
        guarded(r, "vbtables", [&] {
            r.vbtables = get_vbtables(im, r.streams,
                                      VbTableOptions{cfg.vbtable_constant, cfg.cap_offset, cfg.vbtable_entry_size});
        });
    }

    guarded(r, "ctors", [&] {
        std::set<Addr> vb;
        for (auto& [a, t] : r.vbtables)
            vb.insert(a);
        auto ctx = make_context(im, r.groups, r.vtts, std::move(vb));
        r.ctors = analyze_ctors(r.streams, ctx);
        append(r.errors_for("ctors"), r.ctors.diagnostics);
    });

    guarded(r, "hierarchy", [&] {
        std::vector<InheritanceEdge> edges;
        if (msvc) {
            auto m = recover_msvc_bases(r.ctors, r.vbtables, r.groups);
            r.ctor_class = m.ctor_class;
            r.vbptr_of = m.vbptr_of;
            edges = m.all();
            append(r.errors_for("hierarchy"), m.diagnostics);
        } else {
            auto rec = recover_bases(r.ctors, r.groups, r.vtts, r.cmap);
            r.ctor_class = rec.ctor_class;
            edges = rec.all();
            append(r.errors_for("hierarchy"), rec.diagnostics);
        }
        r.hierarchy = build_tree(class_nodes(r.groups, r.vtts, r.cmap), edges);
        append(r.errors_for("hierarchy"), r.hierarchy.diagnostics);
    });

    guarded(r, "surface", [&] { r.surface = offset_distribution(r.groups, r.vtts); });
    return r;
}

inline ScanResult scan_file(const std::filesystem::path& path, const AnalysisConfig& cfg) {
    return scan(load(path, cfg.abi, cfg.word_size), cfg);
}

} // namespace virtinh
