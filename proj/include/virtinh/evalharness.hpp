#pragma once

#include "virtinh/recovery.hpp"

#include <json.hpp>

#include <algorithm>
#include <map>
#include <optional>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <vector>

namespace virtinh {

struct GtClass {
    std::string name;
    std::optional<Addr> vptr_hint;
    std::vector<std::string> virtual_bases;
    std::vector<std::string> intermediate_bases;
    std::vector<std::string> direct_bases;

    friend bool operator==(const GtClass&, const GtClass&) = default;
};

struct GroundTruth {
    std::vector<GtClass> classes;
    std::vector<std::string> removed;

    const GtClass* find(std::string_view name) const {
        for (auto& c : classes)
            if (c.name == name)
                return &c;
        return nullptr;
    }

    friend bool operator==(const GroundTruth&, const GroundTruth&) = default;
};

namespace detail {

inline Addr parse_hex_addr(const std::string& s) {
    std::size_t pos = 0;
    auto v = std::stoull(s, &pos, 16);
    if (pos != s.size())
        throw std::invalid_argument(s);
    return v;
}

// Drops removed classes and every reference to them, then checks the invariants.
inline GroundTruth finalize_gt(GroundTruth gt, const std::vector<std::string>& removed) {
    std::set<std::string> gone(removed.begin(), removed.end());
    gone.insert(gt.removed.begin(), gt.removed.end());
    std::vector<GtClass> kept;
    for (auto& c : gt.classes) {
        if (gone.count(c.name))
            continue;
        for (auto* v : {&c.virtual_bases, &c.intermediate_bases, &c.direct_bases}) {
            v->erase(std::remove_if(v->begin(), v->end(), [&](const std::string& n) { return gone.count(n) != 0; }),
                     v->end());
            std::sort(v->begin(), v->end());
            v->erase(std::unique(v->begin(), v->end()), v->end());
        }
        kept.push_back(std::move(c));
    }
    std::set<std::string> names;
    for (auto& c : kept) {
        if (!names.insert(c.name).second)
            throw Error(Errc::ParseError, "duplicate class " + c.name);
        for (auto* v : {&c.virtual_bases, &c.intermediate_bases, &c.direct_bases})
            if (std::find(v->begin(), v->end(), c.name) != v->end())
                throw Error(Errc::ParseError, "class " + c.name + " lists itself as a base");
    }
    gt.classes = std::move(kept);
    gt.removed.assign(gone.begin(), gone.end());
    return gt;
}

} // namespace detail

inline GroundTruth parse_gt_json(const std::string& text, const std::vector<std::string>& removed = {}) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error(Errc::ParseError, "byte " + std::to_string(e.byte) + ": " + e.what());
    }
    GroundTruth gt;
    try {
        if (!j.is_object() || !j.contains("classes") || !j["classes"].is_array())
            throw Error(Errc::ParseError, "expected an object with a classes array");
        std::size_t i = 0;
        for (auto& c : j["classes"]) {
            GtClass g;
            try {
                g.name = c.at("name").get<std::string>();
                if (c.contains("vptr_hint") && !c["vptr_hint"].is_null())
                    g.vptr_hint = detail::parse_hex_addr(c["vptr_hint"].get<std::string>());
                for (auto [key, dst] : {std::pair{"virtual_bases", &g.virtual_bases},
                                        std::pair{"intermediate_bases", &g.intermediate_bases},
                                        std::pair{"direct_bases", &g.direct_bases}})
                    if (c.contains(key))
                        *dst = c[key].get<std::vector<std::string>>();
            } catch (const std::exception& e) {
                throw Error(Errc::ParseError, "classes[" + std::to_string(i) + "]: " + e.what());
            }
            gt.classes.push_back(std::move(g));
            ++i;
        }
        if (j.contains("removed"))
            gt.removed = j["removed"].get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw Error(Errc::ParseError, e.what());
    }
    return detail::finalize_gt(std::move(gt), removed);
}

// GCC class-hierarchy dump. Only classes that have a VTable dump are polymorphic and can be
// recovered; bases outside that set are omitted.
inline GroundTruth parse_gt_dump(const std::string& text, const std::vector<std::string>& removed = {}) {
    struct Entry {
        std::string name;
        bool is_virtual = false;
        bool alternative = false;
        std::optional<int> depth;
        bool has_subvtt = false;
    };
    static const std::regex entry_re(R"(^(\S.*?) \(0x[0-9a-fA-Fx]+\)(?: (-?\d+))?((?: [\w-]+)*)\s*$)");
    std::map<std::string, std::vector<Entry>> classes;
    std::vector<std::string> order;
    std::set<std::string> polymorphic;
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    std::vector<Entry>* current = nullptr;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r')
            line.pop_back();
        if (line.empty()) {
            current = nullptr;
            continue;
        }
        if (line.rfind("Class ", 0) == 0) {
            auto name = line.substr(6);
            if (name.empty())
                throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": class header without a name");
            if (!classes.count(name))
                order.push_back(name);
            current = &classes[name];
            current->clear();
            continue;
        }
        if (line.rfind("Vtable for ", 0) == 0) {
            polymorphic.insert(line.substr(11));
            current = nullptr;
            continue;
        }
        if (!current)
            continue;
        std::smatch m;
        if (line[0] != ' ') {
            if (!std::regex_match(line, m, entry_re))
                throw Error(Errc::ParseError, "line " + std::to_string(lineno) + ": malformed layout entry");
            Entry e;
            e.name = m[1];
            std::istringstream flags(m[3].str());
            for (std::string f; flags >> f;) {
                e.is_virtual |= f == "virtual";
                e.alternative |= f == "alternative-path";
            }
            current->push_back(e);
            continue;
        }
        auto indent = line.find_first_not_of(' ');
        if (current->empty() || indent < 4)
            continue; // size and alignment lines
        auto& e = current->back();
        if (!e.depth)
            e.depth = static_cast<int>((indent - 4) / 2);
        if (line.find("subvttidx=") != std::string::npos)
            e.has_subvtt = true;
    }
    GroundTruth gt;
    for (auto& name : order) {
        if (!polymorphic.count(name))
            continue;
        GtClass c;
        c.name = name;
        auto& entries = classes[name];
        for (std::size_t i = 1; i < entries.size(); ++i) {
            auto& e = entries[i];
            if (e.alternative || !e.depth || !polymorphic.count(e.name))
                continue;
            if (e.is_virtual)
                c.virtual_bases.push_back(e.name);
            else if (*e.depth == 1)
                c.direct_bases.push_back(e.name);
            if (e.has_subvtt)
                c.intermediate_bases.push_back(e.name);
        }
        gt.classes.push_back(std::move(c));
    }
    std::sort(gt.classes.begin(), gt.classes.end(), [](const GtClass& a, const GtClass& b) { return a.name < b.name; });
    return detail::finalize_gt(std::move(gt), removed);
}

// Canonical JSON when the text opens with '{', otherwise a compiler dump.
inline GroundTruth parse_gt(const std::string& text, const std::vector<std::string>& removed = {}) {
    auto first = text.find_first_not_of(" \t\r\n");
    if (first == std::string::npos)
        return {};
    if (text[first] == '{')
        return parse_gt_json(text, removed);
    return parse_gt_dump(text, removed);
}

inline nlohmann::ordered_json gt_to_json(const GroundTruth& gt) {
    nlohmann::ordered_json j;
    j["classes"] = nlohmann::ordered_json::array();
    for (auto& c : gt.classes) {
        nlohmann::ordered_json o;
        o["name"] = c.name;
        o["vptr_hint"] = c.vptr_hint ? nlohmann::ordered_json(hex(*c.vptr_hint)) : nlohmann::ordered_json();
        o["virtual_bases"] = c.virtual_bases;
        o["intermediate_bases"] = c.intermediate_bases;
        o["direct_bases"] = c.direct_bases;
        j["classes"].push_back(std::move(o));
    }
    j["removed"] = gt.removed;
    return j;
}

using NameMap = std::map<Addr, std::string>;

// {"0x...": "Name", ...}
inline NameMap parse_name_map(const std::string& text) {
    NameMap out;
    try {
        auto j = nlohmann::json::parse(text);
        for (auto& [k, v] : j.items())
            out[detail::parse_hex_addr(k)] = v.get<std::string>();
    } catch (const std::exception& e) {
        throw Error(Errc::ParseError, std::string("name map: ") + e.what());
    }
    return out;
}

struct ScoreCard {
    std::size_t n_classes_with_virt = 0;
    std::size_t vbases_matching = 0, vbases_overest = 0, vbases_underest = 0;
    std::size_t ibases_matching = 0, ibases_overest = 0, ibases_underest = 0;
    std::size_t not_found = 0;
    std::size_t unmapped = 0;
    std::vector<Diagnostic> diagnostics;

    friend bool operator==(const ScoreCard&, const ScoreCard&) = default;
};

// Per class with at least one virtual base in the GT: set equality is a match, a recovered
// set missing any GT base is an under-estimate, and otherwise extra bases over-estimate.
inline ScoreCard score(const Hierarchy& h, const GroundTruth& gt, const NameMap& names) {
    ScoreCard sc;
    std::map<std::string, Addr> by_name;
    for (auto& n : h.nodes) {
        auto it = names.find(n.id);
        if (it == names.end()) {
            ++sc.unmapped;
            sc.diagnostics.push_back({Errc::UnmappedClass, n.id, "no name for recovered class"});
            continue;
        }
        by_name.emplace(it->second, n.id);
    }
    auto named = [&](Addr derived, EdgeKind kind) {
        std::set<std::string> out;
        for (Addr b : h.bases_of(derived, kind))
            if (auto it = names.find(b); it != names.end())
                out.insert(it->second);
        return out;
    };
    auto tally = [](const std::set<std::string>& got, const std::vector<std::string>& want, std::size_t& match,
                    std::size_t& over, std::size_t& under) {
        std::set<std::string> w(want.begin(), want.end());
        if (got == w)
            ++match;
        else if (!std::includes(got.begin(), got.end(), w.begin(), w.end()))
            ++under;
        else
            ++over;
    };
    for (auto& c : gt.classes) {
        if (c.virtual_bases.empty())
            continue;
        ++sc.n_classes_with_virt;
        auto it = by_name.find(c.name);
        if (it == by_name.end()) {
            ++sc.not_found;
            continue;
        }
        tally(named(it->second, EdgeKind::Virtual), c.virtual_bases, sc.vbases_matching, sc.vbases_overest,
              sc.vbases_underest);
        tally(named(it->second, EdgeKind::Intermediate), c.intermediate_bases, sc.ibases_matching, sc.ibases_overest,
              sc.ibases_underest);
    }
    return sc;
}

inline nlohmann::ordered_json scorecard_to_json(const ScoreCard& sc) {
    nlohmann::ordered_json j;
    j["n_classes_with_virt"] = sc.n_classes_with_virt;
    j["vbases"] = {{"matching", sc.vbases_matching}, {"overest", sc.vbases_overest}, {"underest", sc.vbases_underest}};
    j["ibases"] = {{"matching", sc.ibases_matching}, {"overest", sc.ibases_overest}, {"underest", sc.ibases_underest}};
    j["not_found"] = sc.not_found;
    j["unmapped"] = sc.unmapped;
    return j;
}

inline std::string scorecard_table(const ScoreCard& sc) {
    auto row = [](const char* label, std::size_t m, std::size_t o, std::size_t u) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "%-8s %9zu %8zu %9zu\n", label, m, o, u);
        return std::string(buf);
    };
    std::string out = "classes with virtual bases: " + std::to_string(sc.n_classes_with_virt) + "\n";
    out += "category  matching  overest  underest\n";
    out += row("vbases", sc.vbases_matching, sc.vbases_overest, sc.vbases_underest);
    out += row("ibases", sc.ibases_matching, sc.ibases_overest, sc.ibases_underest);
    out += "not found: " + std::to_string(sc.not_found) + "\nunmapped: " + std::to_string(sc.unmapped) + "\n";
    return out;
}

} // namespace virtinh
