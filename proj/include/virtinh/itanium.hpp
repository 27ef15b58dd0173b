#pragma once

#include "virtinh/image.hpp"
#include "virtinh/instr.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <vector>

namespace virtinh {

struct SubVTable {
    Addr address_point = 0;
    std::int64_t offset_to_top = 0;
    Addr rtti_slot = 0;
    std::vector<Addr> fn_ptrs;
    std::vector<std::int64_t> vbase_offsets;
    bool vcall_region_present = false;

    bool is_primary() const { return offset_to_top == 0; }

    friend bool operator==(const SubVTable&, const SubVTable&) = default;
};

struct VTableGroup {
    SubVTable primary;
    std::vector<SubVTable> secondaries;
    bool is_construction = false;

    Addr id() const { return primary.address_point; }

    std::vector<const SubVTable*> members() const {
        std::vector<const SubVTable*> out{&primary};
        for (auto& s : secondaries)
            out.push_back(&s);
        return out;
    }

    const SubVTable* member(Addr address_point) const {
        if (primary.address_point == address_point)
            return &primary;
        for (auto& s : secondaries)
            if (s.address_point == address_point)
                return &s;
        return nullptr;
    }

    SubVTable* member(Addr address_point) {
        return const_cast<SubVTable*>(static_cast<const VTableGroup*>(this)->member(address_point));
    }

    // Ordered function pointers across all sub-VTables.
    std::vector<Addr> group_key() const {
        std::vector<Addr> key;
        for (auto* m : members())
            key.insert(key.end(), m->fn_ptrs.begin(), m->fn_ptrs.end());
        return key;
    }

    Addr fn_sum() const {
        auto key = group_key();
        return std::accumulate(key.begin(), key.end(), Addr(0));
    }

    // vbase-offsets of all sub-VTables in member order.
    std::vector<std::int64_t> vbase_offsets() const {
        std::vector<std::int64_t> out;
        for (auto* m : members())
            out.insert(out.end(), m->vbase_offsets.begin(), m->vbase_offsets.end());
        return out;
    }

    // Offsets of virtual-base subobjects from the top of the object, taken from the primary.
    std::set<std::int64_t> virtual_base_displacements() const {
        return {primary.vbase_offsets.begin(), primary.vbase_offsets.end()};
    }

    void clear_vbase_offsets() {
        primary.vbase_offsets.clear();
        for (auto& s : secondaries)
            s.vbase_offsets.clear();
    }

    friend bool operator==(const VTableGroup&, const VTableGroup&) = default;
};

// Keyed by primary address point.
using VTableSet = std::map<Addr, VTableGroup>;

struct MemberRef {
    Addr group = 0;
    const SubVTable* sub = nullptr;
};

// Address point of every sub-VTable to its owning group.
inline std::map<Addr, MemberRef> index_members(const VTableSet& groups) {
    std::map<Addr, MemberRef> idx;
    for (auto& [id, g] : groups)
        for (auto* m : g.members())
            idx.emplace(m->address_point, MemberRef{id, m});
    return idx;
}

struct SubVtt {
    Addr start = 0; // location of the primary entry within the VTT
    Addr primary_vptr = 0;
    std::vector<Addr> member_vptrs;
    bool is_construction = false;
    bool valid = false; // at least one vbase-offset matched

    friend bool operator==(const SubVtt&, const SubVtt&) = default;
};

struct Vtt {
    Addr base = 0;
    std::vector<Addr> entries;
    std::vector<SubVtt> sub_vtts;
    std::vector<Addr> skipped_entries; // leading secondaries with no open SubVtt
    Addr owner_vptr = 0;
    unsigned word_size = 8;

    Addr end() const { return base + entries.size() * word_size; }
    bool contains(Addr a) const { return a >= base && a < end(); }

    // Entry stored at a location inside the VTT.
    std::optional<Addr> entry_at(Addr loc) const {
        if (!contains(loc) || (loc - base) % word_size)
            return std::nullopt;
        return entries[(loc - base) / word_size];
    }

    const SubVtt* sub_vtt_of(Addr target) const {
        for (auto& s : sub_vtts)
            if (std::find(s.member_vptrs.begin(), s.member_vptrs.end(), target) != s.member_vptrs.end())
                return &s;
        return nullptr;
    }

    friend bool operator==(const Vtt&, const Vtt&) = default;
};

enum class VptrRule { Itanium, Relaxed };

// The three address-point conditions: a function (or pure-virtual) slot at v, an RTTI slot
// that is 0 or points to data, and an offset-to-top that is 0 or negative.
inline bool is_vptr(const BinaryImage& img, Addr v, VptrRule rule = VptrRule::Itanium) {
    const Addr w = img.word_size();
    if (v % w || v < 2 * w)
        return false;
    if (!img.is_function_pointer_at(v))
        return false;
    auto rtti = img.try_read_uword(v - w);
    if (!rtti || (*rtti != 0 && !img.points_to_data(*rtti)))
        return false;
    if (rule == VptrRule::Relaxed)
        return true;
    auto ott = img.try_read_word(v - 2 * w);
    return ott && *ott <= 0;
}

// Addresses referenced by Text: immediates, absolute and RIP-relative memory operands.
// A reference into a GOT-like section is followed through the GOT once.
inline std::set<Addr> text_references(const BinaryImage& img, const InstrStreams& streams) {
    std::set<Addr> refs;
    auto add = [&](std::int64_t v) {
        auto a = static_cast<Addr>(v);
        auto k = img.classify(a);
        if (!k)
            return;
        if (*k == SectionKind::GotLike) {
            auto t = img.resolve_got(a);
            if (t != a)
                refs.insert(t);
            return;
        }
        refs.insert(a);
    };
    for (auto& [start, fn] : streams)
        for (auto& in : fn.instrs) {
            if (in.op == Op::Call || in.flow != Flow::None)
                continue;
            for (auto* o : {&in.src, &in.dst}) {
                if (o->is_imm())
                    add(*o->imm);
                else if (o->is_absolute_mem())
                    add(*o->mem_disp);
            }
        }
    return refs;
}

// Word-aligned words in read-only data whose value points into a data section.
inline std::set<Addr> data_references(const BinaryImage& img) {
    std::set<Addr> refs;
    const Addr w = img.word_size();
    for (auto& s : img.sections()) {
        if (s.kind != SectionKind::ReadOnlyData)
            continue;
        for (Addr a = (s.base + w - 1) / w * w; a + w <= s.end(); a += w)
            if (auto v = img.try_read_uword(a); v && img.points_to_data(*v))
                refs.insert(*v);
    }
    return refs;
}

// Builds groups from a sorted set of valid address points.
inline VTableSet group_vptrs(const BinaryImage& img, const std::set<Addr>& vptrs, VptrRule rule,
                             std::vector<Diagnostic>* diags = nullptr) {
    VTableSet out;
    const Addr w = img.word_size();
    std::vector<Addr> sorted(vptrs.begin(), vptrs.end());
    VTableGroup* current = nullptr;
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        Addr v = sorted[i];
        SubVTable sub;
        sub.address_point = v;
        sub.rtti_slot = img.read_uword(v - w);
        sub.offset_to_top = rule == VptrRule::Relaxed ? 0 : img.read_word(v - 2 * w);
        auto* sec = img.section_at(v);
        Addr limit = sec->end();
        if (i + 1 < sorted.size())
            limit = std::min(limit, sorted[i + 1] - (rule == VptrRule::Relaxed ? w : 2 * w));
        for (Addr p = v; p + w <= limit && img.is_function_pointer_at(p); p += w)
            sub.fn_ptrs.push_back(img.function_pointer_at(p));
        if (sub.offset_to_top == 0) {
            VTableGroup g;
            g.primary = std::move(sub);
            current = &out.emplace(v, std::move(g)).first->second;
        } else if (current) {
            current->secondaries.push_back(std::move(sub));
        } else if (diags) {
            diags->push_back({Errc::OrphanSecondary, v, "secondary sub-VTable without a preceding primary"});
        }
    }
    return out;
}

inline VTableSet find_vtables(const BinaryImage& img, const InstrStreams& streams,
                              VptrRule rule = VptrRule::Itanium, std::vector<Diagnostic>* diags = nullptr) {
    std::set<Addr> candidates = text_references(img, streams);
    if (rule == VptrRule::Itanium) {
        // Construction VTables are referenced only from VTT entries.
        auto d = data_references(img);
        candidates.insert(d.begin(), d.end());
    }
    std::set<Addr> valid;
    for (Addr c : candidates)
        if (img.points_to_data(c) && is_vptr(img, c, rule))
            valid.insert(c);
    return group_vptrs(img, valid, rule, diags);
}

struct VttOptions {
    bool prose_boundary = true;
};

// Pointer arrays in read-only data whose words are known address points.
inline std::vector<Vtt> find_vtts(const BinaryImage& img, const VTableSet& groups, VttOptions opt = {}) {
    std::vector<Vtt> out;
    auto members = index_members(groups);
    const Addr w = img.word_size();
    auto known = [&](Addr a) { return members.count(a) != 0; };
    for (auto& s : img.sections()) {
        if (s.kind != SectionKind::ReadOnlyData)
            continue;
        Addr a = (s.base + w - 1) / w * w;
        while (a + w <= s.end()) {
            Addr first = img.read_uword(a);
            if (!known(first)) {
                a += w;
                continue;
            }
            std::vector<Addr> entries{first};
            bool tail_seen = false;
            Addr b = a + w;
            for (; b + w <= s.end(); b += w) {
                Addr next = img.read_uword(b);
                if (!known(next) || next < first)
                    break;
                if (opt.prose_boundary && entries.size() >= 2) {
                    // Past the second entry, a larger entry ends the VTT once the
                    // owner's own secondary vptrs (below the second entry) have started.
                    if (next > entries[1] && tail_seen)
                        break;
                    if (next < entries[1])
                        tail_seen = true;
                }
                entries.push_back(next);
            }
            if (entries.size() > 1) {
                Vtt t;
                t.base = a;
                t.entries = std::move(entries);
                t.owner_vptr = first;
                t.word_size = static_cast<unsigned>(w);
                out.push_back(std::move(t));
                a = b;
            } else {
                a += w;
            }
        }
    }
    return out;
}

// Sorted entry targets: each offset-to-top 0 target opens a SubVtt, negatives join it.
inline std::vector<SubVtt> group_subvtts(Vtt& vtt, const VTableSet& groups) {
    auto members = index_members(groups);
    std::set<Addr> targets(vtt.entries.begin(), vtt.entries.end());
    std::vector<SubVtt> out;
    vtt.skipped_entries.clear();
    for (Addr t : targets) {
        auto it = members.find(t);
        if (it == members.end())
            continue;
        if (it->second.sub->offset_to_top == 0) {
            SubVtt s;
            s.primary_vptr = t;
            s.member_vptrs.push_back(t);
            auto pos = std::find(vtt.entries.begin(), vtt.entries.end(), t);
            s.start = vtt.base + static_cast<Addr>(pos - vtt.entries.begin()) * vtt.word_size;
            out.push_back(std::move(s));
        } else if (!out.empty()) {
            out.back().member_vptrs.push_back(t);
        } else {
            vtt.skipped_entries.push_back(t);
        }
    }
    if (out.empty())
        throw Error(Errc::NoPrimaryFound, "VTT at " + hex(vtt.base) + " has no primary entry");
    for (auto& s : out)
        s.is_construction = std::find(s.member_vptrs.begin(), s.member_vptrs.end(), vtt.entries.front()) ==
                            s.member_vptrs.end();
    return out;
}

namespace detail {

// Walks upward from source's vbase-offset slot; a word matches when some member's
// offset-to-top, relative to source, equals its negation.
inline std::vector<std::int64_t> walk_vbase_offsets(const BinaryImage& img, const SubVtt& subvtt,
                                                    const std::map<Addr, MemberRef>& members, Addr source) {
    std::vector<std::int64_t> out;
    const Addr w = img.word_size();
    auto src = members.find(source);
    if (src == members.end() || source < 3 * w)
        return out;
    const std::int64_t base_ott = src->second.sub->offset_to_top;
    Addr cur = source - 3 * w;
    for (Addr m : subvtt.member_vptrs) {
        auto it = members.find(m);
        if (it == members.end())
            continue;
        auto vbo = img.try_read_word(cur);
        if (!vbo)
            break;
        if (*vbo > 0 && it->second.sub->offset_to_top - base_ott == -*vbo) {
            out.push_back(*vbo);
            if (cur < w)
                break;
            cur -= w;
        }
    }
    return out;
}

} // namespace detail

// vbase-offsets above the SubVtt's primary address point.
inline std::vector<std::int64_t> extract_vbase_offsets(const BinaryImage& img, const SubVtt& subvtt,
                                                       const VTableSet& groups) {
    return detail::walk_vbase_offsets(img, subvtt, index_members(groups), subvtt.primary_vptr);
}

// The same walk from every member sub-VTable; keys are member address points.
inline std::map<Addr, std::vector<std::int64_t>> extract_member_vbase_offsets(const BinaryImage& img,
                                                                             const SubVtt& subvtt,
                                                                             const VTableSet& groups) {
    std::map<Addr, std::vector<std::int64_t>> out;
    auto members = index_members(groups);
    for (Addr m : subvtt.member_vptrs) {
        auto v = detail::walk_vbase_offsets(img, subvtt, members, m);
        if (!v.empty())
            out.emplace(m, std::move(v));
    }
    return out;
}

// Zero or negative words directly above a secondary's vbase-offset slots, inside the
// gap left by the previous sub-VTable.
inline void mark_vcall_regions(const BinaryImage& img, VTableSet& groups) {
    const Addr w = img.word_size();
    for (auto& [id, g] : groups) {
        Addr prev_end = g.primary.address_point + g.primary.fn_ptrs.size() * w;
        for (auto& s : g.secondaries) {
            Addr slot = s.address_point - (3 + s.vbase_offsets.size()) * w;
            auto word = img.try_read_word(slot);
            s.vcall_region_present = word && slot >= prev_end && *word <= 0;
            prev_end = s.address_point + s.fn_ptrs.size() * w;
        }
    }
}

struct VttAnalysis {
    std::vector<Vtt> vtts; // valid VTTs with grouped SubVtts
    std::vector<Vtt> discarded;
    std::vector<Diagnostic> diagnostics;
};

// Groups every VTT, flags construction groups, and attaches vbase-offsets.
inline VttAnalysis analyze_vtts(const BinaryImage& img, VTableSet& groups, std::vector<Vtt> vtts) {
    VttAnalysis out;
    for (auto& [id, g] : groups) {
        g.is_construction = false;
        g.clear_vbase_offsets();
    }
    for (auto& vtt : vtts) {
        try {
            vtt.sub_vtts = group_subvtts(vtt, groups);
        } catch (const Error& e) {
            out.diagnostics.push_back({e.code(), vtt.base, e.what()});
            out.discarded.push_back(std::move(vtt));
            continue;
        }
        std::map<Addr, std::vector<std::int64_t>> found;
        bool any_valid = false;
        for (auto& s : vtt.sub_vtts) {
            auto per_member = extract_member_vbase_offsets(img, s, groups);
            s.valid = !per_member.empty();
            any_valid |= s.valid;
            found.insert(per_member.begin(), per_member.end());
        }
        if (!any_valid) {
            out.diagnostics.push_back({Errc::InvalidVtt, vtt.base, "VTT without any matching vbase-offset discarded"});
            out.discarded.push_back(std::move(vtt));
            continue;
        }
        auto members = index_members(groups);
        for (auto& s : vtt.sub_vtts)
            if (s.is_construction)
                groups.at(members.at(s.primary_vptr).group).is_construction = true;
        for (auto& [ap, offs] : found) {
            auto& g = groups.at(members.at(ap).group);
            auto* sub = g.member(ap);
            if (sub->vbase_offsets.empty())
                sub->vbase_offsets = offs;
        }
        out.vtts.push_back(std::move(vtt));
    }
    mark_vcall_regions(img, groups);
    return out;
}

struct ConstructionMap {
    std::map<Addr, Addr> to_regular;   // construction group id -> class id
    std::set<Addr> orphans;            // construction groups standing in for a class
    std::vector<Diagnostic> diagnostics;

    Addr resolve(Addr group) const {
        auto it = to_regular.find(group);
        return it == to_regular.end() ? group : it->second;
    }
};

// Buckets groups by their ordered function-pointer sequence; the fn-pointer sum is
// checked as a secondary key.
inline ConstructionMap map_construction_to_regular(const VTableSet& groups) {
    ConstructionMap out;
    std::map<std::vector<Addr>, std::vector<const VTableGroup*>> buckets;
    for (auto& [id, g] : groups)
        buckets[g.group_key()].push_back(&g);
    for (auto& [key, bucket] : buckets) {
        std::vector<const VTableGroup*> regular, construction;
        for (auto* g : bucket)
            (g->is_construction ? construction : regular).push_back(g);
        if (construction.empty())
            continue;
        if (regular.size() > 1) {
            out.diagnostics.push_back({Errc::AmbiguousBucket, regular.front()->id(),
                                       std::to_string(regular.size()) + " regular groups share one function-pointer sequence"});
            continue;
        }
        Addr target;
        if (regular.empty()) {
            target = construction.front()->id();
            out.orphans.insert(target);
            out.diagnostics.push_back({Errc::OrphanConstruction, target, "no regular VTable; construction VTable stands in"});
        } else {
            target = regular.front()->id();
        }
        auto target_sum = groups.at(target).fn_sum();
        for (auto* c : construction) {
            if (c->fn_sum() != target_sum)
                out.diagnostics.push_back({Errc::AmbiguousBucket, c->id(), "function-pointer sums differ"});
            out.to_regular[c->id()] = target;
        }
    }
    return out;
}

} // namespace virtinh
