#pragma once

#include "virtinh/image.hpp"
#include "virtinh/instr.hpp"
#include "virtinh/x86.hpp"

#include <set>
#include <vector>

namespace virtinh {

inline constexpr std::size_t kMaxFunctionBytes = 1 << 16;

// Linear sweep from start. Stops at a return or unconditional jump unless an earlier
// forward branch lands past it, at the next known function start, or on a stall.
inline DecodedFunction decode_function(const BinaryImage& img, Addr start) {
    DecodedFunction fn;
    fn.start = start;
    auto* sec = img.section_at(start);
    if (!sec || sec->kind != SectionKind::Text)
        return fn;
    Addr pc = start;
    Addr furthest_branch = 0;
    const Addr limit = std::min<Addr>(sec->end(), start + kMaxFunctionBytes);
    while (pc < limit) {
        if (pc != start && img.is_function_start(pc))
            break;
        auto in = x86::decode_one(img.bytes_from(pc), pc);
        if (!in) {
            fn.stalled = true;
            break;
        }
        if (auto t = in->target(); t && in->flow != Flow::None && *t > pc && *t < limit)
            furthest_branch = std::max(furthest_branch, *t);
        fn.instrs.push_back(*in);
        pc = in->next();
        if ((in->flow == Flow::Return || in->flow == Flow::Jump) && furthest_branch < pc)
            break;
    }
    return fn;
}

inline InstrStreams decode_all(const BinaryImage& img) {
    InstrStreams out;
    for (Addr f : img.entry_functions()) {
        auto* s = img.section_at(f);
        if (s && s->kind == SectionKind::Text)
            out.emplace(f, decode_function(img, f));
    }
    return out;
}

// Function starts for images without a symbol table: direct call targets inside
// executable sections plus instruction boundaries that open with a standard prologue.
inline std::set<Addr> derive_function_starts(const std::vector<Section>& sections, std::optional<Addr> entry) {
    std::set<Addr> starts;
    auto in_text = [&](Addr a) {
        for (auto& s : sections)
            if (s.kind == SectionKind::Text && s.contains(a))
                return true;
        return false;
    };
    static constexpr std::uint8_t kEndbr64[] = {0xf3, 0x0f, 0x1e, 0xfa};
    static constexpr std::uint8_t kPushRbpMovRbp[] = {0x55, 0x48, 0x89, 0xe5};
    static constexpr std::uint8_t kMsvcSpillRcx[] = {0x48, 0x89, 0x4c, 0x24, 0x08};
    for (auto& s : sections) {
        if (s.kind != SectionKind::Text)
            continue;
        std::span<const std::uint8_t> all(s.bytes);
        auto starts_with = [&](std::size_t off, std::span<const std::uint8_t> pat) {
            return off + pat.size() <= all.size() && std::equal(pat.begin(), pat.end(), all.begin() + off);
        };
        std::size_t off = 0;
        bool after_break = true;
        bool after_endbr = false;
        while (off < all.size()) {
            if (starts_with(off, kEndbr64) || (!after_endbr && starts_with(off, kPushRbpMovRbp)) ||
                (after_break && starts_with(off, kMsvcSpillRcx)))
                starts.insert(s.base + off);
            auto in = x86::decode_one(all.subspan(off), s.base + off);
            if (!in) {
                ++off;
                continue;
            }
            if (in->op == Op::Call)
                if (auto t = in->target(); t && in_text(*t))
                    starts.insert(*t);
            after_endbr = in->mnemonic == "endbr64";
            after_break = in->flow == Flow::Return || in->flow == Flow::Jump || in->mnemonic == "int3" ||
                          (after_break && in->mnemonic == "nop");
            off += in->raw_len;
        }
    }
    if (entry && in_text(*entry))
        starts.insert(*entry);
    return starts;
}

} // namespace virtinh
