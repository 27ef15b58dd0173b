#pragma once

#include "virtinh/disasm.hpp"
#include "virtinh/image.hpp"

#include <cstring>
#include <map>
#include <span>
#include <string>

namespace virtinh {

namespace pe_detail {

inline constexpr std::uint32_t kScnExecute = 0x20000000;
inline constexpr std::uint32_t kScnWrite = 0x80000000;
inline constexpr std::uint16_t kMachineAmd64 = 0x8664;
inline constexpr std::uint16_t kMachineI386 = 0x14c;
inline constexpr std::uint16_t kMagicPe32Plus = 0x20b;
inline constexpr std::uint16_t kMagicPe32 = 0x10b;
inline constexpr std::string_view kPureCall = "_purecall";

template <typename T>
T rd(std::span<const std::uint8_t> f, std::uint64_t off) {
    if (off > f.size() || f.size() - off < sizeof(T))
        throw Error(Errc::MalformedContainer, "truncated PE structure at offset " + hex(off));
    T v;
    std::memcpy(&v, f.data() + off, sizeof(T));
    return v;
}

struct RawSection {
    std::string name;
    std::uint32_t vaddr, vsize, raw_size, raw_ptr, characteristics;
};

inline SectionKind classify(const RawSection& s) {
    if (s.characteristics & kScnExecute)
        return SectionKind::Text;
    if (s.name == ".idata")
        return SectionKind::GotLike;
    if (s.name == ".pdata" || s.name == ".reloc" || s.name == ".rsrc")
        return SectionKind::Other;
    if (s.characteristics & kScnWrite)
        return SectionKind::Data;
    return SectionKind::ReadOnlyData;
}

} // namespace pe_detail

inline bool looks_like_pe(std::span<const std::uint8_t> file) {
    return file.size() >= 2 && file[0] == 'M' && file[1] == 'Z';
}

inline ImageContents load_pe(std::span<const std::uint8_t> f, unsigned word_size) {
    using namespace pe_detail;
    if (f.size() < 0x40)
        throw Error(Errc::MalformedContainer, "file too small for a DOS header");
    if (!looks_like_pe(f))
        throw Error(Errc::UnsupportedFormat, "not a PE file");
    auto lfanew = rd<std::uint32_t>(f, 0x3c);
    if (rd<std::uint32_t>(f, lfanew) != 0x00004550)
        throw Error(Errc::UnsupportedFormat, "missing PE signature");
    auto coff = std::uint64_t(lfanew) + 4;
    auto machine = rd<std::uint16_t>(f, coff);
    auto nsec = rd<std::uint16_t>(f, coff + 2);
    auto opt_size = rd<std::uint16_t>(f, coff + 16);
    auto opt = coff + 20;
    auto magic = rd<std::uint16_t>(f, opt);
    if (magic != kMagicPe32Plus && magic != kMagicPe32)
        throw Error(Errc::MalformedContainer, "bad optional header magic");
    unsigned file_word = magic == kMagicPe32Plus ? 8 : 4;
    if (file_word != word_size)
        throw Error(Errc::WordSizeMismatch,
                    "file is PE" + std::string(file_word == 8 ? "32+" : "32") + ", requested word size " +
                        std::to_string(word_size));
    if ((file_word == 8 && machine != kMachineAmd64) || (file_word == 4 && machine != kMachineI386))
        throw Error(Errc::UnsupportedFormat, "unsupported PE machine " + hex(machine));
    auto entry_rva = rd<std::uint32_t>(f, opt + 16);
    Addr image_base = file_word == 8 ? rd<std::uint64_t>(f, opt + 24) : rd<std::uint32_t>(f, opt + 28);
    auto ndirs = rd<std::uint32_t>(f, opt + (file_word == 8 ? 108 : 92));
    auto dirs = opt + (file_word == 8 ? 112 : 96);
    auto directory = [&](unsigned idx) -> std::pair<std::uint32_t, std::uint32_t> {
        if (idx >= ndirs || dirs + 8 * (idx + 1) > opt + opt_size)
            return {0, 0};
        return {rd<std::uint32_t>(f, dirs + 8 * idx), rd<std::uint32_t>(f, dirs + 8 * idx + 4)};
    };

    std::vector<RawSection> raw;
    auto sh = opt + opt_size;
    for (unsigned i = 0; i < nsec; ++i) {
        auto o = sh + 40ull * i;
        char name[9] = {};
        for (int k = 0; k < 8; ++k)
            name[k] = static_cast<char>(rd<std::uint8_t>(f, o + k));
        raw.push_back({name, rd<std::uint32_t>(f, o + 12), rd<std::uint32_t>(f, o + 8), rd<std::uint32_t>(f, o + 16),
                       rd<std::uint32_t>(f, o + 20), rd<std::uint32_t>(f, o + 36)});
    }

    ImageContents out;
    out.word_size = file_word;
    out.abi = Abi::Msvc;
    Addr max_end = 0;
    for (auto& r : raw) {
        Section s;
        s.name = r.name;
        s.base = image_base + r.vaddr;
        s.size = r.vsize ? r.vsize : r.raw_size;
        if (s.size == 0)
            continue;
        s.kind = classify(r);
        s.bytes.assign(s.size, 0);
        auto n = std::min<std::uint64_t>(r.raw_size, s.size);
        if (n) {
            if (r.raw_ptr > f.size() || f.size() - r.raw_ptr < n)
                throw Error(Errc::MalformedContainer, "section " + s.name + " extends past end of file");
            std::memcpy(s.bytes.data(), f.data() + r.raw_ptr, n);
        }
        max_end = std::max(max_end, s.end());
        out.sections.push_back(std::move(s));
    }

    auto rva_to_off = [&](std::uint32_t rva) -> std::optional<std::uint64_t> {
        for (auto& r : raw)
            if (rva >= r.vaddr && rva - r.vaddr < std::max(r.vsize, r.raw_size) && rva - r.vaddr < r.raw_size)
                return std::uint64_t(r.raw_ptr) + (rva - r.vaddr);
        return std::nullopt;
    };

    // Imports: each imported name gets an extern slot; IAT slots in GOT-like sections map to it.
    std::map<Addr, std::string> iat_names;
    if (auto [rva, size] = directory(1); rva && size) {
        auto desc = rva_to_off(rva);
        for (std::uint64_t d = 0; desc; d += 20) {
            auto first_thunk = rd<std::uint32_t>(f, *desc + d + 16);
            auto orig_thunk = rd<std::uint32_t>(f, *desc + d);
            if (first_thunk == 0 && orig_thunk == 0)
                break;
            auto lookup = rva_to_off(orig_thunk ? orig_thunk : first_thunk);
            if (!lookup)
                throw Error(Errc::MalformedContainer, "import lookup table outside any section");
            for (std::uint32_t i = 0;; ++i) {
                std::uint64_t entry = file_word == 8 ? rd<std::uint64_t>(f, *lookup + 8ull * i)
                                                     : rd<std::uint32_t>(f, *lookup + 4ull * i);
                if (entry == 0)
                    break;
                bool by_ordinal = file_word == 8 ? (entry >> 63) : (entry >> 31);
                Addr slot = image_base + first_thunk + std::uint64_t(i) * file_word;
                if (by_ordinal) {
                    iat_names[slot] = "#" + std::to_string(entry & 0xffff);
                    continue;
                }
                auto name_off = rva_to_off(static_cast<std::uint32_t>(entry));
                if (!name_off)
                    throw Error(Errc::MalformedContainer, "import name outside any section");
                std::string nm;
                for (auto o = *name_off + 2; o < f.size() && f[o]; ++o)
                    nm.push_back(static_cast<char>(f[o]));
                iat_names[slot] = nm;
            }
        }
    }
    std::map<std::string, Addr> extern_slots;
    for (auto& [slot, nm] : iat_names)
        extern_slots.emplace(nm, 0);
    if (!extern_slots.empty()) {
        Section ext;
        ext.name = "extern";
        ext.base = (max_end + 0xfff) & ~Addr(0xfff);
        Addr next = ext.base;
        for (auto& [nm, a] : extern_slots) {
            a = next;
            next += file_word;
        }
        ext.size = next - ext.base;
        ext.kind = SectionKind::Extern;
        ext.bytes.assign(ext.size, 0);
        out.sections.push_back(std::move(ext));
    }
    Addr purecall_slot = 0;
    for (auto& [slot, nm] : iat_names) {
        bool got_like = false;
        for (auto& s : out.sections)
            if (s.contains(slot))
                got_like = s.kind == SectionKind::GotLike;
        if (got_like)
            out.got_map[slot] = extern_slots[nm];
        if (nm == kPureCall)
            purecall_slot = slot;
    }

    // Exception directory entries give exact function starts.
    if (auto [rva, size] = directory(3); rva && size)
        if (auto off = rva_to_off(rva))
            for (std::uint64_t o = 0; o + 12 <= size; o += 12) {
                auto begin = rd<std::uint32_t>(f, *off + o);
                if (begin)
                    out.entry_functions.insert(image_base + begin);
            }
    auto derived = derive_function_starts(out.sections, entry_rva ? std::optional<Addr>(image_base + entry_rva) : std::nullopt);
    out.entry_functions.insert(derived.begin(), derived.end());
    out.derived_function_set = true;

    // The pure-virtual handler is reached through a `jmp [iat]` thunk.
    if (purecall_slot) {
        for (auto& s : out.sections) {
            if (s.kind != SectionKind::Text)
                continue;
            for (std::size_t i = 0; i + 6 <= s.bytes.size(); ++i) {
                if (s.bytes[i] != 0xff || s.bytes[i + 1] != 0x25)
                    continue;
                std::int32_t disp;
                std::memcpy(&disp, s.bytes.data() + i + 2, 4);
                if (s.base + i + 6 + static_cast<Addr>(static_cast<std::int64_t>(disp)) == purecall_slot) {
                    out.pure_virtual_addr = s.base + i;
                    break;
                }
            }
        }
        if (!out.pure_virtual_addr)
            out.pure_virtual_addr = extern_slots[std::string(kPureCall)];
    }
    return out;
}

} // namespace virtinh
