#pragma once

#include "virtinh/error.hpp"

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace virtinh {

enum class Abi { Itanium, Msvc };

enum class SectionKind { Text, ReadOnlyData, Data, GotLike, Extern, Other };

constexpr std::string_view to_string(Abi a) { return a == Abi::Itanium ? "itanium" : "msvc"; }

constexpr std::string_view to_string(SectionKind k) {
    switch (k) {
    case SectionKind::Text: return "Text";
    case SectionKind::ReadOnlyData: return "ReadOnlyData";
    case SectionKind::Data: return "Data";
    case SectionKind::GotLike: return "GotLike";
    case SectionKind::Extern: return "Extern";
    case SectionKind::Other: return "Other";
    }
    return "Other";
}

struct Section {
    std::string name;
    Addr base = 0;
    std::uint64_t size = 0;
    SectionKind kind = SectionKind::Other;
    std::vector<std::uint8_t> bytes;

    Addr end() const { return base + size; }
    bool contains(Addr a) const { return a >= base && a - base < size; }
    bool is_data() const { return kind == SectionKind::ReadOnlyData || kind == SectionKind::Data; }
};

// Everything a container loader extracts; validated into a BinaryImage.
struct ImageContents {
    std::vector<Section> sections;
    unsigned word_size = 8;
    Abi abi = Abi::Itanium;
    std::set<Addr> entry_functions;
    bool derived_function_set = false;
    std::optional<Addr> pure_virtual_addr;
    // Data words relocated against the pure-virtual handler (their file content is 0).
    std::set<Addr> pure_virtual_slots;
    std::map<Addr, Addr> got_map;
};

// Immutable addressed byte store with machine-word access.
class BinaryImage {
public:
    BinaryImage() = default;

    explicit BinaryImage(ImageContents c) : c_(std::move(c)) {
        if (c_.word_size != 4 && c_.word_size != 8)
            throw Error(Errc::WordSizeMismatch, "word size must be 4 or 8");
        std::sort(c_.sections.begin(), c_.sections.end(),
                  [](const Section& a, const Section& b) { return a.base < b.base; });
        for (std::size_t i = 0; i < c_.sections.size(); ++i) {
            auto& s = c_.sections[i];
            if (s.bytes.size() != s.size)
                throw Error(Errc::MalformedContainer, "section " + s.name + " byte length differs from size");
            if (i > 0 && c_.sections[i - 1].end() > s.base)
                throw Error(Errc::MalformedContainer,
                            "sections " + c_.sections[i - 1].name + " and " + s.name + " overlap");
        }
        for (auto& [slot, target] : c_.got_map) {
            auto k = classify(slot);
            if (!k || *k != SectionKind::GotLike)
                throw Error(Errc::MalformedContainer, "GOT mapping outside a GOT-like section at " + hex(slot));
        }
    }

    const std::vector<Section>& sections() const { return c_.sections; }
    unsigned word_size() const { return c_.word_size; }
    Abi abi() const { return c_.abi; }
    const std::set<Addr>& entry_functions() const { return c_.entry_functions; }
    bool derived_function_set() const { return c_.derived_function_set; }
    std::optional<Addr> pure_virtual_addr() const { return c_.pure_virtual_addr; }
    const std::set<Addr>& pure_virtual_slots() const { return c_.pure_virtual_slots; }
    const std::map<Addr, Addr>& got_map() const { return c_.got_map; }

    const Section* section_at(Addr a) const {
        auto it = std::upper_bound(c_.sections.begin(), c_.sections.end(), a,
                                   [](Addr v, const Section& s) { return v < s.base; });
        if (it == c_.sections.begin())
            return nullptr;
        --it;
        return it->contains(a) ? &*it : nullptr;
    }

    std::optional<SectionKind> classify(Addr a) const {
        if (auto* s = section_at(a))
            return s->kind;
        return std::nullopt;
    }

    bool points_to_data(Addr a) const {
        auto* s = section_at(a);
        return s && s->is_data();
    }

    bool is_function_start(Addr a) const { return c_.entry_functions.count(a) != 0; }

    // Function start, or a slot holding (or relocated to) the pure-virtual handler.
    bool is_function_pointer_at(Addr slot) const {
        if (c_.pure_virtual_slots.count(slot))
            return true;
        auto w = try_read_uword(slot);
        if (!w)
            return false;
        if (c_.pure_virtual_addr && *w == *c_.pure_virtual_addr)
            return true;
        return is_function_start(*w);
    }

    // Value of the function pointer stored at slot, with pure-virtual slots resolved.
    Addr function_pointer_at(Addr slot) const {
        if (c_.pure_virtual_slots.count(slot) && c_.pure_virtual_addr)
            return *c_.pure_virtual_addr;
        return read_uword(slot);
    }

    template <typename T>
    T read(Addr a) const {
        static_assert(std::is_trivially_copyable_v<T>);
        auto* s = section_at(a);
        if (!s || a - s->base + sizeof(T) > s->size)
            throw Error(Errc::OutOfBounds, "read of " + std::to_string(sizeof(T)) + " bytes at " + hex(a));
        T v;
        std::memcpy(&v, s->bytes.data() + (a - s->base), sizeof(T));
        return v;
    }

    template <typename T>
    std::optional<T> try_read(Addr a) const noexcept {
        auto* s = section_at(a);
        if (!s || a - s->base + sizeof(T) > s->size)
            return std::nullopt;
        T v;
        std::memcpy(&v, s->bytes.data() + (a - s->base), sizeof(T));
        return v;
    }

    std::int64_t read_word(Addr a) const {
        if (a % c_.word_size != 0)
            throw Error(Errc::Misaligned, "word read at " + hex(a));
        if (c_.word_size == 8)
            return read<std::int64_t>(a);
        return read<std::int32_t>(a);
    }

    std::optional<std::int64_t> try_read_word(Addr a) const noexcept {
        if (a % c_.word_size != 0)
            return std::nullopt;
        if (c_.word_size == 8)
            return try_read<std::int64_t>(a);
        if (auto v = try_read<std::int32_t>(a))
            return *v;
        return std::nullopt;
    }

    // Word as an address: 32-bit words zero-extend.
    Addr read_uword(Addr a) const {
        auto w = read_word(a);
        return c_.word_size == 8 ? static_cast<Addr>(w) : static_cast<Addr>(static_cast<std::uint32_t>(w));
    }

    std::optional<Addr> try_read_uword(Addr a) const noexcept {
        auto w = try_read_word(a);
        if (!w)
            return std::nullopt;
        return c_.word_size == 8 ? static_cast<Addr>(*w) : static_cast<Addr>(static_cast<std::uint32_t>(*w));
    }

    // One level of GOT indirection; addresses outside the map resolve to themselves.
    Addr resolve_got(Addr a) const {
        auto it = c_.got_map.find(a);
        return it == c_.got_map.end() ? a : it->second;
    }

    std::span<const std::uint8_t> bytes_from(Addr a) const {
        auto* s = section_at(a);
        if (!s)
            return {};
        return std::span<const std::uint8_t>(s->bytes).subspan(a - s->base);
    }

    // One section per line: name, base, size, kind.
    std::string dump_sections() const {
        std::string out;
        for (auto& s : c_.sections)
            out += s.name + " " + hex(s.base) + " " + hex(s.size) + " " + std::string(to_string(s.kind)) + "\n";
        return out;
    }

private:
    ImageContents c_;
};

} // namespace virtinh
