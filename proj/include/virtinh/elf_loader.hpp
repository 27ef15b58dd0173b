#pragma once

#include "virtinh/disasm.hpp"
#include "virtinh/image.hpp"

#include <elf.h>

#include <cstring>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace virtinh {

namespace elf_detail {

struct Elf64Traits {
    using Ehdr = Elf64_Ehdr;
    using Shdr = Elf64_Shdr;
    using Sym = Elf64_Sym;
    using Rela = Elf64_Rela;
    using Rel = Elf64_Rel;
    static constexpr unsigned kWord = 8;
    static constexpr unsigned kMachine = EM_X86_64;
    static unsigned sym_type(const Sym& s) { return ELF64_ST_TYPE(s.st_info); }
    static std::uint32_t rel_sym(std::uint64_t info) { return static_cast<std::uint32_t>(ELF64_R_SYM(info)); }
    static std::uint32_t rel_type(std::uint64_t info) { return static_cast<std::uint32_t>(ELF64_R_TYPE(info)); }
    static constexpr std::uint32_t kRelative = R_X86_64_RELATIVE;
    static constexpr std::uint32_t kGlobDat = R_X86_64_GLOB_DAT;
    static constexpr std::uint32_t kJumpSlot = R_X86_64_JUMP_SLOT;
    static constexpr std::uint32_t kAbs = R_X86_64_64;
};

struct Elf32Traits {
    using Ehdr = Elf32_Ehdr;
    using Shdr = Elf32_Shdr;
    using Sym = Elf32_Sym;
    using Rela = Elf32_Rela;
    using Rel = Elf32_Rel;
    static constexpr unsigned kWord = 4;
    static constexpr unsigned kMachine = EM_386;
    static unsigned sym_type(const Sym& s) { return ELF32_ST_TYPE(s.st_info); }
    static std::uint32_t rel_sym(std::uint32_t info) { return ELF32_R_SYM(info); }
    static std::uint32_t rel_type(std::uint32_t info) { return ELF32_R_TYPE(info); }
    static constexpr std::uint32_t kRelative = R_386_RELATIVE;
    static constexpr std::uint32_t kGlobDat = R_386_GLOB_DAT;
    static constexpr std::uint32_t kJumpSlot = R_386_JMP_SLOT;
    static constexpr std::uint32_t kAbs = R_386_32;
};

template <typename T>
T read_struct(std::span<const std::uint8_t> file, std::uint64_t off, const char* what) {
    if (off > file.size() || file.size() - off < sizeof(T))
        throw Error(Errc::MalformedContainer, std::string("truncated ") + what + " at offset " + hex(off));
    T v;
    std::memcpy(&v, file.data() + off, sizeof(T));
    return v;
}

inline std::string read_cstr(std::span<const std::uint8_t> file, std::uint64_t off, std::uint64_t end) {
    std::string s;
    end = std::min<std::uint64_t>(end, file.size());
    while (off < end && file[off])
        s.push_back(static_cast<char>(file[off++]));
    return s;
}

inline bool is_metadata_type(std::uint32_t t) {
    switch (t) {
    case SHT_DYNSYM: case SHT_SYMTAB: case SHT_STRTAB: case SHT_RELA: case SHT_REL:
    case SHT_HASH: case SHT_GNU_HASH: case SHT_NOTE: case SHT_DYNAMIC:
    case SHT_GNU_versym: case SHT_GNU_verneed: case SHT_GNU_verdef:
        return true;
    default:
        return false;
    }
}

inline SectionKind classify_section(const std::string& name, std::uint32_t type, std::uint64_t flags) {
    if (flags & SHF_EXECINSTR)
        return SectionKind::Text;
    if (name == ".got" || name == ".got.plt")
        return SectionKind::GotLike;
    if (is_metadata_type(type) || (flags & SHF_TLS))
        return SectionKind::Other;
    if (!(flags & SHF_WRITE))
        return SectionKind::ReadOnlyData;
    // Relocated once at load, read-only afterwards.
    if (name.rfind(".data.rel.ro", 0) == 0)
        return SectionKind::ReadOnlyData;
    return SectionKind::Data;
}

inline constexpr std::string_view kPureVirtual = "__cxa_pure_virtual";

template <typename T>
ImageContents load(std::span<const std::uint8_t> file) {
    auto eh = read_struct<typename T::Ehdr>(file, 0, "ELF header");
    if (eh.e_machine != T::kMachine)
        throw Error(Errc::UnsupportedFormat, "unsupported ELF machine " + std::to_string(eh.e_machine));
    if (eh.e_shoff == 0 || eh.e_shnum == 0)
        throw Error(Errc::MalformedContainer, "ELF file without section headers");
    if (eh.e_shentsize != sizeof(typename T::Shdr))
        throw Error(Errc::MalformedContainer, "unexpected section header size");

    std::vector<typename T::Shdr> shdrs;
    for (unsigned i = 0; i < eh.e_shnum; ++i)
        shdrs.push_back(read_struct<typename T::Shdr>(file, eh.e_shoff + std::uint64_t(i) * sizeof(typename T::Shdr),
                                                      "section header"));
    if (eh.e_shstrndx >= shdrs.size())
        throw Error(Errc::MalformedContainer, "bad section name table index");
    const auto& shstr = shdrs[eh.e_shstrndx];
    auto section_name = [&](const typename T::Shdr& s) {
        return read_cstr(file, std::uint64_t(shstr.sh_offset) + s.sh_name, std::uint64_t(shstr.sh_offset) + shstr.sh_size);
    };

    ImageContents out;
    out.word_size = T::kWord;
    out.abi = Abi::Itanium;
    Addr max_end = 0;
    for (auto& sh : shdrs) {
        if (!(sh.sh_flags & SHF_ALLOC) || sh.sh_addr == 0 || sh.sh_size == 0)
            continue;
        if ((sh.sh_flags & SHF_TLS) && sh.sh_type == SHT_NOBITS)
            continue; // occupies no address space of its own
        Section s;
        s.name = section_name(sh);
        s.base = sh.sh_addr;
        s.size = sh.sh_size;
        s.kind = classify_section(s.name, sh.sh_type, sh.sh_flags);
        if (sh.sh_type == SHT_NOBITS) {
            s.bytes.assign(s.size, 0);
        } else {
            if (sh.sh_offset > file.size() || file.size() - sh.sh_offset < sh.sh_size)
                throw Error(Errc::MalformedContainer, "section " + s.name + " extends past end of file");
            s.bytes.assign(file.begin() + static_cast<std::ptrdiff_t>(sh.sh_offset),
                           file.begin() + static_cast<std::ptrdiff_t>(sh.sh_offset + sh.sh_size));
        }
        max_end = std::max(max_end, s.end());
        out.sections.push_back(std::move(s));
    }

    struct SymInfo {
        std::string name;
        Addr value = 0;
        bool defined = false;
        unsigned type = 0;
    };
    auto read_symbols = [&](std::size_t idx) {
        std::vector<SymInfo> syms;
        const auto& sh = shdrs[idx];
        if (sh.sh_link >= shdrs.size() || sh.sh_entsize != sizeof(typename T::Sym))
            throw Error(Errc::MalformedContainer, "bad symbol table header");
        const auto& str = shdrs[sh.sh_link];
        for (std::uint64_t off = 0; off + sizeof(typename T::Sym) <= sh.sh_size; off += sizeof(typename T::Sym)) {
            auto sym = read_struct<typename T::Sym>(file, std::uint64_t(sh.sh_offset) + off, "symbol");
            SymInfo si;
            si.name = read_cstr(file, std::uint64_t(str.sh_offset) + sym.st_name, std::uint64_t(str.sh_offset) + str.sh_size);
            si.value = sym.st_value;
            si.defined = sym.st_shndx != SHN_UNDEF;
            si.type = T::sym_type(sym);
            syms.push_back(std::move(si));
        }
        return syms;
    };

    std::map<std::size_t, std::vector<SymInfo>> symtabs;
    bool has_symtab = false;
    for (std::size_t i = 0; i < shdrs.size(); ++i) {
        if (shdrs[i].sh_type == SHT_SYMTAB || shdrs[i].sh_type == SHT_DYNSYM) {
            symtabs[i] = read_symbols(i);
            has_symtab |= shdrs[i].sh_type == SHT_SYMTAB;
        }
    }
    for (auto& [idx, syms] : symtabs)
        for (auto& s : syms) {
            if (s.defined && s.type == STT_FUNC && s.value != 0)
                out.entry_functions.insert(s.value);
            if (s.defined && s.name == kPureVirtual && s.value != 0)
                out.pure_virtual_addr = s.value;
        }

    // Imported symbols get a slot in a synthetic extern section.
    std::map<std::string, Addr> extern_slots;
    for (auto& [idx, syms] : symtabs) {
        if (shdrs[idx].sh_type != SHT_DYNSYM)
            continue;
        for (auto& s : syms)
            if (!s.defined && !s.name.empty() && !extern_slots.count(s.name))
                extern_slots.emplace(s.name, 0);
    }
    if (!extern_slots.empty()) {
        Section ext;
        ext.name = "extern";
        ext.base = (max_end + 0xfff) & ~Addr(0xfff);
        Addr slot = ext.base;
        for (auto& [name, addr] : extern_slots) {
            addr = slot;
            slot += T::kWord;
        }
        ext.size = slot - ext.base;
        ext.kind = SectionKind::Extern;
        ext.bytes.assign(ext.size, 0);
        out.sections.push_back(std::move(ext));
        if (!out.pure_virtual_addr)
            if (auto it = extern_slots.find(std::string(kPureVirtual)); it != extern_slots.end())
                out.pure_virtual_addr = it->second;
    }

    auto section_kind_at = [&](Addr a) -> std::optional<SectionKind> {
        for (auto& s : out.sections)
            if (s.contains(a))
                return s.kind;
        return std::nullopt;
    };
    auto apply = [&](Addr where, std::uint32_t type, std::uint32_t symidx, std::int64_t addend,
                     const std::vector<SymInfo>* syms) {
        const SymInfo* sym = syms && symidx < syms->size() ? &(*syms)[symidx] : nullptr;
        auto kind = section_kind_at(where);
        if (kind && *kind == SectionKind::GotLike) {
            if (type == T::kRelative) {
                out.got_map[where] = static_cast<Addr>(addend);
            } else if ((type == T::kGlobDat || type == T::kJumpSlot || type == T::kAbs) && sym) {
                if (sym->defined && sym->value)
                    out.got_map[where] = sym->value + static_cast<Addr>(addend);
                else if (auto it = extern_slots.find(sym->name); it != extern_slots.end())
                    out.got_map[where] = it->second + static_cast<Addr>(addend);
            }
        } else if ((type == T::kAbs || type == T::kGlobDat) && sym && sym->name == kPureVirtual) {
            out.pure_virtual_slots.insert(where);
        }
    };
    for (auto& sh : shdrs) {
        if (sh.sh_type != SHT_RELA && sh.sh_type != SHT_REL)
            continue;
        const std::vector<SymInfo>* syms = nullptr;
        if (auto it = symtabs.find(sh.sh_link); it != symtabs.end())
            syms = &it->second;
        if (sh.sh_type == SHT_RELA) {
            for (std::uint64_t off = 0; off + sizeof(typename T::Rela) <= sh.sh_size; off += sizeof(typename T::Rela)) {
                auto r = read_struct<typename T::Rela>(file, std::uint64_t(sh.sh_offset) + off, "relocation");
                apply(r.r_offset, T::rel_type(r.r_info), T::rel_sym(r.r_info), static_cast<std::int64_t>(r.r_addend), syms);
            }
        } else {
            for (std::uint64_t off = 0; off + sizeof(typename T::Rel) <= sh.sh_size; off += sizeof(typename T::Rel)) {
                auto r = read_struct<typename T::Rel>(file, std::uint64_t(sh.sh_offset) + off, "relocation");
                std::int64_t addend = 0;
                for (auto& s : out.sections)
                    if (s.contains(r.r_offset) && r.r_offset - s.base + T::kWord <= s.size) {
                        std::int32_t v;
                        std::memcpy(&v, s.bytes.data() + (r.r_offset - s.base), sizeof v);
                        addend = T::kWord == 4 ? static_cast<std::uint32_t>(v) : v;
                    }
                apply(r.r_offset, T::rel_type(r.r_info), T::rel_sym(r.r_info), addend, syms);
            }
        }
    }

    if (!has_symtab) {
        auto derived = derive_function_starts(out.sections, eh.e_entry ? std::optional<Addr>(eh.e_entry) : std::nullopt);
        out.entry_functions.insert(derived.begin(), derived.end());
        out.derived_function_set = true;
    }
    return out;
}

} // namespace elf_detail

inline bool looks_like_elf(std::span<const std::uint8_t> file) {
    return file.size() >= 4 && file[0] == ELFMAG0 && file[1] == ELFMAG1 && file[2] == ELFMAG2 && file[3] == ELFMAG3;
}

inline ImageContents load_elf(std::span<const std::uint8_t> file, unsigned word_size) {
    if (file.size() < EI_NIDENT)
        throw Error(Errc::MalformedContainer, "file too small for an ELF identification block");
    if (!looks_like_elf(file))
        throw Error(Errc::UnsupportedFormat, "not an ELF file");
    if (file[EI_DATA] != ELFDATA2LSB)
        throw Error(Errc::UnsupportedFormat, "big-endian ELF");
    unsigned cls = file[EI_CLASS];
    if (cls != ELFCLASS64 && cls != ELFCLASS32)
        throw Error(Errc::MalformedContainer, "bad ELF class byte");
    unsigned file_word = cls == ELFCLASS64 ? 8 : 4;
    if (file_word != word_size)
        throw Error(Errc::WordSizeMismatch,
                    "file is ELF" + std::to_string(file_word * 8) + ", requested word size " + std::to_string(word_size));
    return cls == ELFCLASS64 ? elf_detail::load<elf_detail::Elf64Traits>(file)
                             : elf_detail::load<elf_detail::Elf32Traits>(file);
}

} // namespace virtinh
