#pragma once

// Length decoder for x86-64 plus semantic decoding of the mov/lea/add/sub/call/ret/
// push/pop/jmp subset. Everything else becomes Op::Other with its length intact.

#include "virtinh/instr.hpp"

#include <cstdint>
#include <optional>
#include <span>

namespace virtinh::x86 {

namespace detail {

enum class Imm : std::uint8_t { None, B, W, Z, V, EnterWB, Moffs, Grp3B, Grp3Z, Rel8, Rel32 };

struct OpInfo {
    bool valid = true;
    bool modrm = false;
    Imm imm = Imm::None;
};

constexpr OpInfo bad() { return {false, false, Imm::None}; }
constexpr OpInfo plain(Imm i = Imm::None) { return {true, false, i}; }
constexpr OpInfo rm(Imm i = Imm::None) { return {true, true, i}; }

constexpr OpInfo one_byte(std::uint8_t op) {
    if (op < 0x40) {
        if (op == 0x0f)
            return bad(); // escape handled by caller
        switch (op & 7) {
        case 0: case 1: case 2: case 3: return rm();
        case 4: return plain(Imm::B);
        case 5: return plain(Imm::Z);
        default: return bad();
        }
    }
    if (op < 0x50)
        return bad(); // REX handled by caller
    if (op < 0x60)
        return plain();
    switch (op) {
    case 0x63: return rm();
    case 0x68: return plain(Imm::Z);
    case 0x69: return rm(Imm::Z);
    case 0x6a: return plain(Imm::B);
    case 0x6b: return rm(Imm::B);
    case 0x6c: case 0x6d: case 0x6e: case 0x6f: return plain();
    default: break;
    }
    if (op >= 0x60 && op < 0x70)
        return bad();
    if (op < 0x80)
        return plain(Imm::Rel8);
    switch (op) {
    case 0x80: return rm(Imm::B);
    case 0x81: return rm(Imm::Z);
    case 0x82: return bad();
    case 0x83: return rm(Imm::B);
    default: break;
    }
    if (op < 0x90)
        return rm();
    if (op == 0x9a)
        return bad();
    if (op < 0xa0)
        return plain();
    if (op < 0xa4)
        return plain(Imm::Moffs);
    if (op == 0xa8)
        return plain(Imm::B);
    if (op == 0xa9)
        return plain(Imm::Z);
    if (op < 0xb0)
        return plain();
    if (op < 0xb8)
        return plain(Imm::B);
    if (op < 0xc0)
        return plain(Imm::V);
    switch (op) {
    case 0xc0: case 0xc1: return rm(Imm::B);
    case 0xc2: return plain(Imm::W);
    case 0xc3: return plain();
    case 0xc6: return rm(Imm::B);
    case 0xc7: return rm(Imm::Z);
    case 0xc8: return plain(Imm::EnterWB);
    case 0xc9: return plain();
    case 0xca: return plain(Imm::W);
    case 0xcb: case 0xcc: return plain();
    case 0xcd: return plain(Imm::B);
    case 0xce: return bad();
    case 0xcf: return plain();
    case 0xd0: case 0xd1: case 0xd2: case 0xd3: return rm();
    case 0xd4: case 0xd5: case 0xd6: return bad();
    case 0xd7: return plain();
    default: break;
    }
    if (op >= 0xd8 && op <= 0xdf)
        return rm();
    if (op >= 0xe0 && op <= 0xe3)
        return plain(Imm::Rel8);
    if (op >= 0xe4 && op <= 0xe7)
        return plain(Imm::B);
    switch (op) {
    case 0xe8: case 0xe9: return plain(Imm::Rel32);
    case 0xea: return bad();
    case 0xeb: return plain(Imm::Rel8);
    case 0xf6: return rm(Imm::Grp3B);
    case 0xf7: return rm(Imm::Grp3Z);
    case 0xfe: case 0xff: return rm();
    default: break;
    }
    if (op >= 0xec)
        return plain();
    return bad();
}

constexpr OpInfo two_byte(std::uint8_t op) {
    switch (op) {
    case 0x04: case 0x0a: case 0x0c: return bad();
    case 0x05: case 0x06: case 0x07: case 0x08: case 0x09: case 0x0b: case 0x0e: return plain();
    case 0x0f: return rm(Imm::B);
    default: break;
    }
    if (op < 0x04)
        return rm();
    if (op == 0x0d || (op >= 0x10 && op <= 0x23) || (op >= 0x28 && op <= 0x2f))
        return rm();
    if (op >= 0x24 && op <= 0x27)
        return bad();
    if (op >= 0x30 && op <= 0x37)
        return plain();
    if (op >= 0x38 && op <= 0x3f)
        return bad(); // three-byte maps handled by caller; others invalid
    if (op >= 0x40 && op <= 0x6f)
        return rm();
    if (op >= 0x70 && op <= 0x73)
        return rm(Imm::B);
    if (op == 0x77)
        return plain();
    if (op >= 0x74 && op <= 0x7f)
        return rm();
    if (op >= 0x80 && op <= 0x8f)
        return plain(Imm::Rel32);
    if (op >= 0x90 && op <= 0x9f)
        return rm();
    switch (op) {
    case 0xa0: case 0xa1: case 0xa2: case 0xa8: case 0xa9: case 0xaa: return plain();
    case 0xa6: case 0xa7: return bad();
    case 0xa4: case 0xac: case 0xba: case 0xc2: case 0xc4: case 0xc5: case 0xc6: return rm(Imm::B);
    default: break;
    }
    if (op >= 0xc8 && op <= 0xcf)
        return plain();
    return rm();
}

// VEX/EVEX map 1 entries that carry an imm8.
constexpr bool vex_map1_imm(std::uint8_t op) {
    return (op >= 0x70 && op <= 0x73) || op == 0xc2 || (op >= 0xc4 && op <= 0xc6);
}

struct Cursor {
    std::span<const std::uint8_t> b;
    std::size_t i = 0;
    bool ok() const { return i <= b.size(); }
    bool has(std::size_t n) const { return i + n <= b.size(); }
    std::uint8_t u8() { return b[i++]; }
    std::int64_t sx(std::size_t n) {
        std::uint64_t v = 0;
        for (std::size_t k = 0; k < n; ++k)
            v |= static_cast<std::uint64_t>(b[i + k]) << (8 * k);
        i += n;
        if (n < 8) {
            auto shift = 64 - 8 * n;
            return static_cast<std::int64_t>(v << shift) >> shift;
        }
        return static_cast<std::int64_t>(v);
    }
};

struct ModRM {
    std::uint8_t mod = 0, reg = 0, rm = 0;
    bool sib = false;
    std::uint8_t scale = 0, index = 0, base = 0;
    std::int64_t disp = 0;
    bool rip = false;
    bool no_base = false;
    bool has_index = false;
};

constexpr std::string_view kCond[16] = {"jo", "jno", "jb", "jae", "je", "jne", "jbe", "ja",
                                        "js", "jns", "jp", "jnp", "jl", "jge", "jle", "jg"};

inline std::string op_name(std::uint8_t map, std::uint8_t op) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string s = map == 0 ? "op_" : map == 1 ? "op_0f_" : map == 2 ? "op_0f38_" : map == 3 ? "op_0f3a_" : "op_vex_";
    s += digits[op >> 4];
    s += digits[op & 15];
    return s;
}

} // namespace detail

// Decodes one instruction at addr; nullopt when the length cannot be determined.
inline std::optional<NormInstr> decode_one(std::span<const std::uint8_t> bytes, Addr addr) {
    using namespace detail;
    Cursor c{bytes.first(std::min<std::size_t>(bytes.size(), 15))};
    bool opsize = false, addrsize = false, rep = false, repne = false;
    while (c.has(1)) {
        auto p = c.b[c.i];
        if (p == 0x66) opsize = true;
        else if (p == 0x67) addrsize = true;
        else if (p == 0xf3) rep = true;
        else if (p == 0xf2) repne = true;
        else if (p == 0xf0 || p == 0x2e || p == 0x3e || p == 0x26 || p == 0x36 || p == 0x64 || p == 0x65) {}
        else break;
        ++c.i;
    }
    std::uint8_t rex = 0;
    if (c.has(1) && (c.b[c.i] & 0xf0) == 0x40)
        rex = c.u8();
    if (!c.has(1))
        return std::nullopt;
    const bool rex_w = rex & 8, rex_r = rex & 4, rex_x = rex & 2, rex_b = rex & 1;

    std::uint8_t map = 0;
    std::uint8_t op = c.u8();
    OpInfo info;
    bool vex = false;
    if (op == 0x0f) {
        if (!c.has(1))
            return std::nullopt;
        op = c.u8();
        if (op == 0x38 || op == 0x3a) {
            if (!c.has(1))
                return std::nullopt;
            map = op == 0x38 ? 2 : 3;
            op = c.u8();
            info = rm(map == 3 ? Imm::B : Imm::None);
        } else {
            map = 1;
            info = two_byte(op);
        }
    } else if (op == 0xc4 || op == 0xc5 || op == 0x62) {
        vex = true;
        std::uint8_t vmap = 1;
        if (op == 0xc5) {
            if (!c.has(2))
                return std::nullopt;
            c.u8();
        } else if (op == 0xc4) {
            if (!c.has(3))
                return std::nullopt;
            vmap = c.u8() & 0x1f;
            c.u8();
        } else {
            if (!c.has(4))
                return std::nullopt;
            vmap = c.u8() & 0x07;
            c.u8();
            c.u8();
        }
        if (!c.has(1))
            return std::nullopt;
        op = c.u8();
        map = 4;
        if (vmap == 1)
            info = op == 0x77 ? plain() : rm(vex_map1_imm(op) ? Imm::B : Imm::None);
        else if (vmap == 2 || vmap == 5 || vmap == 6)
            info = rm();
        else if (vmap == 3)
            info = rm(Imm::B);
        else
            return std::nullopt;
    } else if (op == 0x8f && c.has(1) && (c.b[c.i] & 0x38) != 0) {
        return std::nullopt; // XOP
    } else {
        info = one_byte(op);
    }
    if (!info.valid)
        return std::nullopt;

    ModRM m;
    if (info.modrm) {
        if (!c.has(1))
            return std::nullopt;
        auto b = c.u8();
        m.mod = b >> 6;
        m.reg = static_cast<std::uint8_t>(((b >> 3) & 7) | (rex_r ? 8 : 0));
        m.rm = b & 7;
        if (m.mod != 3) {
            std::size_t disp_len = m.mod == 1 ? 1 : m.mod == 2 ? 4 : 0;
            if (m.rm == 4) {
                if (!c.has(1))
                    return std::nullopt;
                auto s = c.u8();
                m.sib = true;
                m.scale = s >> 6;
                m.index = static_cast<std::uint8_t>(((s >> 3) & 7) | (rex_x ? 8 : 0));
                m.base = static_cast<std::uint8_t>((s & 7) | (rex_b ? 8 : 0));
                m.has_index = m.index != 4;
                if (m.mod == 0 && (s & 7) == 5) {
                    m.no_base = true;
                    disp_len = 4;
                }
            } else if (m.mod == 0 && m.rm == 5) {
                m.rip = true;
                disp_len = 4;
            } else {
                m.base = static_cast<std::uint8_t>(m.rm | (rex_b ? 8 : 0));
            }
            if (!c.has(disp_len))
                return std::nullopt;
            m.disp = disp_len ? c.sx(disp_len) : 0;
        } else {
            m.rm = static_cast<std::uint8_t>(m.rm | (rex_b ? 8 : 0));
        }
    }

    const unsigned osz = rex_w ? 8 : opsize ? 2 : 4;
    std::int64_t immv = 0;
    std::size_t ilen = 0;
    switch (info.imm) {
    case Imm::None: break;
    case Imm::B: case Imm::Rel8: ilen = 1; break;
    case Imm::W: ilen = 2; break;
    case Imm::Z: ilen = osz == 2 ? 2 : 4; break;
    case Imm::V: ilen = osz; break;
    case Imm::EnterWB: ilen = 3; break;
    case Imm::Moffs: ilen = addrsize ? 4 : 8; break;
    case Imm::Rel32: ilen = 4; break;
    case Imm::Grp3B: ilen = (m.reg & 7) < 2 ? 1 : 0; break;
    case Imm::Grp3Z: ilen = (m.reg & 7) < 2 ? (osz == 2 ? 2 : 4) : 0; break;
    }
    if (!c.has(ilen))
        return std::nullopt;
    if (ilen)
        immv = c.sx(ilen);

    NormInstr in;
    in.addr = addr;
    in.raw_len = static_cast<std::uint8_t>(c.i);
    in.width = static_cast<std::uint8_t>(osz);
    const Addr next = addr + c.i;

    auto mem = [&]() -> std::optional<Operand> {
        if (addrsize || m.has_index)
            return std::nullopt;
        if (m.rip)
            return Operand::mem_op(std::nullopt, static_cast<std::int64_t>(next + static_cast<Addr>(m.disp)));
        if (m.no_base)
            return Operand::mem_op(std::nullopt, m.disp);
        return Operand::mem_op(static_cast<Reg>(m.base), m.disp);
    };
    auto rm_operand = [&]() -> std::optional<Operand> {
        if (m.mod == 3)
            return Operand::reg_op(static_cast<Reg>(m.rm));
        return mem();
    };
    auto reg_operand = [&]() { return Operand::reg_op(static_cast<Reg>(m.reg)); };
    // Legacy high-byte registers (ah..bh) cannot be tracked as their full register.
    auto high_byte = [&](unsigned width, std::uint8_t r) { return width == 1 && !rex && r >= 4 && r < 8; };
    auto other = [&](std::string mn, std::optional<Operand> dst = std::nullopt) {
        in.op = Op::Other;
        in.mnemonic = std::move(mn);
        if (dst) {
            if (dst->is_reg() && high_byte(in.width, static_cast<std::uint8_t>(*dst->reg)))
                dst = Operand::reg_op(static_cast<Reg>(static_cast<std::uint8_t>(*dst->reg) - 4));
            in.dst = *dst;
        }
        return in;
    };

    if (map == 1) {
        if (op >= 0x80 && op <= 0x8f) {
            in.flow = Flow::CondJump;
            in.src = Operand::imm_op(static_cast<std::int64_t>(next + static_cast<Addr>(immv)));
            return other(std::string(kCond[op & 15]));
        }
        if (op == 0x1e && rep && m.mod == 3 && (m.reg & 7) == 7 && (m.rm & 7) == 2)
            return other("endbr64");
        if (op == 0x1f)
            return other("nop");
        if (op == 0xb6 || op == 0xb7 || op == 0xbe || op == 0xbf || op == 0xaf || (op >= 0x40 && op <= 0x4f))
            return other(op >= 0x40 && op <= 0x4f ? "cmov" : op == 0xaf ? "imul" : "movx", reg_operand());
        if (op >= 0x90 && op <= 0x9f) {
            in.width = 1;
            return other("setcc", rm_operand());
        }
        if (op == 0x05)
            return other("syscall", Operand::reg_op(Reg::rax));
        if (op == 0xa2)
            return other("cpuid", Operand::reg_op(Reg::rax));
        return other(op_name(1, op));
    }
    if (map != 0)
        return other(op_name(map, op));
    (void)vex;

    switch (op) {
    case 0x88: case 0x89: case 0x8a: case 0x8b: {
        in.width = (op & 1) ? static_cast<std::uint8_t>(osz) : 1;
        auto r = rm_operand();
        auto g = reg_operand();
        bool to_rm = op == 0x88 || op == 0x89;
        if (!r)
            return other("mov", to_rm ? std::nullopt : std::optional<Operand>(g));
        if (high_byte(in.width, m.reg) || (m.mod == 3 && high_byte(in.width, m.rm)))
            return other("mov", to_rm ? r : g);
        in.mnemonic = "mov";
        if (to_rm) {
            in.dst = *r;
            in.src = g;
            in.op = r->is_mem() ? Op::Store : Op::Move;
        } else {
            in.dst = g;
            in.src = *r;
            in.op = r->is_mem() ? Op::Load : Op::Move;
        }
        return in;
    }
    case 0x8d: {
        auto r = m.mod == 3 ? std::nullopt : mem();
        if (!r)
            return other("lea", reg_operand());
        in.mnemonic = "lea";
        in.op = Op::LoadEffective;
        in.dst = reg_operand();
        in.src = *r;
        return in;
    }
    case 0xc6: case 0xc7: {
        in.width = op == 0xc6 ? 1 : static_cast<std::uint8_t>(osz);
        auto r = rm_operand();
        if ((m.reg & 7) != 0 || !r || (m.mod == 3 && high_byte(in.width, m.rm)))
            return other(op_name(0, op), r);
        in.mnemonic = "mov";
        in.dst = *r;
        in.src = Operand::imm_op(immv);
        in.op = r->is_mem() ? Op::Store : Op::Move;
        return in;
    }
    case 0xe8:
        in.mnemonic = "call";
        in.op = Op::Call;
        in.width = 8;
        in.src = Operand::imm_op(static_cast<std::int64_t>(next + static_cast<Addr>(immv)));
        return in;
    case 0xe9: case 0xeb:
        in.flow = Flow::Jump;
        in.width = 8;
        in.src = Operand::imm_op(static_cast<std::int64_t>(next + static_cast<Addr>(immv)));
        return other("jmp");
    case 0xc3: case 0xc2:
        in.flow = Flow::Return;
        in.width = 8;
        return other("ret");
    case 0xcc:
        return other("int3");
    case 0x90:
        return other(rep ? "pause" : "nop");
    case 0xc9:
        in.width = 8;
        return other("leave", Operand::reg_op(Reg::rbp));
    case 0xff: {
        auto r = rm_operand();
        auto sub = m.reg & 7;
        if (sub == 2 || sub == 4) {
            in.width = 8;
            if (!r) {
                if (sub == 4)
                    in.flow = Flow::Jump;
                return other(sub == 2 ? "call" : "jmp");
            }
            if (sub == 2) {
                in.mnemonic = "call";
                in.op = Op::Call;
                in.src = *r;
                return in;
            }
            in.flow = Flow::Jump;
            in.src = *r;
            return other("jmp");
        }
        if (sub == 6) {
            in.width = 8;
            return other("push");
        }
        return other(sub == 0 ? "inc" : sub == 1 ? "dec" : op_name(0, op), sub <= 1 ? r : std::nullopt);
    }
    default: break;
    }
    if (op >= 0x50 && op <= 0x57) {
        in.width = 8;
        return other("push");
    }
    if (op >= 0x58 && op <= 0x5f) {
        in.width = 8;
        return other("pop", Operand::reg_op(static_cast<Reg>((op & 7) | (rex_b ? 8 : 0))));
    }
    if (op >= 0x70 && op <= 0x7f) {
        in.flow = Flow::CondJump;
        in.src = Operand::imm_op(static_cast<std::int64_t>(next + static_cast<Addr>(immv)));
        return other(std::string(kCond[op & 15]));
    }
    if (op >= 0xb0 && op <= 0xbf) {
        auto r = static_cast<Reg>((op & 7) | (rex_b ? 8 : 0));
        in.width = op < 0xb8 ? 1 : static_cast<std::uint8_t>(osz);
        if (op < 0xb8 && high_byte(1, static_cast<std::uint8_t>(r)))
            return other("mov", Operand::reg_op(r));
        in.mnemonic = "mov";
        in.op = Op::Move;
        in.dst = Operand::reg_op(r);
        // A 32-bit register write zero-extends.
        in.src = Operand::imm_op(in.width == 4 ? static_cast<std::int64_t>(static_cast<std::uint32_t>(immv)) : immv);
        return in;
    }
    // add/sub in their ALU encodings.
    if (op <= 0x03 || (op >= 0x28 && op <= 0x2b)) {
        bool is_add = op <= 0x03;
        in.width = (op & 1) ? static_cast<std::uint8_t>(osz) : 1;
        auto r = rm_operand();
        auto g = reg_operand();
        bool to_rm = (op & 2) == 0;
        if (!r || high_byte(in.width, m.reg) || (m.mod == 3 && high_byte(in.width, m.rm)))
            return other(is_add ? "add" : "sub", to_rm ? r : std::optional<Operand>(g));
        in.mnemonic = is_add ? "add" : "sub";
        in.op = is_add ? Op::Add : Op::Sub;
        in.dst = to_rm ? *r : g;
        in.src = to_rm ? g : *r;
        return in;
    }
    if (op == 0x04 || op == 0x05 || op == 0x2c || op == 0x2d) {
        in.width = (op & 1) ? static_cast<std::uint8_t>(osz) : 1;
        in.mnemonic = op < 0x10 ? "add" : "sub";
        in.op = op < 0x10 ? Op::Add : Op::Sub;
        in.dst = Operand::reg_op(Reg::rax);
        in.src = Operand::imm_op(immv);
        return in;
    }
    if (op == 0x80 || op == 0x81 || op == 0x83) {
        in.width = op == 0x80 ? 1 : static_cast<std::uint8_t>(osz);
        auto r = rm_operand();
        auto sub = m.reg & 7;
        if ((sub == 0 || sub == 5) && r && !(m.mod == 3 && high_byte(in.width, m.rm))) {
            in.mnemonic = sub == 0 ? "add" : "sub";
            in.op = sub == 0 ? Op::Add : Op::Sub;
            in.dst = *r;
            in.src = Operand::imm_op(immv);
            return in;
        }
        static constexpr std::string_view names[8] = {"add", "or", "adc", "sbb", "and", "sub", "xor", "cmp"};
        return other(std::string(names[sub]), sub == 7 ? std::nullopt : r);
    }
    // Remaining ALU forms write their destination except cmp.
    if (op < 0x40 && (op & 7) <= 3) {
        static constexpr std::string_view names[8] = {"add", "or", "adc", "sbb", "and", "sub", "xor", "cmp"};
        auto sub = op >> 3;
        in.width = (op & 1) ? static_cast<std::uint8_t>(osz) : 1;
        if (sub == 7)
            return other("cmp");
        return other(std::string(names[sub]), (op & 2) ? std::optional<Operand>(reg_operand()) : rm_operand());
    }
    if (op < 0x40)
        return other(op_name(0, op), (op & 7) <= 5 && (op >> 3) != 7 ? std::optional<Operand>(Operand::reg_op(Reg::rax)) : std::nullopt);
    if (op == 0x63 || op == 0x69 || op == 0x6b)
        return other(op == 0x63 ? "movsxd" : "imul", reg_operand());
    if (op == 0x84 || op == 0x85)
        return other("test");
    if (op == 0x86 || op == 0x87)
        return other("xchg", rm_operand());
    if (op == 0x8f)
        return other("pop", rm_operand());
    if (op > 0x90 && op <= 0x97)
        return other("xchg", Operand::reg_op(Reg::rax));
    if (op == 0x98 || op == 0x99)
        return other(op == 0x98 ? "cdqe" : "cqo", Operand::reg_op(op == 0x98 ? Reg::rax : Reg::rdx));
    if (op == 0xc0 || op == 0xc1 || (op >= 0xd0 && op <= 0xd3))
        return other("shift", rm_operand());
    if (op == 0xf6 || op == 0xf7) {
        auto sub = m.reg & 7;
        if (sub == 2 || sub == 3)
            return other(sub == 2 ? "not" : "neg", rm_operand());
        if (sub >= 4)
            return other("muldiv", Operand::reg_op(Reg::rax));
        return other("test");
    }
    if (op == 0xfe)
        return other("incdec", rm_operand());
    (void)repne;
    return other(op_name(0, op));
}

} // namespace virtinh::x86
