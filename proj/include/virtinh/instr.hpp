#pragma once

#include "virtinh/error.hpp"

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace virtinh {

enum class Reg : std::uint8_t {
    rax, rcx, rdx, rbx, rsp, rbp, rsi, rdi,
    r8, r9, r10, r11, r12, r13, r14, r15,
    rip,
};

constexpr int kGprCount = 16;

inline std::string_view reg_name(Reg r, unsigned width = 8) {
    static constexpr std::array<std::string_view, 17> q = {
        "rax", "rcx", "rdx", "rbx", "rsp", "rbp", "rsi", "rdi",
        "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15", "rip"};
    static constexpr std::array<std::string_view, 16> d = {
        "eax", "ecx", "edx", "ebx", "esp", "ebp", "esi", "edi",
        "r8d", "r9d", "r10d", "r11d", "r12d", "r13d", "r14d", "r15d"};
    static constexpr std::array<std::string_view, 16> w = {
        "ax", "cx", "dx", "bx", "sp", "bp", "si", "di",
        "r8w", "r9w", "r10w", "r11w", "r12w", "r13w", "r14w", "r15w"};
    static constexpr std::array<std::string_view, 16> b = {
        "al", "cl", "dl", "bl", "spl", "bpl", "sil", "dil",
        "r8b", "r9b", "r10b", "r11b", "r12b", "r13b", "r14b", "r15b"};
    auto i = static_cast<std::size_t>(r);
    if (r == Reg::rip)
        return q[i];
    switch (width) {
    case 4: return d[i];
    case 2: return w[i];
    case 1: return b[i];
    default: return q[i];
    }
}

// Register by any of its width names; width is written to *width when given.
inline std::optional<Reg> parse_reg(std::string_view name, unsigned* width = nullptr) {
    for (int i = 0; i <= static_cast<int>(Reg::rip); ++i) {
        auto r = static_cast<Reg>(i);
        for (unsigned wd : {8u, 4u, 2u, 1u}) {
            if (r == Reg::rip && wd != 8)
                continue;
            if (reg_name(r, wd) == name) {
                if (width)
                    *width = wd;
                return r;
            }
        }
    }
    return std::nullopt;
}

enum class OperandKind { None, Register, Immediate, Memory };

struct Operand {
    OperandKind kind = OperandKind::None;
    std::optional<Reg> reg;
    std::optional<std::int64_t> imm;
    std::optional<Reg> mem_base; // absent for absolute (including RIP-resolved) addresses
    std::optional<std::int64_t> mem_disp;

    static Operand none() { return {}; }
    static Operand reg_op(Reg r) { return {OperandKind::Register, r, {}, {}, {}}; }
    static Operand imm_op(std::int64_t v) { return {OperandKind::Immediate, {}, v, {}, {}}; }
    static Operand mem_op(std::optional<Reg> base, std::int64_t disp) {
        return {OperandKind::Memory, {}, {}, base, disp};
    }

    bool is_reg() const { return kind == OperandKind::Register; }
    bool is_imm() const { return kind == OperandKind::Immediate; }
    bool is_mem() const { return kind == OperandKind::Memory; }
    bool is_absolute_mem() const { return is_mem() && !mem_base; }

    friend bool operator==(const Operand&, const Operand&) = default;
};

enum class Op { Move, LoadEffective, Add, Sub, Call, Store, Load, Other };

enum class Flow { None, Return, Jump, CondJump };

constexpr std::string_view to_string(Op op) {
    switch (op) {
    case Op::Move: return "Move";
    case Op::LoadEffective: return "LoadEffective";
    case Op::Add: return "Add";
    case Op::Sub: return "Sub";
    case Op::Call: return "Call";
    case Op::Store: return "Store";
    case Op::Load: return "Load";
    case Op::Other: return "Other";
    }
    return "Other";
}

struct NormInstr {
    Addr addr = 0;
    Op op = Op::Other;
    Operand dst;
    Operand src;
    std::uint8_t raw_len = 0;
    std::uint8_t width = 8; // operand size in bytes
    Flow flow = Flow::None;
    std::string mnemonic;

    Addr next() const { return addr + raw_len; }

    // Direct branch or call target.
    std::optional<Addr> target() const {
        if ((op == Op::Call || flow == Flow::Jump || flow == Flow::CondJump) && src.is_imm())
            return static_cast<Addr>(*src.imm);
        return std::nullopt;
    }

    friend bool operator==(const NormInstr&, const NormInstr&) = default;
};

struct DecodedFunction {
    Addr start = 0;
    std::vector<NormInstr> instrs;
    bool stalled = false; // a DecodeStall truncated the sweep
};

using InstrStreams = std::map<Addr, DecodedFunction>;

} // namespace virtinh
