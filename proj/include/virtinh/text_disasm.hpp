#pragma once

#include "virtinh/instr.hpp"

#include <charconv>
#include <regex>
#include <sstream>
#include <string>

namespace virtinh {

// Line grammar:
//   fn HEXADDR
//   HEXADDR: MNEMONIC [DST][, SRC] [; len=N w=W op=OP flow=FLOW]
// Operands: register names, 0xIMM or -0xIMM, [reg+0xDISP], [reg-0xDISP], [reg], [0xADDR],
// optionally preceded by a size keyword ("qword ptr"). Calls and branches carry a single
// source operand; other single-operand instructions carry a destination. Blank lines and
// lines starting with '#' are ignored.
namespace text_detail {

inline bool is_cond_jump(std::string_view m) {
    static constexpr std::string_view names[] = {"jo", "jno", "jb", "jae", "je", "jne", "jbe", "ja",
                                                 "js", "jns", "jp", "jnp", "jl", "jge", "jle", "jg"};
    for (auto n : names)
        if (m == n)
            return true;
    return false;
}

inline Flow flow_of(std::string_view m) {
    if (m == "ret")
        return Flow::Return;
    if (m == "jmp")
        return Flow::Jump;
    return is_cond_jump(m) ? Flow::CondJump : Flow::None;
}

inline bool takes_source_only(std::string_view m) { return m == "call" || flow_of(m) != Flow::None; }

inline Op op_of(std::string_view m, const Operand& dst, const Operand& src) {
    if (m == "mov")
        return dst.is_mem() ? Op::Store : src.is_mem() ? Op::Load : Op::Move;
    if (m == "lea")
        return Op::LoadEffective;
    if (m == "add")
        return Op::Add;
    if (m == "sub")
        return Op::Sub;
    if (m == "call")
        return Op::Call;
    return Op::Other;
}

inline std::string_view flow_name(Flow f) {
    switch (f) {
    case Flow::None: return "none";
    case Flow::Return: return "ret";
    case Flow::Jump: return "jump";
    case Flow::CondJump: return "cond";
    }
    return "none";
}

inline std::optional<Flow> parse_flow(std::string_view s) {
    for (Flow f : {Flow::None, Flow::Return, Flow::Jump, Flow::CondJump})
        if (flow_name(f) == s)
            return f;
    return std::nullopt;
}

inline std::optional<Op> parse_op(std::string_view s) {
    for (Op o : {Op::Move, Op::LoadEffective, Op::Add, Op::Sub, Op::Call, Op::Store, Op::Load, Op::Other})
        if (to_string(o) == s)
            return o;
    return std::nullopt;
}

inline std::optional<std::uint64_t> parse_hex(std::string_view s) {
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X'))
        s.remove_prefix(2);
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v, 16);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
        return std::nullopt;
    return v;
}

inline std::optional<std::int64_t> parse_signed_hex(std::string_view s) {
    bool neg = !s.empty() && s[0] == '-';
    if (neg || (!s.empty() && s[0] == '+'))
        s.remove_prefix(1);
    if (s.size() < 3 || s[0] != '0' || (s[1] != 'x' && s[1] != 'X'))
        return std::nullopt;
    auto v = parse_hex(s);
    if (!v)
        return std::nullopt;
    return neg ? static_cast<std::int64_t>(0 - *v) : static_cast<std::int64_t>(*v);
}

inline std::string trim(std::string_view s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return "";
    auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

// Operand text; width is set from a register name or size keyword when present.
inline std::optional<Operand> parse_operand(std::string s, std::optional<unsigned>& width) {
    static constexpr std::pair<std::string_view, unsigned> sizes[] = {
        {"qword ptr ", 8}, {"dword ptr ", 4}, {"word ptr ", 2}, {"byte ptr ", 1},
        {"qword ", 8},     {"dword ", 4},     {"word ", 2},     {"byte ", 1}};
    for (auto [kw, w] : sizes)
        if (s.rfind(kw, 0) == 0) {
            width = w;
            s = trim(s.substr(kw.size()));
            break;
        }
    if (s.empty())
        return std::nullopt;
    if (s.front() == '[') {
        if (s.back() != ']')
            return std::nullopt;
        auto inner = trim(s.substr(1, s.size() - 2));
        auto split = inner.find_first_of("+-", 1);
        std::string base = trim(inner.substr(0, split));
        if (auto abs = parse_signed_hex(base); abs && split == std::string::npos)
            return Operand::mem_op(std::nullopt, *abs);
        unsigned rw = 8;
        auto r = parse_reg(base, &rw);
        if (!r || rw != 8)
            return std::nullopt;
        std::int64_t disp = 0;
        if (split != std::string::npos) {
            auto d = parse_signed_hex(std::string(1, inner[split]) + trim(inner.substr(split + 1)));
            if (!d)
                return std::nullopt;
            disp = *d;
        }
        return Operand::mem_op(*r, disp);
    }
    if (auto v = parse_signed_hex(s))
        return Operand::imm_op(*v);
    unsigned rw = 8;
    if (auto r = parse_reg(s, &rw)) {
        if (*r == Reg::rip)
            return std::nullopt;
        if (!width)
            width = rw;
        return Operand::reg_op(*r);
    }
    return std::nullopt;
}

inline std::string render_operand(const Operand& o, unsigned width) {
    switch (o.kind) {
    case OperandKind::Register: return std::string(reg_name(*o.reg, width));
    case OperandKind::Immediate: return signed_hex(*o.imm);
    case OperandKind::Memory: {
        if (!o.mem_base)
            return "[" + signed_hex(*o.mem_disp) + "]";
        std::string d = signed_hex(*o.mem_disp);
        return "[" + std::string(reg_name(*o.mem_base)) + (d[0] == '-' ? d : "+" + d) + "]";
    }
    default: return "";
    }
}

} // namespace text_detail

inline std::string render_instr(const NormInstr& in) {
    using namespace text_detail;
    std::string out = hex(in.addr).substr(2) + ": " + in.mnemonic;
    std::vector<std::string> ops;
    if (in.dst.kind != OperandKind::None)
        ops.push_back(render_operand(in.dst, in.width));
    if (in.src.kind != OperandKind::None)
        ops.push_back(render_operand(in.src, in.width));
    for (std::size_t i = 0; i < ops.size(); ++i)
        out += (i ? ", " : " ") + ops[i];
    out += " ; len=" + std::to_string(in.raw_len) + " w=" + std::to_string(in.width);
    bool single_src = in.dst.kind == OperandKind::None && in.src.kind != OperandKind::None;
    if (in.op != op_of(in.mnemonic, in.dst, in.src) || single_src != takes_source_only(in.mnemonic))
        out += " op=" + std::string(to_string(in.op)) + (single_src ? " operand=src" : " operand=dst");
    if (in.flow != flow_of(in.mnemonic))
        out += " flow=" + std::string(flow_name(in.flow));
    return out;
}

inline std::string emit_text_disasm(const InstrStreams& streams) {
    std::string out;
    for (auto& [start, fn] : streams) {
        out += "fn " + hex(start).substr(2) + "\n";
        for (auto& in : fn.instrs)
            out += render_instr(in) + "\n";
    }
    return out;
}

// Structurally invalid lines raise GrammarError in strict mode; otherwise an instruction
// line whose operands do not parse becomes an Other instruction with no operands.
inline InstrStreams ingest_text_disasm(const std::string& listing, bool strict = false) {
    using namespace text_detail;
    InstrStreams out;
    DecodedFunction* cur = nullptr;
    std::istringstream in(listing);
    std::string raw;
    std::size_t lineno = 0;
    auto fail = [&](const std::string& why) {
        throw Error(Errc::GrammarError, "line " + std::to_string(lineno) + ": " + why);
    };
    static const std::regex fn_re(R"(^fn\s+(?:0x)?([0-9a-fA-F]+)$)");
    static const std::regex ins_re(R"(^(?:0x)?([0-9a-fA-F]+):\s*([A-Za-z_][\w.]*)\s*(.*)$)");
    while (std::getline(in, raw)) {
        ++lineno;
        auto line = trim(raw);
        if (line.empty() || line[0] == '#')
            continue;
        std::smatch m;
        if (std::regex_match(line, m, fn_re)) {
            Addr a = *parse_hex(m[1].str());
            cur = &out[a];
            cur->start = a;
            continue;
        }
        if (!std::regex_match(line, m, ins_re)) {
            if (strict)
                fail("not an instruction or function header");
            continue;
        }
        NormInstr ins;
        ins.addr = *parse_hex(m[1].str());
        ins.mnemonic = m[2];
        std::string rest = m[3];
        std::string note;
        if (auto semi = rest.find(';'); semi != std::string::npos) {
            note = rest.substr(semi + 1);
            rest = rest.substr(0, semi);
        }
        rest = trim(rest);
        std::optional<unsigned> width;
        std::vector<Operand> ops;
        bool ok = true;
        if (!rest.empty()) {
            std::size_t pos = 0;
            while (ok && pos <= rest.size()) {
                auto comma = rest.find(',', pos);
                auto part = trim(rest.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos));
                auto op = parse_operand(part, width);
                if (!op)
                    ok = false;
                else
                    ops.push_back(*op);
                if (comma == std::string::npos)
                    break;
                pos = comma + 1;
            }
        }
        if (ops.size() > 2)
            ok = false;
        if (!ok) {
            if (strict)
                fail("cannot parse operands '" + rest + "'");
            ops.clear();
        }
        bool source_only = takes_source_only(ins.mnemonic);
        std::optional<Op> forced_op;
        std::optional<Flow> forced_flow;
        std::optional<unsigned> len;
        std::istringstream notes(note);
        for (std::string kv; notes >> kv;) {
            auto eq = kv.find('=');
            if (eq == std::string::npos) {
                if (strict)
                    fail("bad annotation '" + kv + "'");
                continue;
            }
            auto key = kv.substr(0, eq), val = kv.substr(eq + 1);
            unsigned n = 0;
            auto num_ok = std::from_chars(val.data(), val.data() + val.size(), n).ec == std::errc();
            if (key == "len" && num_ok)
                len = n;
            else if (key == "w" && num_ok && (n == 1 || n == 2 || n == 4 || n == 8))
                width = n;
            else if (key == "op" && parse_op(val))
                forced_op = parse_op(val);
            else if (key == "flow" && parse_flow(val))
                forced_flow = parse_flow(val);
            else if (key == "operand" && (val == "src" || val == "dst"))
                source_only = val == "src";
            else if (strict)
                fail("bad annotation '" + kv + "'");
        }
        if (ops.size() == 2) {
            ins.dst = ops[0];
            ins.src = ops[1];
        } else if (ops.size() == 1) {
            (source_only ? ins.src : ins.dst) = ops[0];
        }
        ins.op = forced_op ? *forced_op : (ok ? op_of(ins.mnemonic, ins.dst, ins.src) : Op::Other);
        if (ins.op == Op::LoadEffective && !ins.src.is_mem())
            ins.op = Op::Other;
        ins.flow = forced_flow ? *forced_flow : flow_of(ins.mnemonic);
        ins.width = static_cast<std::uint8_t>(width.value_or(8));
        if (len)
            ins.raw_len = static_cast<std::uint8_t>(*len);
        if (!cur) {
            if (strict)
                fail("instruction before any function header");
            cur = &out[ins.addr];
            cur->start = ins.addr;
        }
        if (!cur->instrs.empty() && ins.addr <= cur->instrs.back().addr) {
            if (strict)
                fail("addresses must increase within a function");
            continue;
        }
        // Without an explicit length the gap to the next instruction is used.
        if (!cur->instrs.empty() && cur->instrs.back().raw_len == 0)
            cur->instrs.back().raw_len = static_cast<std::uint8_t>(std::min<Addr>(ins.addr - cur->instrs.back().addr, 255));
        cur->instrs.push_back(std::move(ins));
    }
    return out;
}

} // namespace virtinh
