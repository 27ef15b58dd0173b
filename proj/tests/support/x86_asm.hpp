#pragma once

// x86-64 encoder for the instruction subset the analysis models. Every emitter also records
// the NormInstr the decoder is expected to produce for those bytes.

#include "bytes.hpp"

#include "virtinh/instr.hpp"

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace vt {

using virtinh::Addr;
using virtinh::Flow;
using virtinh::NormInstr;
using virtinh::Op;
using virtinh::Operand;
using virtinh::Reg;

class Asm {
public:
    explicit Asm(Addr base = 0) : base_(base) {}

    Addr here() const { return base_ + code_.size(); }
    const Bytes& code() const { return code_; }
    const std::vector<NormInstr>& expected() const { return expected_; }

    void label(const std::string& name) { labels_[name] = here(); }
    Addr address_of(const std::string& name) const { return labels_.at(name); }

    // Resolves label references; call once all labels are placed.
    void finish() {
        for (auto& f : fixups_) {
            Addr target = f.absolute ? f.absolute_target : labels_.at(f.label);
            auto rel = static_cast<std::int64_t>(target) - static_cast<std::int64_t>(f.next);
            if (f.width == 1) {
                if (rel < -128 || rel > 127)
                    throw std::runtime_error("rel8 out of range for " + f.label);
                code_[f.at] = static_cast<std::uint8_t>(rel);
            } else {
                put<std::int32_t>(code_, f.at, static_cast<std::int32_t>(rel));
            }
            auto& e = expected_[f.instr];
            if (f.is_mem)
                e.src = Operand::mem_op(std::nullopt, static_cast<std::int64_t>(target));
            else
                e.src = Operand::imm_op(static_cast<std::int64_t>(target));
        }
        fixups_.clear();
    }

    void mov_rr(Reg dst, Reg src) { rr(0x89, src, dst, "mov", Op::Move); }
    void add_rr(Reg dst, Reg src) { rr(0x01, src, dst, "add", Op::Add); }
    void sub_rr(Reg dst, Reg src) { rr(0x29, src, dst, "sub", Op::Sub); }

    void xor_rr(Reg dst, Reg src, unsigned width = 8) {
        auto start = begin();
        if (width == 8 || idx(dst) >= 8 || idx(src) >= 8)
            emit(rex(width == 8, idx(src) >= 8, false, idx(dst) >= 8));
        emit(0x31);
        emit(modrm(3, idx(src), idx(dst)));
        auto& e = finish_instr(start, "xor", Op::Other, static_cast<std::uint8_t>(width));
        e.dst = Operand::reg_op(dst);
    }

    void test_rr(Reg a, Reg b) {
        auto start = begin();
        emit(rex(true, idx(b) >= 8, false, idx(a) >= 8));
        emit(0x85);
        emit(modrm(3, idx(b), idx(a)));
        finish_instr(start, "test", Op::Other, 8);
    }

    // mov dst, [base+disp]
    void load(Reg dst, Reg base, std::int32_t disp) {
        auto start = begin();
        emit(rex(true, idx(dst) >= 8, false, idx(base) >= 8));
        emit(0x8b);
        mem(idx(dst), base, disp);
        auto& e = finish_instr(start, "mov", Op::Load, 8);
        e.dst = Operand::reg_op(dst);
        e.src = Operand::mem_op(base, disp);
    }

    // mov [base+disp], src (width 8 or 4)
    void store(Reg base, std::int32_t disp, Reg src, unsigned width = 8) {
        auto start = begin();
        if (width == 8 || idx(src) >= 8 || idx(base) >= 8)
            emit(rex(width == 8, idx(src) >= 8, false, idx(base) >= 8));
        emit(0x89);
        mem(idx(src), base, disp);
        auto& e = finish_instr(start, "mov", Op::Store, static_cast<std::uint8_t>(width));
        e.dst = Operand::mem_op(base, disp);
        e.src = Operand::reg_op(src);
    }

    // mov qword [base+disp], simm32
    void store_imm(Reg base, std::int32_t disp, std::int32_t imm) {
        auto start = begin();
        emit(rex(true, false, false, idx(base) >= 8));
        emit(0xc7);
        mem(0, base, disp);
        put<std::int32_t>(code_, code_.size(), imm);
        auto& e = finish_instr(start, "mov", Op::Store, 8);
        e.dst = Operand::mem_op(base, disp);
        e.src = Operand::imm_op(imm);
    }

    void mov_imm64(Reg dst, std::uint64_t v) {
        auto start = begin();
        emit(rex(true, false, false, idx(dst) >= 8));
        emit(static_cast<std::uint8_t>(0xb8 + (idx(dst) & 7)));
        put<std::uint64_t>(code_, code_.size(), v);
        auto& e = finish_instr(start, "mov", Op::Move, 8);
        e.dst = Operand::reg_op(dst);
        e.src = Operand::imm_op(static_cast<std::int64_t>(v));
    }

    void mov_imm32(Reg dst, std::uint32_t v) {
        auto start = begin();
        if (idx(dst) >= 8)
            emit(rex(false, false, false, true));
        emit(static_cast<std::uint8_t>(0xb8 + (idx(dst) & 7)));
        put<std::uint32_t>(code_, code_.size(), v);
        auto& e = finish_instr(start, "mov", Op::Move, 4);
        e.dst = Operand::reg_op(dst);
        e.src = Operand::imm_op(static_cast<std::int64_t>(v));
    }

    void lea(Reg dst, Reg base, std::int32_t disp) {
        auto start = begin();
        emit(rex(true, idx(dst) >= 8, false, idx(base) >= 8));
        emit(0x8d);
        mem(idx(dst), base, disp);
        auto& e = finish_instr(start, "lea", Op::LoadEffective, 8);
        e.dst = Operand::reg_op(dst);
        e.src = Operand::mem_op(base, disp);
    }

    // lea dst, [rip+target]
    void lea_rip(Reg dst, Addr target) { rip_form(0x8d, dst, target, "lea", Op::LoadEffective); }
    void lea_rip(Reg dst, const std::string& lbl) { rip_form(0x8d, dst, 0, "lea", Op::LoadEffective, lbl); }
    // mov dst, [rip+slot]
    void load_rip(Reg dst, Addr slot) { rip_form(0x8b, dst, slot, "mov", Op::Load); }

    void add_imm(Reg dst, std::int32_t v) { alu_imm(0, dst, v, "add", Op::Add); }
    void sub_imm(Reg dst, std::int32_t v) { alu_imm(5, dst, v, "sub", Op::Sub); }

    void call(Addr target) { rel32(0xe8, target, "", "call", Op::Call, Flow::None); }
    void call(const std::string& lbl) { rel32(0xe8, 0, lbl, "call", Op::Call, Flow::None); }
    void jmp(const std::string& lbl) { rel32(0xe9, 0, lbl, "jmp", Op::Other, Flow::Jump); }

    void call_reg(Reg r) {
        auto start = begin();
        if (idx(r) >= 8)
            emit(rex(false, false, false, true));
        emit(0xff);
        emit(modrm(3, 2, idx(r)));
        auto& e = finish_instr(start, "call", Op::Call, 8);
        e.src = Operand::reg_op(r);
    }

    void je(const std::string& lbl) {
        auto start = begin();
        emit(0x74);
        fixups_.push_back({code_.size(), here() + 1, 1, lbl, false, 0, expected_.size()});
        emit(0);
        auto& e = finish_instr(start, "je", Op::Other, 4);
        e.flow = Flow::CondJump;
    }

    void push(Reg r) {
        auto start = begin();
        if (idx(r) >= 8)
            emit(rex(false, false, false, true));
        emit(static_cast<std::uint8_t>(0x50 + (idx(r) & 7)));
        finish_instr(start, "push", Op::Other, 8);
    }

    void pop(Reg r) {
        auto start = begin();
        if (idx(r) >= 8)
            emit(rex(false, false, false, true));
        emit(static_cast<std::uint8_t>(0x58 + (idx(r) & 7)));
        auto& e = finish_instr(start, "pop", Op::Other, 8);
        e.dst = Operand::reg_op(r);
    }

    void ret() {
        auto start = begin();
        emit(0xc3);
        auto& e = finish_instr(start, "ret", Op::Other, 8);
        e.flow = Flow::Return;
    }

    void nop() {
        auto start = begin();
        emit(0x90);
        finish_instr(start, "nop", Op::Other, 4);
    }

    void int3_pad(std::size_t align) {
        while (code_.size() % align)
            code_.push_back(0xcc);
    }

private:
    struct Fixup {
        std::size_t at;
        Addr next;
        unsigned width;
        std::string label;
        bool is_mem;
        Addr absolute_target;
        std::size_t instr;
        bool absolute = false;
    };

    static unsigned idx(Reg r) { return static_cast<unsigned>(r); }
    static std::uint8_t rex(bool w, bool r, bool x, bool b) {
        return static_cast<std::uint8_t>(0x40 | (w << 3) | (r << 2) | (x << 1) | b);
    }
    static std::uint8_t modrm(unsigned mod, unsigned reg, unsigned rm) {
        return static_cast<std::uint8_t>((mod << 6) | ((reg & 7) << 3) | (rm & 7));
    }

    std::size_t begin() const { return code_.size(); }
    void emit(std::uint8_t b) { code_.push_back(b); }

    NormInstr& finish_instr(std::size_t start, const char* mnemonic, Op op, std::uint8_t width) {
        NormInstr in;
        in.addr = base_ + start;
        in.raw_len = static_cast<std::uint8_t>(code_.size() - start);
        in.mnemonic = mnemonic;
        in.op = op;
        in.width = width;
        expected_.push_back(in);
        return expected_.back();
    }

    // ModRM (plus SIB and displacement) for [base+disp].
    void mem(unsigned reg, Reg base, std::int32_t disp) {
        unsigned b = idx(base);
        bool need_sib = (b & 7) == 4;
        unsigned mod = disp == 0 && (b & 7) != 5 ? 0 : (disp >= -128 && disp <= 127) ? 1 : 2;
        emit(modrm(mod, reg, need_sib ? 4 : b));
        if (need_sib)
            emit(0x24);
        if (mod == 1)
            emit(static_cast<std::uint8_t>(static_cast<std::int8_t>(disp)));
        else if (mod == 2)
            put<std::int32_t>(code_, code_.size(), disp);
    }

    void rr(std::uint8_t opcode, Reg reg, Reg rm, const char* mnemonic, Op op) {
        auto start = begin();
        emit(rex(true, idx(reg) >= 8, false, idx(rm) >= 8));
        emit(opcode);
        emit(modrm(3, idx(reg), idx(rm)));
        auto& e = finish_instr(start, mnemonic, op, 8);
        e.dst = Operand::reg_op(rm);
        e.src = Operand::reg_op(reg);
    }

    void alu_imm(unsigned sub, Reg dst, std::int32_t v, const char* mnemonic, Op op) {
        auto start = begin();
        emit(rex(true, false, false, idx(dst) >= 8));
        bool small = v >= -128 && v <= 127;
        emit(small ? 0x83 : 0x81);
        emit(modrm(3, sub, idx(dst)));
        if (small)
            emit(static_cast<std::uint8_t>(static_cast<std::int8_t>(v)));
        else
            put<std::int32_t>(code_, code_.size(), v);
        auto& e = finish_instr(start, mnemonic, op, 8);
        e.dst = Operand::reg_op(dst);
        e.src = Operand::imm_op(v);
    }

    void rip_form(std::uint8_t opcode, Reg dst, Addr target, const char* mnemonic, Op op, const std::string& lbl = "") {
        auto start = begin();
        emit(rex(true, idx(dst) >= 8, false, false));
        emit(opcode);
        emit(modrm(0, idx(dst), 5));
        Fixup f{code_.size(), here() + 4, 4, lbl, true, target, expected_.size(), lbl.empty()};
        put<std::int32_t>(code_, code_.size(), 0);
        fixups_.push_back(f);
        auto& e = finish_instr(start, mnemonic, op, 8);
        e.dst = Operand::reg_op(dst);
    }

    void rel32(std::uint8_t opcode, Addr target, const std::string& lbl, const char* mnemonic, Op op, Flow flow) {
        auto start = begin();
        emit(opcode);
        Fixup f{code_.size(), here() + 4, 4, lbl, false, target, expected_.size(), lbl.empty()};
        put<std::int32_t>(code_, code_.size(), 0);
        fixups_.push_back(f);
        auto& e = finish_instr(start, mnemonic, op, 8);
        e.flow = flow;
    }

    Addr base_;
    Bytes code_;
    std::vector<NormInstr> expected_;
    std::map<std::string, Addr> labels_;
    std::vector<Fixup> fixups_;
};

} // namespace vt
