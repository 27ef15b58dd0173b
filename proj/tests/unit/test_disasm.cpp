#include "paths.hpp"
#include "x86_asm.hpp"

#include "virtinh/disasm.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace virtinh;

namespace {

BinaryImage text_image(const vt::Bytes& code, Addr base, std::set<Addr> fns) {
    ImageContents c;
    c.sections.push_back({".text", base, code.size(), SectionKind::Text, code});
    c.entry_functions = std::move(fns);
    return BinaryImage(std::move(c));
}

std::vector<NormInstr> sweep(const vt::Bytes& code, Addr base) {
    std::vector<NormInstr> out;
    std::size_t off = 0;
    while (off < code.size()) {
        auto in = x86::decode_one(std::span(code).subspan(off), base + off);
        if (!in)
            break;
        out.push_back(*in);
        off += in->raw_len;
    }
    return out;
}

constexpr Reg kPool[] = {Reg::rax, Reg::rcx, Reg::rdx, Reg::rbx, Reg::rsp, Reg::rbp, Reg::rsi, Reg::rdi,
                         Reg::r8,  Reg::r9,  Reg::r10, Reg::r11, Reg::r12, Reg::r13, Reg::r14, Reg::r15};

// One random instruction from the modelled subset.
void random_instr(vt::Asm& a, std::mt19937_64& rng, int& labels) {
    auto reg = [&] { return kPool[rng() % 16]; };
    auto disp = [&]() -> std::int32_t {
        switch (rng() % 4) {
        case 0: return 0;
        case 1: return static_cast<std::int32_t>(rng() % 256) - 128;
        case 2: return static_cast<std::int32_t>(rng() % 0x10000) - 0x8000;
        default: return static_cast<std::int32_t>(rng());
        }
    };
    switch (rng() % 18) {
    case 0: a.mov_rr(reg(), reg()); break;
    case 1: a.add_rr(reg(), reg()); break;
    case 2: a.sub_rr(reg(), reg()); break;
    case 3: a.load(reg(), reg(), disp()); break;
    case 4: a.store(reg(), disp(), reg(), rng() % 2 ? 8 : 4); break;
    case 5: a.store_imm(reg(), disp(), static_cast<std::int32_t>(rng())); break;
    case 6: a.mov_imm64(reg(), rng()); break;
    case 7: a.mov_imm32(reg(), static_cast<std::uint32_t>(rng())); break;
    case 8: a.lea(reg(), reg(), disp()); break;
    case 9: a.lea_rip(reg(), 0x400000 + rng() % 0x100000); break;
    case 10: a.add_imm(reg(), disp()); break;
    case 11: a.sub_imm(reg(), disp()); break;
    case 12: a.call(0x400000 + rng() % 0x1000); break;
    case 13: a.call_reg(reg()); break;
    case 14: a.push(reg()); break;
    case 15: a.pop(reg()); break;
    case 16: {
        auto l = "l" + std::to_string(labels++);
        a.je(l);
        a.nop();
        a.label(l);
        break;
    }
    default: a.xor_rr(reg(), reg(), rng() % 2 ? 8 : 4); break;
    }
}

} // namespace

TEST(Disasm, SingleReturnFunction) {
    vt::Asm a(0x1000);
    a.ret();
    auto img = text_image(a.code(), 0x1000, {0x1000});
    auto fn = decode_function(img, 0x1000);
    ASSERT_EQ(fn.instrs.size(), 1u);
    EXPECT_EQ(fn.instrs[0].op, Op::Other);
    EXPECT_EQ(fn.instrs[0].flow, Flow::Return);
    EXPECT_FALSE(fn.stalled);
}

TEST(Disasm, ThisAdjustmentAndCall) {
    vt::Asm a(0x1000);
    a.add_imm(Reg::rax, 0x20);
    a.mov_rr(Reg::rdi, Reg::rax);
    a.call(0x1200);
    a.finish();
    auto got = sweep(a.code(), 0x1000);
    ASSERT_EQ(got.size(), 3u);
    EXPECT_EQ(got[0].op, Op::Add);
    EXPECT_EQ(got[0].dst, Operand::reg_op(Reg::rax));
    EXPECT_EQ(got[0].src, Operand::imm_op(0x20));
    EXPECT_EQ(got[1].op, Op::Move);
    EXPECT_EQ(got[1].dst, Operand::reg_op(Reg::rdi));
    EXPECT_EQ(got[1].src, Operand::reg_op(Reg::rax));
    EXPECT_EQ(got[2].op, Op::Call);
    EXPECT_EQ(got[2].target(), Addr(0x1200));
}

TEST(Disasm, RandomBytesStayInBounds) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 200; ++i) {
        vt::Bytes b(1 + rng() % 64);
        for (auto& x : b)
            x = static_cast<std::uint8_t>(rng());
        std::size_t sum = 0;
        for (auto& in : sweep(b, 0x5000)) {
            ASSERT_GT(in.raw_len, 0);
            ASSERT_LE(in.raw_len, 15);
            sum += in.raw_len;
        }
        ASSERT_LE(sum, b.size());

        auto img = text_image(b, 0x5000, {0x5000});
        auto fn = decode_function(img, 0x5000);
        Addr end = 0x5000;
        for (auto& in : fn.instrs)
            end = in.next();
        ASSERT_LE(end, 0x5000 + b.size());
    }
}

// decode(encode(i)) == i over random programs of the modelled subset.
TEST(Disasm, EncodeDecodeIdentity) {
    std::mt19937_64 rng(5);
    for (int prog = 0; prog < 300; ++prog) {
        vt::Asm a(0x10000 + 0x1000 * static_cast<Addr>(prog));
        int labels = 0;
        for (int i = 0; i < 40; ++i)
            random_instr(a, rng, labels);
        a.ret();
        a.finish();
        auto got = sweep(a.code(), 0x10000 + 0x1000 * static_cast<Addr>(prog));
        ASSERT_EQ(got.size(), a.expected().size());
        for (std::size_t i = 0; i < got.size(); ++i)
            ASSERT_EQ(got[i], a.expected()[i]) << "program " << prog << " instr " << i << " mnemonic "
                                               << a.expected()[i].mnemonic;
    }
}

TEST(Disasm, StopsAtNextFunctionAndAtReturn) {
    vt::Asm a(0x1000);
    a.push(Reg::rbp);
    a.ret();
    a.nop();
    a.label("second");
    a.push(Reg::rbx);
    a.pop(Reg::rbx);
    a.ret();
    a.finish();
    auto second = a.address_of("second");
    auto img = text_image(a.code(), 0x1000, {0x1000, second});
    auto streams = decode_all(img);
    ASSERT_EQ(streams.size(), 2u);
    EXPECT_EQ(streams.at(0x1000).instrs.size(), 2u);
    EXPECT_EQ(streams.at(second).instrs.size(), 3u);
}

TEST(Disasm, ForwardBranchExtendsSweepPastReturn) {
    vt::Asm a(0x1000);
    a.je("tail");
    a.ret();
    a.label("tail");
    a.nop();
    a.ret();
    a.finish();
    auto img = text_image(a.code(), 0x1000, {0x1000});
    EXPECT_EQ(decode_function(img, 0x1000).instrs.size(), 4u);
}

TEST(Disasm, FixtureSweepsHaveNoOverlap) {
    for (auto name : {"running_example", "chain3", "mixed_bases"}) {
        auto img = load(vt::fixture_bin(name), Abi::Itanium);
        auto streams = decode_all(img);
        ASSERT_FALSE(streams.empty());
        for (auto& [start, fn] : streams) {
            ASSERT_FALSE(fn.instrs.empty()) << name << " " << hex(start);
            EXPECT_EQ(fn.instrs.front().addr, start);
            for (std::size_t i = 1; i < fn.instrs.size(); ++i)
                ASSERT_EQ(fn.instrs[i].addr, fn.instrs[i - 1].next()) << name << " " << hex(start);
        }
    }
}
