#pragma once

#include "virtinh/image.hpp"
#include "virtinh/instr.hpp"
#include "virtinh/itanium.hpp"

#include <array>
#include <deque>
#include <map>
#include <optional>
#include <set>
#include <vector>

namespace virtinh {

// ThisPlus(k): first argument + k. Arg2Plus(k): second argument + k.
// Arg2Entry(k): the word loaded from second argument + k.
enum class SymKind { Unknown, ThisPlus, Imm, Arg2Plus, Arg2Entry };

constexpr std::string_view to_string(SymKind k) {
    switch (k) {
    case SymKind::Unknown: return "Unknown";
    case SymKind::ThisPlus: return "ThisPlus";
    case SymKind::Imm: return "Imm";
    case SymKind::Arg2Plus: return "Arg2Plus";
    case SymKind::Arg2Entry: return "Arg2Entry";
    }
    return "Unknown";
}

struct SymValue {
    SymKind kind = SymKind::Unknown;
    std::int64_t k = 0; // displacement for ThisPlus, Arg2Plus, Arg2Entry
    Addr v = 0;         // value for Imm

    static SymValue unknown() { return {}; }
    static SymValue this_plus(std::int64_t k) { return {SymKind::ThisPlus, k, 0}; }
    static SymValue imm(Addr v) { return {SymKind::Imm, 0, v}; }
    static SymValue arg2_plus(std::int64_t k) { return {SymKind::Arg2Plus, k, 0}; }
    static SymValue arg2_entry(std::int64_t k) { return {SymKind::Arg2Entry, k, 0}; }

    bool is(SymKind want) const { return kind == want; }

    // Same value displaced by d; Unknown and loaded entries do not shift.
    SymValue plus(std::int64_t d) const {
        switch (kind) {
        case SymKind::ThisPlus: return this_plus(k + d);
        case SymKind::Arg2Plus: return arg2_plus(k + d);
        case SymKind::Imm: return imm(v + static_cast<Addr>(d));
        default: return unknown();
        }
    }

    friend bool operator==(const SymValue&, const SymValue&) = default;
};

struct CallingConvention {
    Reg arg1 = Reg::rdi;
    Reg arg2 = Reg::rsi;
    std::vector<Reg> caller_saved;

    static CallingConvention for_abi(Abi abi) {
        using R = Reg;
        if (abi == Abi::Msvc)
            return {R::rcx, R::rdx, {R::rax, R::rcx, R::rdx, R::r8, R::r9, R::r10, R::r11}};
        return {R::rdi, R::rsi, {R::rax, R::rcx, R::rdx, R::rsi, R::rdi, R::r8, R::r9, R::r10, R::r11}};
    }
};

struct ThisWrite {
    std::int64_t offset = 0;
    Addr value = 0;
    Addr site = 0;

    friend bool operator==(const ThisWrite&, const ThisWrite&) = default;
};

struct CallRecord {
    Addr site = 0;
    std::optional<Addr> target; // absent for indirect calls
    SymValue arg1;
    SymValue arg2;

    friend bool operator==(const CallRecord&, const CallRecord&) = default;
};

struct CtorSummary {
    Addr func = 0;
    std::vector<ThisWrite> vptr_writes;  // address points stored into the object
    std::vector<ThisWrite> vbptr_writes; // VB-Table addresses stored into the object
    std::vector<Addr> vtt_args_seen;
    std::vector<CallRecord> calls;
    // Object offsets written with words loaded from the incoming subVTT.
    std::vector<std::int64_t> subvtt_writes;
    bool is_special = false;
    bool stores_address_point = false; // through any destination, not only the object
    bool partial = false;

    friend bool operator==(const CtorSummary&, const CtorSummary&) = default;
};

// What the interpreter needs to know about the image's metadata.
struct SummaryContext {
    const BinaryImage* img = nullptr;
    CallingConvention cc;
    std::set<Addr> address_points;
    const std::vector<Vtt>* vtts = nullptr;
    std::set<Addr> vbtables;

    bool in_vtt(Addr a) const {
        if (vtts)
            for (auto& t : *vtts)
                if (t.contains(a))
                    return true;
        return false;
    }
};

inline SummaryContext make_context(const BinaryImage& img, const VTableSet& groups, const std::vector<Vtt>& vtts,
                                   std::set<Addr> vbtables = {}) {
    SummaryContext ctx;
    ctx.img = &img;
    ctx.cc = CallingConvention::for_abi(img.abi());
    for (auto& [ap, m] : index_members(groups))
        ctx.address_points.insert(ap);
    ctx.vtts = &vtts;
    ctx.vbtables = std::move(vbtables);
    return ctx;
}

namespace detail {

// Register file plus frame slots addressed through rbp and through rsp. The rsp slots are
// keyed by offset from the entry stack pointer so pushes and frame allocation keep them valid.
class SymState {
public:
    explicit SymState(const CallingConvention& cc) {
        regs_[idx(cc.arg1)] = SymValue::this_plus(0);
        regs_[idx(cc.arg2)] = SymValue::arg2_plus(0);
    }

    SymValue get(Reg r) const { return r == Reg::rip ? SymValue{} : regs_[idx(r)]; }

    void set(Reg r, SymValue v) {
        if (r == Reg::rip)
            return;
        if (r == Reg::rsp)
            rsp_delta_.reset();
        if (r == Reg::rbp)
            rbp_slots_.clear();
        regs_[idx(r)] = v;
    }

    void adjust_rsp(std::int64_t d) {
        if (rsp_delta_)
            *rsp_delta_ += d;
    }

    void clobber(const std::vector<Reg>& rs) {
        for (Reg r : rs)
            regs_[idx(r)] = {};
    }

    // Slot identity for a frame memory operand; nullopt when it is not a frame access.
    std::optional<std::pair<Reg, std::int64_t>> frame_key(const Operand& m) const {
        if (!m.is_mem() || !m.mem_base)
            return std::nullopt;
        if (*m.mem_base == Reg::rbp)
            return std::pair{Reg::rbp, *m.mem_disp};
        if (*m.mem_base == Reg::rsp && rsp_delta_)
            return std::pair{Reg::rsp, *rsp_delta_ + *m.mem_disp};
        return std::nullopt;
    }

    bool is_frame(const Operand& m) const {
        return m.is_mem() && m.mem_base && (*m.mem_base == Reg::rbp || *m.mem_base == Reg::rsp);
    }

    SymValue load_slot(std::pair<Reg, std::int64_t> key) const {
        auto& slots = key.first == Reg::rbp ? rbp_slots_ : rsp_slots_;
        auto it = slots.find(key.second);
        return it == slots.end() ? SymValue{} : it->second;
    }

    void store_slot(std::pair<Reg, std::int64_t> key, SymValue v, unsigned width) {
        auto& slots = key.first == Reg::rbp ? rbp_slots_ : rsp_slots_;
        // Any partially overlapping slot is invalidated.
        for (auto it = slots.begin(); it != slots.end();) {
            if (it->first < key.second + static_cast<std::int64_t>(width) && key.second < it->first + 8)
                it = slots.erase(it);
            else
                ++it;
        }
        if (width == 8 && v.kind != SymKind::Unknown)
            slots[key.second] = v;
    }

    // A store through an unidentified frame address forgets every slot of that frame.
    void forget_frame(Reg base) { (base == Reg::rbp ? rbp_slots_ : rsp_slots_).clear(); }

private:
    static std::size_t idx(Reg r) { return static_cast<std::size_t>(r); }

    std::array<SymValue, kGprCount> regs_{};
    std::map<std::int64_t, SymValue> rbp_slots_;
    std::map<std::int64_t, SymValue> rsp_slots_;
    std::optional<std::int64_t> rsp_delta_ = 0;
};

// Extra registers written by instructions whose decoded form names at most one destination.
inline std::vector<Reg> implicit_writes(const NormInstr& in) {
    using R = Reg;
    const auto& m = in.mnemonic;
    if (m == "muldiv" || m == "cqo")
        return {R::rax, R::rdx};
    if (m == "cpuid")
        return {R::rax, R::rbx, R::rcx, R::rdx};
    if (m == "syscall")
        return {R::rax, R::rcx, R::r11};
    if (m == "xchg" && in.dst.is_reg())
        return {R::rax};
    // String instructions advance rsi/rdi and count down rcx.
    if (m.size() == 5 && m.rfind("op_a", 0) == 0 && m[4] >= '4' && m[4] <= 'f')
        return {R::rax, R::rcx, R::rsi, R::rdi};
    return {};
}

} // namespace detail

// Single forward pass over the function body in address order.
inline CtorSummary summarize(const DecodedFunction& fn, const SummaryContext& ctx) {
    using detail::SymState;
    CtorSummary out;
    out.func = fn.start;
    out.partial = fn.stalled;
    SymState st(ctx.cc);
    const BinaryImage& img = *ctx.img;

    auto value_of = [&](const Operand& o, unsigned width) -> SymValue {
        if (o.is_imm()) {
            if (width == 8)
                return SymValue::imm(static_cast<Addr>(*o.imm));
            if (width == 4)
                return SymValue::imm(static_cast<std::uint32_t>(*o.imm));
            return {};
        }
        if (o.is_reg())
            return width == 8 ? st.get(*o.reg) : SymValue{};
        return {};
    };

    std::vector<std::int64_t> special_writes;
    for (auto& in : fn.instrs) {
        switch (in.op) {
        case Op::Move: {
            if (!in.dst.is_reg())
                break;
            SymValue v;
            if (in.src.is_imm())
                v = value_of(in.src, in.width);
            else if (in.width == 8)
                v = value_of(in.src, 8);
            st.set(*in.dst.reg, v);
            break;
        }
        case Op::LoadEffective: {
            SymValue v;
            if (in.width == 8) {
                if (in.src.is_absolute_mem())
                    v = SymValue::imm(static_cast<Addr>(*in.src.mem_disp));
                else if (in.src.mem_base && !st.is_frame(in.src))
                    v = st.get(*in.src.mem_base).plus(*in.src.mem_disp);
            }
            if (in.dst.is_reg() && *in.dst.reg == Reg::rsp && in.src.mem_base && *in.src.mem_base == Reg::rsp) {
                st.adjust_rsp(*in.src.mem_disp);
                break;
            }
            st.set(*in.dst.reg, v);
            break;
        }
        case Op::Load: {
            SymValue v;
            if (in.width == 8) {
                if (auto key = st.frame_key(in.src)) {
                    v = st.load_slot(*key);
                } else if (in.src.is_absolute_mem()) {
                    Addr a = static_cast<Addr>(*in.src.mem_disp);
                    Addr t = img.resolve_got(a);
                    if (t != a)
                        v = SymValue::imm(t);
                } else if (in.src.mem_base) {
                    auto base = st.get(*in.src.mem_base);
                    if (base.is(SymKind::Arg2Plus))
                        v = SymValue::arg2_entry(base.k + *in.src.mem_disp);
                }
            }
            st.set(*in.dst.reg, v);
            break;
        }
        case Op::Store: {
            SymValue v = value_of(in.src, in.width);
            if (v.is(SymKind::Imm) && ctx.address_points.count(v.v))
                out.stores_address_point = true;
            if (auto key = st.frame_key(in.dst)) {
                st.store_slot(*key, v, in.width);
                break;
            }
            if (st.is_frame(in.dst)) {
                st.forget_frame(*in.dst.mem_base);
                break;
            }
            if (!in.dst.mem_base || in.width != img.word_size())
                break;
            auto base = st.get(*in.dst.mem_base);
            if (!base.is(SymKind::ThisPlus))
                break;
            std::int64_t off = base.k + *in.dst.mem_disp;
            if (off < 0 || off % static_cast<std::int64_t>(img.word_size()))
                break;
            if (v.is(SymKind::Imm) && ctx.address_points.count(v.v))
                out.vptr_writes.push_back({off, v.v, in.addr});
            else if (v.is(SymKind::Imm) && ctx.vbtables.count(v.v))
                out.vbptr_writes.push_back({off, v.v, in.addr});
            else if (v.is(SymKind::Arg2Entry))
                special_writes.push_back(off);
            break;
        }
        case Op::Add:
        case Op::Sub: {
            if (in.dst.is_mem()) {
                if (auto key = st.frame_key(in.dst))
                    st.store_slot(*key, {}, in.width);
                break;
            }
            Reg r = *in.dst.reg;
            if (r == Reg::rsp && in.src.is_imm()) {
                st.adjust_rsp(in.op == Op::Add ? *in.src.imm : -*in.src.imm);
                break;
            }
            SymValue v;
            if (in.width == 8 && in.src.is_imm())
                v = st.get(r).plus(in.op == Op::Add ? *in.src.imm : -*in.src.imm);
            st.set(r, v);
            break;
        }
        case Op::Call: {
            CallRecord rec;
            rec.site = in.addr;
            if (auto t = in.target()) {
                rec.target = *t;
            } else if (in.src.is_absolute_mem()) {
                Addr slot = static_cast<Addr>(*in.src.mem_disp);
                if (img.got_map().count(slot))
                    rec.target = img.resolve_got(slot);
            }
            rec.arg1 = st.get(ctx.cc.arg1);
            rec.arg2 = st.get(ctx.cc.arg2);
            if (rec.arg2.is(SymKind::Imm) && ctx.in_vtt(rec.arg2.v))
                out.vtt_args_seen.push_back(rec.arg2.v);
            out.calls.push_back(rec);
            st.clobber(ctx.cc.caller_saved);
            break;
        }
        case Op::Other: {
            const auto& m = in.mnemonic;
            if (m == "call") {
                // Indirect call through an operand the decoder does not model.
                out.calls.push_back({in.addr, std::nullopt, st.get(ctx.cc.arg1), st.get(ctx.cc.arg2)});
                st.clobber(ctx.cc.caller_saved);
                break;
            }
            if (m == "push") {
                st.adjust_rsp(-8);
                if (auto key = st.frame_key(Operand::mem_op(Reg::rsp, 0)))
                    st.store_slot(*key, {}, 8);
            } else if (m == "pop") {
                st.adjust_rsp(8);
                if (in.dst.is_reg() && *in.dst.reg != Reg::rsp)
                    st.set(*in.dst.reg, {});
                break;
            } else if (m == "leave") {
                st.set(Reg::rsp, {});
                st.set(Reg::rbp, {});
                break;
            }
            for (Reg r : detail::implicit_writes(in))
                st.set(r, {});
            if (in.dst.is_reg()) {
                st.set(*in.dst.reg, {});
            } else if (in.dst.is_mem()) {
                if (auto key = st.frame_key(in.dst))
                    st.store_slot(*key, {}, 8);
                else if (st.is_frame(in.dst))
                    st.forget_frame(*in.dst.mem_base);
            }
            break;
        }
        }
    }
    out.subvtt_writes = std::move(special_writes);
    out.is_special = !out.subvtt_writes.empty() && out.vptr_writes.empty();
    return out;
}

// Functions that store a known address point anywhere.
inline std::set<Addr> identify_ctors(const InstrStreams& streams, const SummaryContext& ctx) {
    std::set<Addr> out;
    for (auto& [start, fn] : streams)
        if (summarize(fn, ctx).stores_address_point)
            out.insert(start);
    return out;
}

struct CtorAnalysis {
    std::set<Addr> ctors;                  // identified by address-point stores
    std::map<Addr, CtorSummary> summaries; // ctors plus the special ctors they reach
    std::vector<Diagnostic> diagnostics;
};

// Summarizes identified ctors, then follows direct calls into special ctors so that
// subVTT arguments can be traced through them.
inline CtorAnalysis analyze_ctors(const InstrStreams& streams, const SummaryContext& ctx) {
    CtorAnalysis out;
    std::deque<Addr> work;
    for (auto& [start, fn] : streams) {
        auto s = summarize(fn, ctx);
        if (s.stores_address_point || !s.vbptr_writes.empty()) {
            out.ctors.insert(start);
            out.summaries.emplace(start, std::move(s));
            work.push_back(start);
        }
    }
    std::set<Addr> visited(out.ctors.begin(), out.ctors.end());
    while (!work.empty()) {
        Addr f = work.front();
        work.pop_front();
        auto calls = out.summaries.at(f).calls;
        for (auto& c : calls) {
            if (!c.target || !visited.insert(*c.target).second)
                continue;
            auto it = streams.find(*c.target);
            if (it == streams.end())
                continue;
            auto s = summarize(it->second, ctx);
            if (!s.is_special)
                continue;
            out.summaries.emplace(*c.target, std::move(s));
            work.push_back(*c.target);
        }
    }
    for (auto& [f, s] : out.summaries)
        if (s.partial)
            out.diagnostics.push_back({Errc::PartialSummary, f, "decode stall truncated the body"});
    return out;
}

} // namespace virtinh
