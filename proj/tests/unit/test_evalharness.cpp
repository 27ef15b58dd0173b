#include "paths.hpp"

#include "virtinh/evalharness.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace virtinh;

namespace {

const char* const kFixtures[] = {"running_example", "running_example_nopie", "running_example_o2", "single_inheritance",
                                 "all_virtual_bases", "chain1", "chain2", "chain3", "mixed_bases"};

GroundTruth gt_of(const std::string& fixture) { return parse_gt(vt::slurp(vt::fixture_dir(fixture) + "/gt.json")); }

NameMap names_of(const std::string& fixture) {
    return parse_name_map(vt::slurp(vt::fixture_dir(fixture) + "/map.json"));
}

std::multiset<Addr> diag_addrs(const ScoreCard& sc) {
    std::multiset<Addr> out;
    for (auto& d : sc.diagnostics)
        out.insert(d.addr);
    return out;
}

Errc code_of(auto&& f) {
    try {
        f();
    } catch (const Error& e) {
        return e.code();
    }
    ADD_FAILURE() << "no virtinh::Error thrown";
    return Errc::Io;
}

} // namespace

TEST(EvalHarness, EmptyInputsScoreNothing) {
    EXPECT_TRUE(parse_gt("").classes.empty());
    EXPECT_TRUE(parse_gt("  \n").classes.empty());
    auto sc = score({}, {}, {});
    EXPECT_EQ(sc, ScoreCard{});
}

TEST(EvalHarness, CompilerDumpAgreesWithJson) {
    for (auto name : kFixtures) {
        auto from_dump = parse_gt(vt::slurp(vt::fixture_dir(name) + "/class.dump"));
        auto from_json = gt_of(name);
        ASSERT_EQ(from_dump.classes.size(), from_json.classes.size()) << name;
        for (std::size_t i = 0; i < from_json.classes.size(); ++i) {
            auto& a = from_dump.classes[i];
            auto& b = from_json.classes[i];
            EXPECT_EQ(a.name, b.name) << name;
            EXPECT_EQ(a.virtual_bases, b.virtual_bases) << name << " " << a.name;
            EXPECT_EQ(a.intermediate_bases, b.intermediate_bases) << name << " " << a.name;
            EXPECT_EQ(a.direct_bases, b.direct_bases) << name << " " << a.name;
        }
    }
}

TEST(EvalHarness, RunningExampleScoresPerfect) {
    auto sc = score(vt::fixture_scan("running_example").hierarchy, gt_of("running_example"),
                    names_of("running_example"));
    EXPECT_EQ(sc.n_classes_with_virt, 3u);
    EXPECT_EQ(sc.vbases_matching, 3u);
    EXPECT_EQ(sc.ibases_matching, 3u);
    EXPECT_EQ(sc.vbases_overest + sc.vbases_underest + sc.ibases_overest + sc.ibases_underest, 0u);
    EXPECT_EQ(sc.not_found, 0u);
    EXPECT_EQ(sc.unmapped, 0u);
}

TEST(EvalHarness, DroppedAndExtraEdgesAreCounted) {
    auto h = vt::fixture_scan("running_example").hierarchy;
    auto gt = gt_of("running_example");
    auto names = names_of("running_example");
    const Addr d = 0x3b60, a = 0x3d18, b = 0x3cd0;

    auto dropped = h;
    std::erase_if(dropped.edges, [&](auto& e) { return e.derived == d && e.base == a; });
    auto sc = score(dropped, gt, names);
    EXPECT_EQ(sc.vbases_underest, 1u);
    EXPECT_EQ(sc.vbases_matching, 2u);

    auto extra = h;
    extra.edges.push_back(make_edge(b, d, EdgeKind::Virtual));
    sc = score(extra, gt, names);
    EXPECT_EQ(sc.vbases_overest, 1u);
    EXPECT_EQ(sc.vbases_matching, 2u);

    auto renamed = names;
    renamed.erase(d);
    sc = score(h, gt, renamed);
    EXPECT_EQ(sc.unmapped, 1u);
    EXPECT_EQ(sc.not_found, 1u);
    ASSERT_EQ(sc.diagnostics.size(), 1u);
    EXPECT_EQ(sc.diagnostics[0].code, Errc::UnmappedClass);
}

TEST(EvalHarness, ScoreIgnoresOrderAndPartitionsClasses) {
    std::mt19937_64 rng(8);
    for (auto name : kFixtures) {
        auto h = vt::fixture_scan(name).hierarchy;
        auto gt = gt_of(name);
        auto names = names_of(name);
        auto base = score(h, gt, names);
        EXPECT_EQ(base.vbases_matching + base.vbases_overest + base.vbases_underest + base.not_found,
                  base.n_classes_with_virt)
            << name;
        EXPECT_EQ(base.ibases_matching + base.ibases_overest + base.ibases_underest + base.not_found,
                  base.n_classes_with_virt)
            << name;
        for (int i = 0; i < 10; ++i) {
            auto h2 = h;
            auto gt2 = gt;
            std::shuffle(h2.edges.begin(), h2.edges.end(), rng);
            std::shuffle(h2.nodes.begin(), h2.nodes.end(), rng);
            std::shuffle(gt2.classes.begin(), gt2.classes.end(), rng);
            auto sc = score(h2, gt2, names);
            EXPECT_EQ(scorecard_to_json(sc), scorecard_to_json(base)) << name;
            EXPECT_EQ(diag_addrs(sc), diag_addrs(base)) << name;
        }
    }
}

TEST(EvalHarness, RemovedClassesDisappear) {
    auto gt = parse_gt(vt::slurp(vt::fixture_dir("running_example") + "/gt.json"), {"A"});
    for (auto& c : gt.classes) {
        EXPECT_NE(c.name, "A");
        EXPECT_TRUE(c.virtual_bases.empty()) << c.name;
    }
    EXPECT_EQ(gt.removed, std::vector<std::string>{"A"});
    auto round = parse_gt_json(gt_to_json(gt).dump());
    EXPECT_EQ(round.classes.size(), gt.classes.size());
    EXPECT_EQ(round.removed, gt.removed);
}

TEST(EvalHarness, MalformedTruthIsRejected) {
    EXPECT_EQ(code_of([] { parse_gt("{ not json"); }), Errc::ParseError);
    EXPECT_EQ(code_of([] {
                  parse_gt(R"({"classes":[{"name":"A","virtual_bases":["A"],"intermediate_bases":[],"direct_bases":[]}]})");
              }),
              Errc::ParseError);
    EXPECT_EQ(code_of([] {
                  parse_gt(R"({"classes":[{"name":"A","virtual_bases":[],"intermediate_bases":[],"direct_bases":[]},
                                          {"name":"A","virtual_bases":[],"intermediate_bases":[],"direct_bases":[]}]})");
              }),
              Errc::ParseError);
    EXPECT_EQ(code_of([] { parse_gt("Class A\n   size=8 align=8\nA (0x0 garbage\n"); }), Errc::ParseError);
    EXPECT_EQ(code_of([] { parse_name_map(R"({"zz": "A"})"); }), Errc::ParseError);
}
