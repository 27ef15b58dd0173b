// virtinh: recover virtual inheritance from stripped ELF and PE binaries.
//
// Exit status: 0 success (detect: virtual inheritance found), 1 detect found none,
// 2 load, parse, or usage failure.

#include "virtinh/virtinh.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>

namespace {

using namespace virtinh;

struct Options {
    std::string binary;
    std::string abi;
    int word_size = 0;
    std::string disasm;
    std::string config_file;
    std::string out;
    std::string map_file;
    std::string gt_file;
    std::string gnuplot_file;
    std::vector<std::string> removed;
    bool calls = false;
};

std::string slurp(const std::string& path) {
    auto bytes = read_file(path);
    return {bytes.begin(), bytes.end()};
}

// Config file first, then explicitly given flags.
AnalysisConfig resolve_config(const Options& o, OutputFormat default_out) {
    AnalysisConfig c;
    c.output = default_out;
    if (!o.config_file.empty())
        c = parse_config(slurp(o.config_file), c);
    if (!o.abi.empty())
        c.abi = parse_abi(o.abi);
    if (o.word_size)
        set_word_size(c, o.word_size);
    if (!o.disasm.empty())
        set_disasm(c, o.disasm);
    if (!o.out.empty())
        c.output = parse_output(o.out);
    return c;
}

std::optional<NameMap> load_names(const Options& o) {
    if (o.map_file.empty())
        return std::nullopt;
    return parse_name_map(slurp(o.map_file));
}

void emit_warnings(const AnalysisConfig& c) {
    for (auto& w : c.warnings())
        std::cerr << "warning: " << w << "\n";
}

int run(const std::string& cmd, const Options& o) {
    auto default_out = cmd == "tree" ? OutputFormat::Dot : OutputFormat::Json;
    auto cfg = resolve_config(o, default_out);
    emit_warnings(cfg);
    auto names = load_names(o);
    const NameMap* nm = names ? &*names : nullptr;
    auto r = scan_file(o.binary, cfg);

    if (cmd == "detect") {
        auto [code, line] = detect_verdict(r);
        std::cout << line << "\n";
        return code;
    }
    if (cmd == "diff-gt") {
        if (!nm)
            throw Error(Errc::ConfigError, "diff-gt needs --map");
        auto gt = parse_gt(slurp(o.gt_file), o.removed);
        auto sc = score(r.hierarchy, gt, *nm);
        if (cfg.output == OutputFormat::Table)
            std::cout << scorecard_table(sc);
        else
            std::cout << scorecard_to_json(sc).dump(2) << "\n";
        return 0;
    }
    if (cfg.output == OutputFormat::Dot) {
        std::cout << hierarchy_dot(r.hierarchy, nm);
        return 0;
    }
    if (cfg.output == OutputFormat::Table) {
        std::cout << report_table(r, nm);
        return 0;
    }
    ReportOptions ro{o.calls, nm};
    ojson j;
    if (cmd == "scan") {
        j = report_json(r, ro);
    } else if (cmd == "vtables") {
        j["abi"] = std::string(to_string(cfg.abi));
        j["vtables"] = vtables_json(r);
        j["mapping"] = mapping_json(r);
    } else if (cmd == "vtts") {
        j["abi"] = std::string(to_string(cfg.abi));
        j["vtts"] = vtts_json(r);
    } else if (cmd == "tree") {
        j["abi"] = std::string(to_string(cfg.abi));
        j["hierarchy"] = hierarchy_json(r, ro);
    } else if (cmd == "surface") {
        j["abi"] = std::string(to_string(cfg.abi));
        j["surface"] = surface_json(r);
    }
    if (cmd == "surface" && !o.gnuplot_file.empty()) {
        std::ofstream g(o.gnuplot_file);
        if (!g)
            throw Error(Errc::Io, "cannot write " + o.gnuplot_file);
        g << gnuplot_dump(r.surface);
    }
    std::cout << j.dump(2) << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Recover virtual inheritance from stripped binaries"};
    app.require_subcommand(1);
    Options o;

    auto add_common = [&](CLI::App* sub) {
        sub->add_option("binary", o.binary, "ELF or PE file")->required();
        sub->add_option("--abi", o.abi, "itanium|msvc")->check(CLI::IsMember({"itanium", "msvc"}));
        sub->add_option("--word-size", o.word_size, "8|4")->check(CLI::IsMember({4, 8}));
        sub->add_option("--disasm", o.disasm, "builtin|text:<file>");
        sub->add_option("--config", o.config_file, "flat key=value config file");
        sub->add_option("--out", o.out, "json|dot|table")->check(CLI::IsMember({"json", "dot", "table"}));
        sub->add_option("--map", o.map_file, "JSON map from address point to class name");
    };

    std::vector<std::pair<std::string, std::string>> cmds = {
        {"detect", "report whether the binary uses virtual inheritance"},
        {"scan", "run every pass and print the full report"},
        {"vtables", "VTable groups and the construction mapping"},
        {"vtts", "VTTs and their subVTTs"},
        {"tree", "inheritance hierarchy (DOT by default)"},
        {"surface", "construction-VTable counts and offset distributions"},
        {"diff-gt", "score the recovered hierarchy against ground truth"},
    };
    for (auto& [name, desc] : cmds) {
        auto* sub = app.add_subcommand(name, desc);
        add_common(sub);
        if (name == "scan")
            sub->add_flag("--calls", o.calls, "include per-call records of constructor summaries");
        if (name == "surface")
            sub->add_option("--gnuplot", o.gnuplot_file, "write a two-column distribution dump");
        if (name == "diff-gt") {
            sub->add_option("--gt", o.gt_file, "canonical GT JSON or compiler class dump")->required();
            sub->add_option("--removed", o.removed, "classes eliminated by the compiler");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    std::string cmd = app.get_subcommands().front()->get_name();
    try {
        return run(cmd, o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
