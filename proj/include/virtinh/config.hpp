#pragma once

#include "virtinh/error.hpp"
#include "virtinh/image.hpp"

#include <charconv>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace virtinh {

enum class DisasmMode { Builtin, TextIngest };
enum class OutputFormat { Json, Dot, Table };

struct AnalysisConfig {
    Abi abi = Abi::Itanium;
    unsigned word_size = 8;
    DisasmMode disasm_mode = DisasmMode::Builtin;
    std::string disasm_file; // listing path for TextIngest
    bool vtt_prose_boundary = true;
    std::int64_t vbtable_constant = 0;
    std::int64_t cap_offset = 0x100000;
    unsigned vbtable_entry_size = 4;
    OutputFormat output = OutputFormat::Json;

    // Non-fatal remarks about the configuration itself.
    std::vector<std::string> warnings() const {
        std::vector<std::string> w;
        if (word_size == 4)
            w.push_back("word size 4 is untested");
        return w;
    }

    friend bool operator==(const AnalysisConfig&, const AnalysisConfig&) = default;
};

namespace config_detail {

inline std::string trim(std::string s) {
    auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos)
        return "";
    auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

inline std::int64_t parse_int(const std::string& v, const std::string& key) {
    std::string s = v;
    bool neg = false;
    if (!s.empty() && (s[0] == '-' || s[0] == '+')) {
        neg = s[0] == '-';
        s.erase(0, 1);
    }
    int base = 10;
    if (s.size() > 2 && s[0] == '0' && (s[1] == 'x' || s[1] == 'X')) {
        base = 16;
        s.erase(0, 2);
    }
    std::uint64_t out = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), out, base);
    if (s.empty() || ec != std::errc() || p != s.data() + s.size())
        throw Error(Errc::ConfigError, key + ": not an integer: " + v);
    return neg ? -static_cast<std::int64_t>(out) : static_cast<std::int64_t>(out);
}

inline bool parse_bool(const std::string& v, const std::string& key) {
    if (v == "true" || v == "1" || v == "on" || v == "yes")
        return true;
    if (v == "false" || v == "0" || v == "off" || v == "no")
        return false;
    throw Error(Errc::ConfigError, key + ": not a boolean: " + v);
}

} // namespace config_detail

inline Abi parse_abi(const std::string& v) {
    if (v == "itanium")
        return Abi::Itanium;
    if (v == "msvc")
        return Abi::Msvc;
    throw Error(Errc::ConfigError, "abi must be itanium or msvc, got " + v);
}

inline OutputFormat parse_output(const std::string& v) {
    if (v == "json")
        return OutputFormat::Json;
    if (v == "dot")
        return OutputFormat::Dot;
    if (v == "table")
        return OutputFormat::Table;
    throw Error(Errc::ConfigError, "output must be json, dot or table, got " + v);
}

constexpr std::string_view to_string(OutputFormat o) {
    return o == OutputFormat::Json ? "json" : o == OutputFormat::Dot ? "dot" : "table";
}

// "builtin" or "text:<file>".
inline void set_disasm(AnalysisConfig& c, const std::string& v) {
    if (v == "builtin") {
        c.disasm_mode = DisasmMode::Builtin;
        c.disasm_file.clear();
    } else if (v.rfind("text:", 0) == 0 && v.size() > 5) {
        c.disasm_mode = DisasmMode::TextIngest;
        c.disasm_file = v.substr(5);
    } else {
        throw Error(Errc::ConfigError, "disasm must be builtin or text:<file>, got " + v);
    }
}

inline void set_word_size(AnalysisConfig& c, std::int64_t v) {
    if (v != 4 && v != 8)
        throw Error(Errc::ConfigError, "word_size must be 4 or 8");
    c.word_size = static_cast<unsigned>(v);
}

inline void apply_setting(AnalysisConfig& c, const std::string& key, const std::string& value) {
    using namespace config_detail;
    if (key == "abi")
        c.abi = parse_abi(value);
    else if (key == "word_size")
        set_word_size(c, parse_int(value, key));
    else if (key == "disasm")
        set_disasm(c, value);
    else if (key == "vtt_prose_boundary")
        c.vtt_prose_boundary = parse_bool(value, key);
    else if (key == "vbtable_constant")
        c.vbtable_constant = parse_int(value, key);
    else if (key == "cap_offset") {
        c.cap_offset = parse_int(value, key);
        if (c.cap_offset <= 0)
            throw Error(Errc::ConfigError, "cap_offset must be positive");
    } else if (key == "vbtable_entry_size") {
        auto v = parse_int(value, key);
        if (v != 4 && v != 8)
            throw Error(Errc::ConfigError, "vbtable_entry_size must be 4 or 8");
        c.vbtable_entry_size = static_cast<unsigned>(v);
    } else if (key == "output")
        c.output = parse_output(value);
    else
        throw Error(Errc::ConfigError, "unknown key " + key);
}

// Flat key=value lines; '#' starts a comment line.
inline AnalysisConfig parse_config(const std::string& text, AnalysisConfig base = {}) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        line = config_detail::trim(line);
        if (line.empty() || line[0] == '#')
            continue;
        auto eq = line.find('=');
        if (eq == std::string::npos)
            throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": expected key=value");
        auto key = config_detail::trim(line.substr(0, eq));
        auto value = config_detail::trim(line.substr(eq + 1));
        try {
            apply_setting(base, key, value);
        } catch (const Error& e) {
            throw Error(Errc::ConfigError, "line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return base;
}

inline std::string serialize_config(const AnalysisConfig& c) {
    std::string out;
    out += "abi=" + std::string(to_string(c.abi)) + "\n";
    out += "word_size=" + std::to_string(c.word_size) + "\n";
    out += "disasm=" + (c.disasm_mode == DisasmMode::Builtin ? std::string("builtin") : "text:" + c.disasm_file) + "\n";
    out += std::string("vtt_prose_boundary=") + (c.vtt_prose_boundary ? "true" : "false") + "\n";
    out += "vbtable_constant=" + std::to_string(c.vbtable_constant) + "\n";
    out += "cap_offset=" + hex(static_cast<std::uint64_t>(c.cap_offset)) + "\n";
    out += "vbtable_entry_size=" + std::to_string(c.vbtable_entry_size) + "\n";
    out += "output=" + std::string(to_string(c.output)) + "\n";
    return out;
}

} // namespace virtinh
