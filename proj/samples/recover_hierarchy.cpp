// Scans one binary and prints its virtual inheritance trees.
// Usage: recover_hierarchy <binary> [map.json]

#include "virtinh/evalharness.hpp"
#include "virtinh/loader.hpp"
#include "virtinh/pipeline.hpp"

#include <algorithm>
#include <iostream>

using namespace virtinh;

int main(int argc, char** argv) {
    if (argc < 2 || argc > 3) {
        std::cerr << "usage: recover_hierarchy <binary> [map.json]\n";
        return 2;
    }
    try {
        std::optional<NameMap> names;
        if (argc == 3) {
            auto bytes = read_file(argv[2]);
            names = parse_name_map(std::string(bytes.begin(), bytes.end()));
        }
        auto label = [&](Addr a) {
            if (names && names->count(a))
                return names->at(a);
            return hex(a);
        };

        auto r = scan_file(argv[1], {});
        std::cout << r.vtts.size() << " VTTs, " << r.construction_count() << " construction VTables\n";
        for (auto& t : r.hierarchy.trees) {
            std::cout << "tree rooted at";
            for (Addr v : t.virtual_bases)
                std::cout << " " << label(v);
            std::cout << "\n";
            for (auto& e : r.hierarchy.edges)
                if (std::count(t.members.begin(), t.members.end(), e.derived))
                    std::cout << "  " << label(e.derived) << " -> " << label(e.base) << " (" << to_string(e.kind)
                              << ")\n";
        }
        if (r.hierarchy.trees.empty())
            std::cout << "no virtual inheritance found\n";
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
