#pragma once

#include "virtinh/elf_loader.hpp"
#include "virtinh/image.hpp"
#include "virtinh/pe_loader.hpp"

#include <filesystem>
#include <fstream>
#include <iterator>
#include <span>
#include <vector>

namespace virtinh {

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw Error(Errc::Io, "cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// Container is detected from the magic bytes; abi records which recovery rules apply.
inline BinaryImage load_bytes(std::span<const std::uint8_t> bytes, Abi abi, unsigned word_size = 8) {
    if (word_size != 4 && word_size != 8)
        throw Error(Errc::WordSizeMismatch, "word size must be 4 or 8");
    if (bytes.size() < 4)
        throw Error(Errc::MalformedContainer, "file too small (" + std::to_string(bytes.size()) + " bytes)");
    ImageContents c;
    if (looks_like_elf(bytes))
        c = load_elf(bytes, word_size);
    else if (looks_like_pe(bytes))
        c = load_pe(bytes, word_size);
    else
        throw Error(Errc::UnsupportedFormat, "neither ELF nor PE");
    c.abi = abi;
    return BinaryImage(std::move(c));
}

inline BinaryImage load(const std::filesystem::path& path, Abi abi, unsigned word_size = 8) {
    auto bytes = read_file(path);
    return load_bytes(bytes, abi, word_size);
}

} // namespace virtinh
