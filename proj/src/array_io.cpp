// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#include "vtm/array_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

#include "vtm/errors.hpp"

namespace vtm::io {

namespace {

constexpr std::uint32_t kMaxRank = 8;
constexpr std::uint32_t kMaxName = 4096;

std::uint32_t bswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

std::uint32_t to_le(std::uint32_t v) {
    if constexpr (std::endian::native == std::endian::big) return bswap32(v);
    return v;
}

void require(std::istream& is, const char* what) {
    if (!is) throw FormatError(std::string("truncated file while reading ") + what);
}

}  // namespace

void write_u32(std::ostream& os, std::uint32_t v) {
    const std::uint32_t le = to_le(v);
    os.write(reinterpret_cast<const char*>(&le), sizeof le);
}

std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof v);
    require(is, "u32");
    return to_le(v);
}

void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }

void write_f32s(std::ostream& os, std::span<const float> v) {
    if constexpr (std::endian::native == std::endian::little) {
        os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size_bytes()));
    } else {
        for (float f : v) write_f32(os, f);
    }
}

void read_f32s(std::istream& is, std::span<float> out) {
    is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size_bytes()));
    require(is, "float payload");
    if constexpr (std::endian::native == std::endian::big) {
        for (float& f : out) f = std::bit_cast<float>(bswap32(std::bit_cast<std::uint32_t>(f)));
    }
}

void write_array(std::ostream& os, const DenseArray& a) {
    os.write(kArrayMagic, sizeof kArrayMagic);
    write_u32(os, static_cast<std::uint32_t>(a.rank()));
    for (std::size_t d : a.shape()) write_u32(os, static_cast<std::uint32_t>(d));
    write_f32s(os, a.data());
}

DenseArray read_array(std::istream& is) {
    char magic[sizeof kArrayMagic];
    is.read(magic, sizeof magic);
    require(is, "magic");
    if (std::memcmp(magic, kArrayMagic, sizeof magic) != 0) throw FormatError("bad magic: not a VTMF1 array");
    const std::uint32_t rank = read_u32(is);
    if (rank == 0 || rank > kMaxRank) throw FormatError("unsupported array rank " + std::to_string(rank));
    std::vector<std::size_t> shape(rank);
    std::size_t total = 1;
    for (auto& d : shape) {
        d = read_u32(is);
        total *= d;
    }
    if (total > (std::size_t{1} << 34)) throw FormatError("array too large");
    std::vector<float> data(total);
    read_f32s(is, data);
    return DenseArray(std::move(shape), std::move(data));
}

void save_array(const std::filesystem::path& path, const DenseArray& a) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    write_array(os, a);
    if (!os) throw DataError("write failed: " + path.string());
}

DenseArray load_array(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    return read_array(is);
}

void save_archive(const std::filesystem::path& path, const NamedArrays& sections) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open " + path.string() + " for writing");
    for (const auto& [name, arr] : sections) {
        write_u32(os, static_cast<std::uint32_t>(name.size()));
        os.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_array(os, arr);
    }
    if (!os) throw DataError("write failed: " + path.string());
}

NamedArrays load_archive(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open " + path.string());
    NamedArrays out;
    while (is.peek() != std::char_traits<char>::eof()) {
        const std::uint32_t len = read_u32(is);
        if (len > kMaxName) throw FormatError("section name too long in " + path.string());
        std::string name(len, '\0');
        is.read(name.data(), len);
        require(is, "section name");
        out.emplace_back(std::move(name), read_array(is));
    }
    return out;
}

}  // namespace vtm::io
