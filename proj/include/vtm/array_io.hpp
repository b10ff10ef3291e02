// Copyright (C) 2026 VTM contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "vtm/dense_array.hpp"

// Binary array container.
//
//   array   := "VTMF1\0" u32 rank, u32 dims[rank], f32 data[prod(dims)]
//   archive := section*
//   section := u32 name_length, name bytes (UTF-8), array
//
// All integers and floats are little-endian; data is row-major.
namespace vtm::io {

inline constexpr char kArrayMagic[6] = {'V', 'T', 'M', 'F', '1', '\0'};

void write_array(std::ostream& os, const DenseArray& a);
DenseArray read_array(std::istream& is);

void save_array(const std::filesystem::path& path, const DenseArray& a);
DenseArray load_array(const std::filesystem::path& path);

using NamedArrays = std::vector<std::pair<std::string, DenseArray>>;

void save_archive(const std::filesystem::path& path, const NamedArrays& sections);
NamedArrays load_archive(const std::filesystem::path& path);

// Little-endian primitives shared with the motion format.
void write_u32(std::ostream& os, std::uint32_t v);
std::uint32_t read_u32(std::istream& is);
void write_f32(std::ostream& os, float v);
void write_f32s(std::ostream& os, std::span<const float> v);
void read_f32s(std::istream& is, std::span<float> out);

}  // namespace vtm::io
