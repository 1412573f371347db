#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "kpnw/spectral.hpp"

namespace kpnw {

// Binary field layout, all little-endian:
//   "KPNW" | u16 version | u32 nx | u32 ny | f64 Lx | f64 Ly | nx*ny f64, x fastest
inline constexpr std::uint16_t kFieldFileVersion = 1;
inline constexpr std::size_t kFieldHeaderBytes = 4 + 2 + 4 + 4 + 8 + 8;

struct FieldFile {
    Grid<double> grid;
    Field<double> u;
};

std::vector<unsigned char> encode_field(const Grid<double>& g, const Field<double>& u);

// Throws FormatError on a bad magic or version, a size mismatch, non-finite
// values or a field that is not admissible (zero x-mean on every row).
FieldFile decode_field(const std::vector<unsigned char>& bytes);

void write_field(const std::string& path, const Grid<double>& g, const Field<double>& u);
FieldFile read_field(const std::string& path);

}  // namespace kpnw
