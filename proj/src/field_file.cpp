#include "kpnw/field_file.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "kpnw/error.hpp"

namespace kpnw {

namespace {

constexpr char kMagic[4] = {'K', 'P', 'N', 'W'};
constexpr double kAdmissibleTol = 1e-10;

template <class T>
void put_le(std::vector<unsigned char>& out, T v) {
    for (std::size_t k = 0; k < sizeof(T); ++k) out.push_back(static_cast<unsigned char>((v >> (8 * k)) & 0xff));
}

void put_f64(std::vector<unsigned char>& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }

template <class T>
T get_le(const unsigned char* p) {
    T v = 0;
    for (std::size_t k = 0; k < sizeof(T); ++k) v |= static_cast<T>(p[k]) << (8 * k);
    return v;
}

double get_f64(const unsigned char* p) { return std::bit_cast<double>(get_le<std::uint64_t>(p)); }

}  // namespace

std::vector<unsigned char> encode_field(const Grid<double>& g, const Field<double>& u) {
    if (u.rows() != g.nx || u.cols() != g.ny) throw GridError("field shape does not match grid");
    std::vector<unsigned char> out;
    out.reserve(kFieldHeaderBytes + 8 * std::size_t(u.size()));
    out.insert(out.end(), std::begin(kMagic), std::end(kMagic));
    put_le<std::uint16_t>(out, kFieldFileVersion);
    put_le<std::uint32_t>(out, std::uint32_t(g.nx));
    put_le<std::uint32_t>(out, std::uint32_t(g.ny));
    put_f64(out, g.Lx);
    put_f64(out, g.Ly);
    for (Index j = 0; j < g.ny; ++j)
        for (Index i = 0; i < g.nx; ++i) put_f64(out, u(i, j));
    return out;
}

FieldFile decode_field(const std::vector<unsigned char>& bytes) {
    if (bytes.size() < kFieldHeaderBytes) throw FormatError("field file truncated in header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw FormatError("bad magic bytes, not a field file");
    const unsigned char* p = bytes.data() + 4;
    const auto version = get_le<std::uint16_t>(p);
    if (version != kFieldFileVersion) throw FormatError("unsupported field file version " + std::to_string(version));
    const auto nx = get_le<std::uint32_t>(p + 2), ny = get_le<std::uint32_t>(p + 6);
    const double Lx = get_f64(p + 10), Ly = get_f64(p + 18);
    const std::size_t n = std::size_t(nx) * ny;
    if (bytes.size() != kFieldHeaderBytes + 8 * n)
        throw FormatError("field file size " + std::to_string(bytes.size()) + " does not match " + std::to_string(nx) +
                          "x" + std::to_string(ny));
    FieldFile f;
    try {
        f.grid = make_grid<double>(nx, ny, Lx, Ly);
    } catch (const GridError& e) {
        throw FormatError(std::string("bad grid in field file: ") + e.what());
    }
    f.u.resize(nx, ny);
    const unsigned char* v = bytes.data() + kFieldHeaderBytes;
    for (Index j = 0; j < Index(ny); ++j)
        for (Index i = 0; i < Index(nx); ++i, v += 8) {
            const double x = get_f64(v);
            if (!std::isfinite(x)) throw FormatError("non-finite value in field file");
            f.u(i, j) = x;
        }
    Spectral<double> sp(f.grid);
    if (admissibility_defect(sp, f.u) > kAdmissibleTol) throw FormatError("field in file is not admissible");
    return f;
}

void write_field(const std::string& path, const Grid<double>& g, const Field<double>& u) {
    const auto bytes = encode_field(g, u);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open " + path + " for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()), std::streamsize(bytes.size()));
    if (!out) throw Error("write to " + path + " failed");
}

FieldFile read_field(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open field file " + path);
    const std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_field(bytes);
}

}  // namespace kpnw
