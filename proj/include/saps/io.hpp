#pragma once

// SAPSMAT1 matrix files:
//   bytes 0..7   ASCII "SAPSMAT1"
//   bytes 8..11  rows, uint32 little-endian
//   bytes 12..15 cols, uint32 little-endian
//   then rows*cols IEEE-754 binary64 values, little-endian, row-major

#include "saps/error.hpp"
#include "saps/numerics.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

namespace saps {

inline constexpr std::array<char, 8> kMatrixMagic = {'S', 'A', 'P', 'S', 'M', 'A', 'T', '1'};
inline constexpr std::size_t kMatrixHeaderBytes = 16;

namespace detail {
inline void put_u32(std::vector<unsigned char>& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<unsigned char>(v >> (8 * i)));
    }
}

inline std::uint32_t get_u32(const unsigned char* p) {
    return static_cast<std::uint32_t>(p[0]) | static_cast<std::uint32_t>(p[1]) << 8 | static_cast<std::uint32_t>(p[2]) << 16 |
           static_cast<std::uint32_t>(p[3]) << 24;
}
} // namespace detail

/// Encode a matrix into the SAPSMAT1 byte layout.
inline std::vector<unsigned char> encode_matrix(const Matrix& m) {
    detail::require(m.rows() <= std::numeric_limits<std::uint32_t>::max() && m.cols() <= std::numeric_limits<std::uint32_t>::max(),
                    "encode_matrix: dimensions exceed 32 bits");
    if (!m.all_finite()) {
        throw PreconditionError("encode_matrix: matrix contains non-finite values");
    }
    std::vector<unsigned char> buf(kMatrixMagic.begin(), kMatrixMagic.end());
    buf.reserve(kMatrixHeaderBytes + 8 * m.data().size());
    detail::put_u32(buf, static_cast<std::uint32_t>(m.rows()));
    detail::put_u32(buf, static_cast<std::uint32_t>(m.cols()));
    for (double v : m.data()) {
        const auto bits = std::bit_cast<std::uint64_t>(v);
        for (int i = 0; i < 8; ++i) {
            buf.push_back(static_cast<unsigned char>(bits >> (8 * i)));
        }
    }
    return buf;
}

/// Decode and validate a SAPSMAT1 buffer. `source` names it in error messages.
inline Matrix decode_matrix(const std::vector<unsigned char>& buf, const std::string& source = "<buffer>") {
    if (buf.size() < kMatrixHeaderBytes) {
        throw FormatError(source + ": file too short for a matrix header (" + std::to_string(buf.size()) + " bytes)");
    }
    if (std::memcmp(buf.data(), kMatrixMagic.data(), kMatrixMagic.size()) != 0) {
        throw FormatError(source + ": bad magic, not a SAPSMAT1 file");
    }
    const std::uint64_t rows = detail::get_u32(buf.data() + 8);
    const std::uint64_t cols = detail::get_u32(buf.data() + 12);
    const std::uint64_t payload = buf.size() - kMatrixHeaderBytes;
    // Compare by division first so 8*rows*cols cannot overflow.
    const bool fits = rows == 0 || cols <= payload / 8 / rows;
    if (!fits || payload != 8 * rows * cols) {
        throw FormatError(source + ": payload length " + std::to_string(payload) + " bytes does not match " + std::to_string(rows) + "x" +
                          std::to_string(cols));
    }
    Matrix m(static_cast<std::size_t>(rows), static_cast<std::size_t>(cols));
    const unsigned char* p = buf.data() + kMatrixHeaderBytes;
    for (std::size_t i = 0; i < m.data().size(); ++i, p += 8) {
        std::uint64_t bits = 0;
        for (int b = 0; b < 8; ++b) {
            bits |= static_cast<std::uint64_t>(p[b]) << (8 * b);
        }
        const double v = std::bit_cast<double>(bits);
        if (!std::isfinite(v)) {
            throw FormatError(source + ": non-finite value at row " + std::to_string(i / m.cols()) + ", column " + std::to_string(i % m.cols()));
        }
        m.data()[i] = v;
    }
    return m;
}

inline void write_matrix(const std::filesystem::path& path, const Matrix& m) {
    const auto buf = encode_matrix(m);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) {
        throw FormatError("write to '" + path.string() + "' failed");
    }
}

inline Matrix read_matrix(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open '" + path.string() + "' for reading");
    }
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_matrix(buf, path.string());
}

} // namespace saps
