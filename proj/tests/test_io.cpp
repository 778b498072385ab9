#include "saps/io.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>

using namespace saps;

namespace {

std::filesystem::path tmp(const std::string& name) { return std::filesystem::temp_directory_path() / ("saps_io_" + name); }

void write_bytes(const std::filesystem::path& p, const std::vector<unsigned char>& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

} // namespace

TEST(MatrixFile, HeaderLayout) {
    const auto buf = encode_matrix(Matrix::from_rows({{1.0, 2.0, 3.0}, {4.0, 5.0, 6.0}}));
    ASSERT_EQ(buf.size(), 16u + 48u);
    EXPECT_EQ(std::string(buf.begin(), buf.begin() + 8), "SAPSMAT1");
    EXPECT_EQ(buf[8], 2);
    EXPECT_EQ(buf[12], 3);
    // 1.0 little-endian: 00 .. 00 f0 3f
    EXPECT_EQ(buf[16 + 6], 0xf0);
    EXPECT_EQ(buf[16 + 7], 0x3f);
}

TEST(MatrixFile, RoundTripIsBitExact) {
    Rng rng(1);
    Matrix m = gaussian_matrix(37, 11, rng);
    m(0, 0) = std::numeric_limits<double>::denorm_min();
    m(1, 1) = -0.0;
    m(2, 2) = std::numeric_limits<double>::max();
    const auto p = tmp("roundtrip.bin");
    write_matrix(p, m);
    const Matrix back = read_matrix(p);
    ASSERT_EQ(back.rows(), 37u);
    for (std::size_t i = 0; i < m.data().size(); ++i)
        EXPECT_EQ(std::bit_cast<std::uint64_t>(back.data()[i]), std::bit_cast<std::uint64_t>(m.data()[i]));
    std::filesystem::remove(p);
}

TEST(MatrixFile, EmptyShapes) {
    for (auto [r, c] : {std::pair<std::size_t, std::size_t>{0, 0}, {0, 5}, {5, 0}}) {
        const Matrix back = decode_matrix(encode_matrix(Matrix(r, c)));
        EXPECT_EQ(back.rows(), r);
        EXPECT_EQ(back.cols(), c);
    }
}

TEST(MatrixFile, RejectsCorruptInput) {
    auto buf = encode_matrix(Matrix(3, 2, 1.5));
    auto truncated = buf;
    truncated.pop_back();
    EXPECT_THROW(decode_matrix(truncated), FormatError);
    EXPECT_THROW(decode_matrix(std::vector<unsigned char>(buf.begin(), buf.begin() + 10)), FormatError);
    auto bad_magic = buf;
    bad_magic[7] = '2';
    EXPECT_THROW(decode_matrix(bad_magic), FormatError);
    auto bad_dims = buf;
    bad_dims[8] = 0xff;
    bad_dims[9] = 0xff;
    bad_dims[10] = 0xff;
    bad_dims[11] = 0xff;
    EXPECT_THROW(decode_matrix(bad_dims), FormatError);
    auto nan = buf;
    const auto bits = std::bit_cast<std::uint64_t>(std::numeric_limits<double>::quiet_NaN());
    for (int b = 0; b < 8; ++b) nan[16 + 8 + static_cast<std::size_t>(b)] = static_cast<unsigned char>(bits >> (8 * b));
    try {
        decode_matrix(nan, "x.bin");
        FAIL();
    } catch (const FormatError& e) {
        EXPECT_NE(std::string(e.what()).find("row 0, column 1"), std::string::npos);
    }
}

TEST(MatrixFile, FileErrors) {
    EXPECT_THROW(read_matrix(tmp("does_not_exist.bin")), FormatError);
    const auto p = tmp("short.bin");
    write_bytes(p, {'S', 'A', 'P'});
    EXPECT_THROW(read_matrix(p), FormatError);
    std::filesystem::remove(p);
    Matrix bad(1, 1, std::numeric_limits<double>::infinity());
    EXPECT_THROW(encode_matrix(bad), PreconditionError);
}
