#include <gtest/gtest.h>

#include <cstring>
#include <filesystem>
#include <fstream>

#include "kgtn/checkpoint.hpp"

namespace fs = std::filesystem;
using kgtn::Matrix;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "kgtn_checkpoint_test";
  fs::create_directories(dir);
  return dir / name;
}

std::vector<unsigned char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<unsigned char>& bytes) {
  std::ofstream out(p, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitwise) {
  kgtn::TensorMap t;
  t["b"] = Matrix::from_rows({{0.1, -0.0}, {1e-300, 3.5}});
  t["a"] = Matrix(1, 3, 1.0 / 3.0);
  t["empty"] = Matrix(0, 4);
  const auto p = scratch("round.kgtn");
  kgtn::save_checkpoint(p, t);
  const auto back = kgtn::load_checkpoint(p);
  ASSERT_EQ(back.size(), 3u);
  for (const auto& [name, m] : t) {
    const Matrix& other = back.at(name);
    ASSERT_EQ(other.rows(), m.rows());
    ASSERT_EQ(other.cols(), m.cols());
    EXPECT_EQ(std::memcmp(other.data().data(), m.data().data(), m.size() * sizeof(double)), 0);
  }
}

TEST(Checkpoint, ByteLayout) {
  kgtn::TensorMap t;
  t["w"] = Matrix::from_rows({{2.0}});
  const auto p = scratch("layout.kgtn");
  kgtn::save_checkpoint(p, t);
  const auto b = read_bytes(p);
  const std::vector<unsigned char> expected = {'K', 'G', 'T', 'N', 1,  // magic, version
                                               1, 0, 0, 0, 'w',        // name
                                               1, 0, 0, 0, 1, 0, 0, 0,  // shape
                                               0, 0, 0, 0, 0, 0, 0, 0x40};  // 2.0
  EXPECT_EQ(b, expected);
}

TEST(Checkpoint, SavesIdenticalBytesForEqualMaps) {
  kgtn::TensorMap t;
  t["z"] = Matrix(2, 2, 0.25);
  t["y"] = Matrix(1, 1, -1.0);
  kgtn::save_checkpoint(scratch("one.kgtn"), t);
  kgtn::save_checkpoint(scratch("two.kgtn"), t);
  EXPECT_EQ(read_bytes(scratch("one.kgtn")), read_bytes(scratch("two.kgtn")));
}

TEST(Checkpoint, CorruptionIsDetected) {
  kgtn::TensorMap t;
  t["weights"] = Matrix(2, 3, 1.5);
  const auto good = scratch("good.kgtn");
  kgtn::save_checkpoint(good, t);
  const auto bytes = read_bytes(good);
  const auto bad = scratch("bad.kgtn");

  auto b = bytes;
  b[1] = 'X';
  write_bytes(bad, b);
  EXPECT_THROW(kgtn::load_checkpoint(bad), kgtn::FormatError);

  b = bytes;
  b[4] = 2;
  write_bytes(bad, b);
  EXPECT_THROW(kgtn::load_checkpoint(bad), kgtn::FormatError);

  for (std::size_t cut : {6u, 12u, 20u, static_cast<unsigned>(bytes.size() - 1)}) {
    write_bytes(bad, {bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)});
    EXPECT_THROW(kgtn::load_checkpoint(bad), kgtn::FormatError) << "cut at " << cut;
  }

  b = bytes;
  b.insert(b.end(), bytes.begin() + 5, bytes.end());  // same tensor twice
  write_bytes(bad, b);
  EXPECT_THROW(kgtn::load_checkpoint(bad), kgtn::FormatError);

  EXPECT_THROW(kgtn::load_checkpoint(scratch("missing.kgtn")), std::runtime_error);
}

TEST(Checkpoint, HeaderOnlyFileIsEmpty) {
  const auto p = scratch("empty.kgtn");
  kgtn::save_checkpoint(p, {});
  EXPECT_EQ(read_bytes(p).size(), 5u);
  EXPECT_TRUE(kgtn::load_checkpoint(p).empty());
}
