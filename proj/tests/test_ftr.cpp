#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "hexburst/ftr.hpp"
#include "testutil.hpp"

using namespace hexburst;

namespace {
std::filesystem::path tmp_dir() {
  auto p = std::filesystem::temp_directory_path() / "hexburst_ftr_test";
  std::filesystem::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("ftr: header bytes are exactly FTR1 + LE rank/dims") {
  auto path = (tmp_dir() / "hdr.ftr").string();
  write_ftr(path, Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6}));
  std::ifstream in(path, std::ios::binary);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  REQUIRE(buf.size() == 4 + 4 + 8 + 24);
  CHECK(buf[0] == 'F');
  CHECK(buf[1] == 'T');
  CHECK(buf[2] == 'R');
  CHECK(buf[3] == '1');
  CHECK(buf[4] == 2);  // rank, little-endian
  CHECK(buf[5] == 0);
  CHECK(buf[8] == 2);   // dim 0
  CHECK(buf[12] == 3);  // dim 1
}

TEST_CASE("ftr: round trip preserves shape and values bit-exactly") {
  Rng rng(50);
  auto t = testutil::rand_tensor<float>({2, 3, 5, 7}, rng, -100.0, 100.0);
  auto path = (tmp_dir() / "rt.ftr").string();
  write_ftr(path, t);
  auto back = read_ftr(path);
  REQUIRE(back.shape() == t.shape());
  for (int64_t i = 0; i < t.numel(); ++i) CHECK(back.data()[i] == t.data()[i]);
}

TEST_CASE("ftr: corrupt files are rejected") {
  auto dir = tmp_dir();
  auto bad_magic = (dir / "bad_magic.ftr").string();
  atomic_write_text(bad_magic, "NOPE....");
  CHECK_THROWS_AS(read_ftr(bad_magic), std::runtime_error);

  auto truncated = (dir / "trunc.ftr").string();
  write_ftr(truncated, Tensor::from({4}, {1, 2, 3, 4}));
  {
    std::ifstream in(truncated, std::ios::binary);
    std::vector<char> buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    buf.resize(buf.size() - 3);
    std::ofstream out(truncated, std::ios::binary | std::ios::trunc);
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
  }
  CHECK_THROWS_AS(read_ftr(truncated), std::runtime_error);
  CHECK_THROWS_AS(read_ftr((dir / "missing.ftr").string()), std::runtime_error);
}

TEST_CASE("ftr: no stray temp file is left behind") {
  auto dir = tmp_dir();
  auto path = (dir / "atomic.ftr").string();
  write_ftr(path, Tensor::from({1}, {42.f}));
  CHECK_FALSE(std::filesystem::exists(path + ".tmp"));
  CHECK(std::filesystem::exists(path));
}
