#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "hexburst/image.hpp"
#include "hexburst/rawsim.hpp"
#include "testutil.hpp"

using namespace hexburst;
namespace fs = std::filesystem;

namespace {
fs::path tmp_dir() {
  auto p = fs::temp_directory_path() / "hexburst_image_test";
  fs::create_directories(p);
  return p;
}
}  // namespace

TEST_CASE("srgb transfer round trip") {
  for (double v : {0.0, 0.001, 0.01, 0.2, 0.5, 0.9, 1.0}) {
    CHECK(srgb_decode(srgb_encode(v)) == doctest::Approx(v).epsilon(1e-9));
  }
}

TEST_CASE("png16 round trip preserves linear values within quantization") {
  auto img = make_test_image(48, 32, 7);
  auto path = (tmp_dir() / "rt.png").string();
  save_png16(path, img);
  auto back = load_image_linear(path);
  REQUIRE(back.shape() == img.shape());
  for (int64_t i = 0; i < img.numel(); ++i)
    CHECK(std::abs(back.data()[i] - img.data()[i]) < 2e-4);
}

TEST_CASE("ppm 8 and 16 bit round trips") {
  auto img = make_test_image(40, 24, 8);
  auto p16 = (tmp_dir() / "rt16.ppm").string();
  save_ppm(p16, img, 16);
  auto back16 = load_image_linear(p16);
  REQUIRE(back16.shape() == img.shape());
  for (int64_t i = 0; i < img.numel(); ++i)
    CHECK(std::abs(back16.data()[i] - img.data()[i]) < 2e-4);

  auto p8 = (tmp_dir() / "rt8.ppm").string();
  save_ppm(p8, img, 8);
  auto back8 = load_image_linear(p8);
  for (int64_t i = 0; i < img.numel(); ++i)
    CHECK(std::abs(back8.data()[i] - img.data()[i]) < 0.02);
}

TEST_CASE("unsupported and missing files are rejected") {
  auto bad = (tmp_dir() / "bad.dat").string();
  {
    std::ofstream f(bad, std::ios::binary);
    f << "garbage";
  }
  CHECK_THROWS_AS(load_image_linear(bad), std::runtime_error);
  CHECK_THROWS_AS(load_image_linear((tmp_dir() / "missing.png").string()), std::runtime_error);
}
