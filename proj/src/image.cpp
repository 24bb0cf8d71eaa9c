#include "hexburst/image.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "hexburst/ftr.hpp"

namespace hexburst {

double srgb_decode(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

double srgb_encode(double c) {
  c = std::clamp(c, 0.0, 1.0);
  return c <= 0.0031308 ? 12.92 * c : 1.055 * std::pow(c, 1.0 / 2.4) - 0.055;
}

namespace {

Tensor from_rgb16(const std::vector<uint16_t>& px, int w, int h) {
  Tensor t({3, h, w});
  const double inv = 1.0 / 65535.0;
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        t.data()[(static_cast<int64_t>(c) * h + y) * w + x] =
            static_cast<float>(srgb_decode(px[(static_cast<size_t>(y) * w + x) * 3 + c] * inv));
  return t;
}

Tensor load_png(const std::string& path) {
  FILE* fp = std::fopen(path.c_str(), "rb");
  HEXB_CHECK_RUNTIME(fp, "png: cannot open " << path);
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    fail_runtime("png: failed to decode " + path);
  }
  png_init_io(png, fp);
  png_read_info(png, info);
  // Normalize everything to 16-bit RGB.
  png_set_expand(png);
  png_set_strip_alpha(png);
  png_set_gray_to_rgb(png);
  if (png_get_bit_depth(png, info) < 16) png_set_expand_16(png);
  png_set_swap(png);  // PNG is big-endian on disk
  png_read_update_info(png, info);
  const int w = static_cast<int>(png_get_image_width(png, info));
  const int h = static_cast<int>(png_get_image_height(png, info));
  std::vector<uint16_t> px(static_cast<size_t>(w) * h * 3);
  std::vector<png_bytep> rows(h);
  for (int y = 0; y < h; ++y)
    rows[y] = reinterpret_cast<png_bytep>(px.data() + static_cast<size_t>(y) * w * 3);
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  std::fclose(fp);
  return from_rgb16(px, w, h);
}

int ppm_next_int(std::istream& in) {
  // PPM token scanner: skips whitespace and '#' comments.
  for (;;) {
    int c = in.peek();
    if (c == '#') {
      std::string line;
      std::getline(in, line);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
  }
  int v = -1;
  in >> v;
  return v;
}

Tensor load_ppm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  HEXB_CHECK_RUNTIME(in.good(), "ppm: cannot open " << path);
  char m0 = 0, m1 = 0;
  in.get(m0);
  in.get(m1);
  HEXB_CHECK_RUNTIME(m0 == 'P' && m1 == '6', "ppm: not a binary P6 file: " << path);
  const int w = ppm_next_int(in);
  const int h = ppm_next_int(in);
  const int maxval = ppm_next_int(in);
  HEXB_CHECK_RUNTIME(w > 0 && h > 0 && (maxval == 255 || maxval == 65535),
                     "ppm: unsupported header in " << path);
  in.get();  // single whitespace after maxval
  std::vector<uint16_t> px(static_cast<size_t>(w) * h * 3);
  if (maxval == 255) {
    std::vector<unsigned char> raw(px.size());
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    HEXB_CHECK_RUNTIME(in.gcount() == static_cast<std::streamsize>(raw.size()),
                       "ppm: truncated pixel data in " << path);
    for (size_t i = 0; i < raw.size(); ++i)
      px[i] = static_cast<uint16_t>(raw[i] * 65535 / 255);
  } else {
    std::vector<unsigned char> raw(px.size() * 2);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    HEXB_CHECK_RUNTIME(in.gcount() == static_cast<std::streamsize>(raw.size()),
                       "ppm: truncated pixel data in " << path);
    for (size_t i = 0; i < px.size(); ++i)
      px[i] = static_cast<uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);  // big-endian per spec
  }
  return from_rgb16(px, w, h);
}

}  // namespace

Tensor load_image_linear(const std::string& path) {
  std::ifstream probe(path, std::ios::binary);
  HEXB_CHECK_RUNTIME(probe.good(), "image: cannot open " << path);
  unsigned char sig[8] = {0};
  probe.read(reinterpret_cast<char*>(sig), 8);
  probe.close();
  if (png_sig_cmp(sig, 0, 8) == 0) return load_png(path);
  if (sig[0] == 'P' && sig[1] == '6') return load_ppm(path);
  fail_runtime("image: unsupported format (not PNG or PPM P6): " + path);
}

void save_png16(const std::string& path, const Tensor& rgb) {
  HEXB_CHECK(rgb.rank() == 3 && rgb.dim(0) == 3,
             "save_png16: expected (3,H,W), got " << shape_str(rgb.shape()));
  const int h = rgb.dim(1), w = rgb.dim(2);
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const std::string tmp = path + ".tmp";
  FILE* fp = std::fopen(tmp.c_str(), "wb");
  HEXB_CHECK_RUNTIME(fp, "png: cannot open " << tmp << " for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png_create_info_struct(png);
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
    fail_runtime("png: failed to encode " + path);
  }
  png_init_io(png, fp);
  png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 16,
               PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  std::vector<uint16_t> row(static_cast<size_t>(w) * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = srgb_encode(rgb.data()[(static_cast<int64_t>(c) * h + y) * w + x]);
        const uint16_t q = static_cast<uint16_t>(std::lround(v * 65535.0));
        // big-endian on disk
        row[static_cast<size_t>(x) * 3 + c] = static_cast<uint16_t>((q >> 8) | (q << 8));
      }
    png_write_row(png, reinterpret_cast<png_bytep>(row.data()));
  }
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  std::fclose(fp);
  std::error_code ec;
  fs::rename(tmp, target, ec);
  HEXB_CHECK_RUNTIME(!ec, "png: cannot rename " << tmp << " -> " << path);
}

void save_ppm(const std::string& path, const Tensor& rgb, int bits) {
  HEXB_CHECK(rgb.rank() == 3 && rgb.dim(0) == 3,
             "save_ppm: expected (3,H,W), got " << shape_str(rgb.shape()));
  HEXB_CHECK(bits == 8 || bits == 16, "save_ppm: bits must be 8 or 16");
  const int h = rgb.dim(1), w = rgb.dim(2);
  const int maxval = bits == 8 ? 255 : 65535;
  std::string buf = "P6\n" + std::to_string(w) + " " + std::to_string(h) + "\n" +
                    std::to_string(maxval) + "\n";
  buf.reserve(buf.size() + static_cast<size_t>(w) * h * 3 * (bits / 8));
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const double v = srgb_encode(rgb.data()[(static_cast<int64_t>(c) * h + y) * w + x]);
        const int q = static_cast<int>(std::lround(v * maxval));
        if (bits == 8) {
          buf.push_back(static_cast<char>(q));
        } else {
          buf.push_back(static_cast<char>(q >> 8));
          buf.push_back(static_cast<char>(q & 0xff));
        }
      }
  atomic_write_bytes(path, buf.data(), buf.size());
}

}  // namespace hexburst
