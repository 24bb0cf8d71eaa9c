#include "hexburst/ftr.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace hexburst {

namespace {

void put_u32le(std::vector<unsigned char>& buf, uint32_t v) {
  buf.push_back(static_cast<unsigned char>(v & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  buf.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

uint32_t get_u32le(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

float f32_from_le(const unsigned char* p) {
  uint32_t u = get_u32le(p);
  float f;
  std::memcpy(&f, &u, 4);
  return f;
}

void put_f32le(std::vector<unsigned char>& buf, float f) {
  uint32_t u;
  std::memcpy(&u, &f, 4);
  put_u32le(buf, u);
}

}  // namespace

void atomic_write_bytes(const std::string& path, const void* data, size_t size) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    HEXB_CHECK_RUNTIME(out.good(), "write failed: cannot open " << tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(size));
    HEXB_CHECK_RUNTIME(out.good(), "write failed: short write to " << tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, target, ec);
  HEXB_CHECK_RUNTIME(!ec, "write failed: cannot rename " << tmp.string() << " -> " << path);
}

void atomic_write_text(const std::string& path, const std::string& text) {
  atomic_write_bytes(path, text.data(), text.size());
}

void write_ftr(const std::string& path, const Tensor& t) {
  HEXB_CHECK(t.defined(), "write_ftr: undefined tensor");
  std::vector<unsigned char> buf;
  buf.reserve(8 + 4 * t.rank() + 4 * static_cast<size_t>(t.numel()));
  buf.insert(buf.end(), {'F', 'T', 'R', '1'});
  put_u32le(buf, static_cast<uint32_t>(t.rank()));
  for (int d : t.shape()) put_u32le(buf, static_cast<uint32_t>(d));
  for (int64_t i = 0; i < t.numel(); ++i) put_f32le(buf, t.data()[i]);
  atomic_write_bytes(path, buf.data(), buf.size());
}

Tensor read_ftr(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  HEXB_CHECK_RUNTIME(in.good(), "read_ftr: cannot open " << path);
  std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                 std::istreambuf_iterator<char>());
  HEXB_CHECK_RUNTIME(buf.size() >= 8, "read_ftr: truncated header in " << path);
  HEXB_CHECK_RUNTIME(std::memcmp(buf.data(), "FTR1", 4) == 0,
                     "read_ftr: bad magic in " << path);
  const uint32_t rank = get_u32le(buf.data() + 4);
  HEXB_CHECK_RUNTIME(rank >= 1 && rank <= 8, "read_ftr: implausible rank " << rank << " in " << path);
  HEXB_CHECK_RUNTIME(buf.size() >= 8 + 4ull * rank, "read_ftr: truncated dims in " << path);
  std::vector<int> shape(rank);
  uint64_t n = 1;
  for (uint32_t i = 0; i < rank; ++i) {
    shape[i] = static_cast<int>(get_u32le(buf.data() + 8 + 4 * i));
    HEXB_CHECK_RUNTIME(shape[i] > 0, "read_ftr: non-positive dim in " << path);
    n *= static_cast<uint64_t>(shape[i]);
  }
  const size_t payload_off = 8 + 4ull * rank;
  HEXB_CHECK_RUNTIME(buf.size() == payload_off + 4ull * n,
                     "read_ftr: size mismatch in " << path << " (expected "
                          << payload_off + 4ull * n << " bytes, got " << buf.size() << ")");
  Tensor t(shape);
  for (uint64_t i = 0; i < n; ++i) t.data()[i] = f32_from_le(buf.data() + payload_off + 4 * i);
  return t;
}

}  // namespace hexburst
