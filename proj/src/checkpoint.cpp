#include "mtc/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <vector>

#include "mtc/common.hpp"

namespace mtc::ckpt {

namespace {
constexpr char kMagic[8] = {'M', 'T', 'C', 'C', 'K', 'P', 'T', '1'};

void write_u32(std::ostream& os, uint32_t v) {
  unsigned char b[4];
  for (int i = 0; i < 4; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 4);
}
void write_u64(std::ostream& os, uint64_t v) {
  unsigned char b[8];
  for (int i = 0; i < 8; ++i) b[i] = (v >> (8 * i)) & 0xff;
  os.write(reinterpret_cast<const char*>(b), 8);
}
uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (!is) throw DataError("checkpoint: truncated integer");
  uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= uint32_t(b[i]) << (8 * i);
  return v;
}
uint64_t read_u64(std::istream& is) {
  unsigned char b[8];
  is.read(reinterpret_cast<char*>(b), 8);
  if (!is) throw DataError("checkpoint: truncated integer");
  uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
  return v;
}
void write_f64s(std::ostream& os, const double* x, size_t n) {
  // x86-64 doubles are already little-endian IEEE-754
  os.write(reinterpret_cast<const char*>(x), std::streamsize(n * sizeof(double)));
}
void read_f64s(std::istream& is, double* x, size_t n) {
  is.read(reinterpret_cast<char*>(x), std::streamsize(n * sizeof(double)));
  if (!is) throw DataError("checkpoint: truncated tensor payload");
}
}  // namespace

void save(const std::string& path, const Map& m) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw DataError("checkpoint: cannot open for writing: " + tmp);
    os.write(kMagic, 8);
    write_u64(os, m.size());
    for (const auto& [name, t] : m) {
      write_u32(os, uint32_t(name.size()));
      os.write(name.data(), std::streamsize(name.size()));
      const Shape& s = t.shape();
      write_u32(os, uint32_t(s.size()));
      for (int d : s) write_u32(os, uint32_t(d));
      write_f64s(os, t.values().data(), t.size());
    }
    os.flush();
    if (!os) throw DataError("checkpoint: write failed: " + tmp);
  }
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw DataError("checkpoint: rename failed: " + path);
}

Map load(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("checkpoint: cannot open: " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kMagic, 8) != 0)
    throw DataError("checkpoint: bad magic in " + path);
  const uint64_t count = read_u64(is);
  if (count > (1u << 20)) throw DataError("checkpoint: implausible entry count");
  Map m;
  for (uint64_t i = 0; i < count; ++i) {
    const uint32_t name_len = read_u32(is);
    if (name_len > 4096) throw DataError("checkpoint: implausible name length");
    std::string name(name_len, '\0');
    is.read(name.data(), name_len);
    if (!is) throw DataError("checkpoint: truncated name");
    const uint32_t rank = read_u32(is);
    if (rank > 8) throw DataError("checkpoint: implausible rank");
    Shape s(rank);
    size_t n = 1;
    for (uint32_t d = 0; d < rank; ++d) {
      s[d] = int(read_u32(is));
      if (s[d] <= 0 || n > (size_t(1) << 32) / size_t(s[d]))
        throw DataError("checkpoint: implausible dimension");
      n *= size_t(s[d]);
    }
    std::vector<double> vals(n);
    read_f64s(is, vals.data(), n);
    if (m.count(name)) throw DataError("checkpoint: duplicate entry " + name);
    m.emplace(name, Tensor::from(std::move(s), std::move(vals)));
  }
  return m;
}

bool has(const Map& m, const std::string& name) { return m.count(name) != 0; }

void put_scalar(Map& m, const std::string& name, double v) {
  m.insert_or_assign(name, Tensor::scalar(v));
}

double get_scalar(const Map& m, const std::string& name) {
  auto it = m.find(name);
  if (it == m.end()) throw DataError("checkpoint: missing entry " + name);
  return it->second.item();
}

void copy_into(const Map& m, const std::string& name, Tensor& dst) {
  auto it = m.find(name);
  if (it == m.end()) throw DataError("checkpoint: missing entry " + name);
  if (it->second.shape() != dst.shape())
    throw DataError("checkpoint: shape mismatch for " + name);
  dst.values_mut() = it->second.values();
}

}  // namespace mtc::ckpt
