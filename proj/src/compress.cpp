#include "mtc/compress.hpp"

#include <algorithm>
#include <cstring>
#include <numeric>
#include <queue>

#include "mtc/common.hpp"

namespace mtc {

namespace {

constexpr int kBlockSize = 1 << 18;  // 256 KiB blocks keep the rotation sort cheap
constexpr int kRunA = 0;
constexpr int kRunB = 1;
constexpr int kEob = 257;      // symbols 2..256 carry move-to-front indices 1..255
constexpr int kAlphabet = 258;
constexpr char kMagic[5] = {'M', 'T', 'C', 'Z', '1'};

// ---- bit stream ----------------------------------------------------------

class BitWriter {
 public:
  explicit BitWriter(std::vector<unsigned char>& out) : out_(out) {}
  void put(uint32_t code, int len) {
    for (int i = len - 1; i >= 0; --i) {
      cur_ = static_cast<unsigned char>((cur_ << 1) | ((code >> i) & 1u));
      if (++nbits_ == 8) {
        out_.push_back(cur_);
        cur_ = 0;
        nbits_ = 0;
      }
      ++total_;
    }
  }
  void flush() {
    if (nbits_ > 0) {
      out_.push_back(static_cast<unsigned char>(cur_ << (8 - nbits_)));
      cur_ = 0;
      nbits_ = 0;
    }
  }
  uint64_t bit_count() const { return total_; }

 private:
  std::vector<unsigned char>& out_;
  unsigned char cur_ = 0;
  int nbits_ = 0;
  uint64_t total_ = 0;
};

class BitReader {
 public:
  BitReader(const unsigned char* data, size_t nbytes, uint64_t nbits)
      : data_(data), nbytes_(nbytes), nbits_(nbits) {}
  int next() {
    require(pos_ < nbits_, "compressed stream truncated");
    const size_t byte = static_cast<size_t>(pos_ >> 3);
    require(byte < nbytes_, "compressed stream truncated");
    const int bit = (data_[byte] >> (7 - (pos_ & 7))) & 1;
    ++pos_;
    return bit;
  }

 private:
  const unsigned char* data_;
  size_t nbytes_;
  uint64_t nbits_;
  uint64_t pos_ = 0;
};

// ---- canonical Huffman ---------------------------------------------------

std::vector<int> huffman_lengths(const std::vector<uint64_t>& freq) {
  const int n = static_cast<int>(freq.size());
  struct Node {
    uint64_t f;
    int tie;   // deterministic tiebreak: creation order
    int left;  // -1 for leaves
    int right;
    int sym;
  };
  std::vector<Node> nodes;
  auto cmp = [&nodes](int a, int b) {
    if (nodes[a].f != nodes[b].f) return nodes[a].f > nodes[b].f;
    return nodes[a].tie > nodes[b].tie;
  };
  std::priority_queue<int, std::vector<int>, decltype(cmp)> heap(cmp);
  for (int s = 0; s < n; ++s) {
    if (freq[s] == 0) continue;
    nodes.push_back({freq[s], static_cast<int>(nodes.size()), -1, -1, s});
    heap.push(static_cast<int>(nodes.size()) - 1);
  }
  std::vector<int> lengths(n, 0);
  if (heap.empty()) return lengths;
  if (heap.size() == 1) {
    lengths[nodes[heap.top()].sym] = 1;
    return lengths;
  }
  while (heap.size() > 1) {
    int a = heap.top();
    heap.pop();
    int b = heap.top();
    heap.pop();
    nodes.push_back({nodes[a].f + nodes[b].f, static_cast<int>(nodes.size()), a, b, -1});
    heap.push(static_cast<int>(nodes.size()) - 1);
  }
  // depth-first walk assigns lengths
  std::vector<std::pair<int, int>> stack{{heap.top(), 0}};
  while (!stack.empty()) {
    auto [idx, depth] = stack.back();
    stack.pop_back();
    const Node& nd = nodes[static_cast<size_t>(idx)];
    if (nd.left < 0) {
      lengths[nd.sym] = std::max(depth, 1);
    } else {
      stack.emplace_back(nd.left, depth + 1);
      stack.emplace_back(nd.right, depth + 1);
    }
  }
  return lengths;
}

struct CanonicalCode {
  std::vector<uint32_t> code;  // per symbol
  std::vector<int> len;        // per symbol
  // decoding tables, indexed by length 1..max
  int max_len = 0;
  std::vector<uint32_t> first_code;
  std::vector<int> first_index;
  std::vector<int> count;
  std::vector<int> symbols;  // sorted by (len, symbol)
};

CanonicalCode canonicalize(const std::vector<int>& lengths) {
  CanonicalCode c;
  const int n = static_cast<int>(lengths.size());
  c.len = lengths;
  c.code.assign(n, 0);
  for (int s = 0; s < n; ++s) c.max_len = std::max(c.max_len, lengths[s]);
  require(c.max_len <= 32, "Huffman code length exceeds 32 bits");
  c.count.assign(c.max_len + 1, 0);
  for (int s = 0; s < n; ++s)
    if (lengths[s] > 0) ++c.count[lengths[s]];
  c.first_code.assign(c.max_len + 1, 0);
  c.first_index.assign(c.max_len + 1, 0);
  uint32_t code = 0;
  int index = 0;
  for (int l = 1; l <= c.max_len; ++l) {
    code <<= 1;
    c.first_code[l] = code;
    c.first_index[l] = index;
    code += static_cast<uint32_t>(c.count[l]);
    index += c.count[l];
  }
  c.symbols.resize(index);
  std::vector<int> next = c.first_index;
  std::vector<uint32_t> next_code = c.first_code;
  for (int s = 0; s < n; ++s) {
    const int l = lengths[s];
    if (l == 0) continue;
    c.symbols[static_cast<size_t>(next[l])] = s;
    c.code[s] = next_code[l];
    ++next[l];
    ++next_code[l];
  }
  return c;
}

int decode_symbol(BitReader& br, const CanonicalCode& c) {
  uint32_t code = 0;
  for (int l = 1; l <= c.max_len; ++l) {
    code = (code << 1) | static_cast<uint32_t>(br.next());
    if (c.count[l] > 0 && code >= c.first_code[l] &&
        code < c.first_code[l] + static_cast<uint32_t>(c.count[l])) {
      return c.symbols[static_cast<size_t>(c.first_index[l] +
                                           static_cast<int>(code - c.first_code[l]))];
    }
  }
  throw DataError("invalid Huffman code in compressed stream");
}

// ---- move-to-front + zero run-length -------------------------------------

void emit_run(std::vector<uint16_t>& out, long long run) {
  // bijective base-2 digits: run = sum d_i * 2^i with d_i in {1, 2}
  while (run > 0) {
    if (run & 1) {
      out.push_back(kRunA);
      run = (run - 1) / 2;
    } else {
      out.push_back(kRunB);
      run = (run - 2) / 2;
    }
  }
}

std::vector<uint16_t> mtf_rle_encode(const std::vector<unsigned char>& data) {
  std::vector<uint16_t> out;
  out.reserve(data.size() / 2 + 16);
  unsigned char list[256];
  for (int i = 0; i < 256; ++i) list[i] = static_cast<unsigned char>(i);
  long long run = 0;
  for (unsigned char b : data) {
    int idx = 0;
    while (list[idx] != b) ++idx;
    if (idx == 0) {
      ++run;
      continue;
    }
    if (run > 0) {
      emit_run(out, run);
      run = 0;
    }
    out.push_back(static_cast<uint16_t>(idx + 1));
    std::memmove(list + 1, list, static_cast<size_t>(idx));
    list[0] = b;
  }
  if (run > 0) emit_run(out, run);
  out.push_back(kEob);
  return out;
}

std::vector<unsigned char> mtf_rle_decode(const std::vector<uint16_t>& syms, int expect) {
  std::vector<unsigned char> out;
  out.reserve(static_cast<size_t>(expect));
  unsigned char list[256];
  for (int i = 0; i < 256; ++i) list[i] = static_cast<unsigned char>(i);
  long long run = 0;
  long long shift = 0;
  auto flush_run = [&]() {
    for (long long i = 0; i < run; ++i) out.push_back(list[0]);
    run = 0;
    shift = 0;
  };
  for (uint16_t s : syms) {
    if (s == kRunA || s == kRunB) {
      const long long digit = (s == kRunA) ? 1 : 2;
      run += digit << shift;
      ++shift;
      continue;
    }
    flush_run();
    if (s == kEob) break;
    const int idx = static_cast<int>(s) - 1;
    require(idx >= 1 && idx <= 255, "invalid move-to-front index");
    const unsigned char b = list[idx];
    std::memmove(list + 1, list, static_cast<size_t>(idx));
    list[0] = b;
    out.push_back(b);
  }
  require(static_cast<int>(out.size()) == expect, "decompressed block size mismatch");
  return out;
}

// ---- little-endian u32 framing -------------------------------------------

void put_u32(std::vector<unsigned char>& out, uint32_t v) {
  out.push_back(static_cast<unsigned char>(v & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 16) & 0xff));
  out.push_back(static_cast<unsigned char>((v >> 24) & 0xff));
}

uint32_t get_u32(const unsigned char* p) {
  return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
         (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

}  // namespace

namespace detail {

std::vector<int> sort_rotations(const unsigned char* s, int n) {
  std::vector<int> order(static_cast<size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::vector<int> rank(static_cast<size_t>(n)), tmp(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) rank[static_cast<size_t>(i)] = s[i];
  for (int k = 1;; k <<= 1) {
    auto key = [&](int i) {
      return std::pair<int, int>(rank[static_cast<size_t>(i)],
                                 rank[static_cast<size_t>((i + k) % n)]);
    };
    std::sort(order.begin(), order.end(),
              [&](int a, int b) { return key(a) < key(b); });
    tmp[static_cast<size_t>(order[0])] = 0;
    for (int i = 1; i < n; ++i) {
      tmp[static_cast<size_t>(order[static_cast<size_t>(i)])] =
          tmp[static_cast<size_t>(order[static_cast<size_t>(i - 1)])] +
          (key(order[static_cast<size_t>(i - 1)]) < key(order[static_cast<size_t>(i)]) ? 1 : 0);
    }
    rank = tmp;
    if (rank[static_cast<size_t>(order[static_cast<size_t>(n - 1)])] == n - 1) break;
    if (k >= n) break;
  }
  return order;
}

void bwt_forward(const unsigned char* s, int n, std::vector<unsigned char>& last,
                 int& primary) {
  std::vector<int> order = sort_rotations(s, n);
  last.resize(static_cast<size_t>(n));
  primary = -1;
  for (int i = 0; i < n; ++i) {
    const int start = order[static_cast<size_t>(i)];
    last[static_cast<size_t>(i)] = s[(start + n - 1) % n];
    if (start == 0) primary = i;
  }
  require(primary >= 0, "rotation sort lost the primary row");
}

std::vector<unsigned char> bwt_inverse(const std::vector<unsigned char>& last, int primary) {
  const int n = static_cast<int>(last.size());
  require(primary >= 0 && primary < n, "primary index out of range");
  // LF mapping: row of the rotation that starts one character earlier.
  int counts[256] = {0};
  for (unsigned char b : last) ++counts[b];
  int starts[256];
  int acc = 0;
  for (int b = 0; b < 256; ++b) {
    starts[b] = acc;
    acc += counts[b];
  }
  std::vector<int> lf(static_cast<size_t>(n));
  {
    int seen[256] = {0};
    for (int i = 0; i < n; ++i) {
      const unsigned char b = last[static_cast<size_t>(i)];
      lf[static_cast<size_t>(i)] = starts[b] + seen[b];
      ++seen[b];
    }
  }
  std::vector<unsigned char> out(static_cast<size_t>(n));
  int row = primary;
  for (int k = n - 1; k >= 0; --k) {
    out[static_cast<size_t>(k)] = last[static_cast<size_t>(row)];
    row = lf[static_cast<size_t>(row)];
  }
  return out;
}

}  // namespace detail

std::vector<unsigned char> block_compress(const unsigned char* data, size_t n) {
  std::vector<unsigned char> out;
  out.insert(out.end(), kMagic, kMagic + 5);
  out.push_back(1);  // version
  size_t pos = 0;
  while (pos < n) {
    const int blk = static_cast<int>(std::min<size_t>(n - pos, kBlockSize));
    std::vector<unsigned char> last;
    int primary = 0;
    detail::bwt_forward(data + pos, blk, last, primary);
    const std::vector<uint16_t> syms = mtf_rle_encode(last);
    std::vector<uint64_t> freq(kAlphabet, 0);
    for (uint16_t s : syms) ++freq[s];
    const CanonicalCode code = canonicalize(huffman_lengths(freq));
    put_u32(out, static_cast<uint32_t>(blk));
    put_u32(out, static_cast<uint32_t>(primary));
    for (int s = 0; s < kAlphabet; ++s)
      out.push_back(static_cast<unsigned char>(code.len[s]));
    std::vector<unsigned char> bits;
    uint64_t nbits = 0;
    {
      BitWriter bw(bits);
      for (uint16_t s : syms) bw.put(code.code[s], code.len[s]);
      bw.flush();
      nbits = bw.bit_count();
    }
    require(nbits <= 0xffffffffull, "block bitstream too long");
    put_u32(out, static_cast<uint32_t>(nbits));
    out.insert(out.end(), bits.begin(), bits.end());
    pos += static_cast<size_t>(blk);
  }
  put_u32(out, 0);  // end marker
  return out;
}

std::vector<unsigned char> block_compress(const std::string& text) {
  return block_compress(reinterpret_cast<const unsigned char*>(text.data()), text.size());
}

std::vector<unsigned char> block_decompress(const unsigned char* data, size_t n) {
  require(n >= 10, "compressed stream too short");
  require(std::memcmp(data, kMagic, 5) == 0, "bad compressed stream magic");
  require(data[5] == 1, "unsupported compressed stream version");
  std::vector<unsigned char> out;
  size_t pos = 6;
  for (;;) {
    require(pos + 4 <= n, "compressed stream truncated");
    const uint32_t blk = get_u32(data + pos);
    pos += 4;
    if (blk == 0) break;
    require(blk <= kBlockSize, "block length out of range");
    require(pos + 4 + kAlphabet + 4 <= n, "compressed stream truncated");
    const uint32_t primary = get_u32(data + pos);
    pos += 4;
    std::vector<int> lengths(kAlphabet);
    for (int s = 0; s < kAlphabet; ++s) lengths[s] = data[pos + static_cast<size_t>(s)];
    pos += kAlphabet;
    const uint32_t nbits = get_u32(data + pos);
    pos += 4;
    const size_t nbytes = (static_cast<size_t>(nbits) + 7) / 8;
    require(pos + nbytes <= n, "compressed stream truncated");
    const CanonicalCode code = canonicalize(lengths);
    BitReader br(data + pos, nbytes, nbits);
    std::vector<uint16_t> syms;
    for (;;) {
      const int s = decode_symbol(br, code);
      syms.push_back(static_cast<uint16_t>(s));
      if (s == kEob) break;
    }
    const std::vector<unsigned char> block =
        mtf_rle_decode(syms, static_cast<int>(blk));
    const std::vector<unsigned char> raw =
        detail::bwt_inverse(block, static_cast<int>(primary));
    out.insert(out.end(), raw.begin(), raw.end());
    pos += nbytes;
  }
  return out;
}

std::vector<unsigned char> block_decompress(const std::vector<unsigned char>& in) {
  return block_decompress(in.data(), in.size());
}

size_t block_compressed_size(const std::string& text) {
  return block_compress(text).size();
}

void require_compressor(const std::string& name) {
  if (name != kDefaultCompressor)
    throw DataError("compressor unavailable: '" + name +
                    "' (only the built-in 'bwt' block codec is provided; byte counts are "
                    "comparable only within one compressor)");
}

}  // namespace mtc
