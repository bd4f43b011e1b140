#include <string>
#include <vector>

#include "doctest.h"
#include "mtc/common.hpp"
#include "mtc/compress.hpp"
#include "mtc/rng.hpp"

using namespace mtc;

namespace {

std::vector<unsigned char> random_bytes(size_t n, uint64_t seed) {
  RngStream rng(seed, "compress-bytes");
  std::vector<unsigned char> v(n);
  for (auto& b : v) b = static_cast<unsigned char>(rng.below(256));
  return v;
}

std::string random_digits(size_t n, uint64_t seed) {
  RngStream rng(seed, "compress-digits");
  std::string s(n, '0');
  for (auto& c : s) c = static_cast<char>('0' + rng.below(10));
  return s;
}

void check_roundtrip(const std::vector<unsigned char>& data) {
  const std::vector<unsigned char> packed = block_compress(data.data(), data.size());
  CHECK(block_decompress(packed) == data);
}

}  // namespace

TEST_CASE("rotation-sort transform matches the worked example") {
  // "banana": sorted cyclic rotations abanan, anaban, ananab, banana, nabana,
  // nanaba give last column "nnbaaa" with the original in row 3
  const std::string s = "banana";
  std::vector<unsigned char> last;
  int primary = -1;
  detail::bwt_forward(reinterpret_cast<const unsigned char*>(s.data()),
                      int(s.size()), last, primary);
  CHECK(std::string(last.begin(), last.end()) == "nnbaaa");
  CHECK(primary == 3);
  const auto back = detail::bwt_inverse(last, primary);
  CHECK(std::string(back.begin(), back.end()) == s);
}

TEST_CASE("transform inverts on edge shapes") {
  for (const std::string& s :
       {std::string("a"), std::string("ab"), std::string("aaaaaaa"),
        std::string("abracadabra"), std::string(5000, 'x')}) {
    std::vector<unsigned char> last;
    int primary = -1;
    detail::bwt_forward(reinterpret_cast<const unsigned char*>(s.data()),
                        int(s.size()), last, primary);
    const auto back = detail::bwt_inverse(last, primary);
    CHECK(std::string(back.begin(), back.end()) == s);
  }
  std::vector<unsigned char> rnd = random_bytes(1000, 11);
  std::vector<unsigned char> last;
  int primary = -1;
  detail::bwt_forward(rnd.data(), int(rnd.size()), last, primary);
  CHECK(detail::bwt_inverse(last, primary) == rnd);
}

TEST_CASE("compressed streams decode back to the exact input") {
  check_roundtrip({});
  check_roundtrip({0});
  check_roundtrip({255});
  check_roundtrip(random_bytes(1, 1));
  check_roundtrip(random_bytes(1000, 2));
  check_roundtrip(std::vector<unsigned char>(5000, 0));
  // every byte value present
  std::vector<unsigned char> all;
  for (int r = 0; r < 5; ++r)
    for (int b = 0; b < 256; ++b) all.push_back(static_cast<unsigned char>(b));
  check_roundtrip(all);
  // spans multiple 256 KiB blocks, including a partial tail
  check_roundtrip(random_bytes(600001, 3));
}

TEST_CASE("identical input bytes give identical output bytes") {
  const std::vector<unsigned char> data = random_bytes(40000, 4);
  const auto a = block_compress(data.data(), data.size());
  const auto b = block_compress(data.data(), data.size());
  CHECK(a == b);
}

TEST_CASE("size reflects structure, not just length") {
  const size_t n = 50000;
  const std::string constant(n, 'q');
  const std::string noise = random_digits(n, 5);
  const size_t cs = block_compressed_size(constant);
  const size_t ns = block_compressed_size(noise);
  INFO("constant " << cs << " bytes, noise " << ns << " bytes");
  CHECK(cs * 5 <= ns);     // runs collapse
  CHECK(ns < n + 1000);    // even incompressible text stays near its raw size

  // a duplicated text compresses to less than twice the single copy
  const std::string once = random_digits(20000, 6);
  const size_t s1 = block_compressed_size(once);
  const size_t s2 = block_compressed_size(once + once);
  INFO("single " << s1 << " bytes, doubled " << s2 << " bytes");
  CHECK(s2 < 2 * s1);
  CHECK(block_compressed_size(once) == block_compress(once).size());
}

TEST_CASE("only the built-in codec is available") {
  CHECK_NOTHROW(require_compressor("bwt"));
  CHECK_THROWS_AS(require_compressor("gzip"), DataError);
  CHECK_THROWS_AS(require_compressor("zstd"), DataError);
  CHECK_THROWS_AS(require_compressor(""), DataError);
}

TEST_CASE("malformed streams fail loudly") {
  const std::vector<unsigned char> data = random_bytes(2000, 7);
  auto packed = block_compress(data.data(), data.size());

  CHECK_THROWS_AS(block_decompress(std::vector<unsigned char>{}), DataError);
  CHECK_THROWS_AS(block_decompress(std::vector<unsigned char>(4, 0)), DataError);

  auto bad_magic = packed;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(block_decompress(bad_magic), DataError);

  auto bad_version = packed;
  bad_version[5] = 9;
  CHECK_THROWS_AS(block_decompress(bad_version), DataError);

  auto truncated = packed;
  truncated.resize(packed.size() / 2);
  CHECK_THROWS_AS(block_decompress(truncated), DataError);
}
