#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace mtc {

// Self-contained lossless block compressor in the bzip2 family:
// per block, a Burrows-Wheeler transform (cyclic rotation sort), move-to-front
// coding, binary run-length coding of zero runs, and a canonical Huffman code.
// Deterministic: identical input bytes give identical output bytes.
std::vector<unsigned char> block_compress(const unsigned char* data, size_t n);
std::vector<unsigned char> block_compress(const std::string& text);
std::vector<unsigned char> block_decompress(const unsigned char* data, size_t n);
std::vector<unsigned char> block_decompress(const std::vector<unsigned char>& in);

size_t block_compressed_size(const std::string& text);

// The registry hook: only the built-in codec is available; asking for any
// other name fails loudly so byte counts are never silently produced by a
// different compressor.
void require_compressor(const std::string& name);  // accepts "bwt"
inline constexpr const char* kDefaultCompressor = "bwt";

namespace detail {
// exposed for tests
std::vector<int> sort_rotations(const unsigned char* s, int n);
void bwt_forward(const unsigned char* s, int n, std::vector<unsigned char>& last,
                 int& primary);
std::vector<unsigned char> bwt_inverse(const std::vector<unsigned char>& last, int primary);
}  // namespace detail

}  // namespace mtc
