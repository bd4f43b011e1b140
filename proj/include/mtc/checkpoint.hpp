#pragma once

#include <map>
#include <string>

#include "mtc/tensor.hpp"

namespace mtc::ckpt {

// Named-tensor container serialized to a binary file:
//   magic "MTCCKPT1", u64 entry count, then per entry
//   u32 name length, name bytes, u32 rank, u32 dims[rank], f64 values.
// All integers and doubles are little-endian.
using Map = std::map<std::string, Tensor>;

void save(const std::string& path, const Map& m);  // writes tmp file, then renames
Map load(const std::string& path);                 // throws DataError on malformed input

bool has(const Map& m, const std::string& name);
void put_scalar(Map& m, const std::string& name, double v);
double get_scalar(const Map& m, const std::string& name);
// copy values of m[name] into dst; shape must match exactly
void copy_into(const Map& m, const std::string& name, Tensor& dst);

}  // namespace mtc::ckpt
