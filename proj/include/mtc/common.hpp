#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace mtc {

// Process exit codes used by the CLI and threaded through error types.
enum class ExitCode : int {
  ok = 0,
  usage = 2,      // bad flags, unknown subcommand, invalid combinations
  data = 3,       // malformed files, incompatible checkpoints, contract violations
  numerical = 4,  // non-finite values where finite ones are required
};

struct Error : std::runtime_error {
  ExitCode code;
  Error(ExitCode c, const std::string& msg) : std::runtime_error(msg), code(c) {}
};

struct UsageError : Error {
  explicit UsageError(const std::string& m) : Error(ExitCode::usage, m) {}
};
struct DataError : Error {
  explicit DataError(const std::string& m) : Error(ExitCode::data, m) {}
};
// Shape/domain violations in tensor ops are programming/contract errors.
struct ShapeError : Error {
  explicit ShapeError(const std::string& m) : Error(ExitCode::data, m) {}
};
struct NumericalFault : Error {
  explicit NumericalFault(const std::string& m) : Error(ExitCode::numerical, m) {}
};

inline void require(bool ok, const std::string& msg) {
  if (!ok) throw DataError(msg);
}

// Debug-mode finiteness checks after every tensor op. Off by default: the
// training loop has its own always-on loss guard and this is O(n) per op.
bool debug_checks();
void set_debug_checks(bool on);

inline bool all_finite(const double* x, size_t n) {
  for (size_t i = 0; i < n; ++i)
    if (!std::isfinite(x[i])) return false;
  return true;
}

}  // namespace mtc
