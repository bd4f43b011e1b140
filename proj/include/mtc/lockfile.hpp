#pragma once

#include <fcntl.h>
#include <unistd.h>

#include <string>

#include "mtc/common.hpp"

namespace mtc {

// Holds one output directory for the lifetime of the process section that
// writes into it. Creation is exclusive (O_EXCL); the file is removed on
// destruction, so a second process targeting the same directory fails fast
// instead of interleaving writes. After a crash the file can linger; removing
// it by hand releases the directory (documented in the README).
class DirLock {
 public:
  explicit DirLock(const std::string& path) : path_(path) {
    fd_ = ::open(path.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw DataError("output directory is locked: " + path +
                      " exists (remove it if no other process owns the directory)");
    std::string pid = std::to_string(::getpid()) + "\n";
    ssize_t n = ::write(fd_, pid.data(), pid.size());
    (void)n;
  }
  ~DirLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  int fd_ = -1;
  std::string path_;
};

}  // namespace mtc
