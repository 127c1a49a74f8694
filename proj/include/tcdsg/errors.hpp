#pragma once

#include <stdexcept>
#include <string>

namespace tcdsg {

// Input data violates a documented invariant (bad schema, off-simplex
// probabilities, misaligned streams, ...). CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

// Filesystem problem (missing file, unwritable output). Exit code 2.
class IoError : public std::runtime_error {
 public:
  explicit IoError(const std::string& msg) : std::runtime_error(msg) {}
};

// A structurally impossible request, e.g. more ground-truth triplets than
// available prediction slots. Exit code 3.
class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& msg) : std::runtime_error(msg) {}
};

}  // namespace tcdsg
