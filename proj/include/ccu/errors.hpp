#pragma once

#include <stdexcept>
#include <string>

namespace ccu {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad shapes, out-of-range parameters, non-finite input.
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

// Malformed model files, IDX/CSV input.
class ParseError : public Error {
 public:
  using Error::Error;
};

// b(0) already exceeds the target ratio: no non-negative radius certifies nu.
class NoCertificate : public Error {
 public:
  NoCertificate(const std::string& what, double log_b0, double log_target)
      : Error(what), log_b0_(log_b0), log_target_(log_target) {}
  double log_b0() const { return log_b0_; }
  double log_target() const { return log_target_; }

 private:
  double log_b0_;
  double log_target_;
};

}  // namespace ccu
