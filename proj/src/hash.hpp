#pragma once

#include <cstdint>
#include <cstring>
#include <string_view>

namespace ccu::detail {

// 64-bit FNV-1a.
class Fnv1a {
 public:
  void add(std::string_view bytes) {
    for (unsigned char c : bytes) {
      state_ ^= c;
      state_ *= 0x100000001b3ULL;
    }
  }
  void add_doubles(const double* values, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
      char raw[sizeof(double)];
      std::memcpy(raw, &values[i], sizeof(double));
      add(std::string_view(raw, sizeof(double)));
    }
  }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace ccu::detail
