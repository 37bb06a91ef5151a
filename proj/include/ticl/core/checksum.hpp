#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace ticl::core {

/// 64-bit FNV-1a, usable incrementally.
class Fnv1a64 {
 public:
  void update(std::span<const std::byte> bytes) {
    for (const std::byte b : bytes) {
      hash_ ^= static_cast<std::uint64_t>(b);
      hash_ *= 0x100000001b3ULL;
    }
  }
  void update(std::string_view text) { update(std::as_bytes(std::span(text.data(), text.size()))); }
  std::uint64_t digest() const { return hash_; }

 private:
  std::uint64_t hash_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a64(std::string_view text) {
  Fnv1a64 h;
  h.update(text);
  return h.digest();
}

}  // namespace ticl::core
