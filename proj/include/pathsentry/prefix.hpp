#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <string>
#include <string_view>

namespace pathsentry {

enum class Family : std::uint8_t { kV4 = 4, kV6 = 6 };

constexpr int max_length(Family f) { return f == Family::kV4 ? 32 : 128; }

// An IP prefix stored as a family-tagged, left-aligned bit string. Bits past
// `length()` are always zero.
class Prefix {
 public:
  Prefix() = default;
  Prefix(Family family, const std::array<std::uint8_t, 16>& bytes, int length);

  // Accepts "a.b.c.d/len" and "x:y::z/len". Host bits are masked off.
  // Throws DataError on malformed text.
  static Prefix parse(std::string_view text);

  Family family() const { return family_; }
  int length() const { return length_; }
  const std::array<std::uint8_t, 16>& bytes() const { return bytes_; }

  // Bit i counted from the most significant bit of the address.
  bool bit(int i) const { return (bytes_[i / 8] >> (7 - i % 8)) & 1; }

  // True if this prefix contains `other` (same family, shorter or equal, same leading bits).
  bool covers(const Prefix& other) const;

  std::string to_string() const;

  auto operator<=>(const Prefix&) const = default;

 private:
  Family family_ = Family::kV4;
  std::array<std::uint8_t, 16> bytes_{};
  int length_ = 0;
};

}  // namespace pathsentry
