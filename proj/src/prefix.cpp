#include "pathsentry/prefix.hpp"

#include <arpa/inet.h>

#include <charconv>

#include "pathsentry/errors.hpp"

namespace pathsentry {

namespace {

void mask_host_bits(std::array<std::uint8_t, 16>& bytes, int length) {
  for (int i = 0; i < 16; ++i) {
    int keep = length - i * 8;
    if (keep >= 8) continue;
    if (keep <= 0) {
      bytes[i] = 0;
    } else {
      bytes[i] &= static_cast<std::uint8_t>(0xFF << (8 - keep));
    }
  }
}

}  // namespace

Prefix::Prefix(Family family, const std::array<std::uint8_t, 16>& bytes, int length)
    : family_(family), bytes_(bytes), length_(length) {
  if (length < 0 || length > max_length(family)) {
    throw DataError("prefix length " + std::to_string(length) + " out of range");
  }
  if (family == Family::kV4) {
    for (int i = 4; i < 16; ++i) bytes_[i] = 0;
  }
  mask_host_bits(bytes_, length_);
}

Prefix Prefix::parse(std::string_view text) {
  auto slash = text.find('/');
  if (slash == std::string_view::npos) {
    throw DataError("prefix '" + std::string(text) + "' has no length");
  }
  std::string addr(text.substr(0, slash));
  auto len_text = text.substr(slash + 1);
  int length = -1;
  auto [ptr, ec] = std::from_chars(len_text.data(), len_text.data() + len_text.size(), length);
  if (ec != std::errc() || ptr != len_text.data() + len_text.size() || len_text.empty()) {
    throw DataError("prefix '" + std::string(text) + "' has a bad length");
  }

  std::array<std::uint8_t, 16> bytes{};
  Family family;
  if (addr.find(':') != std::string::npos) {
    if (inet_pton(AF_INET6, addr.c_str(), bytes.data()) != 1) {
      throw DataError("bad IPv6 address in '" + std::string(text) + "'");
    }
    family = Family::kV6;
  } else {
    if (inet_pton(AF_INET, addr.c_str(), bytes.data()) != 1) {
      throw DataError("bad IPv4 address in '" + std::string(text) + "'");
    }
    family = Family::kV4;
  }
  if (length > max_length(family)) {
    throw DataError("prefix length out of range in '" + std::string(text) + "'");
  }
  return Prefix(family, bytes, length);
}

bool Prefix::covers(const Prefix& other) const {
  if (family_ != other.family_ || length_ > other.length_) return false;
  int full = length_ / 8;
  for (int i = 0; i < full; ++i) {
    if (bytes_[i] != other.bytes_[i]) return false;
  }
  int rest = length_ % 8;
  if (rest == 0) return true;
  auto mask = static_cast<std::uint8_t>(0xFF << (8 - rest));
  return (bytes_[full] & mask) == (other.bytes_[full] & mask);
}

std::string Prefix::to_string() const {
  char buf[INET6_ADDRSTRLEN] = {};
  inet_ntop(family_ == Family::kV4 ? AF_INET : AF_INET6, bytes_.data(), buf, sizeof(buf));
  return std::string(buf) + "/" + std::to_string(length_);
}

}  // namespace pathsentry
