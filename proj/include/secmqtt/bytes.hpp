#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace secmqtt {

using Bytes = std::vector<std::uint8_t>;
using ByteView = std::span<const std::uint8_t>;

inline Bytes to_bytes(std::string_view s) { return Bytes(s.begin(), s.end()); }

inline std::string to_string(ByteView b) { return std::string(b.begin(), b.end()); }

inline std::string to_hex(ByteView b, bool upper = false)
{
  static constexpr char lower_digits[] = "0123456789abcdef";
  static constexpr char upper_digits[] = "0123456789ABCDEF";
  const char* digits = upper ? upper_digits : lower_digits;
  std::string out;
  out.reserve(b.size() * 2);
  for (auto v : b) {
    out.push_back(digits[v >> 4]);
    out.push_back(digits[v & 0x0f]);
  }
  return out;
}

// Accepts upper or lower case, no separators. Throws std::invalid_argument
// on odd length or non-hex characters.
inline Bytes from_hex(std::string_view s)
{
  auto nibble = [](char c) -> int {
    if (c >= '0' && c <= '9') return c - '0';
    if (c >= 'a' && c <= 'f') return c - 'a' + 10;
    if (c >= 'A' && c <= 'F') return c - 'A' + 10;
    return -1;
  };
  if (s.size() % 2 != 0) throw std::invalid_argument("hex string has odd length");
  Bytes out(s.size() / 2);
  for (std::size_t i = 0; i < out.size(); ++i) {
    int hi = nibble(s[2 * i]);
    int lo = nibble(s[2 * i + 1]);
    if (hi < 0 || lo < 0) throw std::invalid_argument("invalid hex digit");
    out[i] = static_cast<std::uint8_t>((hi << 4) | lo);
  }
  return out;
}

// Fixed-size byte block with length checked at construction from a view.
template <std::size_t N, typename Tag>
struct FixedBytes {
  static constexpr std::size_t size = N;
  std::array<std::uint8_t, N> bytes{};

  constexpr FixedBytes() = default;
  constexpr explicit FixedBytes(const std::array<std::uint8_t, N>& b) : bytes(b) {}

  static FixedBytes from(ByteView v)
  {
    if (v.size() != N)
      throw std::invalid_argument("expected " + std::to_string(N) + " bytes, got " +
                                  std::to_string(v.size()));
    FixedBytes out;
    std::copy(v.begin(), v.end(), out.bytes.begin());
    return out;
  }
  static FixedBytes from(std::string_view s) { return from(ByteView(to_bytes(s))); }

  ByteView view() const { return bytes; }
  friend bool operator==(const FixedBytes&, const FixedBytes&) = default;
};

using Key128 = FixedBytes<16, struct Key128Tag>;
using Nonce128 = FixedBytes<16, struct Nonce128Tag>;
using Tag128 = FixedBytes<16, struct Tag128Tag>;

// Constant-time equality for equal-length secrets; length mismatch is not
// secret and returns early.
inline bool constant_time_equal(ByteView a, ByteView b)
{
  if (a.size() != b.size()) return false;
  std::uint8_t diff = 0;
  for (std::size_t i = 0; i < a.size(); ++i) diff |= static_cast<std::uint8_t>(a[i] ^ b[i]);
  return diff == 0;
}

} // namespace secmqtt
