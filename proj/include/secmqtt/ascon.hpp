#pragma once

#include <array>
#include <cstdint>
#include <optional>

#include "bytes.hpp"
#include "errors.hpp"

// ASCON-128 authenticated encryption (Ascon v1.2 parameter set: 128-bit key,
// nonce and tag, 64-bit rate, 12 rounds for initialization/finalization and 6
// rounds for data processing). Words are loaded big-endian, so the official
// known-answer-test file applies verbatim.
namespace secmqtt::ascon {

inline constexpr std::uint64_t kIV = 0x80400c0600000000ULL;
inline constexpr std::size_t kRate = 8;
inline constexpr unsigned kRoundsA = 12;
inline constexpr unsigned kRoundsB = 6;

// 320-bit permutation state.
struct State {
  std::array<std::uint64_t, 5> x{};
  friend bool operator==(const State&, const State&) = default;
};

namespace detail {

constexpr std::uint64_t rotr(std::uint64_t v, unsigned n) { return (v >> n) | (v << (64 - n)); }

inline std::uint64_t load_be(const std::uint8_t* p, std::size_t n = 8)
{
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < n; ++i) v |= static_cast<std::uint64_t>(p[i]) << (56 - 8 * i);
  return v;
}

inline void store_be(std::uint8_t* p, std::uint64_t v, std::size_t n = 8)
{
  for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<std::uint8_t>(v >> (56 - 8 * i));
}

// Padding bit for a partial block of `n` bytes (n < 8).
constexpr std::uint64_t pad(std::size_t n) { return 0x80ULL << (56 - 8 * n); }

// Mask selecting the first `n` bytes of a word.
constexpr std::uint64_t byte_mask(std::size_t n)
{
  return n == 0 ? 0 : ~0ULL << (64 - 8 * n);
}

inline void round(State& s, std::uint64_t c)
{
  auto& [x0, x1, x2, x3, x4] = s.x;
  // constant addition
  x2 ^= c;
  // substitution layer, bitsliced 5-bit S-box
  x0 ^= x4;
  x4 ^= x3;
  x2 ^= x1;
  const std::uint64_t t0 = ~x0 & x1;
  const std::uint64_t t1 = ~x1 & x2;
  const std::uint64_t t2 = ~x2 & x3;
  const std::uint64_t t3 = ~x3 & x4;
  const std::uint64_t t4 = ~x4 & x0;
  x0 ^= t1;
  x1 ^= t2;
  x2 ^= t3;
  x3 ^= t4;
  x4 ^= t0;
  x1 ^= x0;
  x0 ^= x4;
  x3 ^= x2;
  x2 = ~x2;
  // linear diffusion layer
  x0 ^= rotr(x0, 19) ^ rotr(x0, 28);
  x1 ^= rotr(x1, 61) ^ rotr(x1, 39);
  x2 ^= rotr(x2, 1) ^ rotr(x2, 6);
  x3 ^= rotr(x3, 10) ^ rotr(x3, 17);
  x4 ^= rotr(x4, 7) ^ rotr(x4, 41);
}

inline void permute_unchecked(State& s, unsigned rounds)
{
  for (unsigned i = 12 - rounds; i < 12; ++i) {
    const std::uint64_t c = ((0xfULL - i) << 4) | i;
    round(s, c);
  }
}

inline State initialize(const Key128& key, const Nonce128& nonce)
{
  const std::uint64_t k0 = load_be(key.bytes.data());
  const std::uint64_t k1 = load_be(key.bytes.data() + 8);
  State s{{kIV, k0, k1, load_be(nonce.bytes.data()), load_be(nonce.bytes.data() + 8)}};
  permute_unchecked(s, kRoundsA);
  s.x[3] ^= k0;
  s.x[4] ^= k1;
  return s;
}

inline void absorb_ad(State& s, ByteView ad)
{
  if (!ad.empty()) {
    std::size_t off = 0;
    for (; ad.size() - off >= kRate; off += kRate) {
      s.x[0] ^= load_be(ad.data() + off);
      permute_unchecked(s, kRoundsB);
    }
    const std::size_t rem = ad.size() - off;
    s.x[0] ^= load_be(ad.data() + off, rem) ^ pad(rem);
    permute_unchecked(s, kRoundsB);
  }
  // domain separation
  s.x[4] ^= 1;
}

inline Tag128 finalize(State& s, const Key128& key)
{
  const std::uint64_t k0 = load_be(key.bytes.data());
  const std::uint64_t k1 = load_be(key.bytes.data() + 8);
  s.x[1] ^= k0;
  s.x[2] ^= k1;
  permute_unchecked(s, kRoundsA);
  Tag128 tag;
  store_be(tag.bytes.data(), s.x[3] ^ k0);
  store_be(tag.bytes.data() + 8, s.x[4] ^ k1);
  return tag;
}

} // namespace detail

// Applies the permutation with 6 or 12 rounds; any other count throws
// ContractViolation.
inline State permute(State s, unsigned rounds)
{
  if (rounds != kRoundsA && rounds != kRoundsB)
    throw ContractViolation("ascon permutation supports 6 or 12 rounds, got " +
                            std::to_string(rounds));
  detail::permute_unchecked(s, rounds);
  return s;
}

struct Sealed {
  Bytes ciphertext;
  Tag128 tag;
};

inline Sealed encrypt(const Key128& key, const Nonce128& nonce, ByteView ad, ByteView plaintext)
{
  using namespace detail;
  State s = initialize(key, nonce);
  absorb_ad(s, ad);

  Sealed out{Bytes(plaintext.size()), {}};
  std::size_t off = 0;
  for (; plaintext.size() - off >= kRate; off += kRate) {
    s.x[0] ^= load_be(plaintext.data() + off);
    store_be(out.ciphertext.data() + off, s.x[0]);
    permute_unchecked(s, kRoundsB);
  }
  const std::size_t rem = plaintext.size() - off;
  s.x[0] ^= load_be(plaintext.data() + off, rem) ^ pad(rem);
  store_be(out.ciphertext.data() + off, s.x[0], rem);

  out.tag = finalize(s, key);
  return out;
}

// Returns the plaintext, or nullopt when the tag does not verify. No
// plaintext is released on failure.
inline std::optional<Bytes> decrypt(const Key128& key, const Nonce128& nonce, ByteView ad,
                                    ByteView ciphertext, const Tag128& tag)
{
  using namespace detail;
  State s = initialize(key, nonce);
  absorb_ad(s, ad);

  Bytes pt(ciphertext.size());
  std::size_t off = 0;
  for (; ciphertext.size() - off >= kRate; off += kRate) {
    const std::uint64_t c = load_be(ciphertext.data() + off);
    store_be(pt.data() + off, s.x[0] ^ c);
    s.x[0] = c;
    permute_unchecked(s, kRoundsB);
  }
  const std::size_t rem = ciphertext.size() - off;
  const std::uint64_t c = load_be(ciphertext.data() + off, rem);
  store_be(pt.data() + off, s.x[0] ^ c, rem);
  s.x[0] = (s.x[0] & ~byte_mask(rem)) ^ c ^ pad(rem);

  const Tag128 expected = finalize(s, key);
  if (!constant_time_equal(expected.view(), tag.view())) {
    std::fill(pt.begin(), pt.end(), std::uint8_t{0});
    return std::nullopt;
  }
  return pt;
}

} // namespace secmqtt::ascon
