#pragma once

#include <array>
#include <cstdint>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>

#include "aes_gcm.hpp"
#include "ascon.hpp"
#include "bytes.hpp"
#include "errors.hpp"

// Payload encryption shared by publisher and subscriber: one envelope format
// for plaintext passthrough, AES-128-GCM and ASCON-128.
//
// Envelope wire layout:
//
//   cipher_id:1 | nonce:16 | ciphertext:N | tag:16     (cipher_id != 0)
//   cipher_id:1 | plaintext:N                         (cipher_id == 0)
//
// The encoded envelope is carried verbatim as the MQTT PUBLISH payload.
namespace secmqtt {

enum class CipherId : std::uint8_t {
  None = 0x00,
  Aes128Gcm = 0x01,
  Ascon128 = 0x02,
};

inline bool is_known_cipher(std::uint8_t v) { return v <= 0x02; }

// Short names used on the command line and in CSV output.
inline std::string_view cipher_name(CipherId c)
{
  switch (c) {
  case CipherId::None: return "none";
  case CipherId::Aes128Gcm: return "aes";
  case CipherId::Ascon128: return "ascon";
  }
  return "unknown";
}

inline std::optional<CipherId> parse_cipher(std::string_view name)
{
  if (name == "none") return CipherId::None;
  if (name == "aes") return CipherId::Aes128Gcm;
  if (name == "ascon") return CipherId::Ascon128;
  return std::nullopt;
}

// Fixed key, nonce and associated data of the reference experiment.
inline constexpr std::string_view kPaperCompatVector = "This is 16 bytes";

enum class NonceMode { Counter, PaperCompat };
enum class AadMode { TopicBinding, PaperCompat };

// Key material plus nonce and associated-data policy. In Counter mode each
// call to next_nonce() yields a fresh value (4 zero bytes followed by a
// 96-bit big-endian counter); the counter is guarded so concurrent seals
// never observe the same nonce.
class SecurityContext {
 public:
  using Counter = std::array<std::uint8_t, 12>;

  explicit SecurityContext(const Key128& key, NonceMode nonce_mode = NonceMode::Counter,
                           AadMode aad_mode = AadMode::TopicBinding, const Counter& start = {})
      : key_(key), nonce_mode_(nonce_mode), aad_mode_(aad_mode), counter_(start)
  {
  }

  // Fixed-vector context reproducing the reference experiment. Reuses one
  // nonce for every message, so it is only fit for benchmarking.
  static SecurityContext paper_compat()
  {
    return SecurityContext(Key128::from(kPaperCompatVector), NonceMode::PaperCompat,
                           AadMode::PaperCompat);
  }

  SecurityContext(const SecurityContext& other)
      : key_(other.key_), nonce_mode_(other.nonce_mode_), aad_mode_(other.aad_mode_)
  {
    std::lock_guard lock(other.mutex_);
    counter_ = other.counter_;
    exhausted_ = other.exhausted_;
  }
  SecurityContext& operator=(const SecurityContext&) = delete;

  const Key128& key() const { return key_; }
  NonceMode nonce_mode() const { return nonce_mode_; }
  AadMode aad_mode() const { return aad_mode_; }
  bool test_only() const { return nonce_mode_ == NonceMode::PaperCompat; }

  Nonce128 next_nonce()
  {
    if (nonce_mode_ == NonceMode::PaperCompat) return Nonce128::from(kPaperCompatVector);
    std::lock_guard lock(mutex_);
    if (exhausted_) throw NonceExhausted();
    Nonce128 n;
    std::copy(counter_.begin(), counter_.end(), n.bytes.begin() + 4);
    // big-endian increment; wrapping to zero means every value was used
    bool carry = true;
    for (auto it = counter_.rbegin(); carry && it != counter_.rend(); ++it) {
      ++*it;
      carry = *it == 0;
    }
    exhausted_ = carry;
    return n;
  }

  Bytes associated_data(CipherId cipher, std::string_view topic) const
  {
    if (aad_mode_ == AadMode::TopicBinding) return to_bytes(topic);
    if (cipher == CipherId::Ascon128) return to_bytes(kPaperCompatVector);
    return {};
  }

 private:
  Key128 key_;
  NonceMode nonce_mode_;
  AadMode aad_mode_;
  mutable std::mutex mutex_;
  Counter counter_{};
  bool exhausted_ = false;
};

struct Envelope {
  CipherId cipher = CipherId::None;
  std::optional<Nonce128> nonce;
  Bytes ciphertext;
  std::optional<Tag128> tag;

  friend bool operator==(const Envelope&, const Envelope&) = default;
};

inline constexpr std::size_t kEnvelopeHeader = 1;
inline constexpr std::size_t kEnvelopeOverhead = 1 + Nonce128::size + Tag128::size;

inline Envelope seal(SecurityContext& ctx, CipherId cipher, std::string_view topic,
                     ByteView plaintext)
{
  switch (cipher) {
  case CipherId::None:
    return Envelope{cipher, std::nullopt, Bytes(plaintext.begin(), plaintext.end()), std::nullopt};
  case CipherId::Aes128Gcm: {
    const Nonce128 nonce = ctx.next_nonce();
    const Bytes ad = ctx.associated_data(cipher, topic);
    auto sealed = aes_gcm::encrypt(ctx.key().view(), nonce.view(), ad, plaintext);
    return Envelope{cipher, nonce, std::move(sealed.ciphertext), sealed.tag};
  }
  case CipherId::Ascon128: {
    const Nonce128 nonce = ctx.next_nonce();
    const Bytes ad = ctx.associated_data(cipher, topic);
    auto sealed = ascon::encrypt(ctx.key(), nonce, ad, plaintext);
    return Envelope{cipher, nonce, std::move(sealed.ciphertext), sealed.tag};
  }
  }
  throw UnsupportedCipher("unsupported cipher id " +
                          std::to_string(static_cast<unsigned>(cipher)));
}

// Inverse of seal() under the same context and topic. Throws AuthFailure on
// any tag or associated-data mismatch.
inline Bytes open(const SecurityContext& ctx, std::string_view topic, const Envelope& env)
{
  if (env.cipher == CipherId::None) return env.ciphertext;
  if (env.cipher != CipherId::Aes128Gcm && env.cipher != CipherId::Ascon128)
    throw UnsupportedCipher("unsupported cipher id " +
                            std::to_string(static_cast<unsigned>(env.cipher)));
  if (!env.nonce || !env.tag) throw MalformedEnvelope("encrypted envelope without nonce or tag");

  const Bytes ad = ctx.associated_data(env.cipher, topic);
  std::optional<Bytes> pt;
  if (env.cipher == CipherId::Aes128Gcm)
    pt = aes_gcm::decrypt(ctx.key().view(), env.nonce->view(), ad, env.ciphertext, *env.tag);
  else
    pt = ascon::decrypt(ctx.key(), *env.nonce, ad, env.ciphertext, *env.tag);
  if (!pt) throw AuthFailure();
  return std::move(*pt);
}

inline Bytes encode_envelope(const Envelope& env)
{
  Bytes out;
  const bool encrypted = env.cipher != CipherId::None;
  if (encrypted && (!env.nonce || !env.tag))
    throw MalformedEnvelope("encrypted envelope without nonce or tag");
  out.reserve(env.ciphertext.size() + (encrypted ? kEnvelopeOverhead : kEnvelopeHeader));
  out.push_back(static_cast<std::uint8_t>(env.cipher));
  if (encrypted) out.insert(out.end(), env.nonce->bytes.begin(), env.nonce->bytes.end());
  out.insert(out.end(), env.ciphertext.begin(), env.ciphertext.end());
  if (encrypted) out.insert(out.end(), env.tag->bytes.begin(), env.tag->bytes.end());
  return out;
}

inline Envelope decode_envelope(ByteView bytes)
{
  if (bytes.empty()) throw MalformedEnvelope("empty envelope");
  if (!is_known_cipher(bytes[0]))
    throw MalformedEnvelope("unknown cipher id " + std::to_string(bytes[0]));
  Envelope env;
  env.cipher = static_cast<CipherId>(bytes[0]);
  if (env.cipher == CipherId::None) {
    env.ciphertext.assign(bytes.begin() + 1, bytes.end());
    return env;
  }
  if (bytes.size() < kEnvelopeOverhead)
    throw MalformedEnvelope("envelope truncated: " + std::to_string(bytes.size()) + " bytes");
  env.nonce = Nonce128::from(bytes.subspan(1, Nonce128::size));
  env.ciphertext.assign(bytes.begin() + 1 + Nonce128::size, bytes.end() - Tag128::size);
  env.tag = Tag128::from(bytes.last(Tag128::size));
  return env;
}

inline Bytes seal_to_wire(SecurityContext& ctx, CipherId cipher, std::string_view topic,
                          ByteView plaintext)
{
  return encode_envelope(seal(ctx, cipher, topic, plaintext));
}

inline Bytes open_from_wire(const SecurityContext& ctx, std::string_view topic, ByteView wire)
{
  return open(ctx, topic, decode_envelope(wire));
}

} // namespace secmqtt
