#pragma once

#include <memory>
#include <optional>

#include <openssl/evp.h>

#include "bytes.hpp"
#include "errors.hpp"

// AES-128-GCM through OpenSSL's EVP interface. IVs of any non-zero length are
// accepted; lengths other than 12 bytes go through the GHASH-based IV
// derivation of the GCM standard.
namespace secmqtt::aes_gcm {

namespace detail {

struct CtxDeleter {
  void operator()(EVP_CIPHER_CTX* c) const { EVP_CIPHER_CTX_free(c); }
};
using CtxPtr = std::unique_ptr<EVP_CIPHER_CTX, CtxDeleter>;

inline void check(int rc, const char* what)
{
  if (rc != 1) throw Error(std::string("openssl: ") + what + " failed");
}

inline CtxPtr make_ctx(bool encrypt, ByteView key, ByteView iv)
{
  if (key.size() != 16) throw ContractViolation("AES-128-GCM key must be 16 bytes");
  if (iv.empty()) throw ContractViolation("AES-128-GCM IV must not be empty");
  CtxPtr ctx(EVP_CIPHER_CTX_new());
  if (!ctx) throw Error("openssl: EVP_CIPHER_CTX_new failed");
  auto init = encrypt ? EVP_EncryptInit_ex : EVP_DecryptInit_ex;
  check(init(ctx.get(), EVP_aes_128_gcm(), nullptr, nullptr, nullptr), "init");
  check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_IVLEN, static_cast<int>(iv.size()),
                            nullptr),
        "set iv length");
  check(init(ctx.get(), nullptr, nullptr, key.data(), iv.data()), "set key/iv");
  return ctx;
}

} // namespace detail

struct Sealed {
  Bytes ciphertext;
  Tag128 tag;
};

inline Sealed encrypt(ByteView key, ByteView iv, ByteView aad, ByteView plaintext)
{
  auto ctx = detail::make_ctx(true, key, iv);
  int len = 0;
  if (!aad.empty())
    detail::check(EVP_EncryptUpdate(ctx.get(), nullptr, &len, aad.data(),
                                    static_cast<int>(aad.size())),
                  "aad");
  Sealed out{Bytes(plaintext.size()), {}};
  if (!plaintext.empty())
    detail::check(EVP_EncryptUpdate(ctx.get(), out.ciphertext.data(), &len, plaintext.data(),
                                    static_cast<int>(plaintext.size())),
                  "encrypt");
  std::uint8_t tail[16];
  detail::check(EVP_EncryptFinal_ex(ctx.get(), tail, &len), "final");
  detail::check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_GET_TAG, 16, out.tag.bytes.data()),
                "get tag");
  return out;
}

inline std::optional<Bytes> decrypt(ByteView key, ByteView iv, ByteView aad, ByteView ciphertext,
                                    const Tag128& tag)
{
  auto ctx = detail::make_ctx(false, key, iv);
  int len = 0;
  if (!aad.empty())
    detail::check(EVP_DecryptUpdate(ctx.get(), nullptr, &len, aad.data(),
                                    static_cast<int>(aad.size())),
                  "aad");
  Bytes pt(ciphertext.size());
  if (!ciphertext.empty())
    detail::check(EVP_DecryptUpdate(ctx.get(), pt.data(), &len, ciphertext.data(),
                                    static_cast<int>(ciphertext.size())),
                  "decrypt");
  Tag128 expected = tag;
  detail::check(EVP_CIPHER_CTX_ctrl(ctx.get(), EVP_CTRL_GCM_SET_TAG, 16, expected.bytes.data()),
                "set tag");
  std::uint8_t tail[16];
  if (EVP_DecryptFinal_ex(ctx.get(), tail, &len) != 1) {
    std::fill(pt.begin(), pt.end(), std::uint8_t{0});
    return std::nullopt;
  }
  return pt;
}

} // namespace secmqtt::aes_gcm
