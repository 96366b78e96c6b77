#pragma once

#include <stdexcept>
#include <string>

namespace secmqtt {

// Base of every error this library throws on purpose.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller (bad round count, bad key length, ...).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

class AuthFailure : public Error {
 public:
  AuthFailure() : Error("authentication failed") {}
  explicit AuthFailure(const std::string& what) : Error(what) {}
};

class MalformedEnvelope : public Error {
 public:
  using Error::Error;
};

class UnsupportedCipher : public Error {
 public:
  using Error::Error;
};

class NonceExhausted : public Error {
 public:
  NonceExhausted() : Error("nonce counter exhausted") {}
};

class InvalidPacket : public Error {
 public:
  using Error::Error;
};

class ConnectionRefused : public Error {
 public:
  using Error::Error;
};

class Timeout : public Error {
 public:
  using Error::Error;
};

class AckTimeout : public Error {
 public:
  using Error::Error;
};

class SubscriptionDenied : public Error {
 public:
  using Error::Error;
};

class ConnectionLost : public Error {
 public:
  using Error::Error;
};

class MissingData : public Error {
 public:
  using Error::Error;
};

class MalformedInput : public Error {
 public:
  using Error::Error;
};

} // namespace secmqtt
