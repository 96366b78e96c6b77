#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "../bytes.hpp"
#include "../errors.hpp"
#include "topic.hpp"

// MQTT 3.1.1 wire codec for the packets a QoS 0/1 broker and client need:
// CONNECT, CONNACK, PUBLISH, PUBACK, SUBSCRIBE, SUBACK, PINGREQ, PINGRESP
// and DISCONNECT.
namespace secmqtt::mqtt {

enum class PacketType : std::uint8_t {
  Connect = 1,
  Connack = 2,
  Publish = 3,
  Puback = 4,
  Subscribe = 8,
  Suback = 9,
  Pingreq = 12,
  Pingresp = 13,
  Disconnect = 14,
};

inline constexpr std::uint32_t kMaxRemainingLength = 268'435'455;

struct Connect {
  std::string client_id;
  std::uint16_t keep_alive_s = 60;
  bool clean_session = true;
  std::optional<std::string> username;
  std::optional<Bytes> password;
  friend bool operator==(const Connect&, const Connect&) = default;
};

namespace connack {
inline constexpr std::uint8_t kAccepted = 0;
inline constexpr std::uint8_t kBadProtocolVersion = 1;
inline constexpr std::uint8_t kIdentifierRejected = 2;
inline constexpr std::uint8_t kServerUnavailable = 3;
inline constexpr std::uint8_t kBadUsernameOrPassword = 4;
inline constexpr std::uint8_t kNotAuthorized = 5;
} // namespace connack

struct Connack {
  bool session_present = false;
  std::uint8_t return_code = connack::kAccepted;
  friend bool operator==(const Connack&, const Connack&) = default;
};

struct Publish {
  std::string topic;
  std::optional<std::uint16_t> packet_id;
  std::uint8_t qos = 0;
  bool dup = false;
  bool retain = false;
  Bytes payload;
  friend bool operator==(const Publish&, const Publish&) = default;
};

struct Puback {
  std::uint16_t packet_id = 0;
  friend bool operator==(const Puback&, const Puback&) = default;
};

struct SubscribeRequest {
  std::string filter;
  std::uint8_t qos = 0;
  friend bool operator==(const SubscribeRequest&, const SubscribeRequest&) = default;
};

struct Subscribe {
  std::uint16_t packet_id = 0;
  std::vector<SubscribeRequest> topics;
  friend bool operator==(const Subscribe&, const Subscribe&) = default;
};

inline constexpr std::uint8_t kSubackFailure = 0x80;

struct Suback {
  std::uint16_t packet_id = 0;
  std::vector<std::uint8_t> return_codes;
  friend bool operator==(const Suback&, const Suback&) = default;
};

struct Pingreq {
  friend bool operator==(const Pingreq&, const Pingreq&) = default;
};
struct Pingresp {
  friend bool operator==(const Pingresp&, const Pingresp&) = default;
};
struct Disconnect {
  friend bool operator==(const Disconnect&, const Disconnect&) = default;
};

using Packet = std::variant<Connect, Connack, Publish, Puback, Subscribe, Suback, Pingreq,
                            Pingresp, Disconnect>;

struct NeedMoreData {
  friend bool operator==(const NeedMoreData&, const NeedMoreData&) = default;
};

struct ProtocolError {
  std::string reason;
};

struct Decoded {
  Packet packet;
  std::size_t consumed = 0;
};

using DecodeResult = std::variant<Decoded, NeedMoreData, ProtocolError>;

struct RemainingLength {
  std::uint32_t value = 0;
  std::size_t consumed = 0;
};

using RemainingLengthResult = std::variant<RemainingLength, NeedMoreData, ProtocolError>;

// 7 data bits per byte, high bit set on every byte but the last.
inline Bytes encode_remaining_length(std::uint32_t value)
{
  if (value > kMaxRemainingLength)
    throw InvalidPacket("remaining length " + std::to_string(value) + " exceeds maximum");
  Bytes out;
  do {
    std::uint8_t b = value % 128;
    value /= 128;
    if (value > 0) b |= 0x80;
    out.push_back(b);
  } while (value > 0);
  return out;
}

// Rejects encodings longer than four bytes and non-minimal encodings.
inline RemainingLengthResult decode_remaining_length(ByteView bytes)
{
  std::uint32_t value = 0;
  std::uint32_t multiplier = 1;
  for (std::size_t i = 0; i < 4; ++i) {
    if (i >= bytes.size()) return NeedMoreData{};
    const std::uint8_t b = bytes[i];
    value += (b & 0x7F) * multiplier;
    if ((b & 0x80) == 0) {
      if (i > 0 && b == 0) return ProtocolError{"non-minimal remaining length encoding"};
      return RemainingLength{value, i + 1};
    }
    multiplier *= 128;
  }
  return ProtocolError{"remaining length longer than 4 bytes"};
}

namespace detail {

class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v)
  {
    out_.push_back(static_cast<std::uint8_t>(v >> 8));
    out_.push_back(static_cast<std::uint8_t>(v & 0xFF));
  }
  void str(std::string_view s)
  {
    if (!valid_string_length(s)) throw InvalidPacket("string longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(s.size()));
    out_.insert(out_.end(), s.begin(), s.end());
  }
  void binary(ByteView b)
  {
    if (b.size() > 0xFFFF) throw InvalidPacket("binary field longer than 65535 bytes");
    u16(static_cast<std::uint16_t>(b.size()));
    out_.insert(out_.end(), b.begin(), b.end());
  }
  void raw(ByteView b) { out_.insert(out_.end(), b.begin(), b.end()); }

  Bytes frame(std::uint8_t header) const
  {
    if (out_.size() > kMaxRemainingLength) throw InvalidPacket("packet too large");
    Bytes f;
    const Bytes rl = encode_remaining_length(static_cast<std::uint32_t>(out_.size()));
    f.reserve(1 + rl.size() + out_.size());
    f.push_back(header);
    f.insert(f.end(), rl.begin(), rl.end());
    f.insert(f.end(), out_.begin(), out_.end());
    return f;
  }

 private:
  Bytes out_;
};

// Bounded cursor over one packet body. Every accessor fails instead of
// reading past the end.
class Reader {
 public:
  explicit Reader(ByteView body) : body_(body) {}

  bool u8(std::uint8_t& v)
  {
    if (remaining() < 1) return false;
    v = body_[pos_++];
    return true;
  }
  bool u16(std::uint16_t& v)
  {
    if (remaining() < 2) return false;
    v = static_cast<std::uint16_t>((body_[pos_] << 8) | body_[pos_ + 1]);
    pos_ += 2;
    return true;
  }
  bool binary(Bytes& v)
  {
    std::uint16_t len = 0;
    if (!u16(len) || remaining() < len) return false;
    v.assign(body_.begin() + pos_, body_.begin() + pos_ + len);
    pos_ += len;
    return true;
  }
  bool str(std::string& v)
  {
    std::uint16_t len = 0;
    if (!u16(len) || remaining() < len) return false;
    v.assign(reinterpret_cast<const char*>(body_.data()) + pos_, len);
    pos_ += len;
    return true;
  }
  Bytes rest()
  {
    Bytes r(body_.begin() + pos_, body_.end());
    pos_ = body_.size();
    return r;
  }
  std::size_t remaining() const { return body_.size() - pos_; }

 private:
  ByteView body_;
  std::size_t pos_ = 0;
};

inline std::uint8_t header(PacketType t, std::uint8_t flags = 0)
{
  return static_cast<std::uint8_t>((static_cast<std::uint8_t>(t) << 4) | flags);
}

inline void require_packet_id(std::uint16_t id)
{
  if (id == 0) throw InvalidPacket("packet identifier must be non-zero");
}

inline Bytes encode(const Connect& p)
{
  if (p.password && !p.username) throw InvalidPacket("password without username");
  if (!valid_utf8(p.client_id)) throw InvalidPacket("client id is not valid UTF-8");
  if (p.username && !valid_utf8(*p.username)) throw InvalidPacket("username is not valid UTF-8");
  Writer w;
  w.str("MQTT");
  w.u8(4);
  std::uint8_t flags = 0;
  if (p.username) flags |= 0x80;
  if (p.password) flags |= 0x40;
  if (p.clean_session) flags |= 0x02;
  w.u8(flags);
  w.u16(p.keep_alive_s);
  w.str(p.client_id);
  if (p.username) w.str(*p.username);
  if (p.password) w.binary(*p.password);
  return w.frame(header(PacketType::Connect));
}

inline Bytes encode(const Connack& p)
{
  if (p.return_code > connack::kNotAuthorized) throw InvalidPacket("invalid CONNACK return code");
  Writer w;
  w.u8(p.session_present ? 1 : 0);
  w.u8(p.return_code);
  return w.frame(header(PacketType::Connack));
}

inline Bytes encode(const Publish& p)
{
  if (!valid_topic_name(p.topic)) throw InvalidPacket("invalid topic name '" + p.topic + "'");
  if (p.qos > 1) throw InvalidPacket("only QoS 0 and 1 are supported");
  if (p.qos == 1) {
    if (!p.packet_id) throw InvalidPacket("QoS 1 PUBLISH requires a packet identifier");
    require_packet_id(*p.packet_id);
  }
  else {
    if (p.packet_id) throw InvalidPacket("QoS 0 PUBLISH must not carry a packet identifier");
    if (p.dup) throw InvalidPacket("QoS 0 PUBLISH must not set DUP");
  }
  Writer w;
  w.str(p.topic);
  if (p.packet_id) w.u16(*p.packet_id);
  w.raw(p.payload);
  const std::uint8_t flags = static_cast<std::uint8_t>((p.dup ? 0x08 : 0) | (p.qos << 1) |
                                                       (p.retain ? 0x01 : 0));
  return w.frame(header(PacketType::Publish, flags));
}

inline Bytes encode(const Puback& p)
{
  require_packet_id(p.packet_id);
  Writer w;
  w.u16(p.packet_id);
  return w.frame(header(PacketType::Puback));
}

inline Bytes encode(const Subscribe& p)
{
  require_packet_id(p.packet_id);
  if (p.topics.empty()) throw InvalidPacket("SUBSCRIBE without topic filters");
  Writer w;
  w.u16(p.packet_id);
  for (const auto& t : p.topics) {
    if (!valid_topic_filter(t.filter)) throw InvalidPacket("invalid topic filter '" + t.filter + "'");
    if (t.qos > 2) throw InvalidPacket("invalid requested QoS");
    w.str(t.filter);
    w.u8(t.qos);
  }
  return w.frame(header(PacketType::Subscribe, 0x02));
}

inline bool valid_suback_code(std::uint8_t c) { return c <= 2 || c == kSubackFailure; }

inline Bytes encode(const Suback& p)
{
  require_packet_id(p.packet_id);
  if (p.return_codes.empty()) throw InvalidPacket("SUBACK without return codes");
  Writer w;
  w.u16(p.packet_id);
  for (auto c : p.return_codes) {
    if (!valid_suback_code(c)) throw InvalidPacket("invalid SUBACK return code");
    w.u8(c);
  }
  return w.frame(header(PacketType::Suback));
}

inline Bytes encode(const Pingreq&) { return Writer{}.frame(header(PacketType::Pingreq)); }
inline Bytes encode(const Pingresp&) { return Writer{}.frame(header(PacketType::Pingresp)); }
inline Bytes encode(const Disconnect&) { return Writer{}.frame(header(PacketType::Disconnect)); }

using BodyResult = std::variant<Packet, ProtocolError>;

inline ProtocolError truncated(const char* what)
{
  return ProtocolError{std::string("truncated ") + what};
}

inline BodyResult decode_connect(Reader& r)
{
  std::string protocol;
  std::uint8_t level = 0;
  std::uint8_t flags = 0;
  Connect c;
  if (!r.str(protocol) || !r.u8(level) || !r.u8(flags) || !r.u16(c.keep_alive_s))
    return truncated("CONNECT variable header");
  if (protocol != "MQTT") return ProtocolError{"unknown protocol name '" + protocol + "'"};
  if (level != 4) return ProtocolError{"unsupported protocol level " + std::to_string(level)};
  if (flags & 0x01) return ProtocolError{"reserved CONNECT flag set"};
  if (flags & 0x04) return ProtocolError{"will messages are not supported"};
  if (flags & 0x38) return ProtocolError{"will QoS/retain set without will flag"};
  const bool has_user = flags & 0x80;
  const bool has_pass = flags & 0x40;
  if (has_pass && !has_user) return ProtocolError{"password flag without username flag"};
  c.clean_session = flags & 0x02;
  if (!r.str(c.client_id)) return truncated("client identifier");
  if (!valid_utf8(c.client_id)) return ProtocolError{"client identifier is not valid UTF-8"};
  if (has_user) {
    std::string user;
    if (!r.str(user)) return truncated("username");
    if (!valid_utf8(user)) return ProtocolError{"username is not valid UTF-8"};
    c.username = std::move(user);
  }
  if (has_pass) {
    Bytes pass;
    if (!r.binary(pass)) return truncated("password");
    c.password = std::move(pass);
  }
  if (r.remaining() != 0) return ProtocolError{"trailing bytes in CONNECT"};
  return c;
}

inline BodyResult decode_publish(Reader& r, std::uint8_t flags)
{
  Publish p;
  p.dup = flags & 0x08;
  p.qos = (flags >> 1) & 0x03;
  p.retain = flags & 0x01;
  if (p.qos == 3) return ProtocolError{"invalid QoS 3"};
  if (p.qos == 2) return ProtocolError{"QoS 2 is not supported"};
  if (p.qos == 0 && p.dup) return ProtocolError{"DUP set on QoS 0 PUBLISH"};
  if (!r.str(p.topic)) return truncated("topic name");
  if (!valid_topic_name(p.topic)) return ProtocolError{"invalid topic name"};
  if (p.qos > 0) {
    std::uint16_t id = 0;
    if (!r.u16(id)) return truncated("packet identifier");
    if (id == 0) return ProtocolError{"zero packet identifier"};
    p.packet_id = id;
  }
  p.payload = r.rest();
  return p;
}

inline BodyResult decode_subscribe(Reader& r)
{
  Subscribe s;
  if (!r.u16(s.packet_id)) return truncated("packet identifier");
  if (s.packet_id == 0) return ProtocolError{"zero packet identifier"};
  while (r.remaining() > 0) {
    SubscribeRequest t;
    if (!r.str(t.filter) || !r.u8(t.qos)) return truncated("topic filter");
    if (!valid_topic_filter(t.filter)) return ProtocolError{"invalid topic filter"};
    if (t.qos > 2) return ProtocolError{"invalid requested QoS"};
    s.topics.push_back(std::move(t));
  }
  if (s.topics.empty()) return ProtocolError{"SUBSCRIBE without topic filters"};
  return s;
}

inline BodyResult decode_suback(Reader& r)
{
  Suback s;
  if (!r.u16(s.packet_id)) return truncated("packet identifier");
  if (s.packet_id == 0) return ProtocolError{"zero packet identifier"};
  std::uint8_t c = 0;
  while (r.u8(c)) {
    if (!valid_suback_code(c)) return ProtocolError{"invalid SUBACK return code"};
    s.return_codes.push_back(c);
  }
  if (s.return_codes.empty()) return ProtocolError{"SUBACK without return codes"};
  return s;
}

inline BodyResult decode_body(PacketType type, std::uint8_t flags, ByteView body)
{
  Reader r(body);
  switch (type) {
  case PacketType::Connect: return decode_connect(r);
  case PacketType::Connack: {
    Connack c;
    std::uint8_t ack_flags = 0;
    if (body.size() != 2) return ProtocolError{"CONNACK must have remaining length 2"};
    r.u8(ack_flags);
    r.u8(c.return_code);
    if (ack_flags > 1) return ProtocolError{"reserved CONNACK flags set"};
    if (c.return_code > connack::kNotAuthorized)
      return ProtocolError{"invalid CONNACK return code"};
    c.session_present = ack_flags == 1;
    return c;
  }
  case PacketType::Publish: return decode_publish(r, flags);
  case PacketType::Puback: {
    Puback p;
    if (body.size() != 2) return ProtocolError{"PUBACK must have remaining length 2"};
    r.u16(p.packet_id);
    if (p.packet_id == 0) return ProtocolError{"zero packet identifier"};
    return p;
  }
  case PacketType::Subscribe: return decode_subscribe(r);
  case PacketType::Suback: return decode_suback(r);
  case PacketType::Pingreq:
  case PacketType::Pingresp:
  case PacketType::Disconnect:
    if (!body.empty()) return ProtocolError{"non-empty body on empty packet"};
    if (type == PacketType::Pingreq) return Pingreq{};
    if (type == PacketType::Pingresp) return Pingresp{};
    return Disconnect{};
  }
  return ProtocolError{"unsupported packet type"};
}

// Validates the fixed-header byte before the body arrives so garbage is
// rejected early.
inline std::optional<ProtocolError> check_fixed_header(std::uint8_t b)
{
  const std::uint8_t type = b >> 4;
  const std::uint8_t flags = b & 0x0F;
  switch (type) {
  case 1:
  case 2:
  case 4:
  case 9:
  case 12:
  case 13:
  case 14:
    if (flags != 0) return ProtocolError{"reserved flag bits set"};
    return std::nullopt;
  case 8:
    if (flags != 0x02) return ProtocolError{"SUBSCRIBE fixed-header flags must be 0010"};
    return std::nullopt;
  case 3: return std::nullopt;
  case 5:
  case 6:
  case 7: return ProtocolError{"QoS 2 packets are not supported"};
  case 10:
  case 11: return ProtocolError{"UNSUBSCRIBE/UNSUBACK are not supported"};
  default: return ProtocolError{"reserved packet type " + std::to_string(type)};
  }
}

} // namespace detail

inline PacketType packet_type(const Packet& p)
{
  static constexpr PacketType types[] = {
      PacketType::Connect,   PacketType::Connack, PacketType::Publish,
      PacketType::Puback,    PacketType::Subscribe, PacketType::Suback,
      PacketType::Pingreq,   PacketType::Pingresp, PacketType::Disconnect};
  return types[p.index()];
}

// Throws InvalidPacket when the packet breaks a type invariant.
inline Bytes encode_packet(const Packet& p)
{
  return std::visit([](const auto& v) { return detail::encode(v); }, p);
}

// Decodes one frame from the front of `bytes`. Never reads past the end of
// the frame it reports as consumed.
inline DecodeResult decode_packet(ByteView bytes)
{
  if (bytes.empty()) return NeedMoreData{};
  const std::uint8_t first = bytes[0];
  if (auto err = detail::check_fixed_header(first)) return *err;

  const auto rl = decode_remaining_length(bytes.subspan(1));
  if (std::holds_alternative<NeedMoreData>(rl)) return NeedMoreData{};
  if (const auto* err = std::get_if<ProtocolError>(&rl)) return *err;
  const auto& len = std::get<RemainingLength>(rl);

  const std::size_t header_size = 1 + len.consumed;
  if (bytes.size() - header_size < len.value) return NeedMoreData{};
  const std::size_t total = header_size + len.value;

  auto body = detail::decode_body(static_cast<PacketType>(first >> 4), first & 0x0F,
                                  bytes.subspan(header_size, len.value));
  if (auto* err = std::get_if<ProtocolError>(&body)) return std::move(*err);
  return Decoded{std::move(std::get<Packet>(body)), total};
}

// Incremental decoder for a byte stream. Single owner.
class StreamDecoder {
 public:
  explicit StreamDecoder(std::size_t max_packet_size = kMaxRemainingLength + 5)
      : max_packet_size_(max_packet_size)
  {
  }

  void feed(ByteView data) { buffer_.insert(buffer_.end(), data.begin(), data.end()); }

  // Next complete packet, NeedMoreData, or ProtocolError (after which the
  // stream is unusable).
  std::variant<Packet, NeedMoreData, ProtocolError> next()
  {
    auto r = decode_packet(buffer_);
    if (auto* d = std::get_if<Decoded>(&r)) {
      buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(d->consumed));
      return std::move(d->packet);
    }
    if (auto* e = std::get_if<ProtocolError>(&r)) return std::move(*e);
    if (buffer_.size() > 1) {
      const auto rl = decode_remaining_length(ByteView(buffer_).subspan(1));
      if (const auto* len = std::get_if<RemainingLength>(&rl);
          len && 1 + len->consumed + len->value > max_packet_size_)
        return ProtocolError{"packet exceeds maximum size"};
    }
    return NeedMoreData{};
  }

  std::size_t buffered() const { return buffer_.size(); }

 private:
  Bytes buffer_;
  std::size_t max_packet_size_;
};

} // namespace secmqtt::mqtt
