#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <condition_variable>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "aead.hpp"
#include "errors.hpp"
#include "log.hpp"
#include "mqtt/codec.hpp"
#include "mqtt/topic.hpp"
#include "net/tcp.hpp"
#include "policy.hpp"

// MQTT 3.1.1 client that seals payloads before PUBLISH and opens them on
// delivery. Publishing is single-owner; the receive path (read, decode,
// open, PUBACK) runs on its own thread and callbacks run serially on a
// dispatcher thread.
namespace secmqtt::client {

using Clock = std::chrono::steady_clock;

struct ClientConfig {
  std::string host = "127.0.0.1";
  std::uint16_t port = 1883;
  std::string client_id;
  std::uint16_t keep_alive_s = 60;
  std::optional<std::string> username;
  std::optional<std::string> password;

  std::shared_ptr<SecurityContext> security;
  CipherId cipher = CipherId::Ascon128;
  // When set, the cipher is chosen per message by size.
  std::optional<policy::PolicyConfig> policy;
  // Deliver received envelopes with cipher id 0. Off by default so a flipped
  // cipher byte cannot turn a sealed message into a plaintext one.
  bool accept_plaintext = false;

  std::uint8_t qos = 1;
  std::chrono::milliseconds ack_timeout{2000};
  unsigned max_publish_retries = 3;
  std::chrono::milliseconds connect_timeout{5000};
  std::size_t max_packet_size = 1 << 24;

  void validate() const
  {
    if (qos > 1) throw ContractViolation("qos must be 0 or 1");
    if (qos == 1 && ack_timeout.count() <= 0) throw ContractViolation("ack timeout must be positive");
    if (!security) throw ContractViolation("security context required");
    if (policy) policy->validate();
  }
};

struct PublishReceipt {
  std::optional<std::uint16_t> packet_id;
  CipherId cipher = CipherId::None;
  Clock::time_point sent_at;
  std::optional<Clock::time_point> acked_at;
  unsigned retries = 0;
  std::size_t wire_bytes = 0;
};

struct ReceivedMessage {
  std::string topic;
  Bytes plaintext;
  // Taken right after the envelope was opened.
  Clock::time_point received_at;
  bool dup = false;
  CipherId cipher = CipherId::None;
};

using MessageHandler = std::function<void(const ReceivedMessage&)>;

struct ClientStats {
  std::uint64_t received = 0;
  std::uint64_t delivered = 0;
  std::uint64_t auth_failures = 0;
  std::uint64_t duplicates = 0;
  std::uint64_t publish_resends = 0;
};

class Client {
 public:
  explicit Client(ClientConfig cfg, LogSink log = {}) : cfg_(std::move(cfg)), log_(std::move(log))
  {
    cfg_.validate();
  }
  ~Client()
  {
    try {
      disconnect();
    }
    catch (...) {
    }
  }
  Client(const Client&) = delete;
  Client& operator=(const Client&) = delete;

  // CONNECT/CONNACK exchange. Throws ConnectionRefused (socket refused or
  // non-zero return code) or Timeout.
  void connect()
  {
    if (connected_) throw ContractViolation("already connected");
    sock_ = net::connect_tcp(cfg_.host, cfg_.port, cfg_.connect_timeout);
    decoder_ = std::make_unique<mqtt::StreamDecoder>(cfg_.max_packet_size);

    mqtt::Connect c;
    c.client_id = cfg_.client_id;
    c.keep_alive_s = cfg_.keep_alive_s;
    c.username = cfg_.username;
    if (cfg_.password) c.password = to_bytes(*cfg_.password);
    write(mqtt::encode_packet(c));

    const auto deadline = Clock::now() + cfg_.connect_timeout;
    std::optional<mqtt::Connack> ack;
    std::vector<std::uint8_t> buf(4096);
    while (!ack) {
      auto r = decoder_->next();
      if (auto* p = std::get_if<mqtt::Packet>(&r)) {
        if (auto* a = std::get_if<mqtt::Connack>(p)) {
          ack = *a;
          break;
        }
        abort_connect();
        throw ConnectionRefused("expected CONNACK");
      }
      if (std::holds_alternative<mqtt::ProtocolError>(r)) {
        abort_connect();
        throw ConnectionRefused("malformed CONNACK");
      }
      const auto left = std::chrono::ceil<std::chrono::milliseconds>(deadline - Clock::now());
      if (left.count() <= 0) {
        abort_connect();
        throw Timeout("no CONNACK within " + std::to_string(cfg_.connect_timeout.count()) + " ms");
      }
      const long n = sock_.recv_some(buf.data(), buf.size(), left);
      if (n == 0) {
        abort_connect();
        throw ConnectionRefused("broker closed the connection before CONNACK");
      }
      if (n > 0) decoder_->feed(ByteView(buf.data(), static_cast<std::size_t>(n)));
    }
    if (ack->return_code != mqtt::connack::kAccepted) {
      abort_connect();
      throw ConnectionRefused("CONNACK return code " + std::to_string(ack->return_code));
    }

    connected_ = true;
    stopping_ = false;
    emit("event=connected client=" + cfg_.client_id + " broker=" + cfg_.host + ":" +
         std::to_string(cfg_.port));
    reader_ = std::thread([this] { read_loop(); });
    dispatcher_ = std::thread([this] { dispatch_loop(); });
    if (cfg_.keep_alive_s > 0) pinger_ = std::thread([this] { ping_loop(); });
  }

  // Sends DISCONNECT (when still connected) and joins all threads.
  void disconnect()
  {
    if (!reader_.joinable() && !sock_.valid()) return;
    if (connected_) {
      try {
        write(mqtt::encode_packet(mqtt::Disconnect{}));
      }
      catch (const ConnectionLost&) {
      }
    }
    stopping_ = true;
    sock_.shutdown();
    {
      std::lock_guard lock(mutex_);
      cv_.notify_all();
    }
    if (reader_.joinable()) reader_.join();
    if (pinger_.joinable()) pinger_.join();
    {
      std::lock_guard lock(queue_mutex_);
      queue_cv_.notify_all();
    }
    if (dispatcher_.joinable()) dispatcher_.join();
    connected_ = false;
    sock_.reset();
  }

  bool connected() const { return connected_; }

  // Seals `plaintext` and publishes it. The cipher comes from `cipher`, else
  // the policy, else the configured default.
  PublishReceipt publish_secure(const std::string& topic, ByteView plaintext,
                                std::optional<CipherId> cipher = std::nullopt)
  {
    const CipherId c = cipher ? *cipher
                       : cfg_.policy ? policy::select_cipher(plaintext.size(), *cfg_.policy).cipher
                                     : cfg_.cipher;
    Bytes wire = seal_to_wire(*cfg_.security, c, topic, plaintext);
    auto receipt = publish_raw(topic, wire, cfg_.qos);
    receipt.cipher = c;
    return receipt;
  }

  // Publishes `payload` as is. For QoS 1, waits ack_timeout for PUBACK and
  // resends with DUP up to max_publish_retries times, then throws AckTimeout.
  PublishReceipt publish_raw(const std::string& topic, ByteView payload, std::uint8_t qos)
  {
    if (qos > 1) throw ContractViolation("qos must be 0 or 1");
    if (!connected_) throw ConnectionLost("not connected");
    mqtt::Publish p{topic, std::nullopt, qos, false, false, Bytes(payload.begin(), payload.end())};
    PublishReceipt receipt;
    receipt.cipher = payload.empty() ? CipherId::None : static_cast<CipherId>(payload[0]);

    if (qos == 0) {
      const Bytes frame = mqtt::encode_packet(p);
      receipt.wire_bytes = frame.size();
      receipt.sent_at = Clock::now();
      write(frame);
      return receipt;
    }

    std::uint16_t id;
    {
      std::lock_guard lock(mutex_);
      id = allocate_id();
      pending_acks_[id] = std::nullopt;
    }
    p.packet_id = id;
    receipt.packet_id = id;
    receipt.sent_at = Clock::now();

    for (unsigned attempt = 0;; ++attempt) {
      const Bytes frame = mqtt::encode_packet(p);
      receipt.wire_bytes = frame.size();
      try {
        write(frame);
      }
      catch (...) {
        forget_ack(id);
        throw;
      }
      std::unique_lock lock(mutex_);
      const bool got = cv_.wait_for(lock, cfg_.ack_timeout, [&] {
        return pending_acks_.at(id).has_value() || !connected_ || stopping_;
      });
      if (got && pending_acks_.at(id)) {
        receipt.acked_at = *pending_acks_.at(id);
        pending_acks_.erase(id);
        return receipt;
      }
      if (!connected_ || stopping_) {
        pending_acks_.erase(id);
        throw ConnectionLost("connection lost while awaiting PUBACK");
      }
      if (attempt >= cfg_.max_publish_retries) {
        pending_acks_.erase(id);
        throw AckTimeout("no PUBACK for packet " + std::to_string(id) + " after " +
                         std::to_string(attempt) + " retries");
      }
      lock.unlock();
      ++receipt.retries;
      ++stats_.publish_resends;
      p.dup = true;
      emit("event=publish_resend client=" + cfg_.client_id + " packet_id=" + std::to_string(id) +
           " retry=" + std::to_string(receipt.retries));
    }
  }

  // Registers `on_message` for `filter` and completes the SUBSCRIBE/SUBACK
  // exchange. Returns the granted QoS; throws SubscriptionDenied on 0x80.
  std::uint8_t subscribe_secure(const std::string& filter, MessageHandler on_message,
                                std::optional<std::uint8_t> qos = std::nullopt)
  {
    if (!mqtt::valid_topic_filter(filter)) throw ContractViolation("invalid topic filter '" + filter + "'");
    const std::uint8_t want = qos.value_or(cfg_.qos);
    if (want > 1) throw ContractViolation("qos must be 0 or 1");
    if (!connected_) throw ConnectionLost("not connected");

    std::uint64_t handle;
    std::uint16_t id;
    {
      std::lock_guard lock(mutex_);
      handle = ++next_handler_;
      handlers_.push_back({handle, filter, std::move(on_message)});
      id = allocate_id();
      pending_subacks_[id] = std::nullopt;
    }
    write(mqtt::encode_packet(mqtt::Subscribe{id, {{filter, want}}}));

    std::unique_lock lock(mutex_);
    cv_.wait_for(lock, cfg_.ack_timeout * std::max(1u, cfg_.max_publish_retries + 1), [&] {
      return pending_subacks_.at(id).has_value() || !connected_ || stopping_;
    });
    auto result = pending_subacks_.at(id);
    pending_subacks_.erase(id);
    lock.unlock();
    if (!result || result->return_codes.empty() || result->return_codes[0] == mqtt::kSubackFailure) {
      remove_handler(handle);
      if (!connected_) throw ConnectionLost("connection lost while awaiting SUBACK");
      if (!result) throw Timeout("no SUBACK for '" + filter + "'");
      throw SubscriptionDenied("subscription to '" + filter + "' denied");
    }
    emit("event=subscribed client=" + cfg_.client_id + " filter=" + filter +
         " qos=" + std::to_string(result->return_codes[0]));
    return result->return_codes[0];
  }

  ClientStats stats() const
  {
    ClientStats s;
    s.received = stats_.received;
    s.delivered = stats_.delivered;
    s.auth_failures = stats_.auth_failures;
    s.duplicates = stats_.duplicates;
    s.publish_resends = stats_.publish_resends;
    return s;
  }

  const ClientConfig& config() const { return cfg_; }

 private:
  struct Handler {
    std::uint64_t handle;
    std::string filter;
    MessageHandler fn;
  };

  struct AtomicStats {
    std::atomic<std::uint64_t> received{0}, delivered{0}, auth_failures{0}, duplicates{0},
        publish_resends{0};
  };

  void emit(const std::string& line) const
  {
    if (log_) log_(line);
  }

  void abort_connect()
  {
    sock_.reset();
    decoder_.reset();
  }

  void write(const Bytes& frame)
  {
    std::lock_guard lock(write_mutex_);
    sock_.send_all(frame);
    last_write_ = Clock::now();
  }

  // Caller holds mutex_.
  std::uint16_t allocate_id()
  {
    for (;;) {
      const std::uint16_t id = next_packet_id_;
      next_packet_id_ = static_cast<std::uint16_t>(next_packet_id_ == 0xFFFF ? 1 : next_packet_id_ + 1);
      if (!pending_acks_.count(id) && !pending_subacks_.count(id)) return id;
    }
  }

  void forget_ack(std::uint16_t id)
  {
    std::lock_guard lock(mutex_);
    pending_acks_.erase(id);
  }

  void remove_handler(std::uint64_t handle)
  {
    std::lock_guard lock(mutex_);
    handlers_.erase(std::remove_if(handlers_.begin(), handlers_.end(),
                                   [&](const Handler& h) { return h.handle == handle; }),
                    handlers_.end());
  }

  void read_loop()
  {
    std::vector<std::uint8_t> buf(64 * 1024);
    try {
      while (!stopping_) {
        const long n = sock_.recv_some(buf.data(), buf.size(), std::chrono::milliseconds(100));
        if (n == 0) break;
        if (n < 0) continue;
        decoder_->feed(ByteView(buf.data(), static_cast<std::size_t>(n)));
        for (;;) {
          auto r = decoder_->next();
          if (std::holds_alternative<mqtt::NeedMoreData>(r)) break;
          if (auto* e = std::get_if<mqtt::ProtocolError>(&r)) throw InvalidPacket(e->reason);
          on_packet(std::get<mqtt::Packet>(r));
        }
      }
    }
    catch (const std::exception& e) {
      if (!stopping_) emit(std::string("event=connection_error client=") + cfg_.client_id +
                           " reason=\"" + e.what() + "\"");
    }
    if (!stopping_) emit("event=connection_lost client=" + cfg_.client_id);
    {
      std::lock_guard lock(mutex_);
      connected_ = false;
      cv_.notify_all();
    }
  }

  void on_packet(const mqtt::Packet& packet)
  {
    if (auto* p = std::get_if<mqtt::Publish>(&packet)) {
      on_publish(*p);
    }
    else if (auto* a = std::get_if<mqtt::Puback>(&packet)) {
      std::lock_guard lock(mutex_);
      auto it = pending_acks_.find(a->packet_id);
      if (it != pending_acks_.end() && !it->second) it->second = Clock::now();
      cv_.notify_all();
    }
    else if (auto* s = std::get_if<mqtt::Suback>(&packet)) {
      std::lock_guard lock(mutex_);
      auto it = pending_subacks_.find(s->packet_id);
      if (it != pending_subacks_.end()) it->second = *s;
      cv_.notify_all();
    }
    else if (std::holds_alternative<mqtt::Pingresp>(packet)) {
      // activity alone is enough
    }
    else {
      throw InvalidPacket("unexpected packet type from broker");
    }
  }

  void on_publish(const mqtt::Publish& p)
  {
    ++stats_.received;
    if (p.dup) ++stats_.duplicates;
    ReceivedMessage msg;
    try {
      const Envelope env = decode_envelope(p.payload);
      if (env.cipher == CipherId::None && !cfg_.accept_plaintext)
        throw AuthFailure("plaintext envelope not accepted");
      msg.plaintext = open(*cfg_.security, p.topic, env);
      msg.cipher = env.cipher;
    }
    catch (const Error& e) {
      // no PUBACK: the broker will redeliver until it gives up
      ++stats_.auth_failures;
      emit("event=open_failed client=" + cfg_.client_id + " topic=" + p.topic +
           " reason=\"" + e.what() + "\"");
      return;
    }
    msg.received_at = Clock::now();
    msg.topic = p.topic;
    msg.dup = p.dup;
    if (p.qos == 1) write(mqtt::encode_packet(mqtt::Puback{*p.packet_id}));
    {
      std::lock_guard lock(queue_mutex_);
      queue_.push_back(std::move(msg));
    }
    queue_cv_.notify_one();
  }

  void dispatch_loop()
  {
    for (;;) {
      ReceivedMessage msg;
      {
        std::unique_lock lock(queue_mutex_);
        queue_cv_.wait(lock, [&] { return !queue_.empty() || stopping_; });
        if (queue_.empty()) return;
        msg = std::move(queue_.front());
        queue_.pop_front();
      }
      std::vector<MessageHandler> targets;
      {
        std::lock_guard lock(mutex_);
        for (const auto& h : handlers_)
          if (mqtt::match_topic(h.filter, msg.topic)) targets.push_back(h.fn);
      }
      for (const auto& fn : targets) {
        try {
          fn(msg);
          ++stats_.delivered;
        }
        catch (const std::exception& e) {
          emit(std::string("event=handler_error client=") + cfg_.client_id + " reason=\"" +
               e.what() + "\"");
        }
      }
    }
  }

  // Sends PINGREQ when nothing was written for half the keep-alive period.
  void ping_loop()
  {
    const auto period = std::chrono::milliseconds(cfg_.keep_alive_s * 500);
    std::unique_lock lock(mutex_);
    while (!stopping_ && connected_) {
      cv_.wait_for(lock, std::min<std::chrono::milliseconds>(period, std::chrono::milliseconds(200)));
      if (stopping_ || !connected_) break;
      Clock::time_point last;
      {
        std::lock_guard wl(write_mutex_);
        last = last_write_;
      }
      if (Clock::now() - last < period) continue;
      lock.unlock();
      try {
        write(mqtt::encode_packet(mqtt::Pingreq{}));
      }
      catch (const ConnectionLost&) {
      }
      lock.lock();
    }
  }

  ClientConfig cfg_;
  LogSink log_;

  net::Socket sock_;
  std::unique_ptr<mqtt::StreamDecoder> decoder_;
  std::mutex write_mutex_;
  Clock::time_point last_write_;

  std::atomic<bool> connected_{false};
  std::atomic<bool> stopping_{false};
  std::thread reader_, dispatcher_, pinger_;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::uint16_t next_packet_id_ = 1;
  std::map<std::uint16_t, std::optional<Clock::time_point>> pending_acks_;
  std::map<std::uint16_t, std::optional<mqtt::Suback>> pending_subacks_;
  std::vector<Handler> handlers_;
  std::uint64_t next_handler_ = 0;

  std::mutex queue_mutex_;
  std::condition_variable queue_cv_;
  std::deque<ReceivedMessage> queue_;

  AtomicStats stats_;
};

} // namespace secmqtt::client
