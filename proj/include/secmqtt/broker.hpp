#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <list>
#include <map>
#include <memory>
#include <mutex>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "errors.hpp"
#include "log.hpp"
#include "mqtt/codec.hpp"
#include "mqtt/topic.hpp"
#include "net/tcp.hpp"

// Minimal MQTT 3.1.1 broker: clean sessions, '+'/'#' subscriptions, QoS 0/1
// fan-out and at-least-once redelivery with DUP set. BrokerCore holds all
// protocol state and is driven through the Connection interface, which keeps
// it testable without sockets; Broker puts it behind a TCP listener.
namespace secmqtt::broker {

using Clock = std::chrono::steady_clock;

// Seeded, test-only fault injection. All probabilities default to zero.
struct FaultInjection {
  std::uint64_t seed = 1;
  // PUBACKs that subscribers send for QoS 1 deliveries are ignored.
  double drop_puback_probability = 0.0;
  // Outgoing deliveries (first sends and retransmissions) are not written.
  double drop_publish_probability = 0.0;
  // PUBACKs the broker owes publishers are not written.
  double drop_outbound_puback_probability = 0.0;
  unsigned drop_first_outbound_pubacks = 0;
  // CONNACK is never sent.
  bool drop_connack = false;

  bool active() const
  {
    return drop_puback_probability > 0 || drop_publish_probability > 0 ||
           drop_outbound_puback_probability > 0 || drop_first_outbound_pubacks > 0 ||
           drop_connack;
  }
};

struct BrokerConfig {
  std::string bind_address = "0.0.0.0";
  std::uint16_t port = 1883;
  std::chrono::milliseconds retransmit_interval{2000};
  unsigned max_retries = 10;
  // Username -> password. Empty disables authentication.
  std::map<std::string, std::string> users;
  // Idle connections are dropped after keep_alive * this factor.
  double keep_alive_factor = 1.5;
  std::chrono::milliseconds connect_timeout{10000};
  std::chrono::milliseconds tick_interval{20};
  std::size_t max_packet_size = 1 << 24;
  FaultInjection faults;
};

class Connection {
 public:
  virtual ~Connection() = default;
  // Thread-safe; may throw ConnectionLost.
  virtual void send(const Bytes& frame) = 0;
  // Idempotent and thread-safe.
  virtual void close() = 0;
  virtual std::string peer() const { return "?"; }
};

struct InflightMessage {
  mqtt::Publish publish;
  Clock::time_point first_sent_at;
  unsigned retries = 0;
  Clock::time_point next_retry_at;
};

struct Session {
  std::string client_id;
  std::shared_ptr<Connection> conn;
  std::uint16_t keep_alive_s = 0;

  std::mutex mutex;
  std::map<std::uint16_t, InflightMessage> inflight;
  std::uint16_t next_packet_id = 1;
  Clock::time_point last_activity;
};

// Per-connection state owned by whoever reads from the connection.
struct ConnectionState {
  std::shared_ptr<Connection> conn;
  std::shared_ptr<Session> session;
  Clock::time_point opened_at = Clock::now();
};

struct Stats {
  std::uint64_t connects = 0;
  std::uint64_t takeovers = 0;
  std::uint64_t publishes_received = 0;
  std::uint64_t deliveries = 0;
  std::uint64_t retransmissions = 0;
  std::uint64_t expired = 0;
  std::uint64_t pubacks_dropped = 0;
  std::uint64_t publishes_dropped = 0;
};

class SubscriptionTable {
 public:
  void add(const std::string& client, const std::string& filter, std::uint8_t qos)
  {
    std::unique_lock lock(mutex_);
    by_filter_[filter][client] = qos;
  }

  void remove_client(const std::string& client)
  {
    std::unique_lock lock(mutex_);
    for (auto it = by_filter_.begin(); it != by_filter_.end();) {
      it->second.erase(client);
      it = it->second.empty() ? by_filter_.erase(it) : std::next(it);
    }
  }

  // One entry per matching client with the highest granted QoS among its
  // matching filters.
  std::map<std::string, std::uint8_t> match(std::string_view topic) const
  {
    std::shared_lock lock(mutex_);
    std::map<std::string, std::uint8_t> out;
    for (const auto& [filter, clients] : by_filter_) {
      if (!mqtt::match_topic(filter, topic)) continue;
      for (const auto& [client, qos] : clients) {
        auto [it, inserted] = out.emplace(client, qos);
        if (!inserted) it->second = std::max(it->second, qos);
      }
    }
    return out;
  }

  std::size_t filter_count() const
  {
    std::shared_lock lock(mutex_);
    return by_filter_.size();
  }

 private:
  mutable std::shared_mutex mutex_;
  std::map<std::string, std::map<std::string, std::uint8_t>> by_filter_;
};

class BrokerCore {
 public:
  explicit BrokerCore(BrokerConfig config, LogSink log = {})
      : config_(std::move(config)), log_(std::move(log)), rng_(config_.faults.seed)
  {
  }

  const BrokerConfig& config() const { return config_; }

  // Processes one packet from a connection. Returns false when the
  // connection must be closed.
  bool handle_packet(ConnectionState& cs, const mqtt::Packet& packet, Clock::time_point now)
  {
    if (!cs.session) {
      if (const auto* c = std::get_if<mqtt::Connect>(&packet)) return handle_connect(cs, *c, now);
      emit("event=protocol_error peer=" + cs.conn->peer() + " reason=first_packet_not_connect");
      return false;
    }
    {
      std::lock_guard lock(cs.session->mutex);
      cs.session->last_activity = now;
    }
    return std::visit(
        [&](const auto& p) -> bool {
          using T = std::decay_t<decltype(p)>;
          if constexpr (std::is_same_v<T, mqtt::Publish>) {
            handle_publish(*cs.session, p, now);
            return true;
          }
          else if constexpr (std::is_same_v<T, mqtt::Puback>) {
            handle_puback(*cs.session, p);
            return true;
          }
          else if constexpr (std::is_same_v<T, mqtt::Subscribe>) {
            handle_subscribe(*cs.session, p);
            return true;
          }
          else if constexpr (std::is_same_v<T, mqtt::Pingreq>) {
            send_to(*cs.session, mqtt::Pingresp{});
            return true;
          }
          else if constexpr (std::is_same_v<T, mqtt::Disconnect>) {
            emit("event=disconnect client=" + cs.session->client_id);
            end_session(cs);
            return false;
          }
          else {
            emit("event=protocol_error client=" + cs.session->client_id +
                 " reason=unexpected_packet");
            return false;
          }
        },
        packet);
  }

  // The connection is gone (EOF, error or close()). Clean-session semantics:
  // the session, its subscriptions and its inflight messages go with it.
  void handle_connection_closed(ConnectionState& cs)
  {
    if (cs.session) {
      emit("event=connection_closed client=" + cs.session->client_id);
      end_session(cs);
    }
  }

  // Resends every inflight QoS 1 delivery whose retry time has come, with
  // DUP set. Messages that already used max_retries are dropped.
  void retransmit_tick(Clock::time_point now)
  {
    for (const auto& s : snapshot_sessions()) {
      std::lock_guard lock(s->mutex);
      for (auto it = s->inflight.begin(); it != s->inflight.end();) {
        InflightMessage& m = it->second;
        if (m.next_retry_at > now) {
          ++it;
          continue;
        }
        if (m.retries >= config_.max_retries) {
          ++stats_.expired;
          emit("event=drop client=" + s->client_id + " packet_id=" + std::to_string(it->first) +
               " retries=" + std::to_string(m.retries));
          it = s->inflight.erase(it);
          continue;
        }
        ++m.retries;
        m.publish.dup = true;
        m.next_retry_at = now + config_.retransmit_interval;
        ++stats_.retransmissions;
        emit("event=retransmit client=" + s->client_id + " packet_id=" +
             std::to_string(it->first) + " retry=" + std::to_string(m.retries));
        write_publish(*s, m.publish);
        ++it;
      }
    }
  }

  // Closes connections idle for longer than keep_alive * keep_alive_factor.
  void expire_idle(Clock::time_point now)
  {
    for (const auto& s : snapshot_sessions()) {
      std::chrono::milliseconds limit;
      Clock::time_point last;
      {
        std::lock_guard lock(s->mutex);
        if (s->keep_alive_s == 0) continue;
        limit = std::chrono::milliseconds(
            static_cast<long long>(s->keep_alive_s * 1000.0 * config_.keep_alive_factor));
        last = s->last_activity;
      }
      if (now - last > limit) {
        emit("event=keepalive_timeout client=" + s->client_id);
        s->conn->close();
      }
    }
  }

  Stats stats() const
  {
    Stats s;
    s.connects = stats_.connects;
    s.takeovers = stats_.takeovers;
    s.publishes_received = stats_.publishes_received;
    s.deliveries = stats_.deliveries;
    s.retransmissions = stats_.retransmissions;
    s.expired = stats_.expired;
    s.pubacks_dropped = stats_.pubacks_dropped;
    s.publishes_dropped = stats_.publishes_dropped;
    return s;
  }

  std::size_t session_count() const
  {
    std::lock_guard lock(sessions_mutex_);
    return sessions_.size();
  }

  std::size_t inflight_count(const std::string& client_id) const
  {
    std::shared_ptr<Session> s;
    {
      std::lock_guard lock(sessions_mutex_);
      auto it = sessions_.find(client_id);
      if (it == sessions_.end()) return 0;
      s = it->second;
    }
    std::lock_guard lock(s->mutex);
    return s->inflight.size();
  }

  const SubscriptionTable& subscriptions() const { return subscriptions_; }

  void log(const std::string& line) const { emit(line); }

 private:
  struct AtomicStats {
    std::atomic<std::uint64_t> connects{0}, takeovers{0}, publishes_received{0}, deliveries{0},
        retransmissions{0}, expired{0}, pubacks_dropped{0}, publishes_dropped{0};
  };

  void emit(const std::string& line) const
  {
    if (log_) log_(line);
  }

  bool roll(double p)
  {
    if (p <= 0.0) return false;
    if (p >= 1.0) return true;
    std::lock_guard lock(rng_mutex_);
    return std::uniform_real_distribution<double>(0.0, 1.0)(rng_) < p;
  }

  bool authorized(const mqtt::Connect& c, std::uint8_t& rc) const
  {
    if (config_.users.empty()) return true;
    if (!c.username) {
      rc = mqtt::connack::kNotAuthorized;
      return false;
    }
    auto it = config_.users.find(*c.username);
    const std::string given = c.password ? to_string(*c.password) : std::string();
    if (it == config_.users.end() || !constant_time_equal(to_bytes(it->second), to_bytes(given))) {
      rc = mqtt::connack::kBadUsernameOrPassword;
      return false;
    }
    return true;
  }

  bool handle_connect(ConnectionState& cs, const mqtt::Connect& c, Clock::time_point now)
  {
    std::uint8_t rc = mqtt::connack::kAccepted;
    if (!authorized(c, rc)) {
      emit("event=auth_denied peer=" + cs.conn->peer() + " rc=" + std::to_string(rc));
      send_raw(*cs.conn, mqtt::Connack{false, rc});
      return false;
    }
    std::string client_id = c.client_id;
    if (client_id.empty()) {
      if (!c.clean_session) {
        send_raw(*cs.conn, mqtt::Connack{false, mqtt::connack::kIdentifierRejected});
        return false;
      }
      client_id = "auto-" + std::to_string(++auto_id_);
    }

    auto session = std::make_shared<Session>();
    session->client_id = client_id;
    session->conn = cs.conn;
    session->keep_alive_s = c.keep_alive_s;
    session->last_activity = now;

    std::shared_ptr<Session> old;
    {
      std::lock_guard lock(sessions_mutex_);
      auto& slot = sessions_[client_id];
      old = std::exchange(slot, session);
      if (old) subscriptions_.remove_client(client_id);
    }
    if (old) {
      ++stats_.takeovers;
      emit("event=takeover client=" + client_id);
      old->conn->close();
    }
    cs.session = session;
    ++stats_.connects;
    emit("event=connect client=" + client_id + " peer=" + cs.conn->peer() +
         " keep_alive=" + std::to_string(c.keep_alive_s));
    if (config_.faults.drop_connack) {
      emit("event=fault_drop_connack client=" + client_id);
      return true;
    }
    send_to(*session, mqtt::Connack{false, mqtt::connack::kAccepted});
    return true;
  }

  void handle_publish(Session& from, const mqtt::Publish& p, Clock::time_point now)
  {
    ++stats_.publishes_received;
    emit("event=publish client=" + from.client_id + " topic=" + p.topic +
         " qos=" + std::to_string(p.qos) + " dup=" + std::to_string(p.dup) +
         " packet_id=" + std::to_string(p.packet_id.value_or(0)) +
         " bytes=" + std::to_string(p.payload.size()));

    for (const auto& [client, sub_qos] : subscriptions_.match(p.topic)) {
      std::shared_ptr<Session> target;
      {
        std::lock_guard lock(sessions_mutex_);
        auto it = sessions_.find(client);
        if (it == sessions_.end()) continue;
        target = it->second;
      }
      deliver(*target, p, std::min(p.qos, sub_qos), now);
    }

    if (p.qos == 1) {
      const bool drop =
          dropped_outbound_pubacks_ < config_.faults.drop_first_outbound_pubacks ||
          roll(config_.faults.drop_outbound_puback_probability);
      if (drop) {
        ++dropped_outbound_pubacks_;
        emit("event=fault_drop_outbound_puback client=" + from.client_id +
             " packet_id=" + std::to_string(*p.packet_id));
        return;
      }
      send_to(from, mqtt::Puback{*p.packet_id});
    }
  }

  void deliver(Session& target, const mqtt::Publish& src, std::uint8_t qos, Clock::time_point now)
  {
    mqtt::Publish out{src.topic, std::nullopt, qos, false, false, src.payload};
    std::lock_guard lock(target.mutex);
    if (qos == 1) {
      if (target.inflight.size() >= 0xFFFF) {
        emit("event=drop client=" + target.client_id + " reason=inflight_full");
        return;
      }
      std::uint16_t id = target.next_packet_id;
      while (target.inflight.count(id)) id = static_cast<std::uint16_t>(id == 0xFFFF ? 1 : id + 1);
      target.next_packet_id = static_cast<std::uint16_t>(id == 0xFFFF ? 1 : id + 1);
      out.packet_id = id;
      target.inflight.emplace(id, InflightMessage{out, now, 0, now + config_.retransmit_interval});
    }
    ++stats_.deliveries;
    emit("event=deliver client=" + target.client_id + " topic=" + out.topic +
         " qos=" + std::to_string(qos) + " packet_id=" + std::to_string(out.packet_id.value_or(0)));
    write_publish(target, out);
  }

  void handle_puback(Session& s, const mqtt::Puback& p)
  {
    if (roll(config_.faults.drop_puback_probability)) {
      ++stats_.pubacks_dropped;
      emit("event=fault_drop_puback client=" + s.client_id +
           " packet_id=" + std::to_string(p.packet_id));
      return;
    }
    std::lock_guard lock(s.mutex);
    s.inflight.erase(p.packet_id);
  }

  void handle_subscribe(Session& s, const mqtt::Subscribe& sub)
  {
    mqtt::Suback ack{sub.packet_id, {}};
    for (const auto& t : sub.topics) {
      const std::uint8_t granted = std::min<std::uint8_t>(t.qos, 1);
      subscriptions_.add(s.client_id, t.filter, granted);
      ack.return_codes.push_back(granted);
      emit("event=subscribe client=" + s.client_id + " filter=" + t.filter +
           " qos=" + std::to_string(granted));
    }
    send_to(s, ack);
  }

  // Caller holds s.mutex when called from the retransmit path or deliver().
  void write_publish(Session& s, const mqtt::Publish& p)
  {
    if (roll(config_.faults.drop_publish_probability)) {
      ++stats_.publishes_dropped;
      emit("event=fault_drop_publish client=" + s.client_id +
           " packet_id=" + std::to_string(p.packet_id.value_or(0)));
      return;
    }
    send_raw(*s.conn, p);
  }

  void send_to(Session& s, const mqtt::Packet& p) { send_raw(*s.conn, p); }

  void send_raw(Connection& conn, const mqtt::Packet& p)
  {
    try {
      conn.send(mqtt::encode_packet(p));
    }
    catch (const ConnectionLost&) {
      // the connection's reader notices and cleans up
      conn.close();
    }
  }

  void end_session(ConnectionState& cs)
  {
    {
      std::lock_guard lock(sessions_mutex_);
      auto it = sessions_.find(cs.session->client_id);
      if (it != sessions_.end() && it->second == cs.session) {
        sessions_.erase(it);
        subscriptions_.remove_client(cs.session->client_id);
      }
    }
    {
      std::lock_guard lock(cs.session->mutex);
      cs.session->inflight.clear();
    }
    cs.session.reset();
  }

  std::vector<std::shared_ptr<Session>> snapshot_sessions() const
  {
    std::lock_guard lock(sessions_mutex_);
    std::vector<std::shared_ptr<Session>> out;
    out.reserve(sessions_.size());
    for (const auto& [id, s] : sessions_) out.push_back(s);
    return out;
  }

  BrokerConfig config_;
  LogSink log_;

  mutable std::mutex sessions_mutex_;
  std::map<std::string, std::shared_ptr<Session>> sessions_;
  SubscriptionTable subscriptions_;

  std::mutex rng_mutex_;
  std::mt19937_64 rng_;
  std::atomic<unsigned> dropped_outbound_pubacks_{0};
  std::atomic<std::uint64_t> auto_id_{0};
  AtomicStats stats_;
};

// TCP front end: one reader thread per connection plus a timer thread that
// drives retransmission and keep-alive expiry.
class Broker {
 public:
  explicit Broker(BrokerConfig config, LogSink log = {})
      : core_(std::move(config), std::move(log))
  {
  }
  ~Broker() { stop(); }
  Broker(const Broker&) = delete;
  Broker& operator=(const Broker&) = delete;

  // Binds and starts serving. With port 0 an ephemeral port is chosen; see
  // port().
  void start()
  {
    listener_ = std::make_unique<net::Listener>(core_.config().bind_address, core_.config().port);
    running_ = true;
    accept_thread_ = std::thread([this] { accept_loop(); });
    timer_thread_ = std::thread([this] { timer_loop(); });
  }

  void stop()
  {
    if (!running_.exchange(false)) return;
    if (accept_thread_.joinable()) accept_thread_.join();
    if (timer_thread_.joinable()) timer_thread_.join();
    std::list<Worker> workers;
    {
      std::lock_guard lock(workers_mutex_);
      workers.swap(workers_);
    }
    for (auto& w : workers) w.conn->close();
    for (auto& w : workers)
      if (w.thread.joinable()) w.thread.join();
    listener_.reset();
  }

  std::uint16_t port() const { return listener_ ? listener_->port() : 0; }
  BrokerCore& core() { return core_; }
  const BrokerCore& core() const { return core_; }

 private:
  class TcpConnection : public Connection {
   public:
    TcpConnection(net::Socket s, std::string peer) : sock_(std::move(s)), peer_(std::move(peer)) {}
    void send(const Bytes& frame) override
    {
      std::lock_guard lock(write_mutex_);
      if (closed_) throw ConnectionLost("connection closed");
      sock_.send_all(frame);
    }
    void close() override
    {
      if (!closed_.exchange(true)) sock_.shutdown();
    }
    std::string peer() const override { return peer_; }
    const net::Socket& socket() const { return sock_; }
    bool closed() const { return closed_; }

   private:
    net::Socket sock_;
    std::string peer_;
    std::mutex write_mutex_;
    std::atomic<bool> closed_{false};
  };

  struct Worker {
    std::shared_ptr<TcpConnection> conn;
    std::thread thread;
    std::shared_ptr<std::atomic<bool>> done;
  };

  void accept_loop()
  {
    while (running_) {
      std::string peer;
      net::Socket s = listener_->accept(std::chrono::milliseconds(50), &peer);
      reap_workers();
      if (!s.valid()) continue;
      auto conn = std::make_shared<TcpConnection>(std::move(s), peer);
      auto done = std::make_shared<std::atomic<bool>>(false);
      std::lock_guard lock(workers_mutex_);
      workers_.push_back(Worker{conn, std::thread([this, conn, done] {
                                  serve(conn);
                                  *done = true;
                                }),
                                done});
    }
  }

  void reap_workers()
  {
    std::lock_guard lock(workers_mutex_);
    for (auto it = workers_.begin(); it != workers_.end();) {
      if (*it->done) {
        it->thread.join();
        it = workers_.erase(it);
      }
      else {
        ++it;
      }
    }
  }

  void serve(const std::shared_ptr<TcpConnection>& conn)
  {
    ConnectionState cs;
    cs.conn = conn;
    mqtt::StreamDecoder decoder(core_.config().max_packet_size);
    std::vector<std::uint8_t> buf(64 * 1024);
    try {
      while (running_ && !conn->closed()) {
        const long n = conn->socket().recv_some(buf.data(), buf.size(), std::chrono::milliseconds(100));
        if (n == 0) break;
        if (n < 0) {
          if (!cs.session && Clock::now() - cs.opened_at > core_.config().connect_timeout) break;
          continue;
        }
        decoder.feed(ByteView(buf.data(), static_cast<std::size_t>(n)));
        bool keep = true;
        while (keep) {
          auto r = decoder.next();
          if (std::holds_alternative<mqtt::NeedMoreData>(r)) break;
          if (auto* e = std::get_if<mqtt::ProtocolError>(&r)) {
            log_protocol_error(cs, e->reason);
            keep = false;
            break;
          }
          keep = core_.handle_packet(cs, std::get<mqtt::Packet>(r), Clock::now());
        }
        if (!keep) break;
      }
    }
    catch (const ConnectionLost&) {
    }
    conn->close();
    core_.handle_connection_closed(cs);
  }

  void log_protocol_error(const ConnectionState& cs, const std::string& reason)
  {
    const std::string who =
        cs.session ? "client=" + cs.session->client_id : "peer=" + cs.conn->peer();
    core_.log("event=protocol_error " + who + " reason=\"" + reason + "\"");
  }

  void timer_loop()
  {
    while (running_) {
      std::this_thread::sleep_for(core_.config().tick_interval);
      const auto now = Clock::now();
      core_.retransmit_tick(now);
      core_.expire_idle(now);
    }
  }

  BrokerCore core_;
  std::unique_ptr<net::Listener> listener_;
  std::atomic<bool> running_{false};
  std::thread accept_thread_;
  std::thread timer_thread_;
  std::mutex workers_mutex_;
  std::list<Worker> workers_;
};

} // namespace secmqtt::broker
