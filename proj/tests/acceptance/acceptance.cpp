// End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
// exits non-zero if any criterion fails.

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <thread>

#include "../support/packet_gen.hpp"
#include "../support/test_util.hpp"
#include "secmqtt/bench.hpp"
#include "secmqtt/broker.hpp"
#include "secmqtt/client.hpp"
#include "secmqtt/kat.hpp"
#include "secmqtt/net/tcp.hpp"
#include "secmqtt/policy.hpp"

using namespace secmqtt;
using namespace std::chrono_literals;
namespace fs = std::filesystem;
using SteadyClock = std::chrono::steady_clock;

namespace {

// Collects failure reasons for one criterion.
struct Check {
  std::vector<std::string> failures;
  std::string detail;

  void expect(bool ok, const std::string& what)
  {
    if (!ok) failures.push_back(what);
  }
};

double seconds_since(SteadyClock::time_point t0)
{
  return std::chrono::duration<double>(SteadyClock::now() - t0).count();
}

std::string fmt_s(double s)
{
  std::ostringstream o;
  o << std::fixed << std::setprecision(2) << s << " s";
  return o.str();
}

template <typename Pred>
bool wait_until(Pred pred, std::chrono::milliseconds limit)
{
  const auto end = SteadyClock::now() + limit;
  while (!pred()) {
    if (SteadyClock::now() >= end) return false;
    std::this_thread::sleep_for(5ms);
  }
  return true;
}

struct Inbox {
  std::mutex mutex;
  std::vector<client::ReceivedMessage> messages;

  client::MessageHandler handler()
  {
    return [this](const client::ReceivedMessage& m) {
      std::lock_guard lock(mutex);
      messages.push_back(m);
    };
  }
  std::size_t size()
  {
    std::lock_guard lock(mutex);
    return messages.size();
  }
  std::vector<client::ReceivedMessage> snapshot()
  {
    std::lock_guard lock(mutex);
    return messages;
  }
};

// Plain MQTT subscriber that records PUBLISH payloads exactly as they
// arrive on the wire.
class WireTap {
 public:
  WireTap(std::uint16_t port, const std::string& filter)
  {
    sock_ = net::connect_tcp("127.0.0.1", port, 2000ms);
    mqtt::Connect c;
    c.client_id = "wiretap";
    sock_.send_all(mqtt::encode_packet(c));
    expect_packet<mqtt::Connack>();
    sock_.send_all(mqtt::encode_packet(mqtt::Subscribe{1, {{filter, 0}}}));
    expect_packet<mqtt::Suback>();
    reader_ = std::thread([this] { loop(); });
  }

  ~WireTap()
  {
    stop_ = true;
    sock_.shutdown();
    if (reader_.joinable()) reader_.join();
  }

  std::vector<mqtt::Publish> snapshot()
  {
    std::lock_guard lock(mutex_);
    return seen_;
  }

 private:
  template <typename T>
  void expect_packet()
  {
    for (int i = 0; i < 200; ++i) {
      auto r = decoder_.next();
      if (auto* p = std::get_if<mqtt::Packet>(&r)) {
        if (!std::holds_alternative<T>(*p)) throw Error("wiretap: unexpected packet");
        return;
      }
      if (std::holds_alternative<mqtt::ProtocolError>(r)) throw Error("wiretap: protocol error");
      std::uint8_t buf[4096];
      const long n = sock_.recv_some(buf, sizeof buf, 20ms);
      if (n > 0) decoder_.feed(ByteView(buf, static_cast<std::size_t>(n)));
      if (n == 0) throw Error("wiretap: closed");
    }
    throw Error("wiretap: timeout");
  }

  void loop()
  {
    std::uint8_t buf[65536];
    while (!stop_) {
      long n = 0;
      try {
        n = sock_.recv_some(buf, sizeof buf, 50ms);
      }
      catch (const Error&) {
        return;
      }
      if (n == 0) return;
      if (n < 0) continue;
      decoder_.feed(ByteView(buf, static_cast<std::size_t>(n)));
      for (;;) {
        auto r = decoder_.next();
        auto* p = std::get_if<mqtt::Packet>(&r);
        if (!p) break;
        if (auto* pub = std::get_if<mqtt::Publish>(p)) {
          std::lock_guard lock(mutex_);
          seen_.push_back(*pub);
        }
      }
    }
  }

  net::Socket sock_;
  mqtt::StreamDecoder decoder_;
  std::thread reader_;
  std::atomic<bool> stop_{false};
  std::mutex mutex_;
  std::vector<mqtt::Publish> seen_;
};

std::unique_ptr<broker::Broker> start_broker(broker::BrokerConfig cfg, LogSink log = {})
{
  cfg.bind_address = "127.0.0.1";
  cfg.port = 0;
  auto b = std::make_unique<broker::Broker>(cfg, std::move(log));
  b->start();
  return b;
}

client::ClientConfig client_config(std::uint16_t port, const std::string& id,
                                   std::shared_ptr<SecurityContext> security)
{
  client::ClientConfig c;
  c.port = port;
  c.client_id = id;
  c.security = std::move(security);
  c.ack_timeout = 1000ms;
  c.max_publish_retries = 5;
  return c;
}

std::string slurp(const fs::path& p)
{
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

std::vector<std::string> split(const std::string& s, char sep)
{
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    }
    else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> data_lines(const std::string& text)
{
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);)
    if (!l.empty() && l[0] != '#') out.push_back(l);
  return out;
}

// ---- 1 --------------------------------------------------------------------

Check ascon_kat()
{
  Check c;
  const auto t0 = SteadyClock::now();
  const auto records = kat::parse_file(secmqtt::testing::data_path("ascon128_kat.txt"));
  const auto rep = kat::verify_ascon(records);
  const double secs = seconds_since(t0);
  c.expect(rep.total == 1089, "expected 1089 records, got " + std::to_string(rep.total));
  c.expect(rep.ok(), std::to_string(rep.failures.size()) + " record(s) failed");
  c.expect(secs < 5.0, "runtime " + fmt_s(secs));
  c.detail = std::to_string(rep.passed) + "/" + std::to_string(rep.total) + " records in " + fmt_s(secs);
  return c;
}

// ---- 2 --------------------------------------------------------------------

Check gcm_vectors()
{
  Check c;
  auto records = kat::parse_file(secmqtt::testing::data_path("gcm_vectors.txt"));
  const auto extra = kat::parse_file(secmqtt::testing::data_path("gcm_extra.txt"));
  records.insert(records.end(), extra.begin(), extra.end());
  const auto rep = kat::verify_gcm(records);
  c.expect(rep.ok(), std::to_string(rep.failures.size()) + " vector(s) failed");

  bool empty_pt = false, non96_iv = false;
  for (const auto& r : records) {
    empty_pt |= r.at("PT").empty();
    non96_iv |= r.at("IV").size() != 24;
  }
  c.expect(empty_pt, "no empty-plaintext vector");
  c.expect(non96_iv, "no non-96-bit IV vector");

  // fixed 16-byte key/IV configuration through the envelope layer
  auto ctx = SecurityContext::paper_compat();
  const std::string v(kPaperCompatVector);
  bool roundtrip = true;
  for (std::size_t size = 2; size <= 4096; size *= 2) {
    const Bytes pt(size, 'X');
    const auto env = seal(ctx, CipherId::Aes128Gcm, "bench", pt);
    const auto direct = aes_gcm::encrypt(to_bytes(v), to_bytes(v), {}, pt);
    roundtrip &= env.ciphertext == direct.ciphertext && env.tag == direct.tag &&
                 open(ctx, "bench", env) == pt;
  }
  c.expect(roundtrip, "16-byte-IV configuration did not round-trip");
  c.detail = std::to_string(rep.passed) + "/" + std::to_string(rep.total) +
             " vectors, empty PT and non-96-bit IV present, 16-byte IV config round-trips";
  return c;
}

// ---- 3 --------------------------------------------------------------------

// Reference encoder: low 7 bits first, continuation bit on all but the last.
Bytes oracle_remaining_length(std::uint64_t x)
{
  Bytes out;
  do {
    std::uint8_t b = static_cast<std::uint8_t>(x % 128);
    x /= 128;
    if (x > 0) b |= 128;
    out.push_back(b);
  } while (x > 0);
  return out;
}

Check codec()
{
  Check c;
  std::mt19937_64 rng(20240611);
  constexpr std::size_t kPerVariant = 1000;
  std::size_t failures = 0;
  std::map<std::size_t, std::size_t> seen;
  for (std::size_t i = 0; i < kPerVariant * secmqtt::testing::kPacketVariants; ++i) {
    const std::size_t variant = i % secmqtt::testing::kPacketVariants;
    const auto packet = secmqtt::testing::random_packet(rng, variant);
    const Bytes wire = mqtt::encode_packet(packet);
    const auto r = mqtt::decode_packet(wire);
    const auto* d = std::get_if<mqtt::Decoded>(&r);
    if (!d || d->consumed != wire.size() || !(d->packet == packet) || mqtt::encode_packet(d->packet) != wire)
      ++failures;
    ++seen[packet.index()];
  }
  c.expect(failures == 0, std::to_string(failures) + " packet(s) did not round-trip");
  for (std::size_t v = 0; v < secmqtt::testing::kPacketVariants; ++v)
    c.expect(seen[v] >= kPerVariant, "variant " + std::to_string(v) + " under-sampled");

  const std::uint32_t bounds[] = {0, 127, 128, 16383, 16384, 2097151, 2097152, 268435455};
  const std::size_t lengths[] = {1, 1, 2, 2, 3, 3, 4, 4};
  for (std::size_t i = 0; i < std::size(bounds); ++i) {
    const Bytes expect = oracle_remaining_length(bounds[i]);
    const Bytes got = mqtt::encode_remaining_length(bounds[i]);
    c.expect(got == expect && got.size() == lengths[i], "encode mismatch at " + std::to_string(bounds[i]));
    const auto r = mqtt::decode_remaining_length(expect);
    const auto* rl = std::get_if<mqtt::RemainingLength>(&r);
    c.expect(rl && rl->value == bounds[i] && rl->consumed == expect.size(),
             "decode mismatch at " + std::to_string(bounds[i]));
  }
  bool rejects_over = false;
  try {
    mqtt::encode_remaining_length(268435456u);
  }
  catch (const InvalidPacket&) {
    rejects_over = true;
  }
  c.expect(rejects_over, "268435456 accepted");

  c.detail = std::to_string(kPerVariant) + " packets x " + std::to_string(secmqtt::testing::kPacketVariants) +
             " variants, 8 remaining-length boundaries";
  return c;
}

// ---- 4 --------------------------------------------------------------------

Check at_least_once()
{
  Check c;
  const auto t0 = SteadyClock::now();
  broker::BrokerConfig bc;
  bc.retransmit_interval = 50ms;
  bc.max_retries = 10;
  bc.tick_interval = 10ms;
  bc.faults.drop_puback_probability = 0.3;
  bc.faults.seed = 42;
  auto b = start_broker(bc);

  auto security = std::make_shared<SecurityContext>(Key128::from(std::string_view("acceptance-key-4")));
  client::Client sub(client_config(b->port(), "sub", security));
  sub.connect();
  Inbox inbox;
  sub.subscribe_secure("ward/+/hr", inbox.handler(), std::uint8_t{1});
  client::Client pub(client_config(b->port(), "pub", security));
  pub.connect();

  constexpr int kMessages = 100;
  for (int i = 0; i < kMessages; ++i) pub.publish_secure("ward/7/hr", to_bytes("reading-" + std::to_string(i)));

  wait_until(
      [&] {
        std::set<Bytes> distinct;
        for (const auto& m : inbox.snapshot()) distinct.insert(m.plaintext);
        return distinct.size() == kMessages && b->core().inflight_count("sub") == 0;
      },
      50s);

  const auto got = inbox.snapshot();
  std::set<Bytes> distinct;
  std::size_t redeliveries = 0, redeliveries_with_dup = 0, dup_flags = 0;
  for (const auto& m : got) {
    dup_flags += m.dup;
    if (!distinct.insert(m.plaintext).second) {
      ++redeliveries;
      redeliveries_with_dup += m.dup;
    }
  }
  const auto stats = b->core().stats();
  c.expect(distinct.size() == kMessages, std::to_string(distinct.size()) + "/100 delivered");
  c.expect(redeliveries == redeliveries_with_dup, "a redelivery arrived without dup");
  c.expect(stats.retransmissions > 0, "no PUBACK was dropped, fault injection inactive");
  c.expect(dup_flags == stats.retransmissions, "dup-flagged arrivals " + std::to_string(dup_flags) +
                                                   " != retransmissions " + std::to_string(stats.retransmissions));
  c.expect(stats.expired == 0, "broker gave up on " + std::to_string(stats.expired) + " message(s)");
  const double secs = seconds_since(t0);
  c.expect(secs < 60.0, "runtime " + fmt_s(secs));
  c.detail = std::to_string(distinct.size()) + "/100 delivered, " + std::to_string(stats.retransmissions) +
             " redeliveries all dup=1, " + fmt_s(secs);
  pub.disconnect();
  sub.disconnect();
  b->stop();
  return c;
}

// ---- 5 --------------------------------------------------------------------

Check end_to_end()
{
  Check c;
  auto b = start_broker({});
  std::mt19937_64 rng(5);
  auto security = std::make_shared<SecurityContext>(secmqtt::testing::random_fixed<Key128>(rng));

  auto sub_cfg = client_config(b->port(), "sub", security);
  sub_cfg.accept_plaintext = true;
  client::Client sub(sub_cfg);
  sub.connect();
  Inbox inbox;
  sub.subscribe_secure("e2e/#", inbox.handler());
  WireTap tap(b->port(), "leak/#");
  client::Client pub(client_config(b->port(), "pub", security));
  pub.connect();

  // identity for every cipher and size
  std::vector<std::pair<std::string, Bytes>> sent;
  for (auto cipher : {CipherId::None, CipherId::Aes128Gcm, CipherId::Ascon128}) {
    for (std::size_t size = 2; size <= 4096; size *= 2) {
      const std::string topic = "e2e/" + std::string(cipher_name(cipher)) + "/" + std::to_string(size);
      Bytes pt = secmqtt::testing::random_bytes(rng, size);
      pub.publish_secure(topic, pt, cipher);
      sent.emplace_back(topic, std::move(pt));
    }
  }
  wait_until([&] { return inbox.size() >= sent.size(); }, 10s);
  const auto got = inbox.snapshot();
  std::size_t identical = 0;
  for (std::size_t i = 0; i < got.size() && i < sent.size(); ++i)
    identical += got[i].topic == sent[i].first && got[i].plaintext == sent[i].second;
  c.expect(got.size() == sent.size() && identical == sent.size(),
           std::to_string(identical) + "/" + std::to_string(sent.size()) + " identical");

  // no 16-byte run of 'X' on the wire
  for (auto cipher : {CipherId::Aes128Gcm, CipherId::Ascon128})
    pub.publish_secure("leak/" + std::string(cipher_name(cipher)), Bytes(64, 'X'), cipher);
  wait_until([&] { return tap.snapshot().size() >= 2; }, 5s);
  const auto wire = tap.snapshot();
  c.expect(wire.size() == 2, "wire tap saw " + std::to_string(wire.size()) + " publish(es)");
  for (const auto& p : wire) {
    const auto run = secmqtt::testing::longest_run(p.payload, 'X');
    c.expect(run < 16, p.topic + " has a " + std::to_string(run) + "-byte 0x58 run");
  }

  // single-bit tampering: every bit of each envelope
  auto tamper_cfg = client_config(b->port(), "tamper-sub", security);
  tamper_cfg.qos = 0;
  client::Client tsub(tamper_cfg);
  tsub.connect();
  Inbox tinbox;
  tsub.subscribe_secure("tamper/#", tinbox.handler(), std::uint8_t{0});
  SecurityContext attacker_copy(*security);
  std::size_t tampered = 0;
  for (auto cipher : {CipherId::Aes128Gcm, CipherId::Ascon128}) {
    const Bytes good = seal_to_wire(*security, cipher, "tamper/t", Bytes(24, 'X'));
    for (std::size_t bit = 0; bit < good.size() * 8; ++bit) {
      Bytes w = good;
      w[bit / 8] ^= static_cast<std::uint8_t>(1u << (bit % 8));
      pub.publish_raw("tamper/t", w, 0);
      ++tampered;
    }
  }
  pub.publish_secure("tamper/t", to_bytes("sentinel"), CipherId::Ascon128);
  wait_until([&] { return tinbox.size() >= 1 && tsub.stats().auth_failures >= tampered; }, 10s);
  std::this_thread::sleep_for(100ms);
  const auto tgot = tinbox.snapshot();
  c.expect(tgot.size() == 1 && tgot[0].plaintext == to_bytes("sentinel"),
           std::to_string(tgot.size() - std::min<std::size_t>(tgot.size(), 1)) + " tampered message(s) delivered");
  c.expect(tsub.stats().auth_failures == tampered, "auth failures " + std::to_string(tsub.stats().auth_failures) +
                                                       " != tampered " + std::to_string(tampered));

  c.detail = std::to_string(identical) + "/" + std::to_string(sent.size()) +
             " identical, no 0x58 run >= 16 on the wire, 0/" + std::to_string(tampered) +
             " bit-flipped envelopes delivered";
  tsub.disconnect();
  pub.disconnect();
  sub.disconnect();
  b->stop();
  return c;
}

// ---- 6 --------------------------------------------------------------------

std::int64_t parse_us(const std::string& ms)
{
  // "%.3f" milliseconds are whole microseconds
  const auto dot = ms.find('.');
  if (dot == std::string::npos || ms.size() - dot != 4) throw MalformedInput("bad ms field " + ms);
  return std::stoll(ms.substr(0, dot)) * 1000 + std::stoll(ms.substr(dot + 1));
}

std::string us_to_ms(std::int64_t us)
{
  char buf[32];
  std::snprintf(buf, sizeof buf, "%lld.%03lld", static_cast<long long>(us / 1000),
                static_cast<long long>(us % 1000));
  return buf;
}

// Nearest integer to sqrt(num/den), halves rounding up, by bisection.
std::int64_t rounded_sqrt_ratio(__int128 num, __int128 den)
{
  // k is the answer iff (k - 1/2)^2 <= num/den, i.e. (2k-1)^2 den <= 4 num
  std::int64_t lo = 0, hi = 1;
  while ((__int128)(2 * hi - 1) * (2 * hi - 1) * den <= 4 * num) hi *= 2;
  while (hi - lo > 1) {
    const std::int64_t mid = lo + (hi - lo) / 2;
    if ((__int128)(2 * mid - 1) * (2 * mid - 1) * den <= 4 * num)
      lo = mid;
    else
      hi = mid;
  }
  return lo;
}

struct Cell {
  std::vector<std::int64_t> us;
};

Check bench_shape(const fs::path& out_dir, std::vector<MrttRecord>& records_out)
{
  Check c;
  const auto t0 = SteadyClock::now();
  bench::BenchConfig cfg;
  const auto result = bench::run_bench(cfg, {});
  bench::export_csv(result.samples, result.records, out_dir, result.aborted);
  const double secs = seconds_since(t0);
  records_out = result.records;
  c.expect(!result.aborted, "run aborted: " + result.aborted.value_or(""));

  const auto agg = data_lines(slurp(out_dir / "mrtt.csv"));
  const auto raw = data_lines(slurp(out_dir / "rtt_raw.csv"));
  c.expect(!agg.empty() && agg[0] == "cipher,message_size_bytes,mrtt_ms,min_ms,max_ms,stddev_ms,n",
           "aggregated header");
  c.expect(!raw.empty() && raw[0] == "cipher,message_size_bytes,iteration,rtt_ms,valid", "raw header");
  c.expect(agg.size() == 1 + 3 * 12, "aggregated rows " + std::to_string(agg.size() - 1));
  c.expect(raw.size() == 1 + 3 * 12 * 10, "raw rows " + std::to_string(raw.size() - 1));

  std::map<std::pair<std::string, std::string>, Cell> cells;
  for (std::size_t i = 1; i < raw.size(); ++i) {
    const auto f = split(raw[i], ',');
    if (f.size() != 5) {
      c.expect(false, "raw line " + std::to_string(i));
      continue;
    }
    auto& cell = cells[{f[0], f[1]}];
    c.expect(f[4] == "true" || f[4] == "false", "raw valid field '" + f[4] + "'");
    if (f[4] == "true") cell.us.push_back(parse_us(f[3]));
  }
  std::size_t matched = 0;
  for (std::size_t i = 1; i < agg.size(); ++i) {
    const auto f = split(agg[i], ',');
    if (f.size() != 7) {
      c.expect(false, "aggregated line " + std::to_string(i));
      continue;
    }
    const auto& v = cells[{f[0], f[1]}].us;
    const auto n = static_cast<std::int64_t>(v.size());
    std::vector<std::string> expect(5, "nan");
    if (n > 0) {
      std::int64_t sum = 0;
      __int128 sumsq = 0;
      for (auto x : v) {
        sum += x;
        sumsq += (__int128)x * x;
      }
      expect[0] = us_to_ms((2 * sum + n) / (2 * n));
      expect[1] = us_to_ms(*std::min_element(v.begin(), v.end()));
      expect[2] = us_to_ms(*std::max_element(v.begin(), v.end()));
      if (n > 1) expect[3] = us_to_ms(rounded_sqrt_ratio((__int128)n * sumsq - (__int128)sum * sum, (__int128)n * (n - 1)));
    }
    expect[4] = std::to_string(n);
    const std::vector<std::string> got(f.begin() + 2, f.end());
    if (got == expect)
      ++matched;
    else
      c.expect(false, f[0] + "/" + f[1] + ": got " + agg[i]);
  }
  c.expect(matched == 36, std::to_string(matched) + "/36 cells recomputed exactly");
  c.expect(secs < 600, "runtime " + fmt_s(secs));
  c.detail = std::to_string(agg.size() - 1) + " aggregated, " + std::to_string(raw.size() - 1) + " raw rows, " +
             std::to_string(matched) + "/36 cells recomputed exactly, " + fmt_s(secs);
  return c;
}

// ---- 7 --------------------------------------------------------------------

MrttRecord rec(const std::string& cipher, std::size_t size, double mrtt)
{
  return MrttRecord{cipher, size, mrtt, mrtt, mrtt, 0.0, 10};
}

// Scan sizes in ascending order; stop at the first size where ascon is slower.
policy::Calibration brute_force(const std::vector<std::size_t>& grid, const std::vector<double>& ascon,
                                const std::vector<double>& aes, std::size_t fallback)
{
  std::size_t last_win = 0;
  bool any = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (ascon[i] > aes[i]) break;
    last_win = grid[i];
    any = true;
  }
  if (!any) return {fallback, policy::CalibrationOutcome::NoCrossover};
  if (last_win == grid.back()) return {last_win, policy::CalibrationOutcome::AsconWinsEverywhere};
  return {last_win, policy::CalibrationOutcome::Crossover};
}

Check pei_and_calibration()
{
  Check c;
  const std::vector<MrttRecord> fixture{rec("none", 64, 100.0), rec("aes", 64, 120.0), rec("ascon", 64, 10.0),
                                        rec("none", 128, 110.0), rec("aes", 128, 110.0),
                                        rec("ascon", 128, 10.0)};
  const double p64 = policy::compute_pei(fixture, 64);
  const double p128 = policy::compute_pei(fixture, 128);
  c.expect(p64 == 11.0, "pei(64) = " + std::to_string(p64));
  c.expect(p128 == 11.0, "pei(128) = " + std::to_string(p128));
  const std::vector<MrttRecord> two{rec("aes", 8, 16.0), rec("ascon", 8, 2.0), rec("aes", 16, 4.0),
                                    rec("ascon", 16, 2.0)};
  c.expect(policy::compute_pei(two, 8) == 8.0, "pei 16/2 != 8");
  c.expect(policy::compute_pei(two, 16) == 2.0, "pei 4/2 != 2");

  std::mt19937_64 rng(77);
  std::map<policy::CalibrationOutcome, int> outcomes;
  int mismatches = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t n = 1 + rng() % 12;
    std::vector<std::size_t> grid;
    for (std::size_t i = 0; i < n; ++i) grid.push_back(std::size_t{2} << i);
    std::vector<double> ascon(n), aes(n);
    std::vector<MrttRecord> records;
    for (std::size_t i = 0; i < n; ++i) {
      ascon[i] = 1.0 + static_cast<double>(rng() % 100);
      // bias towards ascon winning early so all outcomes show up
      const double bias = i < n / 2 ? 40.0 : -40.0;
      aes[i] = std::max(1.0, ascon[i] + bias + static_cast<double>(static_cast<int>(rng() % 81) - 40));
      if (rng() % 10 == 0) aes[i] = ascon[i];
      records.push_back(rec("ascon", grid[i], ascon[i]));
      records.push_back(rec("aes", grid[i], aes[i]));
      records.push_back(rec("none", grid[i], 1.0));
    }
    std::shuffle(records.begin(), records.end(), rng);
    const auto expect = brute_force(grid, ascon, aes, 2048);
    const auto got = policy::calibrate_threshold(records, 2048);
    mismatches += !(got == expect);
    ++outcomes[expect.outcome];
  }
  c.expect(mismatches == 0, std::to_string(mismatches) + "/1000 calibration mismatches");
  c.expect(outcomes.size() == 3, "not every calibration outcome was exercised");
  c.detail = "pei 110/10 = 11, 16/2 = 8, 4/2 = 2 exact; calibration " + std::to_string(1000 - mismatches) +
             "/1000 agree with brute force";
  return c;
}

// ---- 8 --------------------------------------------------------------------

Check report_shape(const fs::path& out_dir, const std::vector<MrttRecord>& records)
{
  Check c;
  const auto plots = bench::emit_plot_data(records, out_dir, {});
  const auto mrtt = data_lines(slurp(plots.mrtt));
  c.expect(mrtt.size() == 12, "mrtt series has " + std::to_string(mrtt.size()) + " rows");
  for (const auto& l : mrtt) {
    std::istringstream in(l);
    std::vector<std::string> cols;
    for (std::string t; in >> t;) cols.push_back(t);
    c.expect(cols.size() == 4, "mrtt row '" + l + "'");
  }
  c.expect(plots.pei.has_value(), "no PEI series");
  if (plots.pei) {
    const auto pei = data_lines(slurp(*plots.pei));
    c.expect(pei.size() == 12, "pei series has " + std::to_string(pei.size()) + " rows");
    for (const auto& l : pei) {
      std::istringstream in(l);
      std::size_t size = 0;
      double value = 0;
      in >> size >> value;
      char expect[32];
      std::snprintf(expect, sizeof expect, "%.6f", policy::compute_pei(records, size));
      std::ostringstream got;
      got << size << ' ' << expect;
      c.expect(in && value > 0 && l == got.str(), "pei row '" + l + "'");
    }
  }
  c.detail = "absolute MRTTs and PEI ratios from a dedicated 5G testbed are not reproducible on a desktop "
             "loopback; structural properties are asserted above and mrtt_vs_size.dat / pei_vs_size.dat "
             "are emitted for plotting in any environment";
  return c;
}

} // namespace

int main()
{
  const fs::path out_dir = fs::temp_directory_path() / ("secmqtt-acceptance-" + std::to_string(::getpid()));
  fs::remove_all(out_dir);
  std::vector<MrttRecord> records;

  const std::vector<std::pair<std::string, std::function<Check()>>> criteria{
      {"ASCON-128 known-answer tests", ascon_kat},
      {"AES-128-GCM vectors", gcm_vectors},
      {"MQTT codec round-trip", codec},
      {"at-least-once delivery under PUBACK loss", at_least_once},
      {"end-to-end confidentiality and integrity", end_to_end},
      {"benchmark shape and aggregation", [&] { return bench_shape(out_dir, records); }},
      {"PEI and threshold calibration", pei_and_calibration},
      {"reproducibility statement and report series", [&] { return report_shape(out_dir, records); }},
  };

  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Check c;
    try {
      c = criteria[i].second();
    }
    catch (const std::exception& e) {
      c.failures.push_back(std::string("exception: ") + e.what());
    }
    const bool ok = c.failures.empty();
    failed += !ok;
    std::cout << (ok ? "PASS " : "FAIL ") << i + 1 << " " << criteria[i].first;
    if (!c.detail.empty()) std::cout << ": " << c.detail;
    std::cout << "\n";
    for (std::size_t k = 0; k < c.failures.size() && k < 10; ++k) std::cout << "    " << c.failures[k] << "\n";
    std::cout.flush();
  }
  fs::remove_all(out_dir);
  return failed == 0 ? 0 : 1;
}
