// secmqtt: broker, publish/subscribe client, benchmark, KAT check and policy
// calibration behind one command.

#include <csignal>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <mutex>
#include <thread>

#include <CLI11.hpp>

#include "secmqtt/bench.hpp"
#include "secmqtt/broker.hpp"
#include "secmqtt/client.hpp"
#include "secmqtt/kat.hpp"
#include "secmqtt/policy.hpp"

using namespace secmqtt;
using namespace std::chrono_literals;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

std::atomic<bool> g_stop{false};

extern "C" void on_signal(int) { g_stop = true; }

struct UsageError : Error {
  using Error::Error;
};

std::string trim_ws(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  return std::string(s.substr(b, s.find_last_not_of(" \t\r\n") - b + 1));
}

LogSink stderr_log(bool quiet)
{
  if (quiet) return {};
  static std::mutex mu;
  return [](const std::string& line) {
    const auto now = std::chrono::system_clock::now();
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    std::lock_guard lock(mu);
    std::cerr << "ts=" << ms / 1000 << '.' << std::setw(3) << std::setfill('0') << ms % 1000 << ' ' << line
              << '\n';
  };
}

std::string read_text_file(const std::string& path)
{
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open " + path);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

// Keys are 32 hex digits (surrounding whitespace ignored) or 16 raw bytes.
Key128 parse_key_material(const std::string& raw, const std::string& source)
{
  const std::string hex = trim_ws(raw);
  if (hex.size() == 32 && hex.find_first_not_of("0123456789abcdefABCDEF") == std::string::npos)
    return Key128::from(ByteView(from_hex(hex)));
  if (raw.size() == Key128::size) return Key128::from(ByteView(to_bytes(raw)));
  throw UsageError(source + ": expected a 128-bit key as 32 hex digits");
}

std::optional<Key128> load_key(const std::string& key_file)
{
  if (!key_file.empty()) return parse_key_material(read_text_file(key_file), key_file);
  if (const char* env = std::getenv("SECMQTT_KEY"); env && *env) return parse_key_material(env, "SECMQTT_KEY");
  return std::nullopt;
}

std::pair<std::string, std::uint16_t> split_host_port(const std::string& s)
{
  const auto colon = s.rfind(':');
  if (colon == std::string::npos) return {s, 1883};
  const std::string port = s.substr(colon + 1);
  if (port.empty() || port.find_first_not_of("0123456789") != std::string::npos || std::stoul(port) > 65535)
    throw UsageError("bad port in '" + s + "'");
  return {s.substr(0, colon), static_cast<std::uint16_t>(std::stoul(port))};
}

// ---- shared client options -------------------------------------------------

struct ClientOptions {
  std::string broker = "127.0.0.1:1883";
  std::string client_id;
  std::uint16_t keep_alive = 60;
  std::string cipher = "ascon";
  int qos = 1;
  std::string key_file;
  bool paper_compat = false;
  std::string username;
  std::string password_file;
  int ack_timeout_ms = 2000;
  unsigned max_retries = 3;
  std::size_t threshold = policy::kDefaultThreshold;

  void add_to(CLI::App* app, bool with_cipher)
  {
    app->add_option("--broker", broker, "Broker address as host[:port]");
    app->add_option("--client-id", client_id, "MQTT client identifier (empty lets the broker pick)");
    app->add_option("--keep-alive", keep_alive, "Keep-alive interval in seconds (0 disables)");
    if (with_cipher) {
      app->add_option("--cipher", cipher, "Payload cipher; auto picks by size")
          ->check(CLI::IsMember({"none", "aes", "ascon", "auto"}));
      app->add_option("--threshold", threshold, "Size threshold in bytes for --cipher auto")
          ->check(CLI::PositiveNumber);
    }
    app->add_option("--qos", qos, "MQTT QoS level")->check(CLI::Range(0, 1));
    app->add_option("--key-file", key_file, "File holding the 128-bit key as hex (else $SECMQTT_KEY)");
    app->add_flag("--paper-compat", paper_compat, "Use the fixed reference key, nonce and associated data");
    app->add_option("--username", username, "Username sent in CONNECT");
    app->add_option("--password-file", password_file, "File holding the password sent in CONNECT");
    app->add_option("--ack-timeout-ms", ack_timeout_ms, "Wait per attempt for PUBACK/SUBACK")
        ->check(CLI::PositiveNumber);
    app->add_option("--max-retries", max_retries, "QoS 1 resends before giving up");
  }

  client::ClientConfig build(bool needs_key) const
  {
    client::ClientConfig c;
    std::tie(c.host, c.port) = split_host_port(broker);
    c.client_id = client_id;
    c.keep_alive_s = keep_alive;
    c.qos = static_cast<std::uint8_t>(qos);
    c.ack_timeout = std::chrono::milliseconds(ack_timeout_ms);
    c.max_publish_retries = max_retries;
    if (!username.empty()) c.username = username;
    if (!password_file.empty()) c.password = trim_ws(read_text_file(password_file));

    if (paper_compat) {
      c.security = std::make_shared<SecurityContext>(SecurityContext::paper_compat());
    }
    else if (auto key = load_key(key_file)) {
      c.security = std::make_shared<SecurityContext>(*key);
    }
    else if (needs_key) {
      throw UsageError("a key is required: use --key-file, $SECMQTT_KEY or --paper-compat");
    }
    else {
      // plaintext only; the key is never used
      c.security = std::make_shared<SecurityContext>(Key128{});
    }

    if (cipher == "auto") {
      policy::PolicyConfig p;
      p.size_threshold_bytes = threshold;
      c.policy = p;
    }
    else {
      c.cipher = *parse_cipher(cipher);
    }
    return c;
  }
};

// ---- broker ----------------------------------------------------------------

struct BrokerOptions {
  std::string bind = "0.0.0.0";
  std::uint16_t port = 1883;
  int retransmit_ms = 2000;
  unsigned max_retries = 10;
  double keep_alive_factor = 1.5;
  std::string users_file;
  double duration_s = 0;
  std::uint64_t fault_seed = 1;
  double fault_drop_puback = 0;
  double fault_drop_publish = 0;
  double fault_drop_outbound_puback = 0;
  bool fault_drop_connack = false;
};

std::map<std::string, std::string> load_users(const std::string& path)
{
  std::map<std::string, std::string> users;
  std::istringstream in(read_text_file(path));
  std::string line;
  for (int no = 1; std::getline(in, line); ++no) {
    line = kat::trim(line);
    if (line.empty() || line[0] == '#') continue;
    const auto colon = line.find(':');
    if (colon == std::string::npos || colon == 0)
      throw UsageError(path + ":" + std::to_string(no) + ": expected user:password");
    users[line.substr(0, colon)] = line.substr(colon + 1);
  }
  return users;
}

int run_broker(const BrokerOptions& o, const LogSink& log)
{
  broker::BrokerConfig cfg;
  cfg.bind_address = o.bind;
  cfg.port = o.port;
  cfg.retransmit_interval = std::chrono::milliseconds(o.retransmit_ms);
  cfg.max_retries = o.max_retries;
  cfg.keep_alive_factor = o.keep_alive_factor;
  if (!o.users_file.empty()) cfg.users = load_users(o.users_file);
  cfg.faults.seed = o.fault_seed;
  cfg.faults.drop_puback_probability = o.fault_drop_puback;
  cfg.faults.drop_publish_probability = o.fault_drop_publish;
  cfg.faults.drop_outbound_puback_probability = o.fault_drop_outbound_puback;
  cfg.faults.drop_connack = o.fault_drop_connack;

  broker::Broker b(cfg, log);
  b.start();
  if (log) {
    log("event=listening bind=" + o.bind + " port=" + std::to_string(b.port()) +
        (cfg.faults.active() ? " faults=on" : ""));
  }
  // Scripts binding port 0 read the chosen port from stdout.
  std::cout << "listening " << o.bind << ":" << b.port() << std::endl;
  const auto end = std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(o.duration_s));
  while (!g_stop && (o.duration_s <= 0 || std::chrono::steady_clock::now() < end)) std::this_thread::sleep_for(50ms);
  b.stop();
  const auto s = b.core().stats();
  if (log) {
    log("event=shutdown connects=" + std::to_string(s.connects) + " publishes=" +
        std::to_string(s.publishes_received) + " deliveries=" + std::to_string(s.deliveries) +
        " retransmissions=" + std::to_string(s.retransmissions) + " dropped=" + std::to_string(s.expired));
  }
  return kExitOk;
}

// ---- publish / subscribe ---------------------------------------------------

struct PublishOptions {
  ClientOptions client;
  std::string topic;
  std::string message;
  std::string file;
  std::size_t size = 0;
  unsigned count = 1;
  int interval_ms = 0;
};

int run_publish(const PublishOptions& o, const LogSink& log)
{
  if (o.topic.empty()) throw UsageError("--topic is required");
  if (!mqtt::valid_topic_name(o.topic)) throw UsageError("invalid topic name '" + o.topic + "'");
  const int sources = !o.message.empty() + !o.file.empty() + (o.size > 0);
  if (sources != 1) throw UsageError("give exactly one of --message, --file, --size");
  const Bytes payload = !o.message.empty() ? to_bytes(o.message)
                        : !o.file.empty()  ? to_bytes(read_text_file(o.file))
                                           : bench::generate_payload(o.size);

  auto cfg = o.client.build(o.client.cipher != "none");
  client::Client c(cfg, log);
  c.connect();
  for (unsigned i = 0; i < o.count && !g_stop; ++i) {
    if (i && o.interval_ms > 0) std::this_thread::sleep_for(std::chrono::milliseconds(o.interval_ms));
    const auto r = c.publish_secure(o.topic, payload);
    std::cout << "published topic=" << o.topic << " bytes=" << payload.size() << " cipher=" << cipher_name(r.cipher)
              << " qos=" << o.client.qos;
    if (r.packet_id) std::cout << " packet_id=" << *r.packet_id << " retries=" << r.retries;
    if (r.acked_at) std::cout << " ack_ms=" << bench::detail::fmt3(bench::to_ms(*r.acked_at - r.sent_at));
    std::cout << std::endl;
  }
  c.disconnect();
  return kExitOk;
}

struct SubscribeOptions {
  ClientOptions client;
  std::string filter;
  unsigned count = 0;
  double timeout_s = 0;
  bool hex = false;
  bool accept_plaintext = false;
};

int run_subscribe(const SubscribeOptions& o, const LogSink& log)
{
  if (o.filter.empty()) throw UsageError("--filter is required");
  if (!mqtt::valid_topic_filter(o.filter)) throw UsageError("invalid topic filter '" + o.filter + "'");
  auto cfg = o.client.build(false);
  cfg.accept_plaintext = o.accept_plaintext;
  client::Client c(cfg, log);
  c.connect();

  std::mutex mu;
  std::condition_variable cv;
  unsigned received = 0;
  c.subscribe_secure(o.filter, [&](const client::ReceivedMessage& m) {
    std::lock_guard lock(mu);
    std::cout << m.topic << ' '
              << (o.hex ? to_hex(m.plaintext) : to_string(m.plaintext)) << std::endl;
    ++received;
    cv.notify_all();
  });
  std::cout << "subscribed " << o.filter << std::endl;

  const auto end = std::chrono::steady_clock::now() + std::chrono::duration_cast<std::chrono::steady_clock::duration>(std::chrono::duration<double>(o.timeout_s));
  std::unique_lock lock(mu);
  while (!g_stop && c.connected()) {
    if (o.count > 0 && received >= o.count) break;
    if (o.timeout_s > 0 && std::chrono::steady_clock::now() >= end) break;
    cv.wait_for(lock, 50ms);
  }
  const bool lost = !c.connected();
  const bool short_count = o.count > 0 && received < o.count;
  lock.unlock();
  c.disconnect();
  if (lost) {
    std::cerr << "error: connection to broker lost" << std::endl;
    return kExitFailure;
  }
  if (short_count && !g_stop) {
    std::cerr << "error: received " << received << " of " << o.count << " messages before timeout" << std::endl;
    return kExitFailure;
  }
  return kExitOk;
}

// ---- bench -----------------------------------------------------------------

struct BenchOptions {
  std::string sizes = "1..12";
  unsigned iterations = 10;
  unsigned warmup = 2;
  std::vector<std::string> ciphers{"none", "aes", "ascon"};
  std::string topic = "bench/rtt";
  std::string broker;
  bool paper_compat = false;
  std::string key_file;
  int qos = 1;
  int timeout_ms = 10000;
  std::string out_dir = "bench-out";
};

std::pair<unsigned, unsigned> parse_size_range(const std::string& s)
{
  const auto dots = s.find("..");
  auto num = [&](const std::string& t) {
    if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos || t.size() > 2)
      throw UsageError("--sizes expects N..M exponents, got '" + s + "'");
    return static_cast<unsigned>(std::stoul(t));
  };
  if (dots == std::string::npos) {
    const unsigned v = num(s);
    return {v, v};
  }
  return {num(s.substr(0, dots)), num(s.substr(dots + 2))};
}

int run_bench_cmd(const BenchOptions& o, const LogSink& log)
{
  bench::BenchConfig cfg;
  std::tie(cfg.size_exp_min, cfg.size_exp_max) = parse_size_range(o.sizes);
  cfg.iterations = o.iterations;
  cfg.warmup = o.warmup;
  cfg.ciphers = o.ciphers;
  cfg.topic = o.topic;
  if (!o.broker.empty()) std::tie(cfg.host, cfg.port) = split_host_port(o.broker);
  if (!o.broker.empty() && cfg.port == 0) throw UsageError("--broker needs a non-zero port");
  cfg.paper_compat = o.paper_compat;
  if (!o.paper_compat) cfg.key = load_key(o.key_file);
  cfg.qos = static_cast<std::uint8_t>(o.qos);
  cfg.iteration_timeout = std::chrono::milliseconds(o.timeout_ms);
  try {
    cfg.validate();
  }
  catch (const ContractViolation& e) {
    throw UsageError(e.what());
  }
  if (std::find(cfg.ciphers.begin(), cfg.ciphers.end(), "tls") != cfg.ciphers.end() && cfg.port == 0)
    throw UsageError("the tls label needs --broker pointing at a TLS-terminating endpoint");

  const auto result = bench::run_bench(cfg, log);
  const auto csv = bench::export_csv(result.samples, result.records, o.out_dir, result.aborted);
  const auto meta = bench::write_metadata(cfg, result, o.out_dir);
  std::cout << "wrote " << csv.aggregated.string() << " (" << result.records.size() << " rows)\n"
            << "wrote " << csv.raw.string() << " (" << result.samples.size() << " rows)\n"
            << "wrote " << meta.string() << "\n";
  if (result.aborted) {
    std::cerr << "error: benchmark aborted: " << *result.aborted << std::endl;
    return kExitFailure;
  }
  const auto plots = bench::emit_plot_data(result.records, o.out_dir, log);
  std::cout << "wrote " << plots.mrtt.string() << "\n";
  if (plots.pei) std::cout << "wrote " << plots.pei->string() << "\n";
  const auto invalid = std::count_if(result.samples.begin(), result.samples.end(),
                                     [](const bench::RttSample& s) { return !s.valid; });
  if (invalid > 0) std::cout << invalid << " iteration(s) timed out and were excluded\n";
  return kExitOk;
}

// ---- kat -------------------------------------------------------------------

struct KatOptions {
  std::string ascon;
  std::string gcm;
};

int run_kat(const KatOptions& o)
{
  if (o.ascon.empty() && o.gcm.empty()) throw UsageError("give --ascon and/or --gcm");
  bool ok = true;
  auto report = [&](const char* name, const kat::Report& r) {
    if (r.ok()) {
      std::cout << name << ": all " << r.total << " vectors passed\n";
      return;
    }
    ok = false;
    std::cout << name << ": " << r.passed << "/" << r.total << " vectors passed\n";
    for (std::size_t i = 0; i < r.failures.size() && i < 10; ++i) std::cout << "  " << r.failures[i] << "\n";
  };
  if (!o.ascon.empty()) report("ascon128", kat::verify_ascon(kat::parse_file(o.ascon)));
  if (!o.gcm.empty()) report("aes128gcm", kat::verify_gcm(kat::parse_file(o.gcm)));
  return ok ? kExitOk : kExitFailure;
}

// ---- policy-calibrate ------------------------------------------------------

struct CalibrateOptions {
  std::string csv;
  std::size_t fallback = policy::kDefaultThreshold;
  std::string write;
};

int run_calibrate(const CalibrateOptions& o)
{
  if (o.csv.empty()) throw UsageError("--csv is required");
  const auto records = bench::read_aggregated_csv(o.csv);
  const auto cal = policy::calibrate_threshold(records, o.fallback);
  const char* outcome = cal.outcome == policy::CalibrationOutcome::Crossover          ? "crossover"
                        : cal.outcome == policy::CalibrationOutcome::AsconWinsEverywhere ? "ascon_wins_everywhere"
                                                                                         : "no_crossover";
  std::cout << "threshold=" << cal.threshold << " outcome=" << outcome << std::endl;
  if (!o.write.empty()) {
    std::ofstream out(o.write, std::ios::trunc);
    if (!out) throw Error("cannot open " + o.write + " for writing");
    out << "# calibrated from " << o.csv << " (" << outcome << ")\n[publish]\nthreshold = " << cal.threshold << "\n";
    if (!out.flush()) throw Error("write to " + o.write + " failed");
    std::cout << "wrote " << o.write << std::endl;
  }
  return kExitOk;
}

} // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Encrypted MQTT toolkit: broker, clients, benchmark and cipher checks", "secmqtt"};
  app.option_defaults()->always_capture_default();
  app.allow_config_extras(CLI::config_extras_mode::error);
  app.set_config("--config", "", "Read options from a TOML/INI file; one [section] per subcommand");
  app.require_subcommand(1);
  bool quiet = false;
  app.add_flag("-q,--quiet", quiet, "Suppress structured log lines on stderr");

  BrokerOptions bo;
  auto* broker_cmd = app.add_subcommand("broker", "Run the MQTT broker until interrupted");
  broker_cmd->add_option("--bind", bo.bind, "Address to listen on");
  broker_cmd->add_option("--port", bo.port, "TCP port (0 picks a free one)");
  broker_cmd->add_option("--retransmit-ms", bo.retransmit_ms, "QoS 1 redelivery interval")
      ->check(CLI::PositiveNumber);
  broker_cmd->add_option("--max-retries", bo.max_retries, "Redeliveries before a message is dropped");
  broker_cmd->add_option("--keep-alive-factor", bo.keep_alive_factor, "Idle limit as a multiple of keep-alive")
      ->check(CLI::Range(1.0, 10.0));
  broker_cmd->add_option("--users-file", bo.users_file, "user:password lines; enables authentication");
  broker_cmd->add_option("--duration-s", bo.duration_s, "Stop after this many seconds (0 runs until interrupted)");
  broker_cmd->add_option("--fault-seed", bo.fault_seed, "Seed for fault injection (testing only)");
  broker_cmd->add_option("--fault-drop-puback", bo.fault_drop_puback,
                         "Probability of ignoring a subscriber PUBACK (testing only)")
      ->check(CLI::Range(0.0, 1.0));
  broker_cmd->add_option("--fault-drop-publish", bo.fault_drop_publish,
                         "Probability of not sending a delivery (testing only)")
      ->check(CLI::Range(0.0, 1.0));
  broker_cmd->add_option("--fault-drop-outbound-puback", bo.fault_drop_outbound_puback,
                         "Probability of withholding a publisher PUBACK (testing only)")
      ->check(CLI::Range(0.0, 1.0));
  broker_cmd->add_flag("--fault-drop-connack", bo.fault_drop_connack, "Never send CONNACK (testing only)");

  PublishOptions po;
  auto* publish_cmd = app.add_subcommand("publish", "Seal and publish a message");
  po.client.add_to(publish_cmd, true);
  publish_cmd->add_option("--topic", po.topic, "Topic name (required)");
  publish_cmd->add_option("--message", po.message, "Payload text");
  publish_cmd->add_option("--file", po.file, "Read the payload from a file");
  publish_cmd->add_option("--size", po.size, "Payload of this many 'X' bytes");
  publish_cmd->add_option("--count", po.count, "Number of messages")->check(CLI::PositiveNumber);
  publish_cmd->add_option("--interval-ms", po.interval_ms, "Pause between messages")->check(CLI::NonNegativeNumber);

  SubscribeOptions so;
  auto* subscribe_cmd = app.add_subcommand("subscribe", "Subscribe and print opened messages to stdout");
  so.client.add_to(subscribe_cmd, false);
  subscribe_cmd->add_option("--filter", so.filter, "Topic filter, may use + and # (required)");
  subscribe_cmd->add_option("--count", so.count, "Exit after this many messages (0 never)");
  subscribe_cmd->add_option("--timeout-s", so.timeout_s, "Exit after this many seconds (0 never)");
  subscribe_cmd->add_flag("--hex", so.hex, "Print payloads as hex");
  subscribe_cmd->add_flag("--accept-plaintext", so.accept_plaintext, "Also deliver unencrypted (cipher none) messages");

  BenchOptions bno;
  auto* bench_cmd = app.add_subcommand("bench", "Round-trip benchmark over doubling message sizes");
  bench_cmd->add_option("--sizes", bno.sizes, "Size exponents N..M (sizes 2^N to 2^M bytes)");
  bench_cmd->add_option("--iterations", bno.iterations, "Timed iterations per size")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--warmup", bno.warmup, "Untimed iterations per size");
  bench_cmd->add_option("--ciphers", bno.ciphers, "Cipher labels: none, aes, ascon, tls")
      ->delimiter(',')
      ->check(CLI::IsMember({"none", "aes", "ascon", "tls"}));
  bench_cmd->add_option("--topic", bno.topic, "Topic prefix");
  bench_cmd->add_option("--broker", bno.broker, "External broker host:port (default: in-process broker)");
  bench_cmd->add_flag("--paper-compat", bno.paper_compat, "Use the fixed reference key, nonce and associated data");
  bench_cmd->add_option("--key-file", bno.key_file, "File holding the 128-bit key as hex (else $SECMQTT_KEY, else random)");
  bench_cmd->add_option("--qos", bno.qos, "MQTT QoS level")->check(CLI::Range(0, 1));
  bench_cmd->add_option("--timeout-ms", bno.timeout_ms, "Per-iteration timeout")->check(CLI::PositiveNumber);
  bench_cmd->add_option("--out-dir", bno.out_dir, "Directory for CSV, metadata and plot files");

  KatOptions ko;
  auto* kat_cmd = app.add_subcommand("kat", "Verify known-answer-test vector files");
  kat_cmd->add_option("--ascon", ko.ascon, "ASCON-128 KAT file (Key/Nonce/PT/AD/CT records)");
  kat_cmd->add_option("--gcm", ko.gcm, "AES-128-GCM vector file (Key/IV/PT/AAD/CT/Tag records)");

  CalibrateOptions co;
  auto* cal_cmd = app.add_subcommand("policy-calibrate", "Derive the cipher size threshold from bench output");
  cal_cmd->add_option("--csv", co.csv, "Aggregated bench CSV (required)");
  cal_cmd->add_option("--fallback", co.fallback, "Threshold used when ascon never wins")->check(CLI::PositiveNumber);
  cal_cmd->add_option("--write", co.write, "Also write the threshold as a config fragment");

  for (auto* sub : app.get_subcommands({})) sub->configurable();

  try {
    app.parse(argc, argv);
  }
  catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  }
  catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  }
  catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help() << std::flush;
    return kExitUsage;
  }

  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  const LogSink log = stderr_log(quiet);

  auto* cmd = app.get_subcommands().front();
  try {
    if (cmd == broker_cmd) return run_broker(bo, log);
    if (cmd == publish_cmd) return run_publish(po, log);
    if (cmd == subscribe_cmd) return run_subscribe(so, log);
    if (cmd == bench_cmd) return run_bench_cmd(bno, log);
    if (cmd == kat_cmd) return run_kat(ko);
    if (cmd == cal_cmd) return run_calibrate(co);
  }
  catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\nUsage: secmqtt " << cmd->get_name()
              << " [OPTIONS]\nRun 'secmqtt " << cmd->get_name() << " --help' for details." << std::endl;
    return kExitUsage;
  }
  catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitFailure;
  }
  return kExitUsage;
}
