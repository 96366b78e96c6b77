#pragma once

#include <chrono>
#include <cmath>
#include <condition_variable>
#include <cstdio>
#include <cstring>
#include <ctime>
#include <deque>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "aead.hpp"
#include "broker.hpp"
#include "client.hpp"
#include "errors.hpp"
#include "log.hpp"
#include "policy.hpp"

// Loopback publish/subscribe round-trip timing. For each cipher and each
// message size the client times seal -> publish -> own delivery -> open,
// one message in flight at a time.
namespace secmqtt::bench {

using Clock = std::chrono::steady_clock;

inline constexpr const char* kAggregatedHeader = "cipher,message_size_bytes,mrtt_ms,min_ms,max_ms,stddev_ms,n";
inline constexpr const char* kRawHeader = "cipher,message_size_bytes,iteration,rtt_ms,valid";
inline constexpr const char* kAggregatedFile = "mrtt.csv";
inline constexpr const char* kRawFile = "rtt_raw.csv";
inline constexpr const char* kMetadataFile = "run_metadata.json";
inline constexpr const char* kMrttPlotFile = "mrtt_vs_size.dat";
inline constexpr const char* kPeiPlotFile = "pei_vs_size.dat";

// "tls" sends plaintext envelopes and is meant for a broker endpoint that
// terminates TLS in front of this one.
inline std::optional<CipherId> label_cipher(const std::string& label)
{
  if (label == "tls") return CipherId::None;
  return parse_cipher(label);
}

struct BenchConfig {
  std::vector<std::string> ciphers{"none", "aes", "ascon"};
  unsigned size_exp_min = 1;
  unsigned size_exp_max = 12;
  unsigned iterations = 10;
  unsigned warmup = 2;
  std::string topic = "bench/rtt";
  // Port 0 starts an in-process broker on the loopback interface.
  std::string host = "127.0.0.1";
  std::uint16_t port = 0;
  bool paper_compat = false;
  // Ignored in paper-compat mode. Random when unset.
  std::optional<Key128> key;
  std::uint8_t qos = 1;
  std::chrono::milliseconds iteration_timeout{10000};
  std::string client_id = "secmqtt-bench";

  std::vector<std::size_t> sizes() const
  {
    std::vector<std::size_t> out;
    for (unsigned e = size_exp_min; e <= size_exp_max; ++e) out.push_back(std::size_t{1} << e);
    return out;
  }

  void validate() const
  {
    if (ciphers.empty()) throw ContractViolation("at least one cipher required");
    for (const auto& c : ciphers)
      if (!label_cipher(c)) throw ContractViolation("unknown cipher label '" + c + "'");
    if (iterations < 1) throw ContractViolation("iterations must be at least 1");
    if (size_exp_min > size_exp_max) throw ContractViolation("empty size range");
    if (size_exp_max > 24) throw ContractViolation("size exponent too large");
    if (qos > 1) throw ContractViolation("qos must be 0 or 1");
    if (iteration_timeout.count() <= 0) throw ContractViolation("iteration timeout must be positive");
  }
};

struct RttSample {
  std::string cipher;
  std::size_t message_size_bytes = 0;
  unsigned iteration = 0;  // 1-based
  double rtt_ms = 0;
  bool valid = true;

  bool operator==(const RttSample&) const = default;
};

struct BenchResult {
  std::vector<RttSample> samples;
  std::vector<MrttRecord> records;
  std::optional<std::string> aborted;
  std::chrono::system_clock::time_point started_at;
  std::chrono::system_clock::time_point finished_at;
};

inline Bytes generate_payload(std::size_t size) { return Bytes(size, 0x58); }

// Milliseconds with microsecond resolution, so the 3-decimal CSV text
// round-trips to the same double.
inline double to_ms(Clock::duration d)
{
  const auto us = std::chrono::duration_cast<std::chrono::microseconds>(d).count();
  return static_cast<double>(us) / 1000.0;
}

// One record per (cipher, size) in first-seen order, over valid samples only.
// Samples are whole microseconds; the mean and the sample standard deviation
// (0 for a single sample) are computed exactly and rounded to the nearest
// microsecond, halves up. Cells without valid samples report n = 0 and NaN.
inline std::vector<MrttRecord> aggregate(const std::vector<RttSample>& samples)
{
  using i128 = __int128;
  std::vector<std::pair<std::string, std::size_t>> order;
  std::map<std::pair<std::string, std::size_t>, std::vector<long long>> cells;
  for (const auto& s : samples) {
    const auto key = std::make_pair(s.cipher, s.message_size_bytes);
    auto [it, inserted] = cells.try_emplace(key);
    if (inserted) order.push_back(key);
    if (s.valid) it->second.push_back(std::llround(s.rtt_ms * 1000.0));
  }
  std::vector<MrttRecord> out;
  for (const auto& key : order) {
    const auto& v = cells[key];
    MrttRecord r{key.first, key.second, NAN, NAN, NAN, NAN, v.size()};
    if (!v.empty()) {
      const i128 n = static_cast<i128>(v.size());
      i128 sum = 0, sum_sq = 0;
      for (long long x : v) {
        sum += x;
        sum_sq += static_cast<i128>(x) * x;
      }
      const long long mean_us = static_cast<long long>((2 * sum + n) / (2 * n));
      long long sd_us = 0;
      if (v.size() > 1) {
        // variance = num / den; pick k with (2k-1)^2 den <= 4 num < (2k+1)^2 den
        const i128 num = n * sum_sq - sum * sum;
        const i128 den = n * (n - 1);
        sd_us = std::llround(std::sqrt(static_cast<double>(num) / static_cast<double>(den)));
        auto below = [&](long long k) { return static_cast<i128>(2 * k - 1) * (2 * k - 1) * den <= 4 * num; };
        while (sd_us > 0 && !below(sd_us)) --sd_us;
        while (below(sd_us + 1)) ++sd_us;
      }
      r.mrtt_ms = static_cast<double>(mean_us) / 1000.0;
      r.min_ms = static_cast<double>(*std::min_element(v.begin(), v.end())) / 1000.0;
      r.max_ms = static_cast<double>(*std::max_element(v.begin(), v.end())) / 1000.0;
      r.stddev_ms = static_cast<double>(sd_us) / 1000.0;
    }
    out.push_back(r);
  }
  return out;
}

namespace detail {

inline std::string fmt3(double v)
{
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.3f", v);
  return buf;
}

inline std::string iso_utc(std::chrono::system_clock::time_point t)
{
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_file(const std::filesystem::path& path, const std::string& content)
{
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing: " + std::strerror(errno));
  out << content;
  out.flush();
  if (!out) throw Error("write to " + path.string() + " failed");
}

inline std::filesystem::path prepare_dir(const std::filesystem::path& dir)
{
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  return dir;
}

inline std::vector<std::string> split_csv(const std::string& line)
{
  std::vector<std::string> out(1);
  for (char c : line) {
    if (c == ',')
      out.emplace_back();
    else if (c != '\r')
      out.back() += c;
  }
  return out;
}

inline double parse_double(const std::string& s, const std::string& where)
{
  if (s == "nan") return NAN;
  std::size_t pos = 0;
  double v = 0;
  try {
    v = std::stod(s, &pos);
  }
  catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != s.size()) throw MalformedInput(where + ": bad number '" + s + "'");
  return v;
}

inline std::size_t parse_size(const std::string& s, const std::string& where)
{
  if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
    throw MalformedInput(where + ": bad integer '" + s + "'");
  return static_cast<std::size_t>(std::stoull(s));
}

} // namespace detail

struct CsvPaths {
  std::filesystem::path aggregated;
  std::filesystem::path raw;
};

// Rows come out in the order given, which run_bench produces as cipher, then
// size ascending, then iteration. An abort reason adds a trailing
// "# aborted: ..." marker line to both files.
inline CsvPaths export_csv(const std::vector<RttSample>& samples, const std::vector<MrttRecord>& records,
                           const std::filesystem::path& out_dir,
                           const std::optional<std::string>& aborted = std::nullopt)
{
  if (samples.empty() && records.empty() && !aborted) throw ContractViolation("nothing to export");
  detail::prepare_dir(out_dir);
  std::string agg = std::string(kAggregatedHeader) + "\n";
  for (const auto& r : records) {
    agg += r.cipher + "," + std::to_string(r.message_size_bytes) + "," + detail::fmt3(r.mrtt_ms) + "," +
           detail::fmt3(r.min_ms) + "," + detail::fmt3(r.max_ms) + "," + detail::fmt3(r.stddev_ms) + "," +
           std::to_string(r.n) + "\n";
  }
  std::string raw = std::string(kRawHeader) + "\n";
  for (const auto& s : samples) {
    raw += s.cipher + "," + std::to_string(s.message_size_bytes) + "," + std::to_string(s.iteration) + "," +
           detail::fmt3(s.rtt_ms) + "," + (s.valid ? "true" : "false") + "\n";
  }
  if (aborted) {
    agg += "# aborted: " + *aborted + "\n";
    raw += "# aborted: " + *aborted + "\n";
  }
  CsvPaths paths{out_dir / kAggregatedFile, out_dir / kRawFile};
  detail::write_file(paths.aggregated, agg);
  detail::write_file(paths.raw, raw);
  return paths;
}

inline std::vector<MrttRecord> read_aggregated_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::split_csv(line) != detail::split_csv(kAggregatedHeader))
    throw MalformedInput(path.string() + ": unexpected header");
  std::vector<MrttRecord> out;
  for (int no = 2; std::getline(in, line); ++no) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(no);
    if (f.size() != 7) throw MalformedInput(where + ": expected 7 fields");
    out.push_back(MrttRecord{f[0], detail::parse_size(f[1], where), detail::parse_double(f[2], where),
                             detail::parse_double(f[3], where), detail::parse_double(f[4], where),
                             detail::parse_double(f[5], where), detail::parse_size(f[6], where)});
  }
  return out;
}

inline std::vector<RttSample> read_raw_csv(const std::filesystem::path& path)
{
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  std::string line;
  if (!std::getline(in, line) || detail::split_csv(line) != detail::split_csv(kRawHeader))
    throw MalformedInput(path.string() + ": unexpected header");
  std::vector<RttSample> out;
  for (int no = 2; std::getline(in, line); ++no) {
    if (line.empty() || line[0] == '#') continue;
    const auto f = detail::split_csv(line);
    const std::string where = path.string() + ":" + std::to_string(no);
    if (f.size() != 5 || (f[4] != "true" && f[4] != "false"))
      throw MalformedInput(where + ": malformed row");
    out.push_back(RttSample{f[0], detail::parse_size(f[1], where),
                            static_cast<unsigned>(detail::parse_size(f[2], where)),
                            detail::parse_double(f[3], where), f[4] == "true"});
  }
  return out;
}

struct PlotPaths {
  std::filesystem::path mrtt;
  std::optional<std::filesystem::path> pei;
};

// Whitespace-separated columns with a '#' header: one MRTT column per
// cipher, and PEI per size when ASCON and at least one other cipher exist.
inline PlotPaths emit_plot_data(const std::vector<MrttRecord>& records, const std::filesystem::path& out_dir,
                                const LogSink& log = {})
{
  detail::prepare_dir(out_dir);
  std::vector<std::string> ciphers;
  std::map<std::size_t, std::map<std::string, double>> table;
  for (const auto& r : records) {
    if (std::find(ciphers.begin(), ciphers.end(), r.cipher) == ciphers.end()) ciphers.push_back(r.cipher);
    table[r.message_size_bytes][r.cipher] = r.mrtt_ms;
  }

  std::string mrtt = "# message_size_bytes";
  for (const auto& c : ciphers) mrtt += " " + c + "_mrtt_ms";
  mrtt += "\n";
  for (const auto& [size, row] : table) {
    mrtt += std::to_string(size);
    for (const auto& c : ciphers) {
      auto it = row.find(c);
      mrtt += " " + (it == row.end() ? std::string("nan") : detail::fmt3(it->second));
    }
    mrtt += "\n";
  }
  PlotPaths paths{out_dir / kMrttPlotFile, std::nullopt};
  detail::write_file(paths.mrtt, mrtt);

  std::string pei = "# message_size_bytes pei\n";
  try {
    for (const auto& [size, row] : table) {
      char buf[64];
      std::snprintf(buf, sizeof(buf), "%.6f", policy::compute_pei(records, size));
      pei += std::to_string(size) + " " + buf + "\n";
    }
  }
  catch (const Error& e) {
    if (log) log(std::string("event=warning what=pei_skipped reason=\"") + e.what() + "\"");
    return paths;
  }
  paths.pei = out_dir / kPeiPlotFile;
  detail::write_file(*paths.pei, pei);
  return paths;
}

inline std::filesystem::path write_metadata(const BenchConfig& cfg, const BenchResult& result,
                                            const std::filesystem::path& out_dir)
{
  detail::prepare_dir(out_dir);
  nlohmann::ordered_json j;
  j["ciphers"] = cfg.ciphers;
  j["sizes"] = cfg.sizes();
  j["iterations_per_size"] = cfg.iterations;
  j["warmup_iterations"] = cfg.warmup;
  j["topic"] = cfg.topic;
  j["broker"] = cfg.port == 0 ? std::string("embedded") : cfg.host + ":" + std::to_string(cfg.port);
  j["qos"] = cfg.qos;
  j["paper_compat"] = cfg.paper_compat;
  j["iteration_timeout_ms"] = cfg.iteration_timeout.count();
  j["clock"] = "steady_clock (monotonic), microsecond resolution";
  j["rtt_span"] = "before seal to after open of own delivery";
  j["stddev"] = "sample (n-1)";
  j["started_at"] = detail::iso_utc(result.started_at);
  j["finished_at"] = detail::iso_utc(result.finished_at);
  j["samples"] = result.samples.size();
  j["invalid_samples"] = std::count_if(result.samples.begin(), result.samples.end(),
                                       [](const RttSample& s) { return !s.valid; });
  j["aborted"] = result.aborted ? nlohmann::ordered_json(*result.aborted) : nlohmann::ordered_json(nullptr);
  const auto path = out_dir / kMetadataFile;
  detail::write_file(path, j.dump(2) + "\n");
  return path;
}

namespace detail {

// Collects the client's own deliveries for the timing loop.
class Mailbox {
 public:
  client::MessageHandler handler()
  {
    return [this](const client::ReceivedMessage& m) {
      std::lock_guard lock(mutex_);
      queue_.push_back(m);
      cv_.notify_all();
    };
  }

  void clear()
  {
    std::lock_guard lock(mutex_);
    queue_.clear();
  }

  std::optional<client::ReceivedMessage> wait(Clock::time_point deadline)
  {
    std::unique_lock lock(mutex_);
    if (!cv_.wait_until(lock, deadline, [&] { return !queue_.empty(); })) return std::nullopt;
    auto m = std::move(queue_.front());
    queue_.pop_front();
    return m;
  }

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<client::ReceivedMessage> queue_;
};

} // namespace detail

// Runs every (cipher, size) cell. Connection loss ends the run early with
// `aborted` set and whatever samples were collected so far.
inline BenchResult run_bench(const BenchConfig& cfg, const LogSink& log = {})
{
  cfg.validate();
  auto emit = [&](const std::string& l) {
    if (log) log(l);
  };

  BenchResult result;
  result.started_at = std::chrono::system_clock::now();

  std::unique_ptr<broker::Broker> embedded;
  std::string host = cfg.host;
  std::uint16_t port = cfg.port;
  if (port == 0) {
    broker::BrokerConfig bc;
    bc.bind_address = "127.0.0.1";
    bc.port = 0;
    embedded = std::make_unique<broker::Broker>(bc);
    embedded->start();
    host = "127.0.0.1";
    port = embedded->port();
    emit("event=bench_broker port=" + std::to_string(port));
  }

  std::shared_ptr<SecurityContext> security;
  if (cfg.paper_compat) {
    security = std::make_shared<SecurityContext>(SecurityContext::paper_compat());
  }
  else if (cfg.key) {
    security = std::make_shared<SecurityContext>(*cfg.key);
  }
  else {
    std::random_device rd;
    Bytes k(Key128::size);
    for (auto& b : k) b = static_cast<std::uint8_t>(rd());
    security = std::make_shared<SecurityContext>(Key128::from(ByteView(k)));
  }

  client::ClientConfig cc;
  cc.host = host;
  cc.port = port;
  cc.client_id = cfg.client_id;
  cc.security = security;
  cc.accept_plaintext = true;
  cc.qos = cfg.qos;
  cc.ack_timeout = cfg.iteration_timeout;
  cc.max_publish_retries = 0;
  cc.connect_timeout = cfg.iteration_timeout;

  try {
    client::Client cl(cc, log);
    cl.connect();
    detail::Mailbox mailbox;
    // one topic per cipher so a straggler from the previous cipher cannot be
    // mistaken for the current message
    for (const auto& label : cfg.ciphers) {
      const CipherId cipher = *label_cipher(label);
      const std::string topic = cfg.topic + "/" + label;
      cl.subscribe_secure(topic, mailbox.handler(), cfg.qos);
      for (const std::size_t size : cfg.sizes()) {
        const Bytes payload = generate_payload(size);
        for (unsigned i = 0; i < cfg.warmup + cfg.iterations; ++i) {
          const bool timed = i >= cfg.warmup;
          mailbox.clear();
          const auto start = Clock::now();
          const auto deadline = start + cfg.iteration_timeout;
          bool ok = false;
          Clock::time_point end = deadline;
          try {
            cl.publish_secure(topic, payload, cipher);
            while (auto m = mailbox.wait(deadline)) {
              if (m->topic != topic || m->plaintext != payload) continue;
              end = m->received_at;
              ok = true;
              break;
            }
          }
          catch (const AckTimeout&) {
          }
          if (!ok) {
            if (!cl.connected()) throw ConnectionLost("connection to broker lost");
            emit("event=warning what=iteration_timeout cipher=" + label + " size=" + std::to_string(size) +
                 " iteration=" + std::to_string(i + 1));
          }
          if (!timed) continue;
          result.samples.push_back(RttSample{label, size, i - cfg.warmup + 1,
                                             to_ms(ok ? end - start : cfg.iteration_timeout), ok});
        }
        emit("event=bench_cell cipher=" + label + " size=" + std::to_string(size));
      }
    }
  }
  catch (const ConnectionLost& e) {
    result.aborted = e.what();
    emit(std::string("event=bench_aborted reason=\"") + e.what() + "\"");
  }
  catch (const ConnectionRefused& e) {
    result.aborted = e.what();
    emit(std::string("event=bench_aborted reason=\"") + e.what() + "\"");
  }
  catch (const Timeout& e) {
    result.aborted = e.what();
    emit(std::string("event=bench_aborted reason=\"") + e.what() + "\"");
  }

  result.records = aggregate(result.samples);
  result.finished_at = std::chrono::system_clock::now();
  return result;
}

} // namespace secmqtt::bench
