#pragma once

#include <algorithm>
#include <cstddef>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "aead.hpp"
#include "errors.hpp"

namespace secmqtt {

// Aggregated timing for one (cipher, size) cell. `cipher` is the CSV label:
// none, aes, ascon, or tls for externally terminated runs.
struct MrttRecord {
  std::string cipher;
  std::size_t message_size_bytes = 0;
  double mrtt_ms = 0;
  double min_ms = 0;
  double max_ms = 0;
  double stddev_ms = 0;
  std::size_t n = 0;

  bool operator==(const MrttRecord&) const = default;
};

namespace policy {

enum class Reason { BelowThreshold, AboveThreshold, PolicyOverride };

inline const char* reason_name(Reason r)
{
  switch (r) {
  case Reason::BelowThreshold: return "below_threshold";
  case Reason::AboveThreshold: return "above_threshold";
  case Reason::PolicyOverride: return "policy_override";
  }
  return "unknown";
}

inline constexpr std::size_t kDefaultThreshold = 2048;

struct PolicyConfig {
  std::size_t size_threshold_bytes = kDefaultThreshold;
  CipherId small_cipher = CipherId::Ascon128;
  CipherId large_cipher = CipherId::Aes128Gcm;
  bool allow_plaintext = false;
  // Bypasses the size rule entirely.
  std::optional<CipherId> forced_cipher;
  // Device profile hints (cpu class, battery, ...). Stored, not interpreted.
  std::map<std::string, std::string> profile;

  void validate() const
  {
    if (size_threshold_bytes == 0) throw ContractViolation("size threshold must be positive");
    auto check = [&](CipherId c, const char* what) {
      if (c == CipherId::None && !allow_plaintext)
        throw ContractViolation(std::string(what) + " is 'none' but plaintext is not allowed");
    };
    check(small_cipher, "small cipher");
    check(large_cipher, "large cipher");
    if (forced_cipher) check(*forced_cipher, "forced cipher");
  }
};

struct Decision {
  CipherId cipher;
  Reason reason;

  bool operator==(const Decision&) const = default;
};

// Sizes up to and including the threshold go to the small cipher.
inline Decision select_cipher(std::size_t message_size_bytes, const PolicyConfig& cfg)
{
  if (cfg.forced_cipher) return {*cfg.forced_cipher, Reason::PolicyOverride};
  if (message_size_bytes <= cfg.size_threshold_bytes) return {cfg.small_cipher, Reason::BelowThreshold};
  return {cfg.large_cipher, Reason::AboveThreshold};
}

enum class CalibrationOutcome {
  Crossover,           // ASCON wins up to some size, then loses
  AsconWinsEverywhere, // threshold is the largest grid size
  NoCrossover,         // ASCON already loses at the smallest size
};

struct Calibration {
  std::size_t threshold;
  CalibrationOutcome outcome;

  bool operator==(const Calibration&) const = default;
};

namespace detail {

inline std::map<std::size_t, double> series(const std::vector<MrttRecord>& records,
                                            const std::string& cipher)
{
  std::map<std::size_t, double> out;
  for (const auto& r : records) {
    if (r.cipher != cipher) continue;
    if (!out.emplace(r.message_size_bytes, r.mrtt_ms).second)
      throw MalformedInput("duplicate " + cipher + " row for size " +
                           std::to_string(r.message_size_bytes));
  }
  return out;
}

} // namespace detail

// Largest grid size S such that ASCON's MRTT is <= AES's at every grid size
// up to S. When ASCON loses at the smallest size, `fallback` is returned.
inline Calibration calibrate_threshold(const std::vector<MrttRecord>& records,
                                       std::size_t fallback = kDefaultThreshold)
{
  const auto ascon = detail::series(records, std::string(cipher_name(CipherId::Ascon128)));
  const auto aes = detail::series(records, std::string(cipher_name(CipherId::Aes128Gcm)));
  if (ascon.empty() || aes.empty()) throw MalformedInput("need both ascon and aes rows");
  if (ascon.size() != aes.size() ||
      !std::equal(ascon.begin(), ascon.end(), aes.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw MalformedInput("ascon and aes size grids differ");

  std::optional<std::size_t> last_win;
  auto it_aes = aes.begin();
  for (const auto& [size, mrtt] : ascon) {
    if (mrtt > (it_aes++)->second) break;
    last_win = size;
  }
  if (!last_win) return {fallback, CalibrationOutcome::NoCrossover};
  if (*last_win == ascon.rbegin()->first) return {*last_win, CalibrationOutcome::AsconWinsEverywhere};
  return {*last_win, CalibrationOutcome::Crossover};
}

// Performance efficiency index at one size: mean MRTT of every non-ASCON
// cipher divided by ASCON's MRTT. Above 1 means ASCON is faster.
inline double compute_pei(const std::vector<MrttRecord>& records, std::size_t size)
{
  const std::string ascon_label(cipher_name(CipherId::Ascon128));
  std::optional<double> ascon;
  double others = 0;
  std::size_t count = 0;
  for (const auto& r : records) {
    if (r.message_size_bytes != size) continue;
    if (r.cipher == ascon_label) {
      ascon = r.mrtt_ms;
    }
    else {
      others += r.mrtt_ms;
      ++count;
    }
  }
  if (!ascon) throw MissingData("no ascon record at size " + std::to_string(size));
  if (count == 0) throw MissingData("no non-ascon record at size " + std::to_string(size));
  if (!(*ascon > 0)) throw ContractViolation("ascon MRTT must be positive");
  return (others / static_cast<double>(count)) / *ascon;
}

} // namespace policy
} // namespace secmqtt
