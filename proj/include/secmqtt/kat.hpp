#pragma once

#include <fstream>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "aes_gcm.hpp"
#include "ascon.hpp"
#include "bytes.hpp"
#include "errors.hpp"

// Known-answer-test files in the line-oriented `Name = HEX` format used by
// the ASCON and NIST vector files. Records are separated by blank lines,
// lines starting with '#' are comments.
namespace secmqtt::kat {

using Record = std::map<std::string, std::string>;

inline std::string trim(std::string_view s)
{
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<Record> parse(std::istream& in)
{
  std::vector<Record> records;
  Record current;
  std::string line;
  std::size_t lineno = 0;
  auto flush = [&] {
    if (!current.empty()) records.push_back(std::move(current));
    current.clear();
  };
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty()) {
      flush();
      continue;
    }
    if (t.front() == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw MalformedInput("line " + std::to_string(lineno) + ": expected 'Name = value'");
    current[trim(std::string_view(t).substr(0, eq))] = trim(std::string_view(t).substr(eq + 1));
  }
  flush();
  return records;
}

inline std::vector<Record> parse_file(const std::string& path)
{
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path);
  return parse(in);
}

struct Report {
  std::size_t total = 0;
  std::size_t passed = 0;
  std::vector<std::string> failures;

  bool ok() const { return total > 0 && passed == total; }
};

inline const std::string& field(const Record& r, const char* name)
{
  auto it = r.find(name);
  if (it == r.end()) throw MalformedInput(std::string("record missing field ") + name);
  return it->second;
}

inline std::string label(const Record& r)
{
  auto it = r.find("Count");
  return it == r.end() ? std::string("?") : it->second;
}

// CT in the ASCON files is ciphertext || tag.
inline Report verify_ascon(const std::vector<Record>& records)
{
  Report rep;
  for (const auto& r : records) {
    ++rep.total;
    const auto key = Key128::from(ByteView(from_hex(field(r, "Key"))));
    const auto nonce = Nonce128::from(ByteView(from_hex(field(r, "Nonce"))));
    const Bytes pt = from_hex(field(r, "PT"));
    const Bytes ad = from_hex(field(r, "AD"));
    const Bytes expected = from_hex(field(r, "CT"));

    const auto sealed = ascon::encrypt(key, nonce, ad, pt);
    Bytes got = sealed.ciphertext;
    got.insert(got.end(), sealed.tag.bytes.begin(), sealed.tag.bytes.end());
    if (got != expected) {
      rep.failures.push_back("Count " + label(r) + ": encrypt mismatch");
      continue;
    }
    if (expected.size() < Tag128::size) {
      rep.failures.push_back("Count " + label(r) + ": CT shorter than tag");
      continue;
    }
    const ByteView ev(expected);
    const auto opened = ascon::decrypt(key, nonce, ad, ev.first(ev.size() - Tag128::size),
                                       Tag128::from(ev.last(Tag128::size)));
    if (!opened || *opened != pt) {
      rep.failures.push_back("Count " + label(r) + ": decrypt mismatch");
      continue;
    }
    ++rep.passed;
  }
  return rep;
}

// Fields: Key, IV, PT, AAD, CT, Tag.
inline Report verify_gcm(const std::vector<Record>& records)
{
  Report rep;
  for (const auto& r : records) {
    ++rep.total;
    const Bytes key = from_hex(field(r, "Key"));
    const Bytes iv = from_hex(field(r, "IV"));
    const Bytes pt = from_hex(field(r, "PT"));
    const Bytes aad = from_hex(field(r, "AAD"));
    const Bytes ct = from_hex(field(r, "CT"));
    const Tag128 tag = Tag128::from(ByteView(from_hex(field(r, "Tag"))));

    const auto sealed = aes_gcm::encrypt(key, iv, aad, pt);
    if (sealed.ciphertext != ct || !(sealed.tag == tag)) {
      rep.failures.push_back("Count " + label(r) + ": encrypt mismatch");
      continue;
    }
    const auto opened = aes_gcm::decrypt(key, iv, aad, ct, tag);
    if (!opened || *opened != pt) {
      rep.failures.push_back("Count " + label(r) + ": decrypt mismatch");
      continue;
    }
    ++rep.passed;
  }
  return rep;
}

} // namespace secmqtt::kat
