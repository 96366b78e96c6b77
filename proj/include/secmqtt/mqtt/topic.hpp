#pragma once

#include <algorithm>
#include <cstdint>
#include <limits>
#include <string_view>

namespace secmqtt::mqtt {

// Well-formed UTF-8 without U+0000, surrogates or overlong forms, as MQTT
// 3.1.1 requires for every encoded string.
inline bool valid_utf8(std::string_view s)
{
  const auto* p = reinterpret_cast<const std::uint8_t*>(s.data());
  const std::size_t n = s.size();
  std::size_t i = 0;
  while (i < n) {
    const std::uint8_t c = p[i];
    if (c == 0x00) return false;
    if (c < 0x80) {
      ++i;
      continue;
    }
    std::size_t len;
    std::uint32_t cp;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    }
    else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    }
    else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    else {
      return false;
    }
    if (i + len > n) return false;
    for (std::size_t k = 1; k < len; ++k) {
      if ((p[i + k] & 0xC0) != 0x80) return false;
      cp = (cp << 6) | (p[i + k] & 0x3F);
    }
    if ((len == 2 && cp < 0x80) || (len == 3 && cp < 0x800) || (len == 4 && cp < 0x10000))
      return false;
    if (cp > 0x10FFFF || (cp >= 0xD800 && cp <= 0xDFFF)) return false;
    i += len;
  }
  return true;
}

inline bool valid_string_length(std::string_view s)
{
  return s.size() <= std::numeric_limits<std::uint16_t>::max();
}

// Topic names are what PUBLISH carries: non-empty, no wildcards.
inline bool valid_topic_name(std::string_view topic)
{
  if (topic.empty() || !valid_string_length(topic) || !valid_utf8(topic)) return false;
  return topic.find_first_of("+#") == std::string_view::npos;
}

// Topic filters may use '+' as a whole level and '#' as the whole last level.
inline bool valid_topic_filter(std::string_view filter)
{
  if (filter.empty() || !valid_string_length(filter) || !valid_utf8(filter)) return false;
  for (std::size_t i = 0; i < filter.size(); ++i) {
    const char c = filter[i];
    if (c == '+') {
      if (i != 0 && filter[i - 1] != '/') return false;
      if (i + 1 != filter.size() && filter[i + 1] != '/') return false;
    }
    else if (c == '#') {
      if (i != 0 && filter[i - 1] != '/') return false;
      if (i + 1 != filter.size()) return false;
    }
  }
  return true;
}

// Level-by-level match of a valid filter against a valid topic name.
// Filters starting with a wildcard never match topics starting with '$'.
inline bool match_topic(std::string_view filter, std::string_view topic)
{
  if (!topic.empty() && topic.front() == '$' && !filter.empty() &&
      (filter.front() == '+' || filter.front() == '#'))
    return false;

  std::size_t f = 0;
  std::size_t t = 0;
  for (;;) {
    const std::size_t f_end = std::min(filter.find('/', f), filter.size());
    const std::string_view f_level = filter.substr(f, f_end - f);
    if (f_level == "#") return true;
    const std::size_t t_end = std::min(topic.find('/', t), topic.size());
    if (f_level != "+" && f_level != topic.substr(t, t_end - t)) return false;

    const bool f_done = f_end == filter.size();
    const bool t_done = t_end == topic.size();
    if (f_done || t_done) {
      if (f_done && t_done) return true;
      // "a/#" also matches "a"
      return t_done && filter.substr(f_end) == "/#";
    }
    f = f_end + 1;
    t = t_end + 1;
  }
}

} // namespace secmqtt::mqtt
