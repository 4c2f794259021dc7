#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "catmt/utf8.hpp"
#include "catmt/vicodec.hpp"

namespace catmt::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

// Whitespace tokenization; runs of whitespace collapse.
inline std::vector<std::string> tokenize(std::string_view s) {
  std::vector<std::string> tokens;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t start = i;
    while (i < s.size() && !is_space(s[i])) ++i;
    if (i > start) tokens.emplace_back(s.substr(start, i - start));
  }
  return tokens;
}

inline std::string join(const std::vector<std::string>& tokens) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    out += tokens[i];
  }
  return out;
}

// ASCII + Vietnamese alphabet lowercasing; other scripts pass through.
inline std::string to_lower(std::string_view s) {
  if (utf8::is_ascii(s)) {
    std::string out(s);
    for (char& c : out) {
      if (c >= 'A' && c <= 'Z') c += 0x20;
    }
    return out;
  }
  const auto& table = vicodec::DiacriticTable::canonical();
  std::u32string cps = utf8::decode(s);
  for (char32_t& cp : cps) cp = table.to_lower(cp);
  return utf8::encode(cps);
}

inline std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && is_space(s[b])) ++b;
  while (e > b && is_space(s[e - 1])) --e;
  return std::string(s.substr(b, e - b));
}

}  // namespace catmt::text
