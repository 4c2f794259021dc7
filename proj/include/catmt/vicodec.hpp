#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "catmt/utf8.hpp"

// Reversible replacement of the 134 precomposed Vietnamese diacritic
// letters with ASCII tokens "@1".."@134". The table is the full Vietnamese
// alphabet beyond ASCII: 32 Latin-1 letters, 12 Latin Extended-A letters
// and the 90 letters of U+1EA0..U+1EF9, ordered by ascending codepoint and
// indexed from 1.
namespace catmt::vicodec {

struct LetterInfo {
  char32_t cp;        // precomposed letter
  char base;          // ASCII base letter, case-carrying
  char32_t modifier;  // U+0306 breve, U+0302 circumflex, U+031B horn, or 0
  char32_t tone;      // U+0300 U+0301 U+0309 U+0303 U+0323, or 0
};

namespace detail {

// Sorted by cp. Dyet (U+0110/U+0111) carries a stroke, not a combining
// mark, so it has modifier == tone == 0.
inline constexpr std::array<LetterInfo, 134> kLetters = {{
    {0x00C0, 'A', 0x0000, 0x0300}, {0x00C1, 'A', 0x0000, 0x0301},
    {0x00C2, 'A', 0x0302, 0x0000}, {0x00C3, 'A', 0x0000, 0x0303},
    {0x00C8, 'E', 0x0000, 0x0300}, {0x00C9, 'E', 0x0000, 0x0301},
    {0x00CA, 'E', 0x0302, 0x0000}, {0x00CC, 'I', 0x0000, 0x0300},
    {0x00CD, 'I', 0x0000, 0x0301}, {0x00D2, 'O', 0x0000, 0x0300},
    {0x00D3, 'O', 0x0000, 0x0301}, {0x00D4, 'O', 0x0302, 0x0000},
    {0x00D5, 'O', 0x0000, 0x0303}, {0x00D9, 'U', 0x0000, 0x0300},
    {0x00DA, 'U', 0x0000, 0x0301}, {0x00DD, 'Y', 0x0000, 0x0301},
    {0x00E0, 'a', 0x0000, 0x0300}, {0x00E1, 'a', 0x0000, 0x0301},
    {0x00E2, 'a', 0x0302, 0x0000}, {0x00E3, 'a', 0x0000, 0x0303},
    {0x00E8, 'e', 0x0000, 0x0300}, {0x00E9, 'e', 0x0000, 0x0301},
    {0x00EA, 'e', 0x0302, 0x0000}, {0x00EC, 'i', 0x0000, 0x0300},
    {0x00ED, 'i', 0x0000, 0x0301}, {0x00F2, 'o', 0x0000, 0x0300},
    {0x00F3, 'o', 0x0000, 0x0301}, {0x00F4, 'o', 0x0302, 0x0000},
    {0x00F5, 'o', 0x0000, 0x0303}, {0x00F9, 'u', 0x0000, 0x0300},
    {0x00FA, 'u', 0x0000, 0x0301}, {0x00FD, 'y', 0x0000, 0x0301},
    {0x0102, 'A', 0x0306, 0x0000}, {0x0103, 'a', 0x0306, 0x0000},
    {0x0110, 'D', 0x0000, 0x0000}, {0x0111, 'd', 0x0000, 0x0000},
    {0x0128, 'I', 0x0000, 0x0303}, {0x0129, 'i', 0x0000, 0x0303},
    {0x0168, 'U', 0x0000, 0x0303}, {0x0169, 'u', 0x0000, 0x0303},
    {0x01A0, 'O', 0x031B, 0x0000}, {0x01A1, 'o', 0x031B, 0x0000},
    {0x01AF, 'U', 0x031B, 0x0000}, {0x01B0, 'u', 0x031B, 0x0000},
    {0x1EA0, 'A', 0x0000, 0x0323}, {0x1EA1, 'a', 0x0000, 0x0323},
    {0x1EA2, 'A', 0x0000, 0x0309}, {0x1EA3, 'a', 0x0000, 0x0309},
    {0x1EA4, 'A', 0x0302, 0x0301}, {0x1EA5, 'a', 0x0302, 0x0301},
    {0x1EA6, 'A', 0x0302, 0x0300}, {0x1EA7, 'a', 0x0302, 0x0300},
    {0x1EA8, 'A', 0x0302, 0x0309}, {0x1EA9, 'a', 0x0302, 0x0309},
    {0x1EAA, 'A', 0x0302, 0x0303}, {0x1EAB, 'a', 0x0302, 0x0303},
    {0x1EAC, 'A', 0x0302, 0x0323}, {0x1EAD, 'a', 0x0302, 0x0323},
    {0x1EAE, 'A', 0x0306, 0x0301}, {0x1EAF, 'a', 0x0306, 0x0301},
    {0x1EB0, 'A', 0x0306, 0x0300}, {0x1EB1, 'a', 0x0306, 0x0300},
    {0x1EB2, 'A', 0x0306, 0x0309}, {0x1EB3, 'a', 0x0306, 0x0309},
    {0x1EB4, 'A', 0x0306, 0x0303}, {0x1EB5, 'a', 0x0306, 0x0303},
    {0x1EB6, 'A', 0x0306, 0x0323}, {0x1EB7, 'a', 0x0306, 0x0323},
    {0x1EB8, 'E', 0x0000, 0x0323}, {0x1EB9, 'e', 0x0000, 0x0323},
    {0x1EBA, 'E', 0x0000, 0x0309}, {0x1EBB, 'e', 0x0000, 0x0309},
    {0x1EBC, 'E', 0x0000, 0x0303}, {0x1EBD, 'e', 0x0000, 0x0303},
    {0x1EBE, 'E', 0x0302, 0x0301}, {0x1EBF, 'e', 0x0302, 0x0301},
    {0x1EC0, 'E', 0x0302, 0x0300}, {0x1EC1, 'e', 0x0302, 0x0300},
    {0x1EC2, 'E', 0x0302, 0x0309}, {0x1EC3, 'e', 0x0302, 0x0309},
    {0x1EC4, 'E', 0x0302, 0x0303}, {0x1EC5, 'e', 0x0302, 0x0303},
    {0x1EC6, 'E', 0x0302, 0x0323}, {0x1EC7, 'e', 0x0302, 0x0323},
    {0x1EC8, 'I', 0x0000, 0x0309}, {0x1EC9, 'i', 0x0000, 0x0309},
    {0x1ECA, 'I', 0x0000, 0x0323}, {0x1ECB, 'i', 0x0000, 0x0323},
    {0x1ECC, 'O', 0x0000, 0x0323}, {0x1ECD, 'o', 0x0000, 0x0323},
    {0x1ECE, 'O', 0x0000, 0x0309}, {0x1ECF, 'o', 0x0000, 0x0309},
    {0x1ED0, 'O', 0x0302, 0x0301}, {0x1ED1, 'o', 0x0302, 0x0301},
    {0x1ED2, 'O', 0x0302, 0x0300}, {0x1ED3, 'o', 0x0302, 0x0300},
    {0x1ED4, 'O', 0x0302, 0x0309}, {0x1ED5, 'o', 0x0302, 0x0309},
    {0x1ED6, 'O', 0x0302, 0x0303}, {0x1ED7, 'o', 0x0302, 0x0303},
    {0x1ED8, 'O', 0x0302, 0x0323}, {0x1ED9, 'o', 0x0302, 0x0323},
    {0x1EDA, 'O', 0x031B, 0x0301}, {0x1EDB, 'o', 0x031B, 0x0301},
    {0x1EDC, 'O', 0x031B, 0x0300}, {0x1EDD, 'o', 0x031B, 0x0300},
    {0x1EDE, 'O', 0x031B, 0x0309}, {0x1EDF, 'o', 0x031B, 0x0309},
    {0x1EE0, 'O', 0x031B, 0x0303}, {0x1EE1, 'o', 0x031B, 0x0303},
    {0x1EE2, 'O', 0x031B, 0x0323}, {0x1EE3, 'o', 0x031B, 0x0323},
    {0x1EE4, 'U', 0x0000, 0x0323}, {0x1EE5, 'u', 0x0000, 0x0323},
    {0x1EE6, 'U', 0x0000, 0x0309}, {0x1EE7, 'u', 0x0000, 0x0309},
    {0x1EE8, 'U', 0x031B, 0x0301}, {0x1EE9, 'u', 0x031B, 0x0301},
    {0x1EEA, 'U', 0x031B, 0x0300}, {0x1EEB, 'u', 0x031B, 0x0300},
    {0x1EEC, 'U', 0x031B, 0x0309}, {0x1EED, 'u', 0x031B, 0x0309},
    {0x1EEE, 'U', 0x031B, 0x0303}, {0x1EEF, 'u', 0x031B, 0x0303},
    {0x1EF0, 'U', 0x031B, 0x0323}, {0x1EF1, 'u', 0x031B, 0x0323},
    {0x1EF2, 'Y', 0x0000, 0x0300}, {0x1EF3, 'y', 0x0000, 0x0300},
    {0x1EF4, 'Y', 0x0000, 0x0323}, {0x1EF5, 'y', 0x0000, 0x0323},
    {0x1EF6, 'Y', 0x0000, 0x0309}, {0x1EF7, 'y', 0x0000, 0x0309},
    {0x1EF8, 'Y', 0x0000, 0x0303}, {0x1EF9, 'y', 0x0000, 0x0303},
}};

struct PairHash {
  std::size_t operator()(const std::pair<char32_t, char32_t>& p) const {
    return std::hash<std::uint64_t>()(
        (static_cast<std::uint64_t>(p.first) << 32) | p.second);
  }
};

}  // namespace detail

class DiacriticTable {
 public:
  static const DiacriticTable& canonical() {
    static const DiacriticTable table;
    return table;
  }

  int size() const { return static_cast<int>(detail::kLetters.size()); }

  // 1-based, matching the encoded token "@<index>".
  char32_t letter_at(int index) const {
    if (index < 1 || index > size()) {
      throw std::out_of_range("diacritic index out of range: " + std::to_string(index));
    }
    return detail::kLetters[static_cast<std::size_t>(index - 1)].cp;
  }

  std::optional<int> index_of(char32_t cp) const {
    auto it = index_by_cp_.find(cp);
    if (it == index_by_cp_.end()) return std::nullopt;
    return it->second;
  }

  bool contains(char32_t cp) const { return index_by_cp_.contains(cp); }

  // Pairwise canonical composition restricted to the Vietnamese alphabet:
  // (precomposed-or-base letter, combining mark) -> precomposed letter.
  std::optional<char32_t> compose(char32_t base, char32_t mark) const {
    auto it = compose_.find({base, mark});
    if (it == compose_.end()) return std::nullopt;
    return it->second;
  }

  // Case mapping for table letters (and ASCII); other codepoints unchanged.
  char32_t to_lower(char32_t cp) const {
    if (cp < 0x80) {
      return (cp >= 'A' && cp <= 'Z') ? cp + 0x20 : cp;
    }
    auto it = lower_.find(cp);
    return it == lower_.end() ? cp : it->second;
  }

  // The committed audit format: index<TAB>letter<TAB>hex-codepoint.
  std::string to_tsv() const {
    std::string out;
    char buf[16];
    for (int i = 1; i <= size(); ++i) {
      char32_t cp = letter_at(i);
      std::snprintf(buf, sizeof(buf), "%04X", static_cast<unsigned>(cp));
      out += std::to_string(i);
      out += '\t';
      utf8::append(out, cp);
      out += '\t';
      out += buf;
      out += '\n';
    }
    return out;
  }

 private:
  DiacriticTable() {
    auto find_cp = [](char base, char32_t mod, char32_t tone) -> char32_t {
      for (const auto& l : detail::kLetters) {
        if (l.base == base && l.modifier == mod && l.tone == tone) return l.cp;
      }
      return 0;
    };
    for (std::size_t i = 0; i < detail::kLetters.size(); ++i) {
      const auto& l = detail::kLetters[i];
      index_by_cp_[l.cp] = static_cast<int>(i + 1);
      if (l.modifier && l.tone) {
        // Both intermediate single-mark forms exist in the table, so the
        // two mark orders NFD can produce both compose back.
        compose_[{find_cp(l.base, l.modifier, 0), l.tone}] = l.cp;
        compose_[{find_cp(l.base, 0, l.tone), l.modifier}] = l.cp;
      } else if (l.modifier) {
        compose_[{static_cast<char32_t>(l.base), l.modifier}] = l.cp;
      } else if (l.tone) {
        compose_[{static_cast<char32_t>(l.base), l.tone}] = l.cp;
      }
    }
    for (const auto& u : detail::kLetters) {
      if (u.base < 'A' || u.base > 'Z') continue;
      char lower_base = static_cast<char>(u.base + 0x20);
      for (const auto& l : detail::kLetters) {
        if (l.base == lower_base && l.modifier == u.modifier && l.tone == u.tone) {
          lower_[u.cp] = l.cp;
          break;
        }
      }
    }
  }

  std::unordered_map<char32_t, int> index_by_cp_;
  std::unordered_map<std::pair<char32_t, char32_t>, char32_t, detail::PairHash> compose_;
  std::unordered_map<char32_t, char32_t> lower_;
};

// Composes decomposed Vietnamese sequences (base + combining marks, any
// mark order) into the precomposed letters. Sequences outside the
// Vietnamese alphabet are left untouched.
inline std::u32string compose_vietnamese(const std::u32string& in) {
  const auto& table = DiacriticTable::canonical();
  std::u32string out;
  out.reserve(in.size());
  for (char32_t cp : in) {
    if (!out.empty()) {
      if (auto comp = table.compose(out.back(), cp)) {
        out.back() = *comp;
        continue;
      }
    }
    out.push_back(cp);
  }
  return out;
}

inline std::string normalize_nfc(std::string_view utf8_text) {
  return utf8::encode(compose_vietnamese(utf8::decode(utf8_text)));
}

struct CodecResult {
  std::string text;
  std::vector<std::string> warnings;

  bool ok() const { return warnings.empty(); }
};

// Every table letter becomes "@<index>"; everything else passes through.
// Non-ASCII codepoints outside the table are passed through verbatim and
// reported, since they leave the output impure.
inline CodecResult encode(std::string_view utf8_text) {
  const auto& table = DiacriticTable::canonical();
  CodecResult result;
  std::u32string cps = compose_vietnamese(utf8::decode(utf8_text));
  for (char32_t cp : cps) {
    if (auto index = table.index_of(cp)) {
      result.text += '@';
      result.text += std::to_string(*index);
    } else {
      if (cp >= 0x80) {
        std::string shown;
        utf8::append(shown, cp);
        char buf[32];
        std::snprintf(buf, sizeof(buf), "U+%04X", static_cast<unsigned>(cp));
        result.warnings.push_back("non-table character '" + shown + "' (" + buf +
                                  ") passed through");
      }
      utf8::append(result.text, cp);
    }
  }
  return result;
}

// Inverse of encode. Each '@' is resolved greedily: the longest digit
// prefix (3, then 2, then 1 digits, no leading zero) whose value lies in
// 1..134 is consumed. An unresolvable '@' passes through with a warning.
inline CodecResult decode(std::string_view ascii_text) {
  const auto& table = DiacriticTable::canonical();
  CodecResult result;
  std::size_t i = 0;
  const std::size_t n = ascii_text.size();
  while (i < n) {
    char c = ascii_text[i];
    if (static_cast<unsigned char>(c) >= 0x80) {
      result.warnings.push_back("non-ASCII byte at offset " + std::to_string(i) +
                                " passed through");
      result.text += c;
      ++i;
      continue;
    }
    if (c != '@') {
      result.text += c;
      ++i;
      continue;
    }
    std::size_t digits = 0;
    while (digits < 3 && i + 1 + digits < n &&
           ascii_text[i + 1 + digits] >= '0' && ascii_text[i + 1 + digits] <= '9') {
      ++digits;
    }
    int matched = 0;
    if (i + 1 < n && ascii_text[i + 1] != '0') {
      for (std::size_t len = digits; len >= 1; --len) {
        int value = 0;
        for (std::size_t k = 0; k < len; ++k) value = value * 10 + (ascii_text[i + 1 + k] - '0');
        if (value >= 1 && value <= table.size()) {
          matched = static_cast<int>(len);
          utf8::append(result.text, table.letter_at(value));
          break;
        }
      }
    }
    if (matched == 0) {
      result.warnings.push_back("unresolvable '@' at offset " + std::to_string(i) +
                                " passed through");
      result.text += '@';
      ++i;
    } else {
      i += 1 + static_cast<std::size_t>(matched);
    }
  }
  return result;
}

}  // namespace catmt::vicodec
