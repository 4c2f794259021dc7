#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "catmt/corpus.hpp"
#include "catmt/text.hpp"

namespace catmt::tokenizer {

enum class Side { source, target };

// Word-level vocabulary. Ids are dense; the four reserved symbols are
// pinned to 0..3 and are always present.
class Vocab {
 public:
  static constexpr int pad_id = 0;
  static constexpr int bos_id = 1;
  static constexpr int eos_id = 2;
  static constexpr int unk_id = 3;

  static constexpr const char* pad_token = "<pad>";
  static constexpr const char* bos_token = "<bos>";
  static constexpr const char* eos_token = "<eos>";
  static constexpr const char* unk_token = "<unk>";

  Vocab() { reset_reserved(); }

  explicit Vocab(bool case_sensitive) : case_sensitive_(case_sensitive) { reset_reserved(); }

  int size() const { return static_cast<int>(id_to_token_.size()); }
  bool case_sensitive() const { return case_sensitive_; }

  int add(const std::string& token) {
    auto [it, inserted] = token_to_id_.try_emplace(token, size());
    if (inserted) id_to_token_.push_back(token);
    return it->second;
  }

  int id_of(std::string_view token) const {
    auto it = token_to_id_.find(std::string(token));
    return it == token_to_id_.end() ? unk_id : it->second;
  }

  const std::string& token_of(int id) const {
    if (id < 0 || id >= size()) {
      throw std::out_of_range("token id out of range: " + std::to_string(id));
    }
    return id_to_token_[static_cast<std::size_t>(id)];
  }

  bool contains(std::string_view token) const {
    return token_to_id_.count(std::string(token)) > 0;
  }

  // One token<TAB>id per line, reserved symbols first.
  void save(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open for writing: " + path.string());
    out << "#case_sensitive\t" << (case_sensitive_ ? 1 : 0) << '\n';
    for (int id = 0; id < size(); ++id) {
      out << id_to_token_[static_cast<std::size_t>(id)] << '\t' << id << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path.string());
  }

  static Vocab load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open: " + path.string());
    Vocab vocab;
    vocab.id_to_token_.clear();
    vocab.token_to_id_.clear();
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      auto tab = line.find('\t');
      if (tab == std::string::npos) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": expected token<TAB>id");
      }
      std::string token = line.substr(0, tab);
      int id = std::stoi(line.substr(tab + 1));
      if (token == "#case_sensitive") {
        vocab.case_sensitive_ = id != 0;
        continue;
      }
      if (id != vocab.size()) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": ids must be dense and in order");
      }
      if (vocab.add(token) != id) {
        throw std::runtime_error(path.string() + ":" + std::to_string(line_no) +
                                 ": duplicate token '" + token + "'");
      }
    }
    if (vocab.size() < 4 || vocab.id_to_token_[0] != pad_token ||
        vocab.id_to_token_[1] != bos_token || vocab.id_to_token_[2] != eos_token ||
        vocab.id_to_token_[3] != unk_token) {
      throw std::runtime_error(path.string() + ": reserved symbols missing or misplaced");
    }
    return vocab;
  }

  // FNV-1a over the canonical serialization; used as the checkpoint's
  // vocab reference.
  std::uint64_t digest() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](std::string_view s) {
      for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001B3ULL;
      }
    };
    feed(case_sensitive_ ? "cs1\n" : "cs0\n");
    for (const auto& t : id_to_token_) {
      feed(t);
      feed("\n");
    }
    return h;
  }

 private:
  void reset_reserved() {
    add(pad_token);
    add(bos_token);
    add(eos_token);
    add(unk_token);
  }

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  bool case_sensitive_ = true;
};

struct TokenSequence {
  std::vector<int> ids;
  Side role = Side::source;
  // Number of real (non-special, non-pad) tokens.
  int content_len = 0;

  int length() const { return static_cast<int>(ids.size()); }
};

// The target side trains on the diacritic-encoded Vietnamese, so its
// vocabulary is built from encoded_target.
inline Vocab build_vocab(const corpus::Dataset& dataset, Side side, bool case_sensitive,
                         int min_count = 1) {
  if (dataset.empty()) throw std::invalid_argument("cannot build a vocab from an empty dataset");
  std::map<std::string, std::uint64_t> counts;
  for (const auto& pair : dataset.pairs()) {
    const std::string& line = side == Side::source ? pair.source : pair.encoded_target;
    for (auto& token : text::tokenize(line)) {
      counts[case_sensitive ? token : text::to_lower(token)]++;
    }
  }
  std::vector<std::pair<std::string, std::uint64_t>> order(counts.begin(), counts.end());
  std::stable_sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  Vocab vocab(case_sensitive);
  for (const auto& [token, count] : order) {
    if (count < static_cast<std::uint64_t>(min_count)) continue;
    vocab.add(token);
  }
  return vocab;
}

// Whitespace split, optional lowercasing per vocab mode, truncation to
// max_len content tokens; add_specials wraps with <bos>/<eos>.
inline TokenSequence encode_ids(std::string_view line, const Vocab& vocab, bool add_specials,
                                Side role = Side::source, int max_len = 16) {
  TokenSequence seq;
  seq.role = role;
  auto tokens = text::tokenize(line);
  if (tokens.size() > static_cast<std::size_t>(max_len)) {
    tokens.resize(static_cast<std::size_t>(max_len));
  }
  if (add_specials) seq.ids.push_back(Vocab::bos_id);
  for (const auto& t : tokens) {
    seq.ids.push_back(vocab.id_of(vocab.case_sensitive() ? t : text::to_lower(t)));
  }
  if (add_specials) seq.ids.push_back(Vocab::eos_id);
  seq.content_len = static_cast<int>(tokens.size());
  return seq;
}

// Joins content tokens with single spaces, dropping specials and padding.
inline std::string decode_ids(const TokenSequence& seq, const Vocab& vocab) {
  std::vector<std::string> tokens;
  for (int id : seq.ids) {
    if (id == Vocab::pad_id || id == Vocab::bos_id || id == Vocab::eos_id) continue;
    tokens.push_back(vocab.token_of(id));  // throws on id >= |V|
  }
  return text::join(tokens);
}

inline TokenSequence pad_to(TokenSequence seq, int target_length) {
  while (seq.length() < target_length) seq.ids.push_back(Vocab::pad_id);
  return seq;
}

}  // namespace catmt::tokenizer
