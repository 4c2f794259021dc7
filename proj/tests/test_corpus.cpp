#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>
#include <set>

#include "catmt/corpus.hpp"

using namespace catmt;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  auto dir = fs::temp_directory_path() / "catmt_corpus_tests";
  fs::create_directories(dir);
  return dir / name;
}

corpus::Dataset synthetic(int n) {
  corpus::Dataset ds;
  for (int i = 0; i < n; ++i) {
    ds.add(corpus::make_pair("History of place " + std::to_string(i),
                             "Lịch sử vùng " + std::to_string(i), "Q" + std::to_string(i + 1)));
  }
  return ds;
}

}  // namespace

TEST_CASE("save then load reproduces the dataset", "[corpus]") {
  auto path = temp_file("roundtrip.jsonl");
  auto ds = synthetic(3);
  corpus::save(ds, path);
  auto loaded = corpus::load(path);
  CHECK(loaded == ds);
}

TEST_CASE("empty dataset roundtrips through an empty file", "[corpus]") {
  auto path = temp_file("empty.jsonl");
  corpus::save(corpus::Dataset{}, path);
  CHECK(fs::file_size(path) == 0);
  CHECK(corpus::load(path).empty());
}

TEST_CASE("load names the malformed line", "[corpus]") {
  auto path = temp_file("malformed.jsonl");
  {
    std::ofstream out(path);
    out << R"({"source":"a","target":"x"})" << "\n";
    out << R"({"source":"b","target":"y"})" << "\n";
    out << "{broken" << "\n";
    out << R"({"source":"c","target":"z"})" << "\n";
    out << R"({"source":"d","target":"w"})" << "\n";
  }
  CHECK_THROWS_WITH(corpus::load(path), Catch::Matchers::ContainsSubstring(":3:"));
}

TEST_CASE("load skips duplicates with a warning", "[corpus]") {
  auto path = temp_file("dup.jsonl");
  {
    std::ofstream out(path);
    out << R"({"source":"a","target":"x"})" << "\n";
    out << R"({"source":"a","target":"x"})" << "\n";
  }
  std::vector<std::string> warnings;
  auto ds = corpus::load(path, &warnings);
  CHECK(ds.size() == 1);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("duplicate") != std::string::npos);
}

TEST_CASE("load fills in a missing encoded_target", "[corpus]") {
  auto path = temp_file("fill.jsonl");
  {
    std::ofstream out(path);
    out << R"({"source":"History of Oslo","target":"Lịch sử Oslo"})" << "\n";
  }
  auto ds = corpus::load(path);
  REQUIRE(ds.size() == 1);
  CHECK(ds.pairs()[0].encoded_target == "L@88ch s@122 Oslo");
}

TEST_CASE("dataset rejects duplicate (source, target) tuples", "[corpus]") {
  corpus::Dataset ds;
  CHECK(ds.add(corpus::make_pair("a", "x")));
  CHECK_FALSE(ds.add(corpus::make_pair("a", "x", "Q9")));
  CHECK(ds.add(corpus::make_pair("a", "y")));  // same source, different target is legitimate
  CHECK(ds.size() == 2);
}

TEST_CASE("split reproduces the published 8:1:1 sizes", "[corpus]") {
  auto ds = synthetic(15000);
  auto result = corpus::split(ds, {});
  CHECK(result.train.size() == 12000);
  CHECK(result.val.size() == 1500);
  CHECK(result.test.size() == 1500);
}

TEST_CASE("split handles degenerate and floor-allocated ratios", "[corpus]") {
  auto ds = synthetic(10);
  auto all_train = corpus::split(ds, {{1, 0, 0}, 42});
  CHECK(all_train.train.size() == 10);
  CHECK(all_train.val.size() == 0);
  CHECK(all_train.test.size() == 0);

  auto r811 = corpus::split(ds, {{8, 1, 1}, 42});
  CHECK(r811.train.size() == 8);
  CHECK(r811.val.size() == 1);
  CHECK(r811.test.size() == 1);

  // remainders go to train
  auto r11 = corpus::split(synthetic(11), {{8, 1, 1}, 42});
  CHECK(r11.train.size() == 9);
  CHECK(r11.val.size() == 1);
  CHECK(r11.test.size() == 1);
}

TEST_CASE("split rejects zero ratios and empty datasets", "[corpus]") {
  CHECK_THROWS(corpus::split(synthetic(5), {{0, 0, 0}, 42}));
  CHECK_THROWS(corpus::split(corpus::Dataset{}, {}));
}

TEST_CASE("split is a deterministic partition", "[corpus][property]") {
  SplitMix64 rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    const int n = 1 + static_cast<int>(rng.next_below(200));
    auto ds = synthetic(n);
    corpus::SplitSpec spec{{8, 1, 1}, rng.next_u64()};
    auto a = corpus::split(ds, spec);
    auto b = corpus::split(ds, spec);
    CHECK(a.train == b.train);
    CHECK(a.val == b.val);
    CHECK(a.test == b.test);

    CHECK(a.train.size() + a.val.size() + a.test.size() == ds.size());
    std::set<std::string> seen;
    for (const auto* part : {&a.train, &a.val, &a.test}) {
      for (const auto& pair : part->pairs()) {
        CHECK(seen.insert(pair.source + "\x1f" + pair.target).second);
        CHECK(ds.contains(pair.source, pair.target));
      }
    }
  }
}

TEST_CASE("analyze counts whitespace tokens and vocabularies", "[corpus]") {
  corpus::Dataset ds;
  ds.add(corpus::make_pair("History of Oslo", "Lịch sử Oslo"));
  auto stats = corpus::analyze(ds, 10);
  CHECK(stats.max_source_len == 3);
  CHECK(stats.max_target_len == 3);
  CHECK(stats.vocab_source_sensitive == 3);
  CHECK(stats.vocab_target_sensitive == 3);
  CHECK(stats.vocab_source_insensitive == 3);
  CHECK(stats.vocab_target_insensitive == 3);
}

TEST_CASE("analyze distinguishes case-sensitive and insensitive vocabularies", "[corpus]") {
  corpus::Dataset ds;
  ds.add(corpus::make_pair("History of history", "Lịch sử lịch sử"));
  auto stats = corpus::analyze(ds, 10);
  CHECK(stats.vocab_source_sensitive == 3);    // History, of, history
  CHECK(stats.vocab_source_insensitive == 2);  // history, of
  CHECK(stats.vocab_target_sensitive == 3);    // Lịch, sử, lịch
  CHECK(stats.vocab_target_insensitive == 2);
  CHECK(stats.vocab_source_insensitive <= stats.vocab_source_sensitive);
  CHECK(stats.vocab_target_insensitive <= stats.vocab_target_sensitive);
}

TEST_CASE("analyze of an empty dataset is all zero", "[corpus]") {
  auto stats = corpus::analyze(corpus::Dataset{}, 5);
  CHECK(stats.max_source_len == 0);
  CHECK(stats.max_target_len == 0);
  CHECK(stats.vocab_source_sensitive == 0);
  CHECK(stats.top_source_words.empty());
  CHECK(stats.rare_target_words.empty());
}

TEST_CASE("analyze ranks by count with lexicographic tie-break", "[corpus]") {
  corpus::Dataset ds;
  ds.add(corpus::make_pair("b b a c", "x"));
  ds.add(corpus::make_pair("c a", "y"));
  auto stats = corpus::analyze(ds, 2);
  REQUIRE(stats.top_source_words.size() == 2);
  CHECK(stats.top_source_words[0].word == "a");  // a:2, b:2, c:2 -> lexicographic
  CHECK(stats.top_source_words[1].word == "b");
  CHECK(stats.rare_source_words[0].word == "a");
}

TEST_CASE("word counts sum to the total token count", "[corpus][property]") {
  auto ds = synthetic(57);
  auto stats = corpus::analyze(ds, 100000);
  std::uint64_t sum = 0;
  for (const auto& wc : stats.top_source_words) sum += wc.count;
  CHECK(sum == stats.total_source_tokens);
}
