#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "catmt/metrics.hpp"
#include "catmt/rng.hpp"

using namespace catmt;
using metrics::EvalPair;

namespace {

std::vector<std::string> toks(const std::string& s) { return text::tokenize(s); }

std::vector<EvalPair> pairs_of(std::initializer_list<std::pair<const char*, const char*>> raw) {
  std::vector<EvalPair> out;
  for (const auto& [h, r] : raw) out.push_back({toks(h), toks(r)});
  return out;
}

std::filesystem::path temp_file(const std::string& name, const std::vector<std::string>& lines) {
  auto dir = std::filesystem::temp_directory_path() / "catmt_metrics_tests";
  std::filesystem::create_directories(dir);
  auto path = dir / name;
  std::ofstream out(path);
  for (const auto& l : lines) out << l << '\n';
  return path;
}

}  // namespace

TEST_CASE("identical corpora score BLEU 1.0 exactly", "[metrics]") {
  auto pairs = pairs_of({{"a b c d e", "a b c d e"}, {"x y z w", "x y z w"}});
  CHECK(metrics::bleu(pairs) == 1.0);
}

TEST_CASE("the hand-computed BLEU example evaluates to the brevity penalty", "[metrics]") {
  auto pairs = pairs_of({{"a b c d", "a b c d e"}});
  // p_1..p_4 all 1, BP = exp(1 - 5/4)
  CHECK_THAT(metrics::bleu(pairs), Catch::Matchers::WithinAbs(std::exp(-0.25), 1e-9));
  CHECK_THAT(metrics::bleu(pairs), Catch::Matchers::WithinAbs(0.7788, 1e-3));
}

TEST_CASE("disjoint hypotheses stay under 0.01 on a 100-token corpus", "[metrics]") {
  std::vector<EvalPair> pairs;
  for (int i = 0; i < 25; ++i) {
    EvalPair p;
    for (int j = 0; j < 4; ++j) {
      p.hyp.push_back("h" + std::to_string(i) + "_" + std::to_string(j));
      p.ref.push_back("r" + std::to_string(i) + "_" + std::to_string(j));
    }
    pairs.push_back(std::move(p));
  }
  const double score = metrics::bleu(pairs);
  CHECK(score > 0.0);  // the 0.1 floor keeps it positive
  CHECK(score < 0.01);
}

TEST_CASE("all-empty hypotheses score zero", "[metrics]") {
  std::vector<EvalPair> pairs{{{}, toks("a b")}, {{}, toks("c")}};
  CHECK(metrics::bleu(pairs) == 0.0);
}

TEST_CASE("short hypotheses use the numerator floor", "[metrics]") {
  // two-token pairs: no 3-grams or 4-grams exist anywhere
  auto pairs = pairs_of({{"a b", "a b"}});
  const double score = metrics::bleu(pairs);
  // p1 = p2 = 1, p3 = p4 floored at 0.1/1
  CHECK_THAT(score, Catch::Matchers::WithinAbs(std::pow(0.1 * 0.1, 0.25), 1e-9));
}

TEST_CASE("identical pairs score ROUGE-L 1.0", "[metrics]") {
  CHECK(metrics::rouge_l(pairs_of({{"a b c", "a b c"}})) == 1.0);
}

TEST_CASE("the hand LCS example gives F1 0.8", "[metrics]") {
  auto pairs = pairs_of({{"a b c", "a c"}});
  CHECK_THAT(metrics::rouge_l(pairs), Catch::Matchers::WithinAbs(0.8, 1e-12));
}

TEST_CASE("disjoint token sets score ROUGE-L 0", "[metrics]") {
  CHECK(metrics::rouge_l(pairs_of({{"a b", "x y"}})) == 0.0);
  CHECK(metrics::rouge_l(std::vector<EvalPair>{{{}, toks("x")}}) == 0.0);
}

TEST_CASE("ROUGE-L is symmetric in hypothesis and reference", "[metrics][property]") {
  SplitMix64 rng(50);
  const std::vector<std::string> words{"a", "b", "c", "d", "e"};
  for (int trial = 0; trial < 50; ++trial) {
    EvalPair p;
    const int hn = 1 + static_cast<int>(rng.next_below(6));
    const int rn = 1 + static_cast<int>(rng.next_below(6));
    for (int i = 0; i < hn; ++i) p.hyp.push_back(words[rng.next_below(words.size())]);
    for (int i = 0; i < rn; ++i) p.ref.push_back(words[rng.next_below(words.size())]);
    EvalPair swapped{p.ref, p.hyp};
    CHECK(metrics::rouge_l({&p, 1}) == metrics::rouge_l({&swapped, 1}));
  }
}

TEST_CASE("identical three-token pairs score the METEOR identity value", "[metrics]") {
  auto pairs = pairs_of({{"a b c", "a b c"}});
  const double expected = 1.0 - 0.5 * std::pow(1.0 / 3.0, 3);
  CHECK_THAT(metrics::meteor(pairs), Catch::Matchers::WithinAbs(expected, 1e-12));
  CHECK_THAT(metrics::meteor(pairs), Catch::Matchers::WithinAbs(0.98148, 1e-5));
}

TEST_CASE("no common unigrams scores METEOR 0", "[metrics]") {
  CHECK(metrics::meteor(pairs_of({{"a b", "x y"}})) == 0.0);
}

TEST_CASE("inverted order costs the full fragmentation penalty", "[metrics]") {
  auto pairs = pairs_of({{"b a", "a b"}});
  // m=2, chunks=2, F_mean=1, penalty=0.5
  CHECK_THAT(metrics::meteor(pairs), Catch::Matchers::WithinAbs(0.5, 1e-12));
}

TEST_CASE("chunk minimization finds the contiguous alignment", "[metrics]") {
  // "a b a": the two hyp 'a's must map to the two ref 'a's; only one
  // assignment keeps 'a b' contiguous, giving 2 chunks instead of 3
  auto pairs = pairs_of({{"a b a", "a b x a"}});
  // m=3 (a,a,b), best alignment: a->0 b->1 a->3: chunks 2
  // P=1, R=3/4, F=10*0.75/(0.75+9)=0.76923, penalty=0.5*(2/3)^3=0.14815
  const double f_mean = 10.0 * 1.0 * 0.75 / (0.75 + 9.0 * 1.0);
  const double expected = f_mean * (1.0 - 0.5 * std::pow(2.0 / 3.0, 3));
  CHECK_THAT(metrics::meteor(pairs), Catch::Matchers::WithinAbs(expected, 1e-12));
}

TEST_CASE("corpus scores ignore pair order", "[metrics][property]") {
  auto pairs = pairs_of({{"a b c", "a b"}, {"x y", "x z y"}, {"m n o p", "m n o p"}});
  auto reversed = pairs;
  std::reverse(reversed.begin(), reversed.end());
  CHECK(metrics::bleu(pairs) == metrics::bleu(reversed));
  CHECK(metrics::rouge_l(pairs) == metrics::rouge_l(reversed));
  CHECK(metrics::meteor(pairs) == metrics::meteor(reversed));
}

TEST_CASE("all scores stay within [0,1] on random corpora", "[metrics][property]") {
  SplitMix64 rng(51);
  const std::vector<std::string> words{"a", "b", "c", "d"};
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<EvalPair> pairs;
    const int n = 1 + static_cast<int>(rng.next_below(5));
    for (int i = 0; i < n; ++i) {
      EvalPair p;
      const int hn = static_cast<int>(rng.next_below(7));
      const int rn = 1 + static_cast<int>(rng.next_below(6));
      for (int j = 0; j < hn; ++j) p.hyp.push_back(words[rng.next_below(words.size())]);
      for (int j = 0; j < rn; ++j) p.ref.push_back(words[rng.next_below(words.size())]);
      pairs.push_back(std::move(p));
    }
    for (double score : {metrics::bleu(pairs), metrics::rouge_l(pairs), metrics::meteor(pairs)}) {
      CHECK(score >= 0.0);
      CHECK(score <= 1.0);
    }
  }
}

TEST_CASE("evaluate_files scores on decoded Vietnamese", "[metrics]") {
  // the hypothesis side carries the model's @-encoded output; scoring
  // must happen after decoding, so these count as exact matches
  const std::vector<std::string> readable{"Lịch sử Oslo", "Phát triển con người"};
  std::vector<std::string> encoded;
  for (const auto& line : readable) encoded.push_back(vicodec::encode(line).text);
  CHECK(encoded[0] == "L@88ch s@122 Oslo");
  auto hyp = temp_file("hyp.txt", encoded);
  auto ref = temp_file("ref.txt", readable);
  auto report = metrics::evaluate_files(hyp, ref);
  CHECK(report.pair_count == 2);
  CHECK(report.rouge_l == 1.0);
  CHECK(report.bleu == 1.0);
  CHECK(report.meteor > 0.9);
}

TEST_CASE("evaluate_files rejects mismatched and empty inputs", "[metrics]") {
  auto hyp = temp_file("short.txt", {"a"});
  auto ref = temp_file("long.txt", {"a", "b"});
  CHECK_THROWS_WITH(metrics::evaluate_files(hyp, ref),
                    Catch::Matchers::ContainsSubstring("line-count"));
  auto empty1 = temp_file("e1.txt", {});
  auto empty2 = temp_file("e2.txt", {});
  CHECK_THROWS(metrics::evaluate_files(empty1, empty2));
}

TEST_CASE("evaluate composes the three metrics", "[metrics]") {
  auto pairs = pairs_of({{"a b c", "a b c"}});
  auto report = metrics::evaluate(pairs);
  CHECK(report.bleu == metrics::bleu(pairs));
  CHECK(report.rouge_l == metrics::rouge_l(pairs));
  CHECK(report.meteor == metrics::meteor(pairs));
  CHECK(report.pair_count == 1);
}

TEST_CASE("case folding is opt-in", "[metrics]") {
  auto hyp = temp_file("case_h.txt", {"Thể Thao"});
  auto ref = temp_file("case_r.txt", {"thể thao"});
  auto strict = metrics::evaluate_files(hyp, ref);
  CHECK(strict.rouge_l == 0.0);
  metrics::EvalOptions folded;
  folded.lowercase = true;
  CHECK(metrics::evaluate_files(hyp, ref, folded).rouge_l == 1.0);
}
