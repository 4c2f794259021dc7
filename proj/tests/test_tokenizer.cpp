#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "catmt/tokenizer.hpp"

using namespace catmt;
using tokenizer::Side;
using tokenizer::Vocab;

namespace {

corpus::Dataset one_pair_dataset() {
  corpus::Dataset ds;
  ds.add(corpus::make_pair("History of Oslo", "Lịch sử Oslo"));
  return ds;
}

}  // namespace

TEST_CASE("build_vocab orders reserved symbols then frequency then lexicographic", "[tokenizer]") {
  auto vocab = tokenizer::build_vocab(one_pair_dataset(), Side::source, /*case_sensitive=*/false);
  REQUIRE(vocab.size() == 7);
  CHECK(vocab.token_of(0) == "<pad>");
  CHECK(vocab.token_of(1) == "<bos>");
  CHECK(vocab.token_of(2) == "<eos>");
  CHECK(vocab.token_of(3) == "<unk>");
  CHECK(vocab.id_of("history") == 4);
  CHECK(vocab.id_of("of") == 5);
  CHECK(vocab.id_of("oslo") == 6);
}

TEST_CASE("build_vocab respects frequency before lexicographic order", "[tokenizer]") {
  corpus::Dataset ds;
  ds.add(corpus::make_pair("z z y", "a"));
  ds.add(corpus::make_pair("y z", "b"));
  auto vocab = tokenizer::build_vocab(ds, Side::source, true);
  CHECK(vocab.id_of("z") == 4);  // 3 occurrences
  CHECK(vocab.id_of("y") == 5);  // 2 occurrences
}

TEST_CASE("build_vocab target side uses the encoded Vietnamese", "[tokenizer]") {
  auto vocab = tokenizer::build_vocab(one_pair_dataset(), Side::target, true);
  CHECK(vocab.contains("L@88ch"));
  CHECK(vocab.contains("s@122"));
  CHECK(vocab.contains("Oslo"));
  CHECK_FALSE(vocab.contains("Lịch"));
}

TEST_CASE("min_count filters rare tokens into <unk>", "[tokenizer]") {
  auto vocab = tokenizer::build_vocab(one_pair_dataset(), Side::source, true, /*min_count=*/2);
  CHECK(vocab.size() == 4);  // reserved only
  CHECK(vocab.id_of("History") == Vocab::unk_id);
}

TEST_CASE("build_vocab rejects an empty dataset", "[tokenizer]") {
  CHECK_THROWS(tokenizer::build_vocab(corpus::Dataset{}, Side::source, true));
}

TEST_CASE("encode_ids maps known words without <unk>", "[tokenizer]") {
  auto vocab = tokenizer::build_vocab(one_pair_dataset(), Side::source, false);
  auto seq = tokenizer::encode_ids("History of Oslo", vocab, /*add_specials=*/false);
  REQUIRE(seq.ids.size() == 3);
  CHECK(seq.content_len == 3);
  for (int id : seq.ids) CHECK(id != Vocab::unk_id);
}

TEST_CASE("encode_ids wraps with specials on demand", "[tokenizer]") {
  Vocab vocab;
  auto seq = tokenizer::encode_ids("", vocab, /*add_specials=*/true, Side::target);
  CHECK(seq.ids == std::vector<int>{Vocab::bos_id, Vocab::eos_id});
  CHECK(seq.content_len == 0);
}

TEST_CASE("encode_ids truncates to the 16-token cap", "[tokenizer]") {
  Vocab vocab;
  for (int i = 0; i < 25; ++i) vocab.add("w" + std::to_string(i));
  std::string text;
  for (int i = 0; i < 20; ++i) text += "w" + std::to_string(i) + " ";
  auto seq = tokenizer::encode_ids(text, vocab, /*add_specials=*/true, Side::target);
  CHECK(seq.content_len == 16);
  CHECK(seq.ids.size() == 18);  // <bos> + 16 + <eos>
}

TEST_CASE("encode_ids maps unknown words to <unk>", "[tokenizer]") {
  auto vocab = tokenizer::build_vocab(one_pair_dataset(), Side::source, false);
  auto seq = tokenizer::encode_ids("History of Mars", vocab, false);
  CHECK(seq.ids[2] == Vocab::unk_id);
}

TEST_CASE("decode_ids strips specials and joins with single spaces", "[tokenizer]") {
  auto vocab = tokenizer::build_vocab(one_pair_dataset(), Side::source, false);
  auto seq = tokenizer::encode_ids("history of oslo", vocab, true);
  CHECK(tokenizer::decode_ids(seq, vocab) == "history of oslo");

  tokenizer::TokenSequence empty;
  empty.ids = {Vocab::bos_id, Vocab::eos_id};
  CHECK(tokenizer::decode_ids(empty, vocab).empty());

  tokenizer::TokenSequence with_unk;
  with_unk.ids = {Vocab::bos_id, Vocab::unk_id, Vocab::eos_id};
  CHECK(tokenizer::decode_ids(with_unk, vocab) == "<unk>");
}

TEST_CASE("decode_ids rejects ids beyond the vocabulary", "[tokenizer]") {
  Vocab vocab;
  tokenizer::TokenSequence seq;
  seq.ids = {vocab.size()};
  CHECK_THROWS(tokenizer::decode_ids(seq, vocab));
}

TEST_CASE("decode of encode is the normalized text for in-vocab input", "[tokenizer][property]") {
  corpus::Dataset ds;
  ds.add(corpus::make_pair("Human development", "Phát triển con người"));
  ds.add(corpus::make_pair("2004 horror films", "Phim kinh dị năm 2004"));
  ds.add(corpus::make_pair("History of Oslo", "Lịch sử Oslo"));
  for (bool sensitive : {true, false}) {
    auto src_vocab = tokenizer::build_vocab(ds, Side::source, sensitive);
    auto tgt_vocab = tokenizer::build_vocab(ds, Side::target, sensitive);
    for (const auto& pair : ds.pairs()) {
      auto norm = [&](const std::string& s) {
        return sensitive ? text::join(text::tokenize(s)) : text::to_lower(text::join(text::tokenize(s)));
      };
      auto src = tokenizer::encode_ids(pair.source, src_vocab, false);
      CHECK(tokenizer::decode_ids(src, src_vocab) == norm(pair.source));
      auto tgt = tokenizer::encode_ids(pair.encoded_target, tgt_vocab, true, Side::target);
      CHECK(tokenizer::decode_ids(tgt, tgt_vocab) == norm(pair.encoded_target));
    }
  }
}

TEST_CASE("training text has zero <unk> rate at min_count 1", "[tokenizer]") {
  auto ds = corpus::load(std::string(CATMT_SOURCE_DIR) + "/data/toy64.jsonl");
  auto src_vocab = tokenizer::build_vocab(ds, Side::source, true);
  auto tgt_vocab = tokenizer::build_vocab(ds, Side::target, true);
  for (const auto& pair : ds.pairs()) {
    for (int id : tokenizer::encode_ids(pair.source, src_vocab, false).ids) {
      CHECK(id != Vocab::unk_id);
    }
    for (int id : tokenizer::encode_ids(pair.encoded_target, tgt_vocab, true, Side::target).ids) {
      CHECK(id != Vocab::unk_id);
    }
  }
}

TEST_CASE("vocab file roundtrips and digests are content-bound", "[tokenizer]") {
  auto vocab = tokenizer::build_vocab(one_pair_dataset(), Side::source, false);
  auto path = std::filesystem::temp_directory_path() / "catmt_vocab_test.vocab";
  vocab.save(path);
  auto loaded = Vocab::load(path);
  CHECK(loaded.size() == vocab.size());
  CHECK(loaded.case_sensitive() == vocab.case_sensitive());
  for (int id = 0; id < vocab.size(); ++id) CHECK(loaded.token_of(id) == vocab.token_of(id));
  CHECK(loaded.digest() == vocab.digest());

  auto other = tokenizer::build_vocab(one_pair_dataset(), Side::target, false);
  CHECK(other.digest() != vocab.digest());
}

TEST_CASE("pad_to extends with <pad> only", "[tokenizer]") {
  Vocab vocab;
  auto seq = tokenizer::pad_to(tokenizer::encode_ids("", vocab, true, Side::target), 5);
  CHECK(seq.ids == std::vector<int>{Vocab::bos_id, Vocab::eos_id, Vocab::pad_id, Vocab::pad_id, Vocab::pad_id});
  CHECK(seq.content_len == 0);
}
