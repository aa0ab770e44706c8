// SPDX-License-Identifier: Apache-2.0

#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "adarank/data.hpp"
#include "doctest.h"

using namespace adarank;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name, const std::string& contents) {
  const fs::path p = fs::temp_directory_path() / ("adarank_test_" + name);
  std::ofstream(p, std::ios::binary) << contents;
  return p;
}

// Predicts the class whose keywords appear most often in the text.
int keyword_vote(const SyntheticVocab& vocab, const Tokenizer& tok, const std::string& text) {
  std::vector<int> counts(vocab.class_keywords.size(), 0);
  for (const std::string& word : tok.split(text)) {
    for (std::size_t c = 0; c < vocab.class_keywords.size(); ++c) {
      for (const std::string& kw : vocab.class_keywords[c]) counts[c] += word == kw;
    }
  }
  return static_cast<int>(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

}  // namespace

TEST_CASE("fnv1a64 known values") {
  CHECK(fnv1a64("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a") == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar") == 0x85944171f73967e8ULL);
}

TEST_CASE("tokenizer") {
  const Tokenizer tok(1000);
  const auto empty = tok.tokenize("", 4);
  CHECK(empty == std::vector<std::int32_t>{Tokenizer::kUnknown, 0, 0, 0});
  CHECK(tok.tokenize("  ,. ", 3) == std::vector<std::int32_t>{Tokenizer::kUnknown, 0, 0});

  const auto ids = tok.tokenize("Hello hello, WORLD!", 5);
  CHECK(ids[0] == ids[1]);
  CHECK(ids[2] == tok.token_id("world"));
  CHECK(ids[3] == Tokenizer::kPad);
  CHECK(ids[0] == static_cast<std::int32_t>(2 + fnv1a64("hello") % 998));
  CHECK(tok.tokenize("a b c d e", 2).size() == 2);
  CHECK(tok.split("Ko\xC4\x87 je") == std::vector<std::string>{"ko\xC4\x87", "je"});
  for (const std::string& w : {"x", "yy", "zebra", "1234"}) {
    const auto id = tok.token_id(w);
    CHECK((id >= 2 && id < 1000));
  }
  CHECK_THROWS(Tokenizer(2));
}

TEST_CASE("csv load and round trip") {
  const fs::path p = temp_file("ok.csv", "label,text\n0,plain text\n2,\"quoted, with comma\"\n1,\"has \"\"quotes\"\"\"\n");
  const Dataset ds = load_csv(p, 3);
  REQUIRE(ds.size() == 3);
  CHECK(ds.records[0] == Record{0, "plain text"});
  CHECK(ds.records[1] == Record{2, "quoted, with comma"});
  CHECK(ds.records[2] == Record{1, "has \"quotes\""});
  CHECK(ds.labels() == std::vector<int>{0, 2, 1});

  const fs::path q = fs::temp_directory_path() / "adarank_test_rt.csv";
  write_csv(q, ds);
  CHECK(load_csv(q, 3).records == ds.records);

  const fs::path bad_label = temp_file("bad_label.csv", "label,text\n0,fine\n3,out of range\n");
  CHECK_THROWS_WITH(load_csv(bad_label, 3), doctest::Contains(":3:"));
  CHECK_THROWS_WITH(load_csv(temp_file("bad_header.csv", "lbl,text\n0,a\n"), 2), doctest::Contains(":1:"));
  CHECK_THROWS(load_csv(temp_file("unterminated.csv", "label,text\n0,\"open\n"), 2));
  CHECK_THROWS(load_csv(temp_file("fields.csv", "label,text\n0,a,b\n"), 2));
  CHECK_THROWS(load_csv(temp_file("nonint.csv", "label,text\nx,a\n"), 2));
  CHECK_THROWS(load_csv(fs::temp_directory_path() / "adarank_missing.csv", 2));
}

TEST_CASE("scoring corpora") {
  const Corpus generic = generic_corpus();
  REQUIRE(generic.sentences.size() == 9);
  CHECK(generic.sentences[0].rfind("Here We Go Then, You And I", 0) == 0);
  const Tokenizer tok(8192);
  const InputBatch batch = make_batch(tok, generic.sentences, 16);
  for (std::size_t i = 0; i < generic.sentences.size(); ++i) CHECK(batch.ids[i * 16] >= 2);

  const fs::path p = temp_file("corpus.txt", "one\n\n two \nthree\n");
  CHECK(load_corpus(p).sentences.size() == 3);

  Dataset ds;
  ds.num_classes = 2;
  for (int i = 0; i < 30; ++i) ds.records.push_back({i % 2, "text " + std::to_string(i)});
  const Corpus a = in_domain_corpus(ds, 4), b = in_domain_corpus(ds, 4);
  CHECK(a.sentences.size() == 10);
  CHECK(a.sentences == b.sentences);
  CHECK(std::set<std::string>(a.sentences.begin(), a.sentences.end()).size() == 10);
  CHECK(in_domain_corpus(ds, 5).sentences != a.sentences);
}

TEST_CASE("batches") {
  const Tokenizer tok(500);
  const InputBatch x = make_batch(tok, {"a b", "c", "d e f"}, 4, {0, 1, 0});
  CHECK(x.batch == 3);
  CHECK(x.seq_len == 4);
  const InputBatch y = select_rows(x, {2, 0});
  CHECK(y.batch == 2);
  CHECK(y.labels == std::vector<int>{0, 0});
  CHECK(std::equal(y.ids.begin(), y.ids.begin() + 4, x.ids.begin() + 8));
  CHECK_THROWS(make_batch(tok, {"a"}, 4, {0, 1}));
}

TEST_CASE("synthetic vocabulary") {
  const Tokenizer tok(8192);
  const SyntheticVocab v = make_synthetic_vocab(4, tok);
  REQUIRE(v.class_keywords.size() == 4);
  std::set<std::int32_t> ids;
  std::size_t words = 0;
  for (const auto& kws : v.class_keywords) {
    CHECK(kws.size() == 12);
    for (const auto& w : kws) ids.insert(tok.token_id(w)), ++words;
  }
  for (const auto& w : v.filler) ids.insert(tok.token_id(w)), ++words;
  CHECK(v.filler.size() == 64);
  CHECK(ids.size() == words);
  CHECK_THROWS(make_synthetic_vocab(4, Tokenizer(16)));
}

TEST_CASE("synthetic data is keyword-separable, noisy, balanced, and seeded") {
  const Tokenizer tok(8192);
  const SyntheticVocab v4 = make_synthetic_vocab(4, tok);
  RngStream r1(7, 1), r2(7, 1);
  const Dataset clean = synthetic_dataset(4, 1000, v4, 0.0, r1);
  CHECK(clean.records == synthetic_dataset(4, 1000, v4, 0.0, r2).records);

  std::size_t correct = 0;
  std::vector<std::size_t> counts(4, 0);
  for (const Record& r : clean.records) {
    correct += keyword_vote(v4, tok, r.text) == r.label;
    ++counts[r.label];
    CHECK(tok.split(r.text).size() == 8);
  }
  CHECK(correct == clean.size());
  for (std::size_t c : counts) CHECK((c >= 237 && c <= 263));

  const SyntheticVocab v2 = make_synthetic_vocab(2, tok);
  RngStream r3(11, 1);
  const Dataset noisy = synthetic_dataset(2, 5000, v2, 0.5, r3);
  correct = 0;
  for (const Record& r : noisy.records) correct += keyword_vote(v2, tok, r.text) == r.label;
  const double agreement = static_cast<double>(correct) / noisy.size();
  CHECK(agreement == doctest::Approx(0.75).epsilon(0.04));

  RngStream r4(8, 1);
  CHECK(synthetic_dataset(4, 1000, v4, 0.0, r4).records != clean.records);
  CHECK_THROWS(synthetic_dataset(4, 10, v4, 1.5, r4));
}
