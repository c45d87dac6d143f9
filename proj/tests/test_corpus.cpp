#include "treenmt/corpus.hpp"

#include <filesystem>
#include <fstream>
#include <set>

#include "doctest.h"
#include "treenmt/batching.hpp"
#include "treenmt/rng.hpp"
#include "treenmt/synthetic.hpp"

using namespace treenmt;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  auto dir = fs::temp_directory_path() / "treenmt_corpus_test";
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& p, const std::string& content) {
  std::ofstream out(p, std::ios::binary);
  out << content;
}

SyntheticFamilySpec small_family() {
  SyntheticFamilySpec spec;
  spec.tree = LanguageTree::parse("((aa,bb),cc)");
  spec.proto_vocab_size = 60;
  spec.sentence_len_min = 2;
  spec.sentence_len_max = 5;
  spec.divergence_rate = 0.3;
  spec.pairs = {{"aa", "cc", 50, ResourceClass::High}, {"bb", "cc", 30, ResourceClass::Low}};
  return spec;
}

}  // namespace

TEST_CASE("bpe learn: hand-traced merge order on 'ab ab ab ac'") {
  auto vocab = BpeVocab::learn({"ab ab ab ac"}, 3);
  // counts: (a,b)=3, (b,</w>)=3, (a,c)=1, (c,</w>)=1
  // merge 1 = (a,b) by lexicographic tie-break against (b,</w>)
  REQUIRE(vocab.merges().size() == 3);
  CHECK(vocab.merges()[0] == std::pair<std::string, std::string>{"a", "b"});
  CHECK(vocab.merges()[1] == std::pair<std::string, std::string>{"ab", "</w>"});
  CHECK(vocab.merges()[2] == std::pair<std::string, std::string>{"a", "c"});

  // training word encodes to its merged form: "ab" -> one token "ab</w>"
  auto ids = vocab.encode("ab");
  REQUIRE(ids.size() == 3);  // BOS x EOS
  CHECK(vocab.tokens()[static_cast<size_t>(ids[1])] == "ab</w>");
}

TEST_CASE("bpe: zero merges gives a character vocabulary") {
  auto vocab = BpeVocab::learn({"ab ba"}, 0);
  CHECK(vocab.merges().empty());
  // specials + {</w>, a, b}
  CHECK(vocab.size() == 4 + 3);
  auto ids = vocab.encode("ab");
  CHECK(ids.size() == 5);  // BOS a b </w> EOS
}

TEST_CASE("bpe: empty sentence encodes to [BOS, EOS]") {
  auto vocab = BpeVocab::learn({"ab"}, 2);
  auto ids = vocab.encode("");
  REQUIRE(ids.size() == 2);
  CHECK(ids[0] == BpeVocab::kBos);
  CHECK(ids[1] == BpeVocab::kEos);
  CHECK(vocab.decode(ids).empty());
}

TEST_CASE("bpe: unknown characters map to UNK") {
  auto vocab = BpeVocab::learn({"ab ab"}, 2);
  auto ids = vocab.encode("aXb");
  bool has_unk = false;
  for (auto id : ids) has_unk = has_unk || id == BpeVocab::kUnk;
  CHECK(has_unk);
}

TEST_CASE("bpe: round trip on training sentences") {
  std::vector<std::string> sentences = {"the cat sat", "the mat", "cat cat mat sat the"};
  auto vocab = BpeVocab::learn(sentences, 20);
  for (const auto& s : sentences) CHECK(vocab.decode(vocab.encode(s)) == s);
}

TEST_CASE("bpe: property round trip on random sentences") {
  RngStream rng(404);
  SyntheticFamilySpec family = small_family();
  auto corpora = generate_synthetic_family(family, 11);
  std::vector<std::string> texts;
  for (const auto& c : corpora) {
    for (const auto& [s, t] : c.pairs) {
      texts.push_back(s);
      texts.push_back(t);
    }
  }
  auto vocab = BpeVocab::learn(texts, 64);
  for (const auto& s : texts) CHECK(vocab.decode(vocab.encode(s)) == s);
}

TEST_CASE("bpe: language tags and vocab info") {
  auto vocab = BpeVocab::learn({"ab"}, 1, {"de", "az"});
  CHECK(vocab.tokens()[4] == "<2az>");  // sorted tag order
  CHECK(vocab.tokens()[5] == "<2de>");
  CHECK(vocab.tag_id("az") == 4);
  CHECK(vocab.tag_id("de") == 5);
  CHECK_THROWS_AS(vocab.tag_id("xx"), ConfigError);
  auto info = vocab.info();
  CHECK(info.size == vocab.size());
  CHECK(info.lang_tags.size() == 2);
  // pad, bos and both tags excluded from generation
  CHECK(info.no_generate.size() == 4);
}

TEST_CASE("bpe: save/load round trip preserves everything") {
  auto vocab = BpeVocab::learn({"ab ab ab ac ad"}, 5, {"cc"});
  auto path = (temp_dir() / "vocab.txt").string();
  vocab.save(path);
  auto loaded = BpeVocab::load(path);
  CHECK(loaded.serialize() == vocab.serialize());
  CHECK(loaded.content_hash() == vocab.content_hash());
  CHECK(loaded.encode("ab ac") == vocab.encode("ab ac"));
}

TEST_CASE("load_parallel: basic pairing and errors") {
  auto dir = temp_dir();
  write_file(dir / "a.txt", "one\ntwo\nthree\n");
  write_file(dir / "b.txt", "uno\ndos\ntres\n");
  auto corpus = load_parallel((dir / "a.txt").string(), (dir / "b.txt").string(), "en", "es");
  REQUIRE(corpus.size() == 3);
  CHECK(corpus.pairs[1] == std::pair<std::string, std::string>{"two", "dos"});

  write_file(dir / "c.txt", "one\ntwo\n");
  CHECK_THROWS_WITH_AS(
      load_parallel((dir / "a.txt").string(), (dir / "c.txt").string(), "en", "es"),
      doctest::Contains("3"), IoError);

  // blank line on either side drops the pair with a count
  write_file(dir / "d.txt", "one\n\nthree\n");
  size_t dropped = 0;
  auto partial =
      load_parallel((dir / "d.txt").string(), (dir / "b.txt").string(), "en", "es", &dropped);
  CHECK(partial.size() == 2);
  CHECK(dropped == 1);

  // invalid UTF-8
  write_file(dir / "bad.txt", "on\xFF\x65\nx\ny\n");
  CHECK_THROWS_AS(load_parallel((dir / "bad.txt").string(), (dir / "b.txt").string(), "en", "es"),
                  IoError);
}

TEST_CASE("filter_max_len drops either-side violations") {
  auto vocab = BpeVocab::learn({"aa bb cc dd"}, 0);
  ParallelCorpus corpus;
  corpus.src_lang = "x";
  corpus.tgt_lang = "y";
  corpus.pairs = {{"aa bb", "cc"}, {"aa bb cc dd", "cc"}, {"aa", "aa bb cc dd"}};
  // char-level: "aa bb" = 6 tokens, "aa bb cc dd" = 12, "cc" = 3, "aa" = 3
  auto kept = filter_max_len(corpus, vocab, 6);
  REQUIRE(kept.size() == 1);
  CHECK(kept.pairs[0].first == "aa bb");

  auto boundary = filter_max_len(corpus, vocab, 12);
  CHECK(boundary.size() == 3);

  auto none = filter_max_len(corpus, vocab, 0);
  CHECK(none.size() == 0);
}

TEST_CASE("oversample: 110 -> 500 gives 4 full copies + 60 sampled") {
  ParallelCorpus corpus;
  corpus.src_lang = "a";
  corpus.tgt_lang = "b";
  for (int i = 0; i < 110; ++i) {
    corpus.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  }
  auto big = oversample(corpus, 500, 7);
  REQUIRE(big.size() == 500);
  std::map<std::string, int> counts;
  for (const auto& [s, t] : big.pairs) ++counts[s];
  int fours = 0, fives = 0;
  for (const auto& [s, c] : counts) {
    CHECK(c >= 4);  // every original appears >= floor(500/110) times
    CHECK(c <= 5);
    (c == 4 ? fours : fives)++;
  }
  CHECK(fives == 60);
  CHECK(fours == 50);

  // identity when target equals size
  auto same = oversample(corpus, 110, 7);
  CHECK(same.pairs == corpus.pairs);

  // deterministic
  auto again = oversample(corpus, 500, 7);
  CHECK(again.pairs == big.pairs);

  CHECK_THROWS_AS(oversample(corpus, 100, 7), ConfigError);
}

TEST_CASE("split_train_valid: disjoint, exhaustive, deterministic") {
  ParallelCorpus corpus;
  corpus.src_lang = "a";
  corpus.tgt_lang = "b";
  for (int i = 0; i < 200; ++i) {
    corpus.pairs.emplace_back("s" + std::to_string(i), "t" + std::to_string(i));
  }
  auto [train, valid] = split_train_valid(corpus, 0.1, 3);
  CHECK(train.size() + valid.size() == 200);
  CHECK(valid.size() == 20);
  std::set<std::string> train_set, valid_set;
  for (const auto& [s, t] : train.pairs) train_set.insert(s);
  for (const auto& [s, t] : valid.pairs) valid_set.insert(s);
  for (const auto& s : valid_set) CHECK(train_set.count(s) == 0);

  auto [train2, valid2] = split_train_valid(corpus, 0.1, 3);
  CHECK(train2.pairs == train.pairs);

  CHECK_THROWS_AS(split_train_valid(corpus, 0.6, 3), ConfigError);
  CHECK_THROWS_AS(split_train_valid(corpus, 0.0, 3), ConfigError);
}

TEST_CASE("synthetic: zero divergence gives copy tasks") {
  SyntheticFamilySpec spec = small_family();
  spec.divergence_rate = 0.0;
  auto corpora = generate_synthetic_family(spec, 5);
  for (const auto& c : corpora) {
    for (const auto& [src, tgt] : c.pairs) CHECK(src == tgt);
  }
}

TEST_CASE("synthetic: same seed gives byte-identical corpora") {
  SyntheticFamilySpec spec = small_family();
  spec.suffix_marker = {{"aa", "ka"}, {"cc", "um"}};
  spec.swap_probability = {{"cc", 0.2}};
  auto c1 = generate_synthetic_family(spec, 42);
  auto c2 = generate_synthetic_family(spec, 42);
  REQUIRE(c1.size() == c2.size());
  for (size_t i = 0; i < c1.size(); ++i) CHECK(c1[i].pairs == c2[i].pairs);
  auto c3 = generate_synthetic_family(spec, 43);
  CHECK(c1[0].pairs != c3[0].pairs);
}

TEST_CASE("synthetic: siblings share strictly more lexicon than cousins") {
  SyntheticFamilySpec spec = small_family();
  auto lex = synthetic_lexicons(spec, 9);
  auto overlap = [&](const std::string& a, const std::string& b) {
    int n = 0;
    for (size_t i = 0; i < lex[a].size(); ++i) {
      if (lex[a][i] == lex[b][i]) ++n;
    }
    return n;
  };
  const int sib = overlap("aa", "bb");
  CHECK(sib > overlap("aa", "cc"));
  CHECK(sib > overlap("bb", "cc"));
}

TEST_CASE("synthetic: relatedness decreases with tree distance") {
  SyntheticFamilySpec spec;
  spec.tree = LanguageTree::parse("(((aa,bb),cc),dd)");
  spec.proto_vocab_size = 200;
  spec.divergence_rate = 0.25;
  spec.pairs = {{"aa", "dd", 10, ResourceClass::High}};
  auto lex = synthetic_lexicons(spec, 21);
  auto overlap = [&](const std::string& a, const std::string& b) {
    int n = 0;
    for (size_t i = 0; i < lex[a].size(); ++i) {
      if (lex[a][i] == lex[b][i]) ++n;
    }
    return n;
  };
  CHECK(overlap("aa", "bb") > overlap("aa", "cc"));
  CHECK(overlap("aa", "cc") > overlap("aa", "dd"));
}

TEST_CASE("make_epoch_batches: stacking arithmetic and determinism") {
  auto make_stream = [](const std::string& name, int n, size_t prefix = 0) {
    EpochStream s;
    s.name = name;
    s.protected_prefix = prefix;
    for (int i = 0; i < n; ++i) {
      StreamRow row;
      row.src = {1, static_cast<int32_t>(10 + i % 7), 2};
      row.tgt = {1, static_cast<int32_t>(20 + i % 5), 2};
      row.tag = {name.substr(0, 2), name.substr(3, 2), 1.0};
      s.rows.push_back(std::move(row));
    }
    return s;
  };

  // two pairs of 256 -> 2 steps of 2 batches x 128 rows
  auto groups = make_epoch_batches({make_stream("aa-cc", 256), make_stream("bb-cc", 256)}, 128,
                                   1, /*pad=*/0);
  REQUIRE(groups.size() == 2);
  for (const auto& g : groups) {
    REQUIRE(g.size() == 2);
    for (const auto& b : g) {
      CHECK(b.src.tokens.rows == 128);
      CHECK(b.tgt.rows == 128);
      CHECK(b.src.tags.size() == 128);
    }
  }

  // 300 rows -> 2 batches, 44 dropped
  auto uneven = make_epoch_batches({make_stream("aa-cc", 300)}, 128, 1, 0);
  CHECK(uneven.size() == 2);

  // same seed -> identical composition
  auto again = make_epoch_batches({make_stream("aa-cc", 300)}, 128, 1, 0);
  for (size_t t = 0; t < uneven.size(); ++t) {
    CHECK(uneven[t][0].src.tokens.ids == again[t][0].src.tokens.ids);
  }
  auto other = make_epoch_batches({make_stream("aa-cc", 300)}, 128, 2, 0);
  CHECK(uneven[0][0].src.tokens.ids != other[0][0].src.tokens.ids);

  // too-small stream
  CHECK_THROWS_AS(make_epoch_batches({make_stream("aa-cc", 100)}, 128, 1, 0), ConfigError);
}

TEST_CASE("make_epoch_batches: protected prefix never loses rows to the tail") {
  // 10 own rows (marked weight 2) + 20 fillers, batch 8 -> 3 batches of 8;
  // every own row must appear in the kept 24.
  EpochStream s;
  s.name = "mix";
  s.protected_prefix = 10;
  for (int i = 0; i < 30; ++i) {
    StreamRow row;
    row.src = {1, static_cast<int32_t>(100 + i), 2};
    row.tgt = {1, 2};
    row.tag = {"aa", "cc", i < 10 ? 2.0 : 1.0};
    s.rows.push_back(std::move(row));
  }
  auto groups = make_epoch_batches({std::move(s)}, 8, 77, 0);
  REQUIRE(groups.size() == 3);
  int own_seen = 0;
  for (const auto& g : groups) {
    for (const auto& tag : g[0].src.tags) {
      if (tag.weight == 2.0) ++own_seen;
    }
  }
  CHECK(own_seen == 10);
}
