#ifndef TREENMT_CORPUS_HPP
#define TREENMT_CORPUS_HPP

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "treenmt/bpe.hpp"
#include "treenmt/errors.hpp"

namespace treenmt {

enum class ResourceClass { High, Low };

std::string to_string(ResourceClass rc);
ResourceClass resource_class_from_string(const std::string& s);

// Aligned sentence pairs for one translation direction.
struct ParallelCorpus {
  std::string src_lang, tgt_lang;
  std::vector<std::pair<std::string, std::string>> pairs;
  ResourceClass resource = ResourceClass::High;

  std::string direction() const { return src_lang + "-" + tgt_lang; }
  size_t size() const { return pairs.size(); }
};

// Loads two line-aligned UTF-8 files (one sentence per line). Pairs with a
// blank side are dropped; the count lands in *dropped_blank when given.
// Throws IoError on missing files, line-count mismatch, or invalid UTF-8.
ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             const std::string& src_lang, const std::string& tgt_lang,
                             size_t* dropped_blank = nullptr);

// Drops a pair when either side exceeds `limit` BPE tokens (BOS/EOS not
// counted).
ParallelCorpus filter_max_len(const ParallelCorpus& corpus, const BpeVocab& vocab,
                              int64_t limit = 40);

// Full copies plus a seeded sample without replacement up to exactly
// target_n. Throws ConfigError when target_n < corpus size.
ParallelCorpus oversample(const ParallelCorpus& corpus, size_t target_n, uint64_t seed);

// Seeded disjoint split; valid_fraction must be in (0, 0.5).
std::pair<ParallelCorpus, ParallelCorpus> split_train_valid(const ParallelCorpus& corpus,
                                                            double valid_fraction,
                                                            uint64_t seed);

struct TokenizedPair {
  std::vector<int32_t> src, tgt;
};

struct TokenizedCorpus {
  std::string src_lang, tgt_lang;
  ResourceClass resource = ResourceClass::High;
  std::vector<TokenizedPair> pairs;

  std::string direction() const { return src_lang + "-" + tgt_lang; }
  size_t size() const { return pairs.size(); }
};

TokenizedCorpus tokenize_corpus(const ParallelCorpus& corpus, const BpeVocab& vocab);

bool utf8_valid(std::string_view bytes);

}  // namespace treenmt

#endif  // TREENMT_CORPUS_HPP
