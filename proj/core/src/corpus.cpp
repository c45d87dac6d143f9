#include "treenmt/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "treenmt/rng.hpp"

namespace treenmt {

std::string to_string(ResourceClass rc) {
  return rc == ResourceClass::High ? "high" : "low";
}

ResourceClass resource_class_from_string(const std::string& s) {
  if (s == "high") return ResourceClass::High;
  if (s == "low") return ResourceClass::Low;
  throw ConfigError("unknown resource class '" + s + "' (expected high|low)");
}

bool utf8_valid(std::string_view bytes) {
  size_t i = 0;
  while (i < bytes.size()) {
    const unsigned char c = static_cast<unsigned char>(bytes[i]);
    size_t len;
    if (c < 0x80) {
      len = 1;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
    } else {
      return false;
    }
    if (i + len > bytes.size()) return false;
    for (size_t j = 1; j < len; ++j) {
      if ((static_cast<unsigned char>(bytes[i + j]) & 0xC0) != 0x80) return false;
    }
    i += len;
  }
  return true;
}

namespace {

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!utf8_valid(line)) {
      throw IoError("'" + path + "' line " + std::to_string(lines.size() + 1) +
                    ": undecodable bytes (not UTF-8)");
    }
    lines.push_back(std::move(line));
  }
  return lines;
}

bool blank(const std::string& s) {
  return whitespace_split(s).empty();
}

}  // namespace

ParallelCorpus load_parallel(const std::string& src_path, const std::string& tgt_path,
                             const std::string& src_lang, const std::string& tgt_lang,
                             size_t* dropped_blank) {
  auto src_lines = read_lines(src_path);
  auto tgt_lines = read_lines(tgt_path);
  if (src_lines.size() != tgt_lines.size()) {
    throw IoError("line-count mismatch: '" + src_path + "' has " +
                  std::to_string(src_lines.size()) + " lines, '" + tgt_path + "' has " +
                  std::to_string(tgt_lines.size()));
  }
  ParallelCorpus corpus;
  corpus.src_lang = src_lang;
  corpus.tgt_lang = tgt_lang;
  size_t dropped = 0;
  for (size_t i = 0; i < src_lines.size(); ++i) {
    if (blank(src_lines[i]) || blank(tgt_lines[i])) {
      ++dropped;
      continue;
    }
    corpus.pairs.emplace_back(std::move(src_lines[i]), std::move(tgt_lines[i]));
  }
  if (dropped_blank) *dropped_blank = dropped;
  if (corpus.pairs.empty()) {
    throw IoError("'" + src_path + "' / '" + tgt_path + "': no usable sentence pairs");
  }
  return corpus;
}

ParallelCorpus filter_max_len(const ParallelCorpus& corpus, const BpeVocab& vocab,
                              int64_t limit) {
  ParallelCorpus out;
  out.src_lang = corpus.src_lang;
  out.tgt_lang = corpus.tgt_lang;
  out.resource = corpus.resource;
  for (const auto& [src, tgt] : corpus.pairs) {
    if (vocab.token_count(src) > limit || vocab.token_count(tgt) > limit) continue;
    out.pairs.emplace_back(src, tgt);
  }
  return out;
}

ParallelCorpus oversample(const ParallelCorpus& corpus, size_t target_n, uint64_t seed) {
  const size_t n = corpus.size();
  if (target_n < n) {
    throw ConfigError("oversample: target " + std::to_string(target_n) +
                      " is below corpus size " + std::to_string(n));
  }
  ParallelCorpus out;
  out.src_lang = corpus.src_lang;
  out.tgt_lang = corpus.tgt_lang;
  out.resource = corpus.resource;
  out.pairs.reserve(target_n);
  for (size_t copy = 0; copy < target_n / n; ++copy) {
    out.pairs.insert(out.pairs.end(), corpus.pairs.begin(), corpus.pairs.end());
  }
  const size_t remainder = target_n % n;
  if (remainder > 0) {
    RngStream rng = RngStream::from_label(seed, "oversample/" + corpus.direction());
    for (size_t idx : rng.sample_without_replacement(n, remainder)) {
      out.pairs.push_back(corpus.pairs[idx]);
    }
  }
  return out;
}

std::pair<ParallelCorpus, ParallelCorpus> split_train_valid(const ParallelCorpus& corpus,
                                                            double valid_fraction,
                                                            uint64_t seed) {
  if (valid_fraction <= 0.0 || valid_fraction >= 0.5) {
    throw ConfigError("split_train_valid: fraction must be in (0, 0.5)");
  }
  const size_t n = corpus.size();
  size_t n_valid = static_cast<size_t>(std::llround(static_cast<double>(n) * valid_fraction));
  n_valid = std::clamp<size_t>(n_valid, 1, n - 1);

  std::vector<size_t> order(n);
  for (size_t i = 0; i < n; ++i) order[i] = i;
  RngStream rng = RngStream::from_label(seed, "split/" + corpus.direction());
  rng.shuffle(order);

  ParallelCorpus train, valid;
  train.src_lang = valid.src_lang = corpus.src_lang;
  train.tgt_lang = valid.tgt_lang = corpus.tgt_lang;
  train.resource = valid.resource = corpus.resource;
  for (size_t i = 0; i < n; ++i) {
    (i < n_valid ? valid : train).pairs.push_back(corpus.pairs[order[i]]);
  }
  return {std::move(train), std::move(valid)};
}

TokenizedCorpus tokenize_corpus(const ParallelCorpus& corpus, const BpeVocab& vocab) {
  TokenizedCorpus out;
  out.src_lang = corpus.src_lang;
  out.tgt_lang = corpus.tgt_lang;
  out.resource = corpus.resource;
  out.pairs.reserve(corpus.size());
  for (const auto& [src, tgt] : corpus.pairs) {
    out.pairs.push_back({vocab.encode(src), vocab.encode(tgt)});
  }
  return out;
}

}  // namespace treenmt
