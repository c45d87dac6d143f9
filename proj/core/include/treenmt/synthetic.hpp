#ifndef TREENMT_SYNTHETIC_HPP
#define TREENMT_SYNTHETIC_HPP

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "treenmt/corpus.hpp"
#include "treenmt/lang_tree.hpp"

namespace treenmt {

// Desk-scale stand-in for real multilingual corpora: a proto-language
// lexicon diverges along the tree edges, so lexical overlap between two
// languages decreases with their tree distance. A parallel pair renders
// the same proto sentence through both languages' lexicons, optionally
// marks tokens with a per-language suffix, and applies per-language
// adjacent swaps.
struct SyntheticFamilySpec {
  struct PairSpec {
    std::string src, tgt;
    size_t size = 0;
    ResourceClass resource = ResourceClass::High;
  };

  LanguageTree tree;  // all languages of the family, sources and targets
  int proto_vocab_size = 400;
  double zipf_exponent = 1.0;
  int sentence_len_min = 3;
  int sentence_len_max = 9;
  double divergence_rate = 0.15;                  // applied on every edge
  std::map<std::string, double> edge_divergence;  // child node_id -> override
  double suffix_fraction = 0.5;
  std::map<std::string, std::string> suffix_marker;  // per language; default none
  std::map<std::string, double> swap_probability;    // per language; default 0
  std::vector<PairSpec> pairs;

  void validate() const;
};

std::vector<ParallelCorpus> generate_synthetic_family(const SyntheticFamilySpec& spec,
                                                      uint64_t seed);

// Per-language lexicons after edge mutations (index = proto word id).
// Exposed so relatedness properties can be measured directly.
std::map<std::string, std::vector<std::string>> synthetic_lexicons(
    const SyntheticFamilySpec& spec, uint64_t seed);

}  // namespace treenmt

#endif  // TREENMT_SYNTHETIC_HPP
