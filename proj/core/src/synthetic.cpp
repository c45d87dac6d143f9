#include "treenmt/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "treenmt/rng.hpp"

namespace treenmt {

void SyntheticFamilySpec::validate() const {
  if (proto_vocab_size < 2) throw ConfigError("synthetic: proto_vocab_size must be >= 2");
  if (sentence_len_min < 1 || sentence_len_max < sentence_len_min) {
    throw ConfigError("synthetic: bad sentence length range");
  }
  auto check_rate = [](double r, const std::string& what) {
    if (r < 0.0 || r > 1.0) throw ConfigError("synthetic: " + what + " must be in [0, 1]");
  };
  check_rate(divergence_rate, "divergence_rate");
  for (const auto& [id, r] : edge_divergence) check_rate(r, "edge divergence for " + id);
  check_rate(suffix_fraction, "suffix_fraction");
  for (const auto& [lang, p] : swap_probability) check_rate(p, "swap probability for " + lang);
  if (pairs.empty()) throw ConfigError("synthetic: no pairs configured");
  for (const auto& p : pairs) {
    if (p.size < 1) throw ConfigError("synthetic: corpus size must be >= 1");
    if (!tree.has_leaf(p.src) || !tree.has_leaf(p.tgt)) {
      throw ConfigError("synthetic: pair " + p.src + "-" + p.tgt +
                        " uses a language missing from the family tree");
    }
  }
}

namespace {

const char kConsonants[] = "bdfgklmnprstvz";
const char kVowels[] = "aeiou";

std::string random_word(RngStream& rng) {
  const int syllables = 2 + static_cast<int>(rng.uniform_int(2));
  std::string w;
  for (int s = 0; s < syllables; ++s) {
    w += kConsonants[rng.uniform_int(sizeof(kConsonants) - 1)];
    w += kVowels[rng.uniform_int(sizeof(kVowels) - 1)];
  }
  return w;
}

std::string unique_word(RngStream& rng, const std::set<std::string>& taken) {
  for (;;) {
    std::string w = random_word(rng);
    if (!taken.count(w)) return w;
  }
}

// Mutates the lexicons along every tree edge, depth-first in spec order.
void mutate_down(const LanguageTree& tree, const SyntheticFamilySpec& spec, uint64_t seed,
                 const std::string& node_id, const std::vector<std::string>& lexicon,
                 std::map<std::string, std::vector<std::string>>& out) {
  const auto& info = tree.info(node_id);
  if (info.is_leaf) {
    out[node_id] = lexicon;
    return;
  }
  for (const auto& child : info.children) {
    auto it = spec.edge_divergence.find(child);
    const double rate = it != spec.edge_divergence.end() ? it->second : spec.divergence_rate;
    std::vector<std::string> mutated = lexicon;
    if (rate > 0.0) {
      RngStream rng = RngStream::from_label(seed, "synthetic/edge/" + child);
      const size_t v = lexicon.size();
      const size_t k = static_cast<size_t>(std::llround(rate * static_cast<double>(v)));
      std::set<std::string> taken(mutated.begin(), mutated.end());
      for (size_t idx : rng.sample_without_replacement(v, k)) {
        std::string w = unique_word(rng, taken);
        taken.insert(w);
        mutated[idx] = std::move(w);
      }
    }
    mutate_down(tree, spec, seed, child, mutated, out);
  }
}

// Zipf sampler over ranks 0..V-1 with weight 1/(rank+1)^s.
class ZipfSampler {
 public:
  ZipfSampler(int v, double s) {
    cdf_.resize(static_cast<size_t>(v));
    double acc = 0.0;
    for (int i = 0; i < v; ++i) {
      acc += 1.0 / std::pow(static_cast<double>(i + 1), s);
      cdf_[static_cast<size_t>(i)] = acc;
    }
    for (auto& c : cdf_) c /= acc;
  }

  size_t sample(RngStream& rng) const {
    const double u = rng.uniform();
    return static_cast<size_t>(
        std::lower_bound(cdf_.begin(), cdf_.end(), u) - cdf_.begin());
  }

 private:
  std::vector<double> cdf_;
};

std::string render_sentence(const std::vector<size_t>& proto,
                            const std::vector<std::string>& lexicon, const std::string& suffix,
                            double suffix_fraction, double swap_prob, RngStream& rng) {
  std::vector<std::string> words;
  words.reserve(proto.size());
  for (size_t idx : proto) {
    std::string w = lexicon[idx];
    if (!suffix.empty() && rng.bernoulli(suffix_fraction)) w += suffix;
    words.push_back(std::move(w));
  }
  if (swap_prob > 0.0) {
    for (size_t i = 0; i + 1 < words.size(); ++i) {
      if (rng.bernoulli(swap_prob)) std::swap(words[i], words[i + 1]);
    }
  }
  std::string out;
  for (size_t i = 0; i < words.size(); ++i) {
    if (i) out += ' ';
    out += words[i];
  }
  return out;
}

}  // namespace

std::map<std::string, std::vector<std::string>> synthetic_lexicons(
    const SyntheticFamilySpec& spec, uint64_t seed) {
  spec.validate();
  RngStream rng = RngStream::from_label(seed, "synthetic/proto");
  std::vector<std::string> proto;
  std::set<std::string> taken;
  proto.reserve(static_cast<size_t>(spec.proto_vocab_size));
  for (int i = 0; i < spec.proto_vocab_size; ++i) {
    std::string w = unique_word(rng, taken);
    taken.insert(w);
    proto.push_back(std::move(w));
  }
  std::map<std::string, std::vector<std::string>> lexicons;
  mutate_down(spec.tree, spec, seed, spec.tree.root_id(), proto, lexicons);
  return lexicons;
}

std::vector<ParallelCorpus> generate_synthetic_family(const SyntheticFamilySpec& spec,
                                                      uint64_t seed) {
  auto lexicons = synthetic_lexicons(spec, seed);
  ZipfSampler zipf(spec.proto_vocab_size, spec.zipf_exponent);

  auto lang_setting = [](const std::map<std::string, double>& m, const std::string& lang) {
    auto it = m.find(lang);
    return it != m.end() ? it->second : 0.0;
  };

  std::vector<ParallelCorpus> corpora;
  for (const auto& pair : spec.pairs) {
    RngStream rng = RngStream::from_label(seed, "synthetic/pair/" + pair.src + "-" + pair.tgt);
    const auto& src_lex = lexicons.at(pair.src);
    const auto& tgt_lex = lexicons.at(pair.tgt);
    std::string src_suffix, tgt_suffix;
    if (auto it = spec.suffix_marker.find(pair.src); it != spec.suffix_marker.end()) {
      src_suffix = it->second;
    }
    if (auto it = spec.suffix_marker.find(pair.tgt); it != spec.suffix_marker.end()) {
      tgt_suffix = it->second;
    }
    const double src_swap = lang_setting(spec.swap_probability, pair.src);
    const double tgt_swap = lang_setting(spec.swap_probability, pair.tgt);

    ParallelCorpus corpus;
    corpus.src_lang = pair.src;
    corpus.tgt_lang = pair.tgt;
    corpus.resource = pair.resource;
    corpus.pairs.reserve(pair.size);
    const int len_span = spec.sentence_len_max - spec.sentence_len_min + 1;
    for (size_t i = 0; i < pair.size; ++i) {
      const int len = spec.sentence_len_min + static_cast<int>(rng.uniform_int(len_span));
      std::vector<size_t> proto(static_cast<size_t>(len));
      for (auto& idx : proto) idx = zipf.sample(rng);
      std::string src =
          render_sentence(proto, src_lex, src_suffix, spec.suffix_fraction, src_swap, rng);
      std::string tgt =
          render_sentence(proto, tgt_lex, tgt_suffix, spec.suffix_fraction, tgt_swap, rng);
      corpus.pairs.emplace_back(std::move(src), std::move(tgt));
    }
    corpora.push_back(std::move(corpus));
  }
  return corpora;
}

}  // namespace treenmt
