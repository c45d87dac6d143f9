#include "treenmt/bpe.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "treenmt/rng.hpp"

namespace treenmt {

std::vector<std::string> whitespace_split(std::string_view text) {
  std::vector<std::string> words;
  size_t i = 0;
  while (i < text.size()) {
    while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    size_t start = i;
    while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
    if (i > start) words.emplace_back(text.substr(start, i - start));
  }
  return words;
}

namespace {

// Splits a word into UTF-8 code point strings plus the end-of-word symbol.
std::vector<std::string> word_symbols(const std::string& word) {
  std::vector<std::string> symbols;
  size_t i = 0;
  while (i < word.size()) {
    const unsigned char c = static_cast<unsigned char>(word[i]);
    size_t len = 1;
    if ((c & 0xE0) == 0xC0) {
      len = 2;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
    }
    len = std::min(len, word.size() - i);
    symbols.push_back(word.substr(i, len));
    i += len;
  }
  symbols.push_back(BpeVocab::kEndOfWord);
  return symbols;
}

// One left-to-right pass merging every (first, second) occurrence.
// Identical semantics in learning and encoding, so training words encode
// to their learned merged forms.
void apply_merge(std::vector<std::string>& symbols, const std::string& first,
                 const std::string& second) {
  size_t write = 0;
  size_t read = 0;
  while (read < symbols.size()) {
    if (read + 1 < symbols.size() && symbols[read] == first && symbols[read + 1] == second) {
      symbols[write++] = first + second;
      read += 2;
    } else {
      if (write != read) symbols[write] = std::move(symbols[read]);
      ++write;
      ++read;
    }
  }
  symbols.resize(write);
}

}  // namespace

BpeVocab BpeVocab::learn(const std::vector<std::string>& texts, int num_merges,
                         const std::vector<std::string>& tag_langs) {
  if (num_merges < 0) throw ConfigError("learn_bpe: num_merges must be >= 0");

  // word frequency table
  std::map<std::string, int64_t> word_freq;
  for (const auto& text : texts) {
    std::istringstream lines(text);
    std::string line;
    while (std::getline(lines, line)) {
      for (auto& w : whitespace_split(line)) ++word_freq[w];
    }
  }
  if (word_freq.empty()) throw ConfigError("learn_bpe: no text to learn from");

  struct WordState {
    std::vector<std::string> symbols;
    int64_t freq;
  };
  std::vector<WordState> words;
  words.reserve(word_freq.size());
  std::set<std::string> alphabet;
  for (const auto& [w, f] : word_freq) {
    WordState ws{word_symbols(w), f};
    for (const auto& s : ws.symbols) alphabet.insert(s);
    words.push_back(std::move(ws));
  }

  BpeVocab vocab;
  for (int iter = 0; iter < num_merges; ++iter) {
    // pair counts; ordered map gives the lexicographic tie-break for free
    std::map<std::pair<std::string, std::string>, int64_t> pair_count;
    for (const auto& ws : words) {
      for (size_t i = 0; i + 1 < ws.symbols.size(); ++i) {
        pair_count[{ws.symbols[i], ws.symbols[i + 1]}] += ws.freq;
      }
    }
    if (pair_count.empty()) break;
    auto best = pair_count.begin();
    for (auto it = pair_count.begin(); it != pair_count.end(); ++it) {
      if (it->second > best->second) best = it;
    }
    const auto [first, second] = best->first;
    vocab.merges_.emplace_back(first, second);
    for (auto& ws : words) apply_merge(ws.symbols, first, second);
  }

  // token table: specials, language tags, alphabet (sorted), merges in order
  vocab.tokens_ = {"<pad>", "<bos>", "<eos>", "<unk>"};
  std::vector<std::string> tags_sorted(tag_langs.begin(), tag_langs.end());
  std::sort(tags_sorted.begin(), tags_sorted.end());
  for (const auto& lang : tags_sorted) {
    vocab.lang_tags_[lang] = static_cast<int32_t>(vocab.tokens_.size());
    vocab.tokens_.push_back("<2" + lang + ">");
  }
  for (const auto& s : alphabet) vocab.tokens_.push_back(s);
  for (const auto& [a, b] : vocab.merges_) vocab.tokens_.push_back(a + b);
  vocab.rebuild_maps();
  return vocab;
}

void BpeVocab::rebuild_maps() {
  token_ids_.clear();
  for (size_t i = 0; i < tokens_.size(); ++i) {
    token_ids_.emplace(tokens_[i], static_cast<int32_t>(i));
  }
  cache_ = std::make_shared<Cache>();
}

std::vector<int32_t> BpeVocab::encode_word(const std::string& word) const {
  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    auto it = cache_->words.find(word);
    if (it != cache_->words.end()) return it->second;
  }
  std::vector<std::string> symbols = word_symbols(word);
  for (const auto& [first, second] : merges_) {
    if (symbols.size() < 2) break;
    apply_merge(symbols, first, second);
  }
  std::vector<int32_t> ids;
  ids.reserve(symbols.size());
  for (const auto& s : symbols) {
    auto it = token_ids_.find(s);
    ids.push_back(it != token_ids_.end() ? it->second : kUnk);
  }
  {
    std::lock_guard<std::mutex> lock(cache_->mutex);
    cache_->words.emplace(word, ids);
  }
  return ids;
}

std::vector<int32_t> BpeVocab::encode(std::string_view sentence) const {
  std::vector<int32_t> out{kBos};
  for (const auto& word : whitespace_split(sentence)) {
    auto ids = encode_word(word);
    out.insert(out.end(), ids.begin(), ids.end());
  }
  out.push_back(kEos);
  return out;
}

std::string BpeVocab::decode(std::span<const int32_t> ids) const {
  std::string glued;
  for (int32_t id : ids) {
    if (id == kPad || id == kBos || id == kEos) continue;
    if (id < 0 || id >= size()) throw ConfigError("decode: token id out of range");
    glued += tokens_[static_cast<size_t>(id)];
  }
  std::string out;
  size_t i = 0;
  const std::string marker = kEndOfWord;
  while (i < glued.size()) {
    if (glued.compare(i, marker.size(), marker) == 0) {
      out += ' ';
      i += marker.size();
    } else {
      out += glued[i++];
    }
  }
  while (!out.empty() && out.back() == ' ') out.pop_back();
  return out;
}

int32_t BpeVocab::tag_id(const std::string& lang) const {
  auto it = lang_tags_.find(lang);
  if (it == lang_tags_.end()) {
    throw ConfigError("vocabulary has no language tag for '" + lang + "'");
  }
  return it->second;
}

VocabInfo BpeVocab::info() const {
  VocabInfo v;
  v.size = size();
  v.lang_tags = lang_tags_;
  v.no_generate = {kPad, kBos};
  for (const auto& [lang, id] : lang_tags_) v.no_generate.push_back(id);
  return v;
}

std::string BpeVocab::serialize() const {
  std::ostringstream os;
  os << "treenmt-bpe v1\n";
  os << "merges " << merges_.size() << "\n";
  for (const auto& [a, b] : merges_) os << a << ' ' << b << "\n";
  os << "tokens " << tokens_.size() << "\n";
  for (const auto& t : tokens_) os << t << "\n";
  os << "tags " << lang_tags_.size() << "\n";
  for (const auto& [lang, id] : lang_tags_) os << lang << ' ' << id << "\n";
  return os.str();
}

BpeVocab BpeVocab::deserialize(std::string_view text) {
  std::istringstream is{std::string(text)};
  std::string line;
  if (!std::getline(is, line) || line != "treenmt-bpe v1") {
    throw IoError("vocabulary file: bad or missing header");
  }
  BpeVocab vocab;
  size_t n = 0;
  std::string word;
  is >> word >> n;
  std::getline(is, line);
  if (word != "merges") throw IoError("vocabulary file: expected merges section");
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw IoError("vocabulary file: truncated merges");
    auto space = line.find(' ');
    if (space == std::string::npos) throw IoError("vocabulary file: malformed merge rule");
    vocab.merges_.emplace_back(line.substr(0, space), line.substr(space + 1));
  }
  is >> word >> n;
  std::getline(is, line);
  if (word != "tokens") throw IoError("vocabulary file: expected tokens section");
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw IoError("vocabulary file: truncated tokens");
    vocab.tokens_.push_back(line);
  }
  is >> word >> n;
  std::getline(is, line);
  if (word != "tags") throw IoError("vocabulary file: expected tags section");
  for (size_t i = 0; i < n; ++i) {
    if (!std::getline(is, line)) throw IoError("vocabulary file: truncated tags");
    auto space = line.find(' ');
    vocab.lang_tags_[line.substr(0, space)] =
        static_cast<int32_t>(std::stol(line.substr(space + 1)));
  }
  vocab.rebuild_maps();
  return vocab;
}

void BpeVocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write vocabulary file '" + path + "'");
  out << serialize();
}

BpeVocab BpeVocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read vocabulary file '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return deserialize(buf.str());
}

uint64_t BpeVocab::content_hash() const { return fnv1a64(serialize()); }

}  // namespace treenmt
