#ifndef TREENMT_BPE_HPP
#define TREENMT_BPE_HPP

#include <cstdint>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "treenmt/errors.hpp"

namespace treenmt {

// Vocabulary facts a model needs, decoupled from the tokenizer itself.
struct VocabInfo {
  int32_t size = 0;
  int32_t pad_id = 0, bos_id = 1, eos_id = 2, unk_id = 3;
  std::map<std::string, int32_t> lang_tags;  // '<2xx>' ids per target language
  // ids a greedy decoder must never emit (pad, bos, language tags)
  std::vector<int32_t> no_generate;
};

// Shared byte-pair-encoding vocabulary over all languages in a model.
//
// Learning: words are split into code points plus a '</w>' end-of-word
// symbol; the most frequent adjacent symbol pair is merged repeatedly,
// ties broken by lexicographic order of the pair. Encoding applies the
// merges in learned order (greedy), wraps with BOS/EOS, and maps symbols
// outside the training character set to UNK.
class BpeVocab {
 public:
  static constexpr int32_t kPad = 0, kBos = 1, kEos = 2, kUnk = 3;
  static constexpr const char* kEndOfWord = "</w>";

  BpeVocab() = default;

  // tag_langs: target languages that get a reserved '<2xx>' token
  // (used only by the full-sharing baseline).
  static BpeVocab learn(const std::vector<std::string>& texts, int num_merges,
                        const std::vector<std::string>& tag_langs = {});

  std::vector<int32_t> encode(std::string_view sentence) const;
  std::string decode(std::span<const int32_t> ids) const;

  // Token count of a sentence excluding BOS/EOS.
  int64_t token_count(std::string_view sentence) const {
    return static_cast<int64_t>(encode(sentence).size()) - 2;
  }

  int32_t size() const { return static_cast<int32_t>(tokens_.size()); }
  const std::vector<std::string>& tokens() const { return tokens_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }
  int32_t tag_id(const std::string& lang) const;
  VocabInfo info() const;

  void save(const std::string& path) const;
  static BpeVocab load(const std::string& path);
  std::string serialize() const;
  static BpeVocab deserialize(std::string_view text);
  uint64_t content_hash() const;

 private:
  std::vector<int32_t> encode_word(const std::string& word) const;
  void rebuild_maps();

  std::vector<std::pair<std::string, std::string>> merges_;  // learned order
  std::vector<std::string> tokens_;                          // id -> token text
  std::unordered_map<std::string, int32_t> token_ids_;
  std::map<std::string, int32_t> lang_tags_;  // language -> tag token id

  // Word-encoding memoization; keyed only by immutable vocab content, so
  // copies may share it.
  struct Cache {
    std::mutex mutex;
    std::unordered_map<std::string, std::vector<int32_t>> words;
  };
  std::shared_ptr<Cache> cache_ = std::make_shared<Cache>();
};

// Splits on ASCII whitespace, collapsing runs.
std::vector<std::string> whitespace_split(std::string_view text);

}  // namespace treenmt

#endif  // TREENMT_BPE_HPP
