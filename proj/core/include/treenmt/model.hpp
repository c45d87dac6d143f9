#ifndef TREENMT_MODEL_HPP
#define TREENMT_MODEL_HPP

#include <map>
#include <string>
#include <vector>

#include "treenmt/batching.hpp"
#include "treenmt/bpe.hpp"
#include "treenmt/ops.hpp"
#include "treenmt/param_store.hpp"
#include "treenmt/tensor.hpp"

namespace treenmt {

// Hidden states for all stacked rows after the encoder side, row order
// equal to the order the rows were passed in, tags carried through.
template <class T>
struct EncoderOutputs {
  Tensor<T> hidden;  // [rows, Ls, d_model]
  std::vector<RowTag> tags;
  TokenMatrix src_tokens;  // same row order; source of cross-attention masks
};

// Leaf-decoder logits blocks; together the blocks partition the stacked
// rows exactly.
template <class T>
struct DecodedLogits {
  struct LeafBlock {
    std::string leaf;
    Tensor<T> logits;                  // [n, Lt, vocab]
    std::vector<int64_t> row_indices;  // global (stacking-order) row ids
    TokenMatrix labels;                // [n, Lt]
  };
  std::vector<LeafBlock> blocks;
};

template <class T>
struct LossResult {
  Tensor<T> loss;  // scalar on the tape: sum over groups of w_g * mean-CE_g
  std::map<std::string, double> pair_loss;     // direction -> token-mean CE
  std::map<std::string, int64_t> pair_tokens;  // direction -> non-pad tokens
  int64_t rows = 0;
};

// Common surface for the hierarchical model and the baselines: batched
// multi-pair training forward and greedy translation.
template <class T>
class MultiPairModel {
 public:
  virtual ~MultiPairModel() = default;

  virtual LossResult<T> forward_loss(Tape<T>* tape, const StepGroup& group, bool training,
                                     RngStream& rng) = 0;

  // Greedy decode; returns generated ids without BOS/EOS. max_len caps the
  // generated length per row at min(source length + 10, max_len).
  virtual std::vector<std::vector<int32_t>> translate_batch(const std::string& src_lang,
                                                            const std::string& tgt_lang,
                                                            const TokenMatrix& src,
                                                            int max_len) const = 0;

  std::vector<int32_t> translate(const std::string& src_lang, const std::string& tgt_lang,
                                 const std::vector<int32_t>& src_ids, int max_len) const;

  virtual ParamStore<T>& params() = 0;
  const ParamStore<T>& params() const {
    return const_cast<MultiPairModel*>(this)->params();
  }
  virtual const VocabInfo& vocab() const = 0;
};

namespace detail {

// Teacher forcing split: input drops the last column, labels drop BOS.
std::pair<TokenMatrix, TokenMatrix> shift_targets(const TokenMatrix& tgt, int32_t pad_id);

// Loss = sum over (direction, weight) groups of weight * token-mean CE of
// the group; reported per-pair losses merge the groups of a direction.
template <class T>
LossResult<T> assemble_weighted_loss(Tape<T>* tape, const DecodedLogits<T>& decoded,
                                     const std::vector<RowTag>& tags, int32_t pad_id);

// Flattens a step group into stacked-order rows.
struct FlatRows {
  TokenMatrix src;  // [N, Ls] padded to the group max
  TokenMatrix tgt;  // [N, Lt]
  std::vector<RowTag> tags;
};
FlatRows flatten_group(const StepGroup& group, int32_t pad_id);

// Runs the greedy loop: logits_fn(prefix [N, t]) -> [N, t, V] logits.
template <class T, class LogitsFn>
std::vector<std::vector<int32_t>> greedy_generate(LogitsFn&& logits_fn, int64_t rows,
                                                  const std::vector<int>& max_new_tokens,
                                                  const VocabInfo& vocab) {
  std::vector<std::vector<int32_t>> out(static_cast<size_t>(rows));
  std::vector<bool> done(static_cast<size_t>(rows), false);
  int longest = 0;
  for (int m : max_new_tokens) longest = std::max(longest, m);

  std::vector<std::vector<int32_t>> prefix(static_cast<size_t>(rows), {BpeVocab::kBos});
  for (int t = 0; t < longest; ++t) {
    bool all_done = true;
    for (size_t r = 0; r < done.size(); ++r) all_done = all_done && done[r];
    if (all_done) break;

    TokenMatrix dec_in = TokenMatrix::from_rows(prefix, vocab.pad_id);
    Tensor<T> logits = logits_fn(dec_in);
    const int64_t V = logits.dim(2);
    const int64_t L = logits.dim(1);
    for (int64_t r = 0; r < rows; ++r) {
      auto& row_out = out[static_cast<size_t>(r)];
      if (done[static_cast<size_t>(r)]) {
        prefix[static_cast<size_t>(r)].push_back(vocab.pad_id);
        continue;
      }
      const T* scores = logits.data() + (r * L + t) * V;
      int32_t best = -1;
      for (int32_t v = 0; v < V; ++v) {
        bool banned = false;
        for (int32_t ng : vocab.no_generate) banned = banned || v == ng;
        if (banned) continue;
        if (best < 0 || scores[v] > scores[best]) best = v;
      }
      if (best == vocab.eos_id) {
        done[static_cast<size_t>(r)] = true;
        prefix[static_cast<size_t>(r)].push_back(vocab.eos_id);
        continue;
      }
      row_out.push_back(best);
      prefix[static_cast<size_t>(r)].push_back(best);
      if (static_cast<int>(row_out.size()) >= max_new_tokens[static_cast<size_t>(r)]) {
        done[static_cast<size_t>(r)] = true;
      }
    }
  }
  return out;
}

}  // namespace detail

}  // namespace treenmt

#endif  // TREENMT_MODEL_HPP
