#include "treenmt/model.hpp"

#include <algorithm>

namespace treenmt {

template <class T>
std::vector<int32_t> MultiPairModel<T>::translate(const std::string& src_lang,
                                                  const std::string& tgt_lang,
                                                  const std::vector<int32_t>& src_ids,
                                                  int max_len) const {
  TokenMatrix m = TokenMatrix::from_rows({src_ids}, vocab().pad_id);
  return translate_batch(src_lang, tgt_lang, m, max_len)[0];
}

namespace detail {

std::pair<TokenMatrix, TokenMatrix> shift_targets(const TokenMatrix& tgt, int32_t pad_id) {
  if (tgt.cols < 2) throw ShapeError("shift_targets: target rows must hold at least BOS+EOS");
  TokenMatrix input(tgt.rows, tgt.cols - 1, pad_id);
  TokenMatrix labels(tgt.rows, tgt.cols - 1, pad_id);
  for (int64_t r = 0; r < tgt.rows; ++r) {
    for (int64_t c = 0; c + 1 < tgt.cols; ++c) {
      input.at(r, c) = tgt.at(r, c);
      labels.at(r, c) = tgt.at(r, c + 1);
    }
  }
  return {std::move(input), std::move(labels)};
}

FlatRows flatten_group(const StepGroup& group, int32_t pad_id) {
  FlatRows flat;
  int64_t src_cols = 0, tgt_cols = 0, rows = 0;
  for (const auto& batch : group) {
    if (batch.src.tokens.rows != batch.tgt.rows ||
        batch.src.tokens.rows != static_cast<int64_t>(batch.src.tags.size())) {
      throw ShapeError("flatten_group: rows, targets and tags misaligned");
    }
    src_cols = std::max(src_cols, batch.src.tokens.cols);
    tgt_cols = std::max(tgt_cols, batch.tgt.cols);
    rows += batch.src.tokens.rows;
  }
  flat.src = TokenMatrix(rows, src_cols, pad_id);
  flat.tgt = TokenMatrix(rows, tgt_cols, pad_id);
  flat.tags.reserve(static_cast<size_t>(rows));
  int64_t at = 0;
  for (const auto& batch : group) {
    for (int64_t r = 0; r < batch.src.tokens.rows; ++r, ++at) {
      for (int64_t c = 0; c < batch.src.tokens.cols; ++c) {
        flat.src.at(at, c) = batch.src.tokens.at(r, c);
      }
      for (int64_t c = 0; c < batch.tgt.cols; ++c) flat.tgt.at(at, c) = batch.tgt.at(r, c);
      flat.tags.push_back(batch.src.tags[static_cast<size_t>(r)]);
    }
  }
  return flat;
}

template <class T>
LossResult<T> assemble_weighted_loss(Tape<T>* tape, const DecodedLogits<T>& decoded,
                                     const std::vector<RowTag>& tags, int32_t pad_id) {
  LossResult<T> result;
  Tensor<T> total;

  std::map<std::string, double> pair_nll_sum;
  std::map<std::string, int64_t> pair_count;

  for (const auto& block : decoded.blocks) {
    auto ce = ops::cross_entropy_per_sample(tape, block.logits, block.labels, pad_id);
    auto counts = ops::non_pad_counts(block.labels, pad_id);
    result.rows += static_cast<int64_t>(block.row_indices.size());

    // (direction, weight) groups within this leaf block
    struct Group {
      double weight;
      std::vector<size_t> rows;  // indices into the block
      int64_t tokens = 0;
    };
    std::map<std::pair<std::string, double>, Group> groups;
    for (size_t i = 0; i < block.row_indices.size(); ++i) {
      const RowTag& tag = tags[static_cast<size_t>(block.row_indices[i])];
      auto& g = groups[{tag.direction(), tag.weight}];
      g.weight = tag.weight;
      g.rows.push_back(i);
      g.tokens += counts[i];

      pair_nll_sum[tag.direction()] +=
          static_cast<double>(ce.values()[static_cast<int64_t>(i)]) *
          static_cast<double>(counts[i]);
      pair_count[tag.direction()] += counts[i];
    }

    for (const auto& [key, g] : groups) {
      if (g.tokens == 0) continue;
      // token-mean over the group: sum(ce_row * count_row) / total tokens
      std::vector<T> w(block.row_indices.size(), T(0));
      for (size_t i : g.rows) {
        w[i] = static_cast<T>(static_cast<double>(counts[i]) / static_cast<double>(g.tokens));
      }
      auto group_mean = ops::rows_weighted_sum(tape, ce, w);
      auto term = ops::scale(tape, group_mean, static_cast<T>(g.weight));
      total = total.defined() ? ops::add(tape, total, term) : term;
    }
  }

  if (!total.defined()) total = Tensor<T>::scalar(T(0));
  result.loss = total;
  for (const auto& [dir, nll] : pair_nll_sum) {
    const int64_t n = pair_count[dir];
    result.pair_loss[dir] = n > 0 ? nll / static_cast<double>(n) : 0.0;
    result.pair_tokens[dir] = n;
  }
  return result;
}

template LossResult<float> assemble_weighted_loss(Tape<float>*, const DecodedLogits<float>&,
                                                  const std::vector<RowTag>&, int32_t);
template LossResult<double> assemble_weighted_loss(Tape<double>*, const DecodedLogits<double>&,
                                                   const std::vector<RowTag>&, int32_t);

}  // namespace detail

template class MultiPairModel<float>;
template class MultiPairModel<double>;

}  // namespace treenmt
