#include "treenmt/hier_model.hpp"

#include <algorithm>
#include <set>

namespace treenmt {

namespace op = treenmt::ops;

namespace {

void check_alloc(const LanguageTree& tree, const LayerAllocation& alloc, const char* side) {
  for (const auto& id : tree.traversal_schedule()) {
    if (alloc.layers.find(id) == alloc.layers.end()) {
      throw TreeError(std::string(side) + " allocation is missing node '" + id + "'");
    }
  }
  if (alloc.layers.size() != tree.num_nodes()) {
    throw TreeError(std::string(side) + " allocation does not match its tree");
  }
}

// Additive self-attention mask for a subset of token rows.
template <class T>
Tensor<T> subset_self_mask(const TokenMatrix& tokens, const std::vector<int64_t>& indices,
                           int32_t pad_id, bool causal) {
  TokenMatrix sub(static_cast<int64_t>(indices.size()), tokens.cols, pad_id);
  for (size_t i = 0; i < indices.size(); ++i) {
    for (int64_t c = 0; c < tokens.cols; ++c) {
      sub.at(static_cast<int64_t>(i), c) = tokens.at(indices[i], c);
    }
  }
  return MaskSpec::from_tokens(sub, pad_id).self_mask<T>(causal);
}

template <class T>
Tensor<T> subset_cross_mask(const TokenMatrix& queries, const TokenMatrix& keys,
                            const std::vector<int64_t>& indices, int32_t pad_id) {
  TokenMatrix q(static_cast<int64_t>(indices.size()), queries.cols, pad_id);
  TokenMatrix k(static_cast<int64_t>(indices.size()), keys.cols, pad_id);
  for (size_t i = 0; i < indices.size(); ++i) {
    for (int64_t c = 0; c < queries.cols; ++c) {
      q.at(static_cast<int64_t>(i), c) = queries.at(indices[i], c);
    }
    for (int64_t c = 0; c < keys.cols; ++c) {
      k.at(static_cast<int64_t>(i), c) = keys.at(indices[i], c);
    }
  }
  return MaskSpec::cross_mask<T>(MaskSpec::from_tokens(q, pad_id),
                                 MaskSpec::from_tokens(k, pad_id));
}

std::vector<int64_t> identity_indices(int64_t n) {
  std::vector<int64_t> idx(static_cast<size_t>(n));
  for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
  return idx;
}

}  // namespace

template <class T>
HierModel<T>::HierModel(LanguageTree enc_tree, LanguageTree dec_tree, LayerAllocation enc_alloc,
                        LayerAllocation dec_alloc, ModelConfig config, VocabInfo vocab,
                        uint64_t seed)
    : enc_tree_(std::move(enc_tree)),
      dec_tree_(std::move(dec_tree)),
      enc_alloc_(std::move(enc_alloc)),
      dec_alloc_(std::move(dec_alloc)),
      config_(config),
      vocab_(std::move(vocab)) {
  config_.validate();
  check_alloc(enc_tree_, enc_alloc_, "encoder");
  check_alloc(dec_tree_, dec_alloc_, "decoder");
  if (vocab_.size < 5) throw ConfigError("vocabulary too small for a model");

  RngStream rng = RngStream::from_label(seed, "init");
  const int64_t d = config_.d_model, v = vocab_.size;
  embedding_ = params_.create_glorot("shared/embedding", {v, d}, rng);
  out_proj_ = params_.create_glorot("shared/out_proj", {d, v}, rng);
  for (const auto& id : enc_tree_.traversal_schedule()) {
    auto& stack = enc_stacks_[id];
    for (int i = 0; i < enc_alloc_.at(id); ++i) {
      stack.push_back(
          make_encoder_layer(params_, "enc/" + id + "/layer" + std::to_string(i), config_, rng));
    }
  }
  for (const auto& id : dec_tree_.traversal_schedule()) {
    auto& stack = dec_stacks_[id];
    for (int i = 0; i < dec_alloc_.at(id); ++i) {
      stack.push_back(
          make_decoder_layer(params_, "dec/" + id + "/layer" + std::to_string(i), config_, rng));
    }
  }
}

template <class T>
const std::vector<EncoderLayerParams<T>>& HierModel<T>::encoder_stack(
    const std::string& node_id) const {
  auto it = enc_stacks_.find(node_id);
  if (it == enc_stacks_.end()) throw TreeError("no encoder stack for node '" + node_id + "'");
  return it->second;
}

template <class T>
const std::vector<DecoderLayerParams<T>>& HierModel<T>::decoder_stack(
    const std::string& node_id) const {
  auto it = dec_stacks_.find(node_id);
  if (it == dec_stacks_.end()) throw TreeError("no decoder stack for node '" + node_id + "'");
  return it->second;
}

template <class T>
Tensor<T> HierModel<T>::run_encoder_node(Tape<T>* tape, const std::string& node_id,
                                         Tensor<T> hidden, Tensor<T> self_mask, bool training,
                                         RngStream& rng) const {
  for (const auto& layer : encoder_stack(node_id)) {
    hidden = encoder_layer_forward(tape, hidden, self_mask, layer, config_, training, rng);
  }
  return hidden;
}

template <class T>
Tensor<T> HierModel<T>::run_decoder_node(Tape<T>* tape, const std::string& node_id,
                                         Tensor<T> hidden, Tensor<T> enc_hidden,
                                         Tensor<T> self_mask, Tensor<T> cross_mask,
                                         bool training, RngStream& rng) const {
  for (const auto& layer : decoder_stack(node_id)) {
    hidden = decoder_layer_forward(tape, hidden, enc_hidden, self_mask, cross_mask, layer,
                                   config_, training, rng);
  }
  return hidden;
}

template <class T>
EncoderOutputs<T> HierModel<T>::encode(Tape<T>* tape, const std::vector<RoutedBatch>& batches,
                                       bool training, RngStream& rng) const {
  if (batches.empty()) throw ShapeError("hier encode: no batches");

  // stack rows in the given order, padded to the group-wide max length
  int64_t rows = 0, cols = 0;
  for (const auto& b : batches) {
    if (b.tokens.rows != static_cast<int64_t>(b.tags.size())) {
      throw ShapeError("hier encode: tokens and tags misaligned");
    }
    rows += b.tokens.rows;
    cols = std::max(cols, b.tokens.cols);
  }
  TokenMatrix all(rows, cols, vocab_.pad_id);
  std::vector<RowTag> tags;
  tags.reserve(static_cast<size_t>(rows));
  int64_t at = 0;
  for (const auto& b : batches) {
    for (int64_t r = 0; r < b.tokens.rows; ++r, ++at) {
      for (int64_t c = 0; c < b.tokens.cols; ++c) all.at(at, c) = b.tokens.at(r, c);
      tags.push_back(b.tags[static_cast<size_t>(r)]);
    }
  }

  // group rows by source leaf, preserving stacking order inside each group
  std::map<std::string, std::vector<int64_t>> leaf_rows;
  for (int64_t r = 0; r < rows; ++r) {
    const auto& lang = tags[static_cast<size_t>(r)].src_lang;
    if (!enc_tree_.has_leaf(lang)) {
      throw TreeError("source language '" + lang + "' is not a leaf of the encoder tree");
    }
    leaf_rows[lang].push_back(r);
  }

  auto x = embed_and_position(tape, all, embedding_, config_, training, rng);

  // leaves first, then merges, in traversal-schedule order
  std::map<std::string, NodeRows> computed;
  for (const auto& id : enc_tree_.traversal_schedule()) {
    const auto& info = enc_tree_.info(id);
    NodeRows node;
    if (info.is_leaf) {
      auto it = leaf_rows.find(id);
      if (it == leaf_rows.end()) continue;  // no rows for this source this step
      node.indices = it->second;
      node.hidden = op::gather_rows(tape, x, node.indices);
    } else {
      std::vector<Tensor<T>> parts;
      for (const auto& child : info.children) {
        auto it = computed.find(child);
        if (it == computed.end()) continue;
        parts.push_back(it->second.hidden);
        node.indices.insert(node.indices.end(), it->second.indices.begin(),
                            it->second.indices.end());
      }
      if (parts.empty()) continue;
      node.hidden = parts.size() == 1 ? parts[0] : op::concat_rows(tape, parts);
    }
    auto mask = subset_self_mask<T>(all, node.indices, vocab_.pad_id, /*causal=*/false);
    node.hidden = run_encoder_node(tape, id, node.hidden, mask, training, rng);
    computed[id] = std::move(node);
  }

  const NodeRows& root = computed.at(enc_tree_.root_id());
  // restore stacking order: position of each global row in the root tensor
  std::vector<int64_t> pos(static_cast<size_t>(rows));
  for (size_t i = 0; i < root.indices.size(); ++i) {
    pos[static_cast<size_t>(root.indices[i])] = static_cast<int64_t>(i);
  }
  EncoderOutputs<T> out;
  out.hidden = op::gather_rows(tape, root.hidden, pos);
  out.tags = std::move(tags);
  out.src_tokens = std::move(all);
  return out;
}

template <class T>
DecodedLogits<T> HierModel<T>::decode_train(Tape<T>* tape, const EncoderOutputs<T>& enc,
                                            const TokenMatrix& targets, bool training,
                                            RngStream& rng) const {
  const int64_t rows = enc.src_tokens.rows;
  if (targets.rows != rows || static_cast<int64_t>(enc.tags.size()) != rows) {
    throw ShapeError("hier decode: targets must align one-to-one with encoder rows");
  }
  for (const auto& tag : enc.tags) {
    if (!dec_tree_.has_leaf(tag.tgt_lang)) {
      throw TreeError("target language '" + tag.tgt_lang + "' is not a leaf of the decoder tree");
    }
  }

  auto [dec_in, labels] = detail::shift_targets(targets, vocab_.pad_id);
  auto y = embed_and_position(tape, dec_in, embedding_, config_, training, rng);

  // root first, splits toward the leaves (reversed traversal schedule)
  auto schedule = dec_tree_.traversal_schedule();
  std::reverse(schedule.begin(), schedule.end());

  std::map<std::string, NodeRows> state;
  {
    NodeRows root;
    root.indices = identity_indices(rows);
    root.hidden = y;
    state[schedule.front()] = std::move(root);
  }

  DecodedLogits<T> out;
  for (const auto& id : schedule) {
    auto it = state.find(id);
    if (it == state.end()) continue;
    NodeRows node = std::move(it->second);
    state.erase(it);
    if (node.indices.empty()) continue;

    auto self_mask = subset_self_mask<T>(dec_in, node.indices, vocab_.pad_id, /*causal=*/true);
    auto cross_mask = subset_cross_mask<T>(dec_in, enc.src_tokens, node.indices, vocab_.pad_id);
    auto enc_rows = op::gather_rows(tape, enc.hidden, node.indices);
    node.hidden = run_decoder_node(tape, id, node.hidden, enc_rows, self_mask, cross_mask,
                                   training, rng);

    const auto& info = dec_tree_.info(id);
    if (info.is_leaf) {
      typename DecodedLogits<T>::LeafBlock block;
      block.leaf = id;
      block.logits = op::matmul(tape, node.hidden, out_proj_);
      block.row_indices = node.indices;
      block.labels = TokenMatrix(static_cast<int64_t>(node.indices.size()), labels.cols,
                                 vocab_.pad_id);
      for (size_t i = 0; i < node.indices.size(); ++i) {
        for (int64_t c = 0; c < labels.cols; ++c) {
          block.labels.at(static_cast<int64_t>(i), c) = labels.at(node.indices[i], c);
        }
      }
      out.blocks.push_back(std::move(block));
      continue;
    }

    // split the stacked rows by target-subtree membership
    for (const auto& child : info.children) {
      const auto& child_leaves = dec_tree_.info(child).leaf_codes;
      std::set<std::string> members(child_leaves.begin(), child_leaves.end());
      std::vector<int64_t> sub_pos;
      NodeRows child_node;
      for (size_t i = 0; i < node.indices.size(); ++i) {
        if (members.count(enc.tags[static_cast<size_t>(node.indices[i])].tgt_lang)) {
          sub_pos.push_back(static_cast<int64_t>(i));
          child_node.indices.push_back(node.indices[i]);
        }
      }
      if (child_node.indices.empty()) continue;
      child_node.hidden = op::gather_rows(tape, node.hidden, sub_pos);
      state[child] = std::move(child_node);
    }
  }
  return out;
}

template <class T>
LossResult<T> HierModel<T>::forward_loss(Tape<T>* tape, const StepGroup& group, bool training,
                                         RngStream& rng) {
  auto flat = detail::flatten_group(group, vocab_.pad_id);
  RoutedBatch stacked{std::move(flat.src), std::move(flat.tags)};
  auto enc = encode(tape, {stacked}, training, rng);
  auto decoded = decode_train(tape, enc, flat.tgt, training, rng);
  return detail::assemble_weighted_loss(tape, decoded, enc.tags, vocab_.pad_id);
}

template <class T>
std::vector<std::vector<int32_t>> HierModel<T>::translate_batch(const std::string& src_lang,
                                                                const std::string& tgt_lang,
                                                                const TokenMatrix& src,
                                                                int max_len) const {
  if (!enc_tree_.has_leaf(src_lang)) {
    throw TreeError("unknown source language '" + src_lang + "'");
  }
  if (!dec_tree_.has_leaf(tgt_lang)) {
    throw TreeError("unknown target language '" + tgt_lang + "'");
  }
  RngStream rng(0);  // dropout inactive outside training

  // encoder: only the stacks on the src -> root path, leaf upward
  auto enc_path = enc_tree_.path_from_root(src_lang);
  std::reverse(enc_path.begin(), enc_path.end());
  auto enc_mask = MaskSpec::from_tokens(src, vocab_.pad_id).self_mask<T>(false);
  auto hidden = embed_and_position<T>(nullptr, src, embedding_, config_, false, rng);
  for (const auto& id : enc_path) {
    hidden = run_encoder_node(nullptr, id, hidden, enc_mask, false, rng);
  }

  // per-row generation caps: source length (no BOS/EOS) + 10, capped
  std::vector<int> caps;
  for (int64_t r = 0; r < src.rows; ++r) {
    int n = 0;
    for (int64_t c = 0; c < src.cols; ++c) {
      const int32_t id = src.at(r, c);
      if (id != vocab_.pad_id && id != vocab_.bos_id && id != vocab_.eos_id) ++n;
    }
    caps.push_back(std::min(n + 10, max_len));
  }

  auto dec_path = dec_tree_.path_from_root(tgt_lang);  // root -> leaf
  const MaskSpec src_spec = MaskSpec::from_tokens(src, vocab_.pad_id);

  auto logits_fn = [&](const TokenMatrix& prefix) {
    auto self_mask = MaskSpec::from_tokens(prefix, vocab_.pad_id).self_mask<T>(true);
    auto cross = MaskSpec::cross_mask<T>(MaskSpec::from_tokens(prefix, vocab_.pad_id), src_spec);
    auto y = embed_and_position<T>(nullptr, prefix, embedding_, config_, false, rng);
    for (const auto& id : dec_path) {
      y = run_decoder_node(nullptr, id, y, hidden, self_mask, cross, false, rng);
    }
    return op::matmul<T>(nullptr, y, out_proj_);
  };
  return detail::greedy_generate<T>(logits_fn, src.rows, caps, vocab_);
}

template class HierModel<float>;
template class HierModel<double>;

}  // namespace treenmt
