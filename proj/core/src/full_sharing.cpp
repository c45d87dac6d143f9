#include "treenmt/full_sharing.hpp"

#include <algorithm>

namespace treenmt {

namespace op = treenmt::ops;

template <class T>
FullSharingModel<T>::FullSharingModel(ModelConfig config, int enc_layers, int dec_layers,
                                      VocabInfo vocab, uint64_t seed)
    : config_(config), vocab_(std::move(vocab)) {
  config_.validate();
  if (enc_layers < 1 || dec_layers < 1) {
    throw ConfigError("full-sharing model needs at least one layer per side");
  }
  if (vocab_.lang_tags.empty()) {
    throw ConfigError("full-sharing model needs language-tag tokens in the vocabulary");
  }
  RngStream rng = RngStream::from_label(seed, "init");
  const int64_t d = config_.d_model, v = vocab_.size;
  embedding_ = params_.create_glorot("shared/embedding", {v, d}, rng);
  out_proj_ = params_.create_glorot("shared/out_proj", {d, v}, rng);
  for (int i = 0; i < enc_layers; ++i) {
    enc_stack_.push_back(
        make_encoder_layer(params_, "enc/all/layer" + std::to_string(i), config_, rng));
  }
  for (int i = 0; i < dec_layers; ++i) {
    dec_stack_.push_back(
        make_decoder_layer(params_, "dec/all/layer" + std::to_string(i), config_, rng));
  }
}

template <class T>
TokenMatrix FullSharingModel<T>::tag_source(const TokenMatrix& src,
                                            const std::vector<std::string>& tgt_langs) const {
  // '<2xx>' inserted right after BOS; one extra position
  TokenMatrix tagged(src.rows, src.cols + 1, vocab_.pad_id);
  for (int64_t r = 0; r < src.rows; ++r) {
    auto it = vocab_.lang_tags.find(tgt_langs[static_cast<size_t>(r)]);
    if (it == vocab_.lang_tags.end()) {
      throw ConfigError("no language tag for target '" + tgt_langs[static_cast<size_t>(r)] +
                        "' in the vocabulary");
    }
    tagged.at(r, 0) = src.at(r, 0);  // BOS
    tagged.at(r, 1) = it->second;
    for (int64_t c = 1; c < src.cols; ++c) tagged.at(r, c + 1) = src.at(r, c);
  }
  return tagged;
}

template <class T>
Tensor<T> FullSharingModel<T>::encode_all(Tape<T>* tape, const TokenMatrix& tagged,
                                          bool training, RngStream& rng) const {
  auto mask = MaskSpec::from_tokens(tagged, vocab_.pad_id).self_mask<T>(false);
  auto x = embed_and_position(tape, tagged, embedding_, config_, training, rng);
  for (const auto& layer : enc_stack_) {
    x = encoder_layer_forward(tape, x, mask, layer, config_, training, rng);
  }
  return x;
}

template <class T>
LossResult<T> FullSharingModel<T>::forward_loss(Tape<T>* tape, const StepGroup& group,
                                                bool training, RngStream& rng) {
  auto flat = detail::flatten_group(group, vocab_.pad_id);
  std::vector<std::string> tgt_langs;
  tgt_langs.reserve(flat.tags.size());
  for (const auto& tag : flat.tags) tgt_langs.push_back(tag.tgt_lang);
  TokenMatrix tagged = tag_source(flat.src, tgt_langs);

  auto enc_hidden = encode_all(tape, tagged, training, rng);

  auto [dec_in, labels] = detail::shift_targets(flat.tgt, vocab_.pad_id);
  auto self_mask = MaskSpec::from_tokens(dec_in, vocab_.pad_id).self_mask<T>(true);
  auto cross = MaskSpec::cross_mask<T>(MaskSpec::from_tokens(dec_in, vocab_.pad_id),
                                       MaskSpec::from_tokens(tagged, vocab_.pad_id));
  auto y = embed_and_position(tape, dec_in, embedding_, config_, training, rng);
  for (const auto& layer : dec_stack_) {
    y = decoder_layer_forward(tape, y, enc_hidden, self_mask, cross, layer, config_, training,
                              rng);
  }

  DecodedLogits<T> decoded;
  typename DecodedLogits<T>::LeafBlock block;
  block.leaf = "all";
  block.logits = op::matmul(tape, y, out_proj_);
  block.labels = labels;
  block.row_indices.resize(flat.tags.size());
  for (size_t i = 0; i < flat.tags.size(); ++i) {
    block.row_indices[i] = static_cast<int64_t>(i);
  }
  decoded.blocks.push_back(std::move(block));
  return detail::assemble_weighted_loss(tape, decoded, flat.tags, vocab_.pad_id);
}

template <class T>
std::vector<std::vector<int32_t>> FullSharingModel<T>::translate_batch(
    const std::string& /*src_lang*/, const std::string& tgt_lang, const TokenMatrix& src,
    int max_len) const {
  RngStream rng(0);
  std::vector<std::string> tgt_langs(static_cast<size_t>(src.rows), tgt_lang);
  TokenMatrix tagged = tag_source(src, tgt_langs);
  auto enc_hidden = encode_all(nullptr, tagged, false, rng);
  const MaskSpec src_spec = MaskSpec::from_tokens(tagged, vocab_.pad_id);

  std::vector<int> caps;
  for (int64_t r = 0; r < src.rows; ++r) {
    int n = 0;
    for (int64_t c = 0; c < src.cols; ++c) {
      const int32_t id = src.at(r, c);
      if (id != vocab_.pad_id && id != vocab_.bos_id && id != vocab_.eos_id) ++n;
    }
    caps.push_back(std::min(n + 10, max_len));
  }

  auto logits_fn = [&](const TokenMatrix& prefix) {
    auto self_mask = MaskSpec::from_tokens(prefix, vocab_.pad_id).self_mask<T>(true);
    auto cross = MaskSpec::cross_mask<T>(MaskSpec::from_tokens(prefix, vocab_.pad_id), src_spec);
    auto y = embed_and_position<T>(nullptr, prefix, embedding_, config_, false, rng);
    for (const auto& layer : dec_stack_) {
      y = decoder_layer_forward<T>(nullptr, y, enc_hidden, self_mask, cross, layer, config_,
                                   false, rng);
    }
    return op::matmul<T>(nullptr, y, out_proj_);
  };
  return detail::greedy_generate<T>(logits_fn, src.rows, caps, vocab_);
}

template class FullSharingModel<float>;
template class FullSharingModel<double>;

}  // namespace treenmt
