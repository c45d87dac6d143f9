#ifndef TREENMT_HIER_MODEL_HPP
#define TREENMT_HIER_MODEL_HPP

#include <map>
#include <string>
#include <vector>

#include "treenmt/lang_tree.hpp"
#include "treenmt/model.hpp"
#include "treenmt/transformer.hpp"

namespace treenmt {

// Tree-structured Transformer: every tree node owns a layer stack sized by
// the allocation, one shared embedding table and one shared output
// projection cover all languages, and the layer count on any source-to-
// target path equals D_enc + D_dec.
//
// Training forward: batches of all source languages are fed simultaneously;
// representations are stacked (row-concatenated) where encoders merge into
// shared ones, passed down the decoder chain, and split back toward the
// individual decoders. Attention never crosses rows, so each pair's rows
// are computed exactly as if the other pairs were absent.
template <class T>
class HierModel final : public MultiPairModel<T> {
 public:
  HierModel(LanguageTree enc_tree, LanguageTree dec_tree, LayerAllocation enc_alloc,
            LayerAllocation dec_alloc, ModelConfig config, VocabInfo vocab, uint64_t seed);

  LossResult<T> forward_loss(Tape<T>* tape, const StepGroup& group, bool training,
                             RngStream& rng) override;

  std::vector<std::vector<int32_t>> translate_batch(const std::string& src_lang,
                                                    const std::string& tgt_lang,
                                                    const TokenMatrix& src,
                                                    int max_len) const override;

  ParamStore<T>& params() override { return params_; }
  const VocabInfo& vocab() const override { return vocab_; }

  // Stacked encoder pass over per-source batches (each batch single-source).
  // Output rows follow the order the rows were passed in.
  EncoderOutputs<T> encode(Tape<T>* tape, const std::vector<RoutedBatch>& batches,
                           bool training, RngStream& rng) const;

  // Teacher-forcing decoder pass; targets row-aligned with enc.hidden.
  DecodedLogits<T> decode_train(Tape<T>* tape, const EncoderOutputs<T>& enc,
                                const TokenMatrix& targets, bool training,
                                RngStream& rng) const;

  const LanguageTree& enc_tree() const { return enc_tree_; }
  const LanguageTree& dec_tree() const { return dec_tree_; }
  const LayerAllocation& enc_alloc() const { return enc_alloc_; }
  const LayerAllocation& dec_alloc() const { return dec_alloc_; }
  const ModelConfig& config() const { return config_; }
  Tensor<T> embedding() const { return embedding_; }
  Tensor<T> output_projection() const { return out_proj_; }
  const std::vector<EncoderLayerParams<T>>& encoder_stack(const std::string& node_id) const;
  const std::vector<DecoderLayerParams<T>>& decoder_stack(const std::string& node_id) const;

 private:
  // Per-node hidden state while walking the hierarchy.
  struct NodeRows {
    Tensor<T> hidden;
    std::vector<int64_t> indices;  // global row ids, in tensor row order
  };

  Tensor<T> run_encoder_node(Tape<T>* tape, const std::string& node_id, Tensor<T> hidden,
                             Tensor<T> self_mask, bool training, RngStream& rng) const;
  Tensor<T> run_decoder_node(Tape<T>* tape, const std::string& node_id, Tensor<T> hidden,
                             Tensor<T> enc_hidden, Tensor<T> self_mask, Tensor<T> cross_mask,
                             bool training, RngStream& rng) const;

  LanguageTree enc_tree_, dec_tree_;
  LayerAllocation enc_alloc_, dec_alloc_;
  ModelConfig config_;
  VocabInfo vocab_;
  ParamStore<T> params_;
  Tensor<T> embedding_;  // [V, d]
  Tensor<T> out_proj_;   // [d, V]
  std::map<std::string, std::vector<EncoderLayerParams<T>>> enc_stacks_;
  std::map<std::string, std::vector<DecoderLayerParams<T>>> dec_stacks_;
};

extern template class HierModel<float>;
extern template class HierModel<double>;

}  // namespace treenmt

#endif  // TREENMT_HIER_MODEL_HPP
