#ifndef TREENMT_FULL_SHARING_HPP
#define TREENMT_FULL_SHARING_HPP

#include <string>
#include <vector>

#include "treenmt/model.hpp"
#include "treenmt/transformer.hpp"

namespace treenmt {

// Full-parameter-sharing baseline: one encoder and one decoder for every
// language, a '<2xx>' target-language tag token inserted after BOS on the
// source side. Depths come from the sums of the hierarchical allocation
// (baseline_depths), so both models spend the same layer budget per side.
template <class T>
class FullSharingModel final : public MultiPairModel<T> {
 public:
  FullSharingModel(ModelConfig config, int enc_layers, int dec_layers, VocabInfo vocab,
                   uint64_t seed);

  LossResult<T> forward_loss(Tape<T>* tape, const StepGroup& group, bool training,
                             RngStream& rng) override;

  std::vector<std::vector<int32_t>> translate_batch(const std::string& src_lang,
                                                    const std::string& tgt_lang,
                                                    const TokenMatrix& src,
                                                    int max_len) const override;

  ParamStore<T>& params() override { return params_; }
  const VocabInfo& vocab() const override { return vocab_; }
  const ModelConfig& config() const { return config_; }
  int enc_layers() const { return static_cast<int>(enc_stack_.size()); }
  int dec_layers() const { return static_cast<int>(dec_stack_.size()); }

 private:
  TokenMatrix tag_source(const TokenMatrix& src, const std::vector<std::string>& tgt_langs) const;
  Tensor<T> encode_all(Tape<T>* tape, const TokenMatrix& tagged, bool training,
                       RngStream& rng) const;

  ModelConfig config_;
  VocabInfo vocab_;
  ParamStore<T> params_;
  Tensor<T> embedding_, out_proj_;
  std::vector<EncoderLayerParams<T>> enc_stack_;
  std::vector<DecoderLayerParams<T>> dec_stack_;
};

extern template class FullSharingModel<float>;
extern template class FullSharingModel<double>;

}  // namespace treenmt

#endif  // TREENMT_FULL_SHARING_HPP
