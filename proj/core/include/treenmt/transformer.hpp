#ifndef TREENMT_TRANSFORMER_HPP
#define TREENMT_TRANSFORMER_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "treenmt/ops.hpp"
#include "treenmt/param_store.hpp"
#include "treenmt/rng.hpp"
#include "treenmt/tensor.hpp"
#include "treenmt/token_matrix.hpp"

namespace treenmt {

struct ModelConfig {
  int d_model = 128;
  int dff = 512;
  int num_heads = 8;
  double dropout_rate = 0.1;

  int head_dim() const { return d_model / num_heads; }
  void validate() const;
};

template <class T>
struct LayerNormParams {
  Tensor<T> gain, bias;
};

template <class T>
struct AttentionParams {
  Tensor<T> wq, wk, wv, wo;  // each [d_model, d_model], no biases
};

template <class T>
struct EncoderLayerParams {
  AttentionParams<T> self_attn;
  Tensor<T> ff_w1, ff_b1, ff_w2, ff_b2;
  LayerNormParams<T> norm1, norm2;
};

template <class T>
struct DecoderLayerParams {
  AttentionParams<T> self_attn, cross_attn;
  Tensor<T> ff_w1, ff_b1, ff_w2, ff_b2;
  LayerNormParams<T> norm1, norm2, norm3;
};

// Closed-form parameter counts per layer for a given config.
int64_t encoder_layer_param_count(const ModelConfig& cfg);
int64_t decoder_layer_param_count(const ModelConfig& cfg);

// Create freshly initialized layer parameters registered under
// `prefix` (e.g. "enc/az-tr/layer1") in the store.
template <class T>
EncoderLayerParams<T> make_encoder_layer(ParamStore<T>& store, const std::string& prefix,
                                         const ModelConfig& cfg, RngStream& rng);
template <class T>
DecoderLayerParams<T> make_decoder_layer(ParamStore<T>& store, const std::string& prefix,
                                         const ModelConfig& cfg, RngStream& rng);

// Per-row keep flags derived from pad tokens. Masks combine padding and
// (for decoder self-attention) causality into additive tensors, with
// -kMaskInf on hidden positions so softmax assigns them weight 0 exactly.
class MaskSpec {
 public:
  MaskSpec() = default;
  static MaskSpec from_tokens(const TokenMatrix& tokens, int32_t pad_id);

  int64_t rows() const { return rows_; }
  int64_t len() const { return len_; }
  bool keep(int64_t r, int64_t c) const { return keep_[static_cast<size_t>(r * len_ + c)] != 0; }

  // [rows, L, L]; position i may attend to j iff j is not padding and,
  // when causal, j <= i.
  template <class T>
  Tensor<T> self_mask(bool causal) const;

  // [rows, Lq, Lk]; target position may attend to non-pad source positions.
  template <class T>
  static Tensor<T> cross_mask(const MaskSpec& queries, const MaskSpec& keys);

 private:
  int64_t rows_ = 0, len_ = 0;
  std::vector<uint8_t> keep_;
};

// pos / 10000^(2i/d) sine/cosine interleave: even slots sine, odd cosine.
template <class T>
Tensor<T> sinusoidal_positions(int64_t n, int64_t d_model);

// Embedding lookup scaled by sqrt(d_model), plus sinusoidal positions,
// plus dropout in training mode.
template <class T>
Tensor<T> embed_and_position(Tape<T>* tape, const TokenMatrix& ids, Tensor<T> table,
                             const ModelConfig& cfg, bool training, RngStream& rng);

// Concatenated per-head scaled dot-product attention followed by the output
// projection. queries [N, Lq, d], keys/values [N, Lk, d]. additive_mask may
// be undefined (no masking) or [N, Lq, Lk].
template <class T>
Tensor<T> multi_head_attention(Tape<T>* tape, Tensor<T> queries, Tensor<T> keys,
                               Tensor<T> values, Tensor<T> additive_mask,
                               const AttentionParams<T>& params, const ModelConfig& cfg);

// Post-norm residual blocks: x + SelfAttn -> LN, x + FF -> LN.
template <class T>
Tensor<T> encoder_layer_forward(Tape<T>* tape, Tensor<T> x, Tensor<T> self_mask,
                                const EncoderLayerParams<T>& params, const ModelConfig& cfg,
                                bool training, RngStream& rng);

template <class T>
Tensor<T> decoder_layer_forward(Tape<T>* tape, Tensor<T> y, Tensor<T> enc_out,
                                Tensor<T> self_mask, Tensor<T> cross_mask,
                                const DecoderLayerParams<T>& params, const ModelConfig& cfg,
                                bool training, RngStream& rng);

}  // namespace treenmt

#endif  // TREENMT_TRANSFORMER_HPP
