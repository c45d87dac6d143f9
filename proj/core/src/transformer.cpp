#include "treenmt/transformer.hpp"

#include <cmath>

namespace treenmt {

namespace op = treenmt::ops;

void ModelConfig::validate() const {
  if (d_model <= 0 || dff <= 0 || num_heads <= 0) {
    throw ConfigError("model config: d_model, dff and num_heads must be positive");
  }
  if (d_model % num_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) +
                      " not divisible by num_heads " + std::to_string(num_heads));
  }
  if (dropout_rate < 0.0 || dropout_rate >= 1.0) {
    throw ConfigError("model config: dropout_rate must be in [0, 1)");
  }
}

int64_t encoder_layer_param_count(const ModelConfig& cfg) {
  const int64_t d = cfg.d_model, f = cfg.dff;
  return 4 * d * d          // self-attention projections
         + d * f + f        // ff_w1 + ff_b1
         + f * d + d        // ff_w2 + ff_b2
         + 2 * (2 * d);     // two layer norms
}

int64_t decoder_layer_param_count(const ModelConfig& cfg) {
  const int64_t d = cfg.d_model;
  return encoder_layer_param_count(cfg) + 4 * d * d + 2 * d;  // cross-attn + norm3
}

namespace {

template <class T>
AttentionParams<T> make_attention(ParamStore<T>& store, const std::string& prefix,
                                  const ModelConfig& cfg, RngStream& rng) {
  const int64_t d = cfg.d_model;
  AttentionParams<T> p;
  p.wq = store.create_glorot(prefix + "/wq", {d, d}, rng);
  p.wk = store.create_glorot(prefix + "/wk", {d, d}, rng);
  p.wv = store.create_glorot(prefix + "/wv", {d, d}, rng);
  p.wo = store.create_glorot(prefix + "/wo", {d, d}, rng);
  return p;
}

template <class T>
LayerNormParams<T> make_norm(ParamStore<T>& store, const std::string& prefix,
                             const ModelConfig& cfg) {
  LayerNormParams<T> p;
  p.gain = store.create_full(prefix + "/gain", {cfg.d_model}, T(1));
  p.bias = store.create(prefix + "/bias", {cfg.d_model});
  return p;
}

}  // namespace

template <class T>
EncoderLayerParams<T> make_encoder_layer(ParamStore<T>& store, const std::string& prefix,
                                         const ModelConfig& cfg, RngStream& rng) {
  const int64_t d = cfg.d_model, f = cfg.dff;
  EncoderLayerParams<T> p;
  p.self_attn = make_attention(store, prefix + "/self", cfg, rng);
  p.ff_w1 = store.create_glorot(prefix + "/ff/w1", {d, f}, rng);
  p.ff_b1 = store.create(prefix + "/ff/b1", {f});
  p.ff_w2 = store.create_glorot(prefix + "/ff/w2", {f, d}, rng);
  p.ff_b2 = store.create(prefix + "/ff/b2", {d});
  p.norm1 = make_norm(store, prefix + "/norm1", cfg);
  p.norm2 = make_norm(store, prefix + "/norm2", cfg);
  return p;
}

template <class T>
DecoderLayerParams<T> make_decoder_layer(ParamStore<T>& store, const std::string& prefix,
                                         const ModelConfig& cfg, RngStream& rng) {
  const int64_t d = cfg.d_model, f = cfg.dff;
  DecoderLayerParams<T> p;
  p.self_attn = make_attention(store, prefix + "/self", cfg, rng);
  p.cross_attn = make_attention(store, prefix + "/cross", cfg, rng);
  p.ff_w1 = store.create_glorot(prefix + "/ff/w1", {d, f}, rng);
  p.ff_b1 = store.create(prefix + "/ff/b1", {f});
  p.ff_w2 = store.create_glorot(prefix + "/ff/w2", {f, d}, rng);
  p.ff_b2 = store.create(prefix + "/ff/b2", {d});
  p.norm1 = make_norm(store, prefix + "/norm1", cfg);
  p.norm2 = make_norm(store, prefix + "/norm2", cfg);
  p.norm3 = make_norm(store, prefix + "/norm3", cfg);
  return p;
}

MaskSpec MaskSpec::from_tokens(const TokenMatrix& tokens, int32_t pad_id) {
  MaskSpec m;
  m.rows_ = tokens.rows;
  m.len_ = tokens.cols;
  m.keep_.resize(static_cast<size_t>(tokens.rows * tokens.cols));
  for (size_t i = 0; i < m.keep_.size(); ++i) {
    m.keep_[i] = tokens.ids[i] != pad_id ? 1 : 0;
  }
  return m;
}

template <class T>
Tensor<T> MaskSpec::self_mask(bool causal) const {
  Tensor<T> mask = Tensor<T>::zeros({rows_, len_, len_});
  for (int64_t r = 0; r < rows_; ++r) {
    for (int64_t q = 0; q < len_; ++q) {
      T* row = mask.data() + (r * len_ + q) * len_;
      for (int64_t k = 0; k < len_; ++k) {
        const bool visible = keep(r, k) && (!causal || k <= q);
        if (!visible) row[k] = -static_cast<T>(op::kMaskInf);
      }
    }
  }
  return mask;
}

template <class T>
Tensor<T> MaskSpec::cross_mask(const MaskSpec& queries, const MaskSpec& keys) {
  if (queries.rows_ != keys.rows_) {
    throw ShapeError("cross_mask: query and key row counts disagree");
  }
  Tensor<T> mask = Tensor<T>::zeros({queries.rows_, queries.len_, keys.len_});
  for (int64_t r = 0; r < queries.rows_; ++r) {
    for (int64_t q = 0; q < queries.len_; ++q) {
      T* out = mask.data() + (r * queries.len_ + q) * keys.len_;
      for (int64_t k = 0; k < keys.len_; ++k) {
        if (!keys.keep(r, k)) out[k] = -static_cast<T>(op::kMaskInf);
      }
    }
  }
  return mask;
}

template <class T>
Tensor<T> sinusoidal_positions(int64_t n, int64_t d_model) {
  if (d_model % 2 != 0) throw ShapeError("sinusoidal_positions: d_model must be even");
  Tensor<T> pe = Tensor<T>::zeros({n, d_model});
  for (int64_t pos = 0; pos < n; ++pos) {
    for (int64_t i = 0; i < d_model / 2; ++i) {
      const double angle =
          static_cast<double>(pos) /
          std::pow(10000.0, (2.0 * static_cast<double>(i)) / static_cast<double>(d_model));
      pe.data()[pos * d_model + 2 * i] = static_cast<T>(std::sin(angle));
      pe.data()[pos * d_model + 2 * i + 1] = static_cast<T>(std::cos(angle));
    }
  }
  return pe;
}

template <class T>
Tensor<T> embed_and_position(Tape<T>* tape, const TokenMatrix& ids, Tensor<T> table,
                             const ModelConfig& cfg, bool training, RngStream& rng) {
  auto x = op::embedding_lookup(tape, table, ids);
  x = op::scale(tape, x, static_cast<T>(std::sqrt(static_cast<double>(cfg.d_model))));
  x = op::add_const_broadcast(tape, x, sinusoidal_positions<T>(ids.cols, cfg.d_model));
  return op::dropout(tape, x, cfg.dropout_rate, rng, training);
}

template <class T>
Tensor<T> multi_head_attention(Tape<T>* tape, Tensor<T> queries, Tensor<T> keys,
                               Tensor<T> values, Tensor<T> additive_mask,
                               const AttentionParams<T>& params, const ModelConfig& cfg) {
  auto q = op::split_heads(tape, op::matmul(tape, queries, params.wq), cfg.num_heads);
  auto k = op::split_heads(tape, op::matmul(tape, keys, params.wk), cfg.num_heads);
  auto v = op::split_heads(tape, op::matmul(tape, values, params.wv), cfg.num_heads);
  auto scores = op::bmm_nt(tape, q, k);
  scores = op::scale(tape, scores, static_cast<T>(1.0 / std::sqrt(cfg.head_dim())));
  if (additive_mask.defined()) {
    scores = op::add_attention_mask(tape, scores, additive_mask, cfg.num_heads);
  }
  auto weights = op::softmax_rows(tape, scores);
  auto context = op::merge_heads(tape, op::bmm(tape, weights, v), cfg.num_heads);
  return op::matmul(tape, context, params.wo);
}

template <class T>
Tensor<T> encoder_layer_forward(Tape<T>* tape, Tensor<T> x, Tensor<T> self_mask,
                                const EncoderLayerParams<T>& params, const ModelConfig& cfg,
                                bool training, RngStream& rng) {
  auto attn = multi_head_attention(tape, x, x, x, self_mask, params.self_attn, cfg);
  attn = op::dropout(tape, attn, cfg.dropout_rate, rng, training);
  auto h = op::layer_norm(tape, op::add(tape, x, attn), params.norm1.gain, params.norm1.bias);

  auto ff = op::relu(tape, op::add_bias(tape, op::matmul(tape, h, params.ff_w1), params.ff_b1));
  ff = op::add_bias(tape, op::matmul(tape, ff, params.ff_w2), params.ff_b2);
  ff = op::dropout(tape, ff, cfg.dropout_rate, rng, training);
  return op::layer_norm(tape, op::add(tape, h, ff), params.norm2.gain, params.norm2.bias);
}

template <class T>
Tensor<T> decoder_layer_forward(Tape<T>* tape, Tensor<T> y, Tensor<T> enc_out,
                                Tensor<T> self_mask, Tensor<T> cross_mask,
                                const DecoderLayerParams<T>& params, const ModelConfig& cfg,
                                bool training, RngStream& rng) {
  if (y.dim(0) != enc_out.dim(0)) {
    throw ShapeError("decoder_layer_forward: row count mismatch between targets (" +
                     std::to_string(y.dim(0)) + ") and encoder output (" +
                     std::to_string(enc_out.dim(0)) + ")");
  }
  auto attn = multi_head_attention(tape, y, y, y, self_mask, params.self_attn, cfg);
  attn = op::dropout(tape, attn, cfg.dropout_rate, rng, training);
  auto h = op::layer_norm(tape, op::add(tape, y, attn), params.norm1.gain, params.norm1.bias);

  auto cross = multi_head_attention(tape, h, enc_out, enc_out, cross_mask, params.cross_attn, cfg);
  cross = op::dropout(tape, cross, cfg.dropout_rate, rng, training);
  h = op::layer_norm(tape, op::add(tape, h, cross), params.norm2.gain, params.norm2.bias);

  auto ff = op::relu(tape, op::add_bias(tape, op::matmul(tape, h, params.ff_w1), params.ff_b1));
  ff = op::add_bias(tape, op::matmul(tape, ff, params.ff_w2), params.ff_b2);
  ff = op::dropout(tape, ff, cfg.dropout_rate, rng, training);
  return op::layer_norm(tape, op::add(tape, h, ff), params.norm3.gain, params.norm3.bias);
}

#define TREENMT_INSTANTIATE_TRANSFORMER(T)                                                   \
  template EncoderLayerParams<T> make_encoder_layer(ParamStore<T>&, const std::string&,      \
                                                    const ModelConfig&, RngStream&);         \
  template DecoderLayerParams<T> make_decoder_layer(ParamStore<T>&, const std::string&,      \
                                                    const ModelConfig&, RngStream&);         \
  template Tensor<T> MaskSpec::self_mask<T>(bool) const;                                     \
  template Tensor<T> MaskSpec::cross_mask<T>(const MaskSpec&, const MaskSpec&);              \
  template Tensor<T> sinusoidal_positions<T>(int64_t, int64_t);                              \
  template Tensor<T> embed_and_position(Tape<T>*, const TokenMatrix&, Tensor<T>,             \
                                        const ModelConfig&, bool, RngStream&);               \
  template Tensor<T> multi_head_attention(Tape<T>*, Tensor<T>, Tensor<T>, Tensor<T>,         \
                                          Tensor<T>, const AttentionParams<T>&,              \
                                          const ModelConfig&);                               \
  template Tensor<T> encoder_layer_forward(Tape<T>*, Tensor<T>, Tensor<T>,                   \
                                           const EncoderLayerParams<T>&, const ModelConfig&, \
                                           bool, RngStream&);                                \
  template Tensor<T> decoder_layer_forward(Tape<T>*, Tensor<T>, Tensor<T>, Tensor<T>,        \
                                           Tensor<T>, const DecoderLayerParams<T>&,          \
                                           const ModelConfig&, bool, RngStream&);

TREENMT_INSTANTIATE_TRANSFORMER(float)
TREENMT_INSTANTIATE_TRANSFORMER(double)

#undef TREENMT_INSTANTIATE_TRANSFORMER

}  // namespace treenmt
