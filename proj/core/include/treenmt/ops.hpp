#ifndef TREENMT_OPS_HPP
#define TREENMT_OPS_HPP

#include <vector>

#include "treenmt/rng.hpp"
#include "treenmt/tensor.hpp"
#include "treenmt/token_matrix.hpp"

// Differentiable tensor ops. Every op takes the tape as its first argument;
// passing nullptr runs the forward computation only (evaluation mode).
// All ops are deterministic for fixed inputs, and dropout draws from an
// explicit RngStream, so fixed seeds give bit-identical results.

namespace treenmt::ops {

// Additive mask value: exp(-kMaskInf) underflows to exactly 0 after the
// max-subtraction in softmax, so masked positions get weight 0 exactly.
inline constexpr double kMaskInf = 1e9;

// a: [..., k] (any leading dims), b: [k, n] -> [..., n].
template <class T>
Tensor<T> matmul(Tape<T>* tape, Tensor<T> a, Tensor<T> b);

// Batched products over matching leading dim B.
// bmm:    a [B, m, k] x b [B, k, n] -> [B, m, n]
// bmm_nt: a [B, m, k] x b [B, n, k] -> [B, m, n]  (b transposed)
template <class T>
Tensor<T> bmm(Tape<T>* tape, Tensor<T> a, Tensor<T> b);
template <class T>
Tensor<T> bmm_nt(Tape<T>* tape, Tensor<T> a, Tensor<T> b);

template <class T>
Tensor<T> add(Tape<T>* tape, Tensor<T> a, Tensor<T> b);  // same shape

// x: [..., n] + bias [n].
template <class T>
Tensor<T> add_bias(Tape<T>* tape, Tensor<T> x, Tensor<T> bias);

// x: [..., rows_tail...] + c broadcast over the leading dimension:
// x [N, ...] + c [...] (c receives no gradient; used for positions).
template <class T>
Tensor<T> add_const_broadcast(Tape<T>* tape, Tensor<T> x, Tensor<T> c);

// Adds an additive attention mask. scores: [N*heads, Lq, Lk],
// mask: [N, Lq, Lk] (no gradient), broadcast over heads.
template <class T>
Tensor<T> add_attention_mask(Tape<T>* tape, Tensor<T> scores, Tensor<T> mask,
                             int64_t num_heads);

template <class T>
Tensor<T> mul(Tape<T>* tape, Tensor<T> a, Tensor<T> b);  // elementwise

// Elementwise product with a constant mask (no gradient to the mask).
template <class T>
Tensor<T> mul_const(Tape<T>* tape, Tensor<T> x, Tensor<T> mask);

template <class T>
Tensor<T> scale(Tape<T>* tape, Tensor<T> x, T factor);

template <class T>
Tensor<T> relu(Tape<T>* tape, Tensor<T> x);

// Row-wise softmax over the last dimension, max-subtracted for stability.
template <class T>
Tensor<T> softmax_rows(Tape<T>* tape, Tensor<T> x);

// Per-row normalization over the last dimension followed by an affine map.
template <class T>
Tensor<T> layer_norm(Tape<T>* tape, Tensor<T> x, Tensor<T> gain,
                     Tensor<T> bias, T eps = T(1e-5));

// Inverted dropout; identity when !training or rate == 0.
template <class T>
Tensor<T> dropout(Tape<T>* tape, Tensor<T> x, double rate, RngStream& rng, bool training);

// Concatenation along dim 0; all trailing dims must match.
template <class T>
Tensor<T> concat_rows(Tape<T>* tape, const std::vector<Tensor<T>>& parts);

// Select rows (dim 0) by index; backward scatters.
template <class T>
Tensor<T> gather_rows(Tape<T>* tape, Tensor<T> x, const std::vector<int64_t>& indices);

// [N, L, d] -> [N*H, L, d/H] and back.
template <class T>
Tensor<T> split_heads(Tape<T>* tape, Tensor<T> x, int64_t num_heads);
template <class T>
Tensor<T> merge_heads(Tape<T>* tape, Tensor<T> x, int64_t num_heads);

// table: [V, d], ids: [N, L] -> [N, L, d]. Throws on ids outside [0, V).
template <class T>
Tensor<T> embedding_lookup(Tape<T>* tape, Tensor<T> table, const TokenMatrix& ids);

// logits: [N, L, V], targets: [N, L] -> [N]: per-row mean over non-pad
// positions of -log softmax(logits)[target]; all-pad rows give 0.
template <class T>
Tensor<T> cross_entropy_per_sample(Tape<T>* tape, Tensor<T> logits,
                                   const TokenMatrix& targets, int32_t pad_id);

// Non-pad token count per row of a target matrix.
std::vector<int64_t> non_pad_counts(const TokenMatrix& targets, int32_t pad_id);

// x: [N] -> scalar sum_i w[i] * x[i] with constant weights.
template <class T>
Tensor<T> rows_weighted_sum(Tape<T>* tape, Tensor<T> x, const std::vector<T>& weights);

template <class T>
Tensor<T> sum_all(Tape<T>* tape, Tensor<T> x);

}  // namespace treenmt::ops

#endif  // TREENMT_OPS_HPP
