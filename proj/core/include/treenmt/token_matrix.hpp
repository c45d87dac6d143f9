#ifndef TREENMT_TOKEN_MATRIX_HPP
#define TREENMT_TOKEN_MATRIX_HPP

#include <cstdint>
#include <span>
#include <vector>

namespace treenmt {

// Dense row-major matrix of token ids, rows padded to a common length.
struct TokenMatrix {
  int64_t rows = 0;
  int64_t cols = 0;
  std::vector<int32_t> ids;

  TokenMatrix() = default;
  TokenMatrix(int64_t r, int64_t c, int32_t fill = 0)
      : rows(r), cols(c), ids(static_cast<size_t>(r * c), fill) {}

  int32_t at(int64_t r, int64_t c) const { return ids[static_cast<size_t>(r * cols + c)]; }
  int32_t& at(int64_t r, int64_t c) { return ids[static_cast<size_t>(r * cols + c)]; }

  std::span<const int32_t> row(int64_t r) const {
    return {ids.data() + r * cols, static_cast<size_t>(cols)};
  }

  // Builds a matrix from ragged rows, padding with pad_id to the longest
  // row (or to min_cols if that is longer).
  static TokenMatrix from_rows(const std::vector<std::vector<int32_t>>& rows_in,
                               int32_t pad_id, int64_t min_cols = 0);

  // Same matrix widened to new_cols with pad_id.
  TokenMatrix padded_to(int64_t new_cols, int32_t pad_id) const;
};

}  // namespace treenmt

#endif  // TREENMT_TOKEN_MATRIX_HPP
