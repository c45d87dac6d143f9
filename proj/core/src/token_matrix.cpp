#include "treenmt/token_matrix.hpp"

#include <algorithm>

namespace treenmt {

TokenMatrix TokenMatrix::from_rows(const std::vector<std::vector<int32_t>>& rows_in,
                                   int32_t pad_id, int64_t min_cols) {
  int64_t cols = min_cols;
  for (const auto& r : rows_in) cols = std::max(cols, static_cast<int64_t>(r.size()));
  TokenMatrix m(static_cast<int64_t>(rows_in.size()), cols, pad_id);
  for (size_t r = 0; r < rows_in.size(); ++r) {
    std::copy(rows_in[r].begin(), rows_in[r].end(),
              m.ids.begin() + static_cast<int64_t>(r) * cols);
  }
  return m;
}

TokenMatrix TokenMatrix::padded_to(int64_t new_cols, int32_t pad_id) const {
  if (new_cols <= cols) return *this;
  TokenMatrix m(rows, new_cols, pad_id);
  for (int64_t r = 0; r < rows; ++r) {
    std::copy(ids.begin() + r * cols, ids.begin() + (r + 1) * cols,
              m.ids.begin() + r * new_cols);
  }
  return m;
}

}  // namespace treenmt
