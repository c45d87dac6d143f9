#include "treenmt/batching.hpp"

#include <algorithm>

#include "treenmt/errors.hpp"
#include "treenmt/rng.hpp"

namespace treenmt {

std::vector<StepGroup> make_epoch_batches(std::vector<EpochStream> streams, int batch_size,
                                          uint64_t seed, int32_t pad_id) {
  if (batch_size < 1) throw ConfigError("make_epoch_batches: batch_size must be >= 1");
  if (streams.empty()) return {};

  size_t steps = SIZE_MAX;
  for (auto& stream : streams) {
    if (stream.rows.size() < static_cast<size_t>(batch_size)) {
      throw ConfigError("stream '" + stream.name + "' has only " +
                        std::to_string(stream.rows.size()) + " rows, batch size is " +
                        std::to_string(batch_size));
    }
    RngStream rng = RngStream::from_label(seed, "batches/" + stream.name);
    const size_t prefix = std::min(stream.protected_prefix, stream.rows.size());
    std::vector<StreamRow> shuffled(stream.rows.begin(), stream.rows.begin() + prefix);
    rng.shuffle(shuffled);
    std::vector<StreamRow> tail(stream.rows.begin() + prefix, stream.rows.end());
    rng.shuffle(tail);
    shuffled.insert(shuffled.end(), std::make_move_iterator(tail.begin()),
                    std::make_move_iterator(tail.end()));
    stream.rows = std::move(shuffled);
    steps = std::min(steps, stream.rows.size() / static_cast<size_t>(batch_size));
  }

  std::vector<StepGroup> groups(steps);
  for (size_t t = 0; t < steps; ++t) {
    StepGroup& group = groups[t];
    group.reserve(streams.size());
    for (const auto& stream : streams) {
      TrainBatch batch;
      std::vector<std::vector<int32_t>> src_rows, tgt_rows;
      src_rows.reserve(static_cast<size_t>(batch_size));
      tgt_rows.reserve(static_cast<size_t>(batch_size));
      for (int r = 0; r < batch_size; ++r) {
        const StreamRow& row = stream.rows[t * static_cast<size_t>(batch_size) +
                                           static_cast<size_t>(r)];
        src_rows.push_back(row.src);
        tgt_rows.push_back(row.tgt);
        batch.src.tags.push_back(row.tag);
      }
      batch.src.tokens = TokenMatrix::from_rows(src_rows, pad_id);
      batch.tgt = TokenMatrix::from_rows(tgt_rows, pad_id);
      group.push_back(std::move(batch));
    }
  }
  return groups;
}

}  // namespace treenmt
