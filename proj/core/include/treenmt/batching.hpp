#ifndef TREENMT_BATCHING_HPP
#define TREENMT_BATCHING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "treenmt/token_matrix.hpp"

namespace treenmt {

// Per-row routing tag: which leaf encoder/decoder a row belongs to and its
// loss weight.
struct RowTag {
  std::string src_lang, tgt_lang;
  double weight = 1.0;

  std::string direction() const { return src_lang + "-" + tgt_lang; }
  bool operator==(const RowTag&) const = default;
};

// Token rows padded to the batch-wide max length, each row tagged with its
// (source, target, weight). The unit that is stacked through the encoder
// hierarchy and split back in the decoder.
struct RoutedBatch {
  TokenMatrix tokens;
  std::vector<RowTag> tags;
};

// One full batch from one schedule stream: source rows plus row-aligned
// teacher-forcing targets.
struct TrainBatch {
  RoutedBatch src;
  TokenMatrix tgt;
};

// The batches of all streams at one optimization step.
using StepGroup = std::vector<TrainBatch>;

struct StreamRow {
  std::vector<int32_t> src, tgt;
  RowTag tag;
};

// One pair-path's data stream for an epoch. Rows before protected_prefix
// are shuffled among themselves and stay ahead of the rest, so a stream of
// own-data-then-borrowed-fillers only ever loses fillers to the trailing
// partial batch.
struct EpochStream {
  std::string name;
  std::vector<StreamRow> rows;
  size_t protected_prefix = 0;
};

// Shuffles each stream (seeded), chunks to full batches dropping the
// trailing remainder, and groups the t-th batch of every stream into one
// step. Steps = min over streams of their full-batch count. Throws
// ConfigError when a stream holds fewer than batch_size rows.
std::vector<StepGroup> make_epoch_batches(std::vector<EpochStream> streams, int batch_size,
                                          uint64_t seed, int32_t pad_id);

}  // namespace treenmt

#endif  // TREENMT_BATCHING_HPP
