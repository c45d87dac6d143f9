#ifndef TREENMT_CHECKPOINT_HPP
#define TREENMT_CHECKPOINT_HPP

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "treenmt/param_store.hpp"
#include "treenmt/tensor.hpp"

namespace treenmt {

// Flat binary container of named tensors, versioned by a header string.
// Values round-trip bit-exactly. The vocabulary hash pins a checkpoint to
// the exact vocabulary it was trained with.
inline constexpr const char* kCheckpointHeader = "treenmt-checkpoint v1\n";

template <class T>
struct Checkpoint {
  std::vector<std::pair<std::string, Tensor<T>>> tensors;
  uint64_t vocab_hash = 0;
  std::map<std::string, int64_t> meta;

  Tensor<T> find(const std::string& name) const;
};

template <class T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt);

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path);

// Copies checkpoint tensors into the store's parameters by name; throws on
// missing names or shape mismatches.
template <class T>
void load_into_params(ParamStore<T>& store, const Checkpoint<T>& ckpt);

// Deep value snapshot/restore, parameter order, for best-epoch tracking.
template <class T>
std::vector<std::vector<T>> snapshot_values(const ParamStore<T>& store);
template <class T>
void restore_values(ParamStore<T>& store, const std::vector<std::vector<T>>& snapshot);

}  // namespace treenmt

#endif  // TREENMT_CHECKPOINT_HPP
