#include "treenmt/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace treenmt {

namespace {

template <class V>
void write_pod(std::ofstream& out, const V& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(V));
}

template <class V>
V read_pod(std::ifstream& in) {
  V v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(V));
  if (!in) throw IoError("checkpoint: truncated file");
  return v;
}

void write_string(std::ofstream& out, const std::string& s) {
  write_pod(out, static_cast<uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string read_string(std::ifstream& in) {
  const uint32_t n = read_pod<uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  if (!in) throw IoError("checkpoint: truncated file");
  return s;
}

}  // namespace

template <class T>
Tensor<T> Checkpoint<T>::find(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw IoError("checkpoint has no tensor named '" + name + "'");
}

template <class T>
void save_checkpoint(const std::string& path, const Checkpoint<T>& ckpt) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint '" + path + "'");
  out.write(kCheckpointHeader, static_cast<std::streamsize>(std::strlen(kCheckpointHeader)));
  write_pod(out, static_cast<uint8_t>(sizeof(T)));
  write_pod(out, ckpt.vocab_hash);
  write_pod(out, static_cast<uint32_t>(ckpt.meta.size()));
  for (const auto& [k, v] : ckpt.meta) {
    write_string(out, k);
    write_pod(out, v);
  }
  write_pod(out, static_cast<uint32_t>(ckpt.tensors.size()));
  for (const auto& [name, t] : ckpt.tensors) {
    write_string(out, name);
    write_pod(out, static_cast<uint32_t>(t.ndim()));
    for (int i = 0; i < t.ndim(); ++i) write_pod(out, t.dim(i));
    out.write(reinterpret_cast<const char*>(t.data()),
              static_cast<std::streamsize>(t.numel() * static_cast<int64_t>(sizeof(T))));
  }
  if (!out) throw IoError("write failed for checkpoint '" + path + "'");
}

template <class T>
Checkpoint<T> load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read checkpoint '" + path + "'");
  std::string header(std::strlen(kCheckpointHeader), '\0');
  in.read(header.data(), static_cast<std::streamsize>(header.size()));
  if (!in || header != kCheckpointHeader) {
    throw IoError("'" + path + "' is not a treenmt checkpoint");
  }
  const auto dtype = read_pod<uint8_t>(in);
  if (dtype != sizeof(T)) {
    throw IoError("checkpoint '" + path + "' holds " + std::to_string(dtype * 8) +
                  "-bit values, expected " + std::to_string(sizeof(T) * 8) + "-bit");
  }
  Checkpoint<T> ckpt;
  ckpt.vocab_hash = read_pod<uint64_t>(in);
  const uint32_t n_meta = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n_meta; ++i) {
    std::string key = read_string(in);
    ckpt.meta[key] = read_pod<int64_t>(in);
  }
  const uint32_t n_tensors = read_pod<uint32_t>(in);
  for (uint32_t i = 0; i < n_tensors; ++i) {
    std::string name = read_string(in);
    const uint32_t ndim = read_pod<uint32_t>(in);
    Shape shape(ndim);
    for (auto& d : shape) d = read_pod<int64_t>(in);
    std::vector<T> values(static_cast<size_t>(shape_numel(shape)));
    in.read(reinterpret_cast<char*>(values.data()),
            static_cast<std::streamsize>(values.size() * sizeof(T)));
    if (!in) throw IoError("checkpoint: truncated tensor data");
    ckpt.tensors.emplace_back(std::move(name),
                              Tensor<T>::from_values(std::move(shape), std::move(values)));
  }
  return ckpt;
}

template <class T>
void load_into_params(ParamStore<T>& store, const Checkpoint<T>& ckpt) {
  for (auto& [name, param] : store.entries()) {
    Tensor<T> saved = ckpt.find(name);
    if (saved.shape() != param.shape()) {
      throw IoError("checkpoint tensor '" + name + "' has shape " + shape_str(saved.shape()) +
                    ", model expects " + shape_str(param.shape()));
    }
    Tensor<T> dst = param;  // handle copy, shared storage
    std::copy(saved.values().begin(), saved.values().end(), dst.values().begin());
  }
}

template <class T>
std::vector<std::vector<T>> snapshot_values(const ParamStore<T>& store) {
  std::vector<std::vector<T>> snap;
  snap.reserve(store.size());
  for (const auto& [name, t] : store.entries()) {
    snap.emplace_back(t.values().begin(), t.values().end());
  }
  return snap;
}

template <class T>
void restore_values(ParamStore<T>& store, const std::vector<std::vector<T>>& snapshot) {
  if (snapshot.size() != store.size()) {
    throw ShapeError("restore_values: snapshot does not match the parameter store");
  }
  size_t i = 0;
  for (const auto& [name, t] : store.entries()) {
    auto& values = snapshot[i++];
    if (values.size() != static_cast<size_t>(t.numel())) {
      throw ShapeError("restore_values: size mismatch for '" + name + "'");
    }
    Tensor<T> dst = t;  // handle copy, shared storage
    std::copy(values.begin(), values.end(), dst.values().begin());
  }
}

#define TREENMT_INSTANTIATE_CKPT(T)                                                  \
  template struct Checkpoint<T>;                                                     \
  template void save_checkpoint(const std::string&, const Checkpoint<T>&);           \
  template Checkpoint<T> load_checkpoint(const std::string&);                        \
  template void load_into_params(ParamStore<T>&, const Checkpoint<T>&);              \
  template std::vector<std::vector<T>> snapshot_values(const ParamStore<T>&);        \
  template void restore_values(ParamStore<T>&, const std::vector<std::vector<T>>&);

TREENMT_INSTANTIATE_CKPT(float)
TREENMT_INSTANTIATE_CKPT(double)

#undef TREENMT_INSTANTIATE_CKPT

}  // namespace treenmt
