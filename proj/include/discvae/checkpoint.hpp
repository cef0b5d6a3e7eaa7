#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "discvae/dataset.hpp"
#include "discvae/types.hpp"

namespace discvae::ckpt {

struct NamedTensor {
  std::string name;
  MatXf* tensor;
};

// Manifest payload stored beside the parameter blobs. config carries the
// numeric knobs needed to rebuild the model (K, dims, beam count, ...).
struct CheckpointMeta {
  std::string model;
  std::map<std::string, double> config;
  data::NormStats stats;
  std::uint64_t seed = 0;
  long step = 0;
};

// One little-endian float32 blob per named parameter plus manifest.json
// listing name, shape, dtype, and blob file.
void save_checkpoint_core(const std::string& dir,
                          const std::vector<NamedTensor>& params,
                          const CheckpointMeta& meta);
CheckpointMeta read_checkpoint_meta(const std::string& dir);
// Fills the given tensors by name; missing parameters or shape mismatches
// against the already-constructed model throw.
void load_checkpoint_core(const std::string& dir,
                          const std::vector<NamedTensor>& params);

template <typename Model>
std::vector<NamedTensor> named_tensors(Model& m) {
  std::vector<NamedTensor> out;
  m.visit("model", [&out](const std::string& name, MatXf& t) {
    out.push_back({name, &t});
  });
  return out;
}

template <typename Model>
void save_checkpoint(Model& m, const std::string& dir,
                     const CheckpointMeta& meta) {
  save_checkpoint_core(dir, named_tensors(m), meta);
}

template <typename Model>
void load_checkpoint(Model& m, const std::string& dir) {
  const std::vector<NamedTensor> params = named_tensors(m);
  load_checkpoint_core(dir, params);
}

}  // namespace discvae::ckpt
