#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "discvae/batch.hpp"
#include "discvae/rng.hpp"
#include "discvae/sim.hpp"

namespace discvae::data {

struct DatasetConfig {
  int T = 20;        // model input length
  int horizon = 10;  // forecast continuation, windows store T + horizon steps
  int stride = 5;
  int trainval_episodes_per_mode_map = 18;
  int test_episodes_per_mode = 10;
  double val_fraction = 0.2;
  sim::SimConfig sim;
};

// Scalar statistics per modality, estimated on the training split.
struct NormStats {
  double joystick_mean = 0.0;
  double joystick_std = 1.0;
  double laser_mean = 0.0;
  double laser_std = 1.0;
};

struct Dataset {
  SequenceBatch<float> train, val, test;
  NormStats stats;
  int T = 20;
  int horizon = 10;
  int beams = 72;
  std::uint64_t seed = 0;          // generator seed, recorded in the manifest
  std::vector<int> episode_maps;   // episode id -> map id
};

int window_count(int len, int window, int stride);

// Generates scripted episodes on all three maps, slices windows of length
// T + horizon, and labels each on its first T ticks in physical units. Maps
// 1-2 split into train/validation by episode; every map-3 episode is test.
// All splits are normalized with train statistics.
Dataset build_dataset(const DatasetConfig& cfg, Rng& rng);

// One directory per split holding little-endian float32 blobs for commands
// (N x steps x 2) and ranges (N x steps x beams), an N x 3 int32 label table
// (class, manoeuvre, narrow), an N x 3 int32 meta table (mode, episode, map),
// and a JSON manifest with shapes and normalization statistics.
void save_dataset(const Dataset& ds, const std::string& dir);
Dataset load_dataset(const std::string& dir);

}  // namespace discvae::data
