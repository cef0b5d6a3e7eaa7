#pragma once

#include <cstdint>
#include <set>
#include <string>
#include <vector>

namespace discvae::cli {

// One experiment invocation. Values resolve in three layers: struct defaults,
// then the JSON file named by --config, then explicit flags. `provided`
// records which keys the user set either way; commands use it to tell an
// explicit request apart from a default when reconciling against manifests.
struct RunConfig {
  std::string command;

  // paths
  std::string out;         // output directory for this command
  std::string data;        // dataset directory (gen-data output)
  std::string checkpoint;  // checkpoint directory (train output)
  std::string report;      // evaluation output directory (for `report`)
  std::string resume;      // checkpoint to continue training from

  // model
  std::string model = "discvae";  // discvae|gmvae|vrnn|dseqvae|bilstm
  std::string objective = "entropy";  // entropy|uniform-kl
  int k = 13;
  int dim_global = 16;
  int dim_local = 16;
  int beams = 72;
  int t = 20;
  int horizon = 10;
  int d_a = 8;
  int d_l = 128;
  int bi_state = 512;
  int local_state = 128;
  int hidden = 512;

  // data generation
  int trainval_episodes = 18;  // per mode and map
  int test_episodes = 10;      // per mode
  int stride = 5;

  // training
  int batch = 32;
  double lr0 = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int epochs = 75;
  int patience = 10;

  // evaluation and sampling
  int knn_k = 5;
  int samples_per_cluster = 3;
  int sample_index = 0;
  std::vector<int> k_candidates = {1, 5, 9, 13, 18};

  std::uint64_t seed = 0;

  std::set<std::string> provided;
  bool has(const std::string& key) const { return provided.count(key) > 0; }
};

// Parses a command line. Throws std::invalid_argument on unknown commands,
// flags, or config keys. A help request returns with an empty command.
RunConfig parse_args(int argc, const char* const* argv);

// Executes one command. Creates the output directory, writes the artifacts
// plus the resolved configuration, and removes the directory again if the
// command throws. The DISCVAE_OUT environment variable supplies the default
// output root when --out is not given.
void run(const RunConfig& cfg);

// parse + run with errors reported to stderr; returns the process exit code.
int main(int argc, const char* const* argv);

}  // namespace discvae::cli
