#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "discvae/batch.hpp"
#include "discvae/dataset.hpp"
#include "discvae/discvae.hpp"
#include "discvae/train.hpp"
#include "discvae/types.hpp"

namespace discvae::eval {

// Euclidean k-nearest-neighbour majority vote; vote ties fall back to the
// nearest neighbour among the tied labels.
std::vector<int> knn_classify(const MatXd& train_z,
                              const std::vector<int>& train_labels,
                              const MatXd& test_z, int k);

struct AccuracyF1 {
  double accuracy_pct = 0;
  double macro_f1 = 0;
};

// Macro-F1 averages over all `classes` ids; classes absent from both
// predictions and truth contribute 0 to the mean.
AccuracyF1 accuracy_f1(const std::vector<int>& pred,
                       const std::vector<int>& truth, int classes);

// Mutual information normalized by the arithmetic mean of the two entropies;
// 0 by convention when either side is constant.
double nmi(const std::vector<int>& a, const std::vector<int>& b);

struct ForecastMse {
  double joystick = 0;
  double laser = 0;
};

// Mean squared error per scalar dimension between rolled-out means and the
// stored continuations, in normalized units. RollFn maps a T-step prefix
// batch and a horizon to per-step prediction matrices
//   (const SequenceBatch<float>&, int) ->
//     std::pair<std::vector<MatXf>, std::vector<MatXf>>.
template <typename RollFn>
ForecastMse forecast_mse(const SequenceBatch<float>& windows, int T,
                         int horizon, RollFn&& roll) {
  if (T < 1 || horizon < 1)
    throw std::invalid_argument("forecast_mse: bad prefix or horizon");
  if (windows.steps() < T + horizon)
    throw std::invalid_argument("forecast_mse: windows shorter than T + horizon");
  const SequenceBatch<float> prefix = slice_steps(windows, 0, T);
  const auto [pj, pl] = roll(prefix, horizon);
  if (static_cast<int>(pj.size()) != horizon ||
      static_cast<int>(pl.size()) != horizon)
    throw std::invalid_argument("forecast_mse: rollout length mismatch");

  double jacc = 0, lacc = 0;
  std::int64_t jn = 0, ln = 0;
  for (int t = 0; t < horizon; ++t) {
    const MatXf& tj = windows.joystick[T + t];
    const MatXf& tl = windows.laser[T + t];
    const MatXf& qj = pj[static_cast<std::size_t>(t)];
    const MatXf& ql = pl[static_cast<std::size_t>(t)];
    if (qj.rows() != tj.rows() || qj.cols() != tj.cols() ||
        ql.rows() != tl.rows() || ql.cols() != tl.cols())
      throw std::invalid_argument("forecast_mse: rollout shape mismatch");
    jacc += (qj.cast<double>() - tj.cast<double>()).array().square().sum();
    lacc += (ql.cast<double>() - tl.cast<double>()).array().square().sum();
    jn += tj.size();
    ln += tl.size();
  }
  return {jacc / static_cast<double>(jn), lacc / static_cast<double>(ln)};
}

struct ClusterReport {
  Eigen::MatrixXi by_manoeuvre;  // K x 6 assignment counts
  Eigen::MatrixXi by_narrow;     // K x 2 (wide, narrow)
};

ClusterReport cluster_report(const std::vector<int>& clusters,
                             const std::vector<int>& manoeuvres,
                             const std::vector<int>& narrows, int K);

struct EvalReport {
  std::string model;
  std::uint64_t seed = 0;
  std::string config_hash;
  double accuracy_pct = 0;
  double macro_f1 = 0;
  double nmi_modes = 0;
  ForecastMse forecast;
  ClusterReport clusters;
};

// Structured text header plus delimited per-cluster tables.
void write_report(const EvalReport& r, const std::string& path);
// Stacked per-cluster assignment histogram as a standalone SVG.
void write_cluster_svg(const ClusterReport& r, const std::string& path);

struct KSelection {
  int K = 0;
  double nmi_modes = 0;
};

// Trains one model per candidate K from the same seed and scores test-set
// cluster assignments against the generator modes.
std::vector<KSelection> select_k(const data::Dataset& ds,
                                 const std::vector<int>& candidates,
                                 DiscvaeConfig base,
                                 const train::TrainConfig& tc,
                                 ObjectiveForm form);

}  // namespace discvae::eval
