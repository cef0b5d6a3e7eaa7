#include "discvae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace discvae::eval {

std::vector<int> knn_classify(const MatXd& train_z,
                              const std::vector<int>& train_labels,
                              const MatXd& test_z, int k) {
  const Eigen::Index n = train_z.rows();
  if (n == 0) throw std::invalid_argument("knn_classify: empty train set");
  if (k < 1 || k > n)
    throw std::invalid_argument("knn_classify: k out of range");
  if (static_cast<Eigen::Index>(train_labels.size()) != n)
    throw std::invalid_argument("knn_classify: label count mismatch");
  if (test_z.cols() != train_z.cols())
    throw std::invalid_argument("knn_classify: dimensionality mismatch");

  std::vector<int> out(static_cast<std::size_t>(test_z.rows()));
  std::vector<std::pair<double, Eigen::Index>> dist(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < test_z.rows(); ++i) {
    for (Eigen::Index j = 0; j < n; ++j)
      dist[static_cast<std::size_t>(j)] = {
          (train_z.row(j) - test_z.row(i)).squaredNorm(), j};
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());

    std::map<int, int> votes;
    for (int j = 0; j < k; ++j)
      ++votes[train_labels[static_cast<std::size_t>(dist[j].second)]];
    int maxc = 0;
    for (const auto& [label, c] : votes) maxc = std::max(maxc, c);
    for (int j = 0; j < k; ++j) {
      const int label = train_labels[static_cast<std::size_t>(dist[j].second)];
      if (votes[label] == maxc) {
        out[static_cast<std::size_t>(i)] = label;
        break;
      }
    }
  }
  return out;
}

AccuracyF1 accuracy_f1(const std::vector<int>& pred,
                       const std::vector<int>& truth, int classes) {
  if (pred.size() != truth.size() || pred.empty())
    throw std::invalid_argument("accuracy_f1: size mismatch or empty input");
  if (classes < 1) throw std::invalid_argument("accuracy_f1: bad class count");

  std::vector<int> tp(classes, 0), fp(classes, 0), fn(classes, 0);
  int correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const int p = pred[i], t = truth[i];
    if (p < 0 || p >= classes || t < 0 || t >= classes)
      throw std::invalid_argument("accuracy_f1: label out of range");
    if (p == t) {
      ++correct;
      ++tp[p];
    } else {
      ++fp[p];
      ++fn[t];
    }
  }

  double f1_sum = 0;
  for (int c = 0; c < classes; ++c) {
    const double prec =
        tp[c] + fp[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fp[c]) : 0.0;
    const double rec =
        tp[c] + fn[c] > 0 ? static_cast<double>(tp[c]) / (tp[c] + fn[c]) : 0.0;
    f1_sum += prec + rec > 0 ? 2.0 * prec * rec / (prec + rec) : 0.0;
  }
  return {100.0 * correct / static_cast<double>(pred.size()),
          f1_sum / classes};
}

double nmi(const std::vector<int>& a, const std::vector<int>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("nmi: size mismatch or empty input");
  const double n = static_cast<double>(a.size());

  std::map<int, int> ida, idb;
  for (int v : a) ida.emplace(v, static_cast<int>(ida.size()));
  for (int v : b) idb.emplace(v, static_cast<int>(idb.size()));
  const int ra = static_cast<int>(ida.size());
  const int rb = static_cast<int>(idb.size());

  Eigen::MatrixXd joint = Eigen::MatrixXd::Zero(ra, rb);
  for (std::size_t i = 0; i < a.size(); ++i)
    joint(ida[a[i]], idb[b[i]]) += 1.0;
  const VecXd ma = joint.rowwise().sum();
  const VecXd mb = joint.colwise().sum().transpose();

  auto entropy = [n](const VecXd& m) {
    double h = 0;
    for (Eigen::Index i = 0; i < m.size(); ++i)
      if (m(i) > 0) h -= m(i) / n * std::log(m(i) / n);
    return h;
  };
  const double ha = entropy(ma);
  const double hb = entropy(mb);
  if (ha <= 0.0 || hb <= 0.0) return 0.0;

  double mi = 0;
  for (int i = 0; i < ra; ++i)
    for (int j = 0; j < rb; ++j)
      if (joint(i, j) > 0)
        mi += joint(i, j) / n *
              std::log(joint(i, j) * n / (ma(i) * mb(j)));
  return std::clamp(mi / (0.5 * (ha + hb)), 0.0, 1.0);
}

ClusterReport cluster_report(const std::vector<int>& clusters,
                             const std::vector<int>& manoeuvres,
                             const std::vector<int>& narrows, int K) {
  if (clusters.size() != manoeuvres.size() ||
      clusters.size() != narrows.size() || clusters.empty())
    throw std::invalid_argument("cluster_report: size mismatch or empty input");
  if (K < 1) throw std::invalid_argument("cluster_report: bad K");

  ClusterReport r;
  r.by_manoeuvre = Eigen::MatrixXi::Zero(K, 6);
  r.by_narrow = Eigen::MatrixXi::Zero(K, 2);
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    const int c = clusters[i], m = manoeuvres[i], w = narrows[i];
    if (c < 0 || c >= K || m < 0 || m >= 6 || w < 0 || w > 1)
      throw std::invalid_argument("cluster_report: value out of range");
    ++r.by_manoeuvre(c, m);
    ++r.by_narrow(c, w);
  }
  return r;
}

void write_report(const EvalReport& r, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write report to " + path);
  out.precision(10);
  out << "# evaluation report\n";
  out << "model: " << r.model << "\n";
  out << "seed: " << r.seed << "\n";
  out << "config_hash: " << r.config_hash << "\n";
  out << "accuracy_pct: " << r.accuracy_pct << "\n";
  out << "macro_f1: " << r.macro_f1 << "\n";
  out << "nmi_modes: " << r.nmi_modes << "\n";
  out << "forecast_mse_joystick: " << r.forecast.joystick << "\n";
  out << "forecast_mse_laser: " << r.forecast.laser << "\n";

  out << "\n## cluster x manoeuvre\n";
  out << "cluster,forward,turn_left,turn_right,reverse,rotate_left,"
         "rotate_right\n";
  for (Eigen::Index c = 0; c < r.clusters.by_manoeuvre.rows(); ++c) {
    out << c;
    for (Eigen::Index m = 0; m < 6; ++m)
      out << ',' << r.clusters.by_manoeuvre(c, m);
    out << '\n';
  }
  out << "\n## cluster x width\n";
  out << "cluster,wide,narrow\n";
  for (Eigen::Index c = 0; c < r.clusters.by_narrow.rows(); ++c)
    out << c << ',' << r.clusters.by_narrow(c, 0) << ','
        << r.clusters.by_narrow(c, 1) << '\n';
}

void write_cluster_svg(const ClusterReport& r, const std::string& path) {
  const int K = static_cast<int>(r.by_manoeuvre.rows());
  const Eigen::VectorXi totals = r.by_manoeuvre.rowwise().sum();
  const int maxc = std::max(1, totals.maxCoeff());

  const double w = 640, h = 360, margin = 40;
  const double bar_w = (w - 2 * margin) / std::max(1, K);
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write svg to " + path);
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w
      << "\" height=\"" << h << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (int c = 0; c < K; ++c) {
    const double bh = (h - 2 * margin) * totals(c) / maxc;
    const double x = margin + c * bar_w;
    out << "<rect x=\"" << x + 2 << "\" y=\"" << h - margin - bh
        << "\" width=\"" << bar_w - 4 << "\" height=\"" << bh
        << "\" fill=\"#4477aa\"/>\n";
    out << "<text x=\"" << x + bar_w / 2 << "\" y=\"" << h - margin + 16
        << "\" font-size=\"12\" text-anchor=\"middle\">" << c << "</text>\n";
  }
  out << "<text x=\"" << margin << "\" y=\"" << margin - 16
      << "\" font-size=\"12\">windows per cluster (max " << maxc
      << ")</text>\n";
  out << "</svg>\n";
}

std::vector<KSelection> select_k(const data::Dataset& ds,
                                 const std::vector<int>& candidates,
                                 DiscvaeConfig base,
                                 const train::TrainConfig& tc,
                                 ObjectiveForm form) {
  if (candidates.empty())
    throw std::invalid_argument("select_k: no candidates");
  std::vector<KSelection> rows;
  for (int k : candidates) {
    if (k < 1) throw std::invalid_argument("select_k: K must be positive");
    DiscvaeConfig cfg = base;
    cfg.K = k;
    Rng init(seed_for(tc.seed, "init-k" + std::to_string(k)));
    Discvae<float> model = make_discvae<float>(cfg, init);
    train::fit(model, train::DiscvaeForward{ds.T, form}, ds.train, ds.val, tc);
    const SequenceBatch<float> test_in = slice_steps(ds.test, 0, ds.T);
    const std::vector<int> assign = assign_cluster(model, test_in);
    rows.push_back({k, nmi(assign, ds.test.mode)});
  }
  return rows;
}

}  // namespace discvae::eval
