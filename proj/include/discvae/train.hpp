#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "discvae/baselines.hpp"
#include "discvae/batch.hpp"
#include "discvae/discvae.hpp"
#include "discvae/gmvae.hpp"
#include "discvae/nn.hpp"
#include "discvae/objective.hpp"
#include "discvae/rng.hpp"
#include "discvae/tape.hpp"

namespace discvae::train {

inline double lr_schedule(double lr0, long step) {
  if (step < 0) throw std::invalid_argument("lr_schedule: negative step");
  return lr0 * std::pow(0.5, static_cast<double>(step) / 10000.0);
}

// Relaxation temperature, annealed per optimizer step down to a floor.
inline double anneal_temperature(long step) {
  if (step < 0) throw std::invalid_argument("anneal_temperature: negative step");
  return std::max(0.3, std::exp(-3e-5 * static_cast<double>(step)));
}

struct TrainConfig {
  int batch = 32;
  double lr0 = 1e-3;  // halves every 10k steps, continuous exponent
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  int max_epochs = 200;
  int patience = 10;  // epochs without validation improvement
  std::uint64_t seed = 0;
};

// Adaptive-moment ascent over binder entries; moment state is keyed by
// parameter address so it survives the per-step tape rebuild.
class Adam {
 public:
  Adam(double beta1, double beta2, double eps)
      : b1_(beta1), b2_(beta2), eps_(eps) {
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1 || eps <= 0)
      throw std::invalid_argument("Adam: decay rates in (0,1), eps positive");
  }

  void step(double lr, Tape<float>& tape,
            const std::vector<std::pair<MatXf*, int>>& entries) {
    ++t_;
    const float c1 = static_cast<float>(1.0 - std::pow(b1_, t_));
    const float c2 = static_cast<float>(1.0 - std::pow(b2_, t_));
    const float b1 = static_cast<float>(b1_);
    const float b2 = static_cast<float>(b2_);
    const float e = static_cast<float>(eps_);
    const float a = static_cast<float>(lr);
    for (const auto& [p, id] : entries) {
      const MatXf& g = tape.grad(id);
      Moments& s = state_[p];
      if (s.m.size() == 0) {
        s.m = MatXf::Zero(p->rows(), p->cols());
        s.v = MatXf::Zero(p->rows(), p->cols());
      }
      s.m = b1 * s.m + (1.0f - b1) * g;
      s.v = (b2 * s.v.array() + (1.0f - b2) * g.array().square()).matrix();
      *p += a * (s.m.array() / c1 / ((s.v.array() / c2).sqrt() + e)).matrix();
    }
  }

  long steps() const { return t_; }

 private:
  struct Moments {
    MatXf m, v;
  };
  double b1_, b2_, eps_;
  long t_ = 0;
  std::unordered_map<MatXf*, Moments> state_;
};

struct HistoryRow {
  int epoch = 0;
  std::string split;
  double objective = 0, recon_a = 0, recon_l = 0, kl_local = 0, kl_global = 0,
         entropy = 0, lr = 0, tau = 0;
};
using History = std::vector<HistoryRow>;

inline void write_history(const History& h, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write history to " + path);
  out << "epoch,split,objective,recon_a,recon_l,kl_local,kl_global,entropy,"
         "lr,tau\n";
  out.precision(10);
  for (const HistoryRow& r : h)
    out << r.epoch << ',' << r.split << ',' << r.objective << ',' << r.recon_a
        << ',' << r.recon_l << ',' << r.kl_local << ',' << r.kl_global << ','
        << r.entropy << ',' << r.lr << ',' << r.tau << '\n';
}

struct FitResult {
  History history;
  int best_epoch = -1;
  double best_val = -std::numeric_limits<double>::infinity();
  long steps = 0;
  bool early_stopped = false;
};

namespace detail {

inline void require_finite(const ElboTerms<float>& t, int epoch,
                           const char* split) {
  if (std::isfinite(t.objective) && std::isfinite(t.recon_a) &&
      std::isfinite(t.recon_l) && std::isfinite(t.kl_local) &&
      std::isfinite(t.kl_global) && std::isfinite(t.entropy))
    return;
  std::ostringstream ss;
  ss << "non-finite objective on " << split << " at epoch " << epoch
     << ": objective=" << t.objective << " recon_a=" << t.recon_a
     << " recon_l=" << t.recon_l << " kl_local=" << t.kl_local
     << " kl_global=" << t.kl_global << " entropy=" << t.entropy;
  throw std::runtime_error(ss.str());
}

struct TermAccum {
  double objective = 0, recon_a = 0, recon_l = 0, kl_local = 0, kl_global = 0,
         entropy = 0, weight = 0;

  void add(const ElboTerms<float>& t, double w) {
    objective += w * t.objective;
    recon_a += w * t.recon_a;
    recon_l += w * t.recon_l;
    kl_local += w * t.kl_local;
    kl_global += w * t.kl_global;
    entropy += w * t.entropy;
    weight += w;
  }

  HistoryRow row(int epoch, const std::string& split, double lr,
                 double tau) const {
    HistoryRow r;
    r.epoch = epoch;
    r.split = split;
    r.objective = objective / weight;
    r.recon_a = recon_a / weight;
    r.recon_l = recon_l / weight;
    r.kl_local = kl_local / weight;
    r.kl_global = kl_global / weight;
    r.entropy = entropy / weight;
    r.lr = lr;
    r.tau = tau;
    return r;
  }
};

}  // namespace detail

// Gradient-ascent loop with per-step LR decay and temperature annealing,
// early stopping on the validation objective, and best-epoch restoration.
// Forward builds the objective graph for one batch:
//   (Model&, Binder<float>&, const SequenceBatch<float>&, Rng&, double tau)
//     -> std::pair<Var<float>, ElboTerms<float>>
// Validation uses an identically re-seeded noise stream each epoch so epochs
// compare on common random numbers.
template <typename Model, typename Forward>
FitResult fit(Model& model, Forward&& forward,
              const SequenceBatch<float>& train_set,
              const SequenceBatch<float>& val_set, const TrainConfig& cfg) {
  if (cfg.batch < 1 || cfg.max_epochs < 1 || cfg.patience < 1)
    throw std::invalid_argument("fit: bad train config");
  if (train_set.batch() == 0 || val_set.batch() == 0)
    throw std::invalid_argument("fit: empty split");

  Rng shuffle_rng(seed_for(cfg.seed, "shuffle"));
  Rng train_rng(seed_for(cfg.seed, "train-noise"));
  Adam adam(cfg.beta1, cfg.beta2, cfg.eps);

  std::vector<MatXf> best;
  auto snapshot = [&] {
    best.clear();
    model.visit("m", [&](const std::string&, MatXf& p) { best.push_back(p); });
  };
  auto restore = [&] {
    std::size_t i = 0;
    model.visit("m", [&](const std::string&, MatXf& p) { p = best[i++]; });
  };

  const int n = static_cast<int>(train_set.batch());
  const int vn = static_cast<int>(val_set.batch());
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  FitResult res;
  long step = 0;
  int since_best = 0;
  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    for (int i = n - 1; i > 0; --i)
      std::swap(order[i],
                order[shuffle_rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);

    detail::TermAccum train_acc;
    double lr = lr_schedule(cfg.lr0, step);
    double tau = anneal_temperature(step);
    for (int s = 0; s < n; s += cfg.batch) {
      const int len = std::min(cfg.batch, n - s);
      const std::vector<int> idx(order.begin() + s, order.begin() + s + len);
      const SequenceBatch<float> b = select_rows(train_set, idx);
      lr = lr_schedule(cfg.lr0, step);
      tau = anneal_temperature(step);
      Tape<float> tape;
      Binder<float> bn(tape);
      auto [obj, terms] = forward(model, bn, b, train_rng, tau);
      detail::require_finite(terms, epoch, "train");
      tape.backward(obj);
      adam.step(lr, tape, bn.entries());
      ++step;
      train_acc.add(terms, static_cast<double>(len));
    }
    res.history.push_back(train_acc.row(epoch, "train", lr, tau));

    Rng val_rng(seed_for(cfg.seed, "val-noise"));
    detail::TermAccum val_acc;
    for (int s = 0; s < vn; s += cfg.batch) {
      const int len = std::min(cfg.batch, vn - s);
      std::vector<int> idx(len);
      std::iota(idx.begin(), idx.end(), s);
      const SequenceBatch<float> b = select_rows(val_set, idx);
      Tape<float> tape;
      Binder<float> bn(tape);
      auto [obj, terms] = forward(model, bn, b, val_rng, tau);
      (void)obj;
      detail::require_finite(terms, epoch, "validation");
      val_acc.add(terms, static_cast<double>(len));
    }
    res.history.push_back(val_acc.row(epoch, "val", lr, tau));

    const double vobj = res.history.back().objective;
    if (vobj > res.best_val) {
      res.best_val = vobj;
      res.best_epoch = epoch;
      snapshot();
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      res.early_stopped = true;
      break;
    }
  }

  if (!best.empty()) restore();
  res.steps = step;
  return res;
}

// ---------------------------------------------------------------------------
// per-model forward adapters

// Stacks the first T steps of every window into independent rows for the
// non-sequential mixture baseline: row w*T + t is [joystick_t, laser_t].
inline MatXf per_step_rows(const SequenceBatch<float>& b, int T) {
  if (T < 1 || static_cast<Eigen::Index>(T) > b.steps())
    throw std::invalid_argument("per_step_rows: bad T");
  const Eigen::Index B = b.batch();
  const Eigen::Index d = 2 + (b.laser.empty() ? 0 : b.laser[0].cols());
  MatXf x(B * T, d);
  for (Eigen::Index w = 0; w < B; ++w)
    for (int t = 0; t < T; ++t) {
      x.block(w * T + t, 0, 1, 2) = b.joystick[t].row(w);
      x.block(w * T + t, 2, 1, d - 2) = b.laser[t].row(w);
    }
  return x;
}

struct DiscvaeForward {
  int T;
  ObjectiveForm form = ObjectiveForm::entropy;

  std::pair<Var<float>, ElboTerms<float>> operator()(
      Discvae<float>& m, Binder<float>& bn, const SequenceBatch<float>& b,
      Rng& rng, double tau) const {
    auto r = discvae_elbo(m, bn, slice_steps(b, 0, T), rng,
                          static_cast<float>(tau), form);
    return {r.objective, r.terms};
  }
};

struct VrnnForward {
  int T;

  std::pair<Var<float>, ElboTerms<float>> operator()(
      Vrnn<float>& m, Binder<float>& bn, const SequenceBatch<float>& b,
      Rng& rng, double) const {
    auto r = vrnn_elbo(m, bn, slice_steps(b, 0, T), rng);
    return {r.objective, r.terms};
  }
};

struct GmvaeForward {
  int T;
  ObjectiveForm form = ObjectiveForm::entropy;

  std::pair<Var<float>, ElboTerms<float>> operator()(
      Gmvae<float>& m, Binder<float>& bn, const SequenceBatch<float>& b,
      Rng& rng, double tau) const {
    auto r = gmvae_elbo(m, bn, per_step_rows(b, T), rng,
                        static_cast<float>(tau), form);
    return {r.objective, r.terms};
  }
};

// Supervised baseline: the "objective" is the negative cross-entropy, so the
// same ascent loop applies; only the objective column is meaningful.
struct BilstmForward {
  int T;

  std::pair<Var<float>, ElboTerms<float>> operator()(
      BilstmClassifier<float>& m, Binder<float>& bn,
      const SequenceBatch<float>& b, Rng&, double) const {
    Var<float> obj = bilstm_objective(m, bn, slice_steps(b, 0, T));
    ElboTerms<float> terms;
    terms.objective = obj.val()(0, 0);
    return {obj, terms};
  }
};

}  // namespace discvae::train
