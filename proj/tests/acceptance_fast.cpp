// Acceptance gate, part 1: fast property checks. One [PASS]/[FAIL] line per
// criterion; the exit code is the number of failed criteria. The slow
// trained-model criteria live in acceptance_benchmark.cpp.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "discvae/baselines.hpp"
#include "discvae/cli.hpp"
#include "discvae/discvae.hpp"
#include "discvae/gmvae.hpp"
#include "discvae/sim.hpp"
#define DOCTEST_CONFIG_DISABLE
#include "support/fixtures.hpp"
#include "support/gradcheck.hpp"
#include "support/raycast_oracle.hpp"

using namespace discvae;
namespace fs = std::filesystem;

namespace {

std::string fmt(double v) {
  char b[40];
  std::snprintf(b, sizeof b, "%.3g", v);
  return b;
}

struct Gate {
  int failures = 0;
  void report(int number, const char* name, bool ok,
              const std::string& detail) {
    std::printf("[%s] %d. %s: %s\n", ok ? "PASS" : "FAIL", number, name,
                detail.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
};

// --------------------------------------------------------------------------
// 1. The two objective forms differ by exactly log K.

std::pair<bool, std::string> elbo_form_identity() {
  constexpr double kTol = 1e-5;
  Rng knobs(1001);
  double worst = 0.0;
  for (int i = 0; i < 100; ++i) {
    DiscvaeConfig cfg;
    cfg.K = 1 + knobs.uniform_int(5);
    cfg.dim_global = 1 + knobs.uniform_int(3);
    cfg.dim_local = 1 + knobs.uniform_int(3);
    cfg.beams = 2 + knobs.uniform_int(2);
    cfg.d_a = 2;
    cfg.d_l = 2;
    cfg.bi_state = 3;
    cfg.local_state = 3;
    cfg.hidden = 4;
    const Eigen::Index B = 1 + knobs.uniform_int(4);
    const Eigen::Index T = 2 + knobs.uniform_int(3);
    const double tau = 0.3 + 0.7 * knobs.uniform_open();

    Rng init(seed_for(static_cast<std::uint64_t>(i), "init"));
    auto m = make_discvae<double>(cfg, init);
    Rng bx(seed_for(static_cast<std::uint64_t>(i), "batch"));
    auto batch = testsupport::random_batch<double>(B, T, cfg.beams, bx);

    double obj[2];
    int fi = 0;
    for (ObjectiveForm form :
         {ObjectiveForm::entropy, ObjectiveForm::uniform_kl}) {
      Tape<double> tape;
      Binder<double> bn(tape);
      Rng noise(seed_for(static_cast<std::uint64_t>(i), "noise"));
      obj[fi++] =
          discvae_elbo(m, bn, batch, noise, tau, form).objective.val()(0, 0);
    }
    worst = std::max(worst,
                     std::abs(obj[0] - obj[1] - std::log(double(cfg.K))));
  }
  return {worst < kTol, "max |entropy form - uniform form - log K| = " +
                            fmt(worst) + " over 100 models (tol 1e-5)"};
}

// --------------------------------------------------------------------------
// 2. Reverse-mode gradients match central finite differences.

template <typename F>
double max_grad_rel_error(const std::vector<MatXd*>& params, F&& fwd,
                          double h = 1e-4) {
  Tape<double> tape;
  Binder<double> bn(tape);
  Var<double> loss = fwd(tape, bn);
  tape.backward(loss);

  std::vector<MatXd> grads(params.size());
  for (const auto& [ptr, id] : bn.entries()) {
    auto it = std::find(params.begin(), params.end(), ptr);
    if (it == params.end()) return 1.0;  // parameter missing from the graph
    grads[static_cast<size_t>(it - params.begin())] = tape.grad(id);
  }

  auto value = [&]() {
    Tape<double> t;
    Binder<double> b(t);
    return fwd(t, b).val()(0, 0);
  };

  double worst = 0.0;
  for (size_t i = 0; i < params.size(); ++i) {
    MatXd& p = *params[i];
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      for (Eigen::Index c = 0; c < p.cols(); ++c) {
        const double orig = p(r, c);
        p(r, c) = orig + h;
        const double fp = value();
        p(r, c) = orig - h;
        const double fm = value();
        p(r, c) = orig;
        const double fd = (fp - fm) / (2.0 * h);
        const double an = grads[i](r, c);
        worst = std::max(worst, std::abs(an - fd) /
                                    std::max({std::abs(an), std::abs(fd),
                                              1e-2}));
      }
    }
  }
  return worst;
}

std::pair<bool, std::string> gradient_check() {
  constexpr double kTol = 1e-3;
  const Eigen::Index B = 2, T = 3;

  Rng bx(41);
  auto batch = testsupport::random_batch<double>(B, T, 2, bx);
  Rng jit(42);

  DiscvaeConfig dc;
  dc.K = 2;
  dc.dim_global = 2;
  dc.dim_local = 2;
  dc.beams = 2;
  dc.d_a = 2;
  dc.d_l = 2;
  dc.bi_state = 3;
  dc.local_state = 3;
  dc.hidden = 4;
  Rng di(seed_for(7, "init"));
  auto dm = make_discvae<double>(dc, di);
  testsupport::jitter_params(dm, jit);
  const double e_disc = max_grad_rel_error(
      testsupport::collect_params(dm), [&](auto& t, auto& b) {
        (void)t;
        Rng noise(777);
        return discvae_elbo(dm, b, batch, noise, 0.7, ObjectiveForm::entropy)
            .objective;
      });

  GmvaeConfig gc{.K = 2, .dim_x = 4, .dim_z = 2, .hidden = 4};
  Rng gi(seed_for(8, "init"));
  auto gm = make_gmvae<double>(gc, gi);
  testsupport::jitter_params(gm, jit);
  Rng gx(43);
  const MatXd x = gx.normal_matrix<double>(3, 4);
  const double e_gm = max_grad_rel_error(
      testsupport::collect_params(gm), [&](auto& t, auto& b) {
        (void)t;
        Rng noise(778);
        return gmvae_elbo(gm, b, x, noise, 0.7, ObjectiveForm::entropy)
            .objective;
      });

  VrnnConfig vc;
  vc.beams = 2;
  vc.d_a = 2;
  vc.d_l = 2;
  vc.state = 3;
  vc.dim_z = 2;
  vc.hidden = 4;
  Rng vi(seed_for(9, "init"));
  auto vm = make_vrnn<double>(vc, vi);
  testsupport::jitter_params(vm, jit);
  const double e_vr = max_grad_rel_error(
      testsupport::collect_params(vm), [&](auto& t, auto& b) {
        (void)t;
        Rng noise(779);
        return vrnn_elbo(vm, b, batch, noise).objective;
      });

  const double worst = std::max({e_disc, e_gm, e_vr});
  return {worst < kTol, "max relative error vs central differences: model " +
                            fmt(e_disc) + ", mixture " + fmt(e_gm) +
                            ", recurrent " + fmt(e_vr) + " (tol 1e-3)"};
}

// --------------------------------------------------------------------------
// 3. Closed-form KL vs Monte-Carlo; relaxed categorical argmax frequencies.

std::pair<bool, std::string> distribution_primitives() {
  constexpr double kKlTol = 0.01;   // relative
  constexpr double kFreqTol = 0.02;  // absolute
  const int pairs = 20, dim = 3;
  const int n_mc = 1'000'000;

  Rng rng(301);
  MatXd qm(pairs, dim), ql(pairs, dim), pm(pairs, dim), pl(pairs, dim);
  for (int i = 0; i < pairs; ++i) {
    // redraw until the pair is well separated so 1% is meaningfully above
    // the Monte-Carlo standard error
    for (;;) {
      for (int d = 0; d < dim; ++d) {
        qm(i, d) = rng.uniform(-2.0, 2.0);
        ql(i, d) = rng.uniform(-1.0, 1.0);
        pm(i, d) = rng.uniform(-2.0, 2.0);
        pl(i, d) = rng.uniform(-1.0, 1.0);
      }
      double kl = 0.0;
      for (int d = 0; d < dim; ++d)
        kl += 0.5 * (std::exp(ql(i, d) - pl(i, d)) +
                     (qm(i, d) - pm(i, d)) * (qm(i, d) - pm(i, d)) /
                         std::exp(pl(i, d)) -
                     1.0 + pl(i, d) - ql(i, d));
      if (kl > 1.0) break;
    }
  }

  Tape<double> tape;
  Var<double> closed = kl_diag_gaussians(
      tape.constant(qm), tape.constant(ql), tape.constant(pm),
      tape.constant(pl));
  double worst_kl = 0.0;
  for (int i = 0; i < pairs; ++i) {
    double acc = 0.0;
    for (int s = 0; s < n_mc; ++s) {
      for (int d = 0; d < dim; ++d) {
        const double z = qm(i, d) + std::exp(0.5 * ql(i, d)) * rng.normal();
        const double lq = -0.5 * (ql(i, d) + (z - qm(i, d)) * (z - qm(i, d)) /
                                                 std::exp(ql(i, d)));
        const double lp = -0.5 * (pl(i, d) + (z - pm(i, d)) * (z - pm(i, d)) /
                                                 std::exp(pl(i, d)));
        acc += lq - lp;
      }
    }
    const double mc = acc / n_mc;
    const double cf = closed.val()(i, 0);
    worst_kl = std::max(worst_kl, std::abs(cf - mc) / cf);
  }

  // argmax of the relaxed sample is an exact categorical draw at any
  // temperature; frequencies must match the softmax probabilities
  const int K = 4, draws = 100'000;
  Rng grng(302);
  MatXd logits_row = grng.uniform_matrix<double>(1, K, -1.5, 1.5);
  MatXd logits(draws, K);
  logits.rowwise() = logits_row.row(0);
  Tape<double> gt;
  Var<double> y = gumbel_softmax_sample(gt.constant(logits),
                                        gt.constant(gumbel_noise<double>(
                                            grng, draws, K)),
                                        0.1);
  VecXd freq = VecXd::Zero(K);
  for (int s = 0; s < draws; ++s) {
    Eigen::Index best;
    y.val().row(s).maxCoeff(&best);
    freq(best) += 1.0 / draws;
  }
  const MatXd probs = softmax_rows_plain<double>(logits_row);
  const double worst_freq = (freq.transpose() - probs.row(0)).cwiseAbs()
                                .maxCoeff();

  const bool ok = worst_kl < kKlTol && worst_freq < kFreqTol;
  return {ok, "KL rel err " + fmt(worst_kl) + " on 20 pairs x 1e6 draws (tol 0.01); argmax freq err " +
                  fmt(worst_freq) + " at tau 0.1 over 1e5 draws (tol 0.02)"};
}

// --------------------------------------------------------------------------
// 4. Threat score: exact anchor values and monotone response.

std::pair<bool, std::string> threat_score_check() {
  const double R = sim::kRobotRadius, Ds = sim::kSafetyMargin;
  const double clear = (Ds + R);            // saturates at 0
  const double touch = R;                   // saturates at 1
  const double half = (Ds + R) - 0.5 * Ds;  // exactly halfway

  bool exact = true;
  exact &= sim::threat_score(VecXd::Constant(6, clear)) == 0.0;
  exact &= sim::threat_score(VecXd::Constant(6, 10.0)) == 0.0;
  exact &= sim::threat_score(VecXd::Constant(6, touch)) == 1.0;
  exact &= sim::threat_score(VecXd::Constant(6, 0.05)) == 1.0;
  exact &= sim::threat_score(VecXd::Constant(6, half)) == 0.5;

  Rng rng(401);
  int monotone = 0;
  const int trials = 1000;
  for (int i = 0; i < trials; ++i) {
    VecXd ranges(8);
    for (int b = 0; b < 8; ++b) ranges(b) = rng.uniform(0.0, 3.0);
    const double before = sim::threat_score(ranges);
    VecXd closer = ranges;
    const int b = rng.uniform_int(8);
    closer(b) = std::max(0.0, closer(b) - rng.uniform(0.0, 1.0));
    if (sim::threat_score(closer) >= before - 1e-12) ++monotone;
  }

  const bool ok = exact && monotone == trials;
  return {ok, std::string("anchor values ") + (exact ? "exact" : "WRONG") +
                  "; closer obstacles never lowered the score in " +
                  std::to_string(monotone) + "/1000 perturbations"};
}

// --------------------------------------------------------------------------
// 5. Raycaster vs an independent geometric oracle.

std::pair<bool, std::string> raycaster_check() {
  constexpr double kTol = 0.02;
  constexpr int kPoses = 1000, kBeams = 72;
  constexpr double kMaxRange = 10.0;
  Rng rng(501);
  double worst = 0.0;
  int done = 0;
  for (int map_id = 1; map_id <= 3; ++map_id) {
    const sim::WorldMap map = sim::make_world_map(map_id);
    const int want = kPoses / 3 + (map_id == 1 ? kPoses % 3 : 0);
    int got = 0;
    while (got < want) {
      sim::Pose p;
      p.x = rng.uniform(map.outer.xmin, map.outer.xmax);
      p.y = rng.uniform(map.outer.ymin, map.outer.ymax);
      p.theta = rng.uniform(-M_PI, M_PI);
      if (!map.contains(p.x, p.y)) continue;
      const sim::RaycastResult rc = sim::raycast(p, map, kBeams, kMaxRange);
      if (rc.outside) continue;
      for (int b = 0; b < kBeams; ++b) {
        const double bearing = p.theta + 2.0 * M_PI * b / kBeams;
        const double ref =
            testsupport::oracle_range(map, p.x, p.y, bearing, kMaxRange);
        worst = std::max(worst, std::abs(rc.ranges(b) - ref));
      }
      ++got;
      ++done;
    }
  }
  return {worst < kTol, "max |beam - oracle| = " + fmt(worst) + " m over " +
                            std::to_string(done) +
                            " poses x 72 beams on 3 maps (tol 0.02)"};
}

// --------------------------------------------------------------------------
// 8. K=1 model and the fixed-prior baseline agree bit for bit.

std::pair<bool, std::string> k1_reduction() {
  DiscvaeConfig base;
  base.K = 1;
  base.dim_global = 2;
  base.dim_local = 2;
  base.beams = 2;
  base.d_a = 2;
  base.d_l = 2;
  base.bi_state = 3;
  base.local_state = 3;
  base.hidden = 4;
  DiscvaeConfig fixed = base;
  fixed.fixed_global_prior = true;

  bool ok = true;
  for (int trial = 0; trial < 5 && ok; ++trial) {
    const auto s = static_cast<std::uint64_t>(trial);
    Rng ia(seed_for(s, "init")), ib(seed_for(s, "init"));
    auto ma = make_discvae<float>(base, ia);   // learned prior, one component
    auto mb = make_discvae<float>(fixed, ib);  // frozen standard normal
    Rng bx(seed_for(s, "batch"));
    auto batch = testsupport::random_batch<float>(3, 4, base.beams, bx);
    for (ObjectiveForm form :
         {ObjectiveForm::entropy, ObjectiveForm::uniform_kl}) {
      Tape<float> ta, tb;
      Binder<float> bna(ta), bnb(tb);
      Rng na(seed_for(s, "noise")), nb(seed_for(s, "noise"));
      auto ea = discvae_elbo(ma, bna, batch, na, 0.73f, form);
      auto eb = discvae_elbo(mb, bnb, batch, nb, 0.73f, form);
      ok &= ea.objective.val()(0, 0) == eb.objective.val()(0, 0);
      ok &= ea.terms.kl_global == eb.terms.kl_global;
      ok &= ea.terms.recon_a == eb.terms.recon_a;
      ok &= ea.terms.recon_l == eb.terms.recon_l;
      ok &= ea.terms.kl_local == eb.terms.kl_local;
      ok &= ea.terms.entropy == eb.terms.entropy;
    }
  }
  return {ok, ok ? "objective and every term identical over 5 weight draws "
                   "x 2 forms (float equality)"
                 : "objectives diverged"};
}

// --------------------------------------------------------------------------
// 9. Same command + seed twice is byte-identical end to end.

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv = {"discvae"};
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli::main(static_cast<int>(argv.size()), argv.data());
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<unreadable:" + p.string() + ">";
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::pair<bool, std::string> reproducibility() {
  const fs::path root = fs::temp_directory_path() /
                        ("discvae-accept-" + std::to_string(::getpid()));
  fs::remove_all(root);
  fs::create_directories(root);

  const std::vector<std::string> gen = {
      "gen-data", "--beams", "8",  "--t",        "6", "--horizon",
      "4",        "--stride", "6", "--episodes", "2", "--test-episodes",
      "1",        "--seed",   "11"};
  const std::vector<std::string> widths = {
      "--dim-global", "3", "--dim-local",   "3", "--hidden", "8",
      "--bi-state",   "6", "--local-state", "6", "--d-a",    "3",
      "--d-l",        "6"};

  bool ok = true;
  std::string what = "dataset blobs, training history, parameter blobs, and "
                     "evaluation reports identical across reruns";
  for (const char* pass : {"a", "b"}) {
    const std::string d = (root / pass).string();
    auto g = gen;
    g.insert(g.end(), {"--out", d + "/ds"});
    std::vector<std::string> tr = {"train", "--data", d + "/ds",
                                   "--out",  d + "/run", "--model",
                                   "discvae", "--k",      "3",
                                   "--epochs", "2",        "--batch",
                                   "64",      "--seed",   "11"};
    tr.insert(tr.end(), widths.begin(), widths.end());
    const std::vector<std::string> ev = {
        "eval", "--data", d + "/ds", "--checkpoint", d + "/run/checkpoint",
        "--out", d + "/eval", "--seed", "11"};
    if (run_cli(g) != 0 || run_cli(tr) != 0 || run_cli(ev) != 0) {
      ok = false;
      what = "a pipeline stage exited nonzero";
      break;
    }
  }
  if (ok) {
    for (const char* f :
         {"ds/train/commands.f32", "ds/train/ranges.f32",
          "ds/test/labels.i32", "run/history.csv",
          "run/checkpoint/param_0000.f32", "eval/report.txt",
          "eval/report.json"}) {
      if (slurp(root / "a" / f) != slurp(root / "b" / f)) {
        ok = false;
        what = std::string("mismatch in ") + f;
        break;
      }
    }
  }
  fs::remove_all(root);
  return {ok, what};
}

}  // namespace

int main() {
  Gate gate;
  {
    auto [ok, detail] = elbo_form_identity();
    gate.report(1, "objective-form identity", ok, detail);
  }
  {
    auto [ok, detail] = gradient_check();
    gate.report(2, "gradient correctness", ok, detail);
  }
  {
    auto [ok, detail] = distribution_primitives();
    gate.report(3, "distribution primitives", ok, detail);
  }
  {
    auto [ok, detail] = threat_score_check();
    gate.report(4, "threat score", ok, detail);
  }
  {
    auto [ok, detail] = raycaster_check();
    gate.report(5, "raycaster", ok, detail);
  }
  {
    auto [ok, detail] = k1_reduction();
    gate.report(8, "single-cluster reduction", ok, detail);
  }
  {
    auto [ok, detail] = reproducibility();
    gate.report(9, "reproducibility", ok, detail);
  }
  return gate.failures;
}
