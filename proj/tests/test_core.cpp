#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "discvae/distributions.hpp"
#include "discvae/nn.hpp"
#include "discvae/rng.hpp"
#include "support/gradcheck.hpp"

using namespace discvae;
using testsupport::check_param_gradients;

namespace {
constexpr double kHalfLog2Pi = 0.9189385332046727;
}

TEST_CASE("reparam sample identities") {
  Tape<double> t;
  MatXd mean = MatXd::Zero(1, 2);
  MatXd log_var = MatXd::Zero(1, 2);
  MatXd eps(1, 2);
  eps << 1.0, -1.0;
  MatXd s = reparam_sample(t.input(mean), t.input(log_var), t.input(eps)).val();
  CHECK(s(0, 0) == doctest::Approx(1.0));
  CHECK(s(0, 1) == doctest::Approx(-1.0));

  // variance collapses to exp(kLogVarMin); sample pins to the mean
  MatXd m2 = MatXd::Constant(1, 2, 2.0);
  MatXd lv2 = MatXd::Constant(1, 2, kLogVarMin);
  MatXd s2 = reparam_sample(t.input(m2), t.input(lv2), t.input(eps)).val();
  CHECK(std::abs(s2(0, 0) - 2.0) <= std::exp(-5.0) * (1.0 + 1e-9));
  CHECK(std::abs(s2(0, 1) - 2.0) <= std::exp(-5.0) * (1.0 + 1e-9));
}

TEST_CASE("reparam sample moments match a million draws") {
  Rng rng(101);
  const int n = 1'000'000;
  MatXd mean = MatXd::Constant(n, 1, 1.0);
  MatXd log_var = MatXd::Constant(n, 1, std::log(4.0));
  MatXd s = reparam_sample_plain<double>(mean, log_var, rng);
  double m = s.mean();
  double v = (s.array() - m).square().sum() / (n - 1);
  CHECK(std::abs(m - 1.0) < 0.01);
  CHECK(std::abs(v - 4.0) / 4.0 < 0.01);
}

TEST_CASE("gaussian KL closed form") {
  Tape<double> t;
  Rng rng(102);
  MatXd mq = rng.normal_matrix<double>(5, 4);
  MatXd lq = rng.normal_matrix<double>(5, 4);
  MatXd kl_same =
      kl_diag_gaussians(t.input(mq), t.input(lq), t.input(mq), t.input(lq))
          .val();
  CHECK(kl_same.cwiseAbs().maxCoeff() < 1e-12);

  MatXd one = MatXd::Constant(1, 1, 1.0);
  MatXd zero = MatXd::Zero(1, 1);
  MatXd kl01 =
      kl_diag_gaussians(t.input(one), t.input(zero), t.input(zero),
                        t.input(zero))
          .val();
  CHECK(kl01(0, 0) == doctest::Approx(0.5));

  // non-negativity over random parameter pairs
  Rng r2(103);
  MatXd a = r2.normal_matrix<double>(1000, 3);
  MatXd b = r2.normal_matrix<double>(1000, 3);
  MatXd c = r2.normal_matrix<double>(1000, 3);
  MatXd d = r2.normal_matrix<double>(1000, 3);
  MatXd kl = kl_diag_gaussians_plain<double>(a, b, c, d);
  CHECK(kl.minCoeff() >= -1e-12);
}

TEST_CASE("gaussian KL matches Monte Carlo") {
  Rng rng(104);
  MatXd mq = rng.normal_matrix<double>(1, 4);
  MatXd lq = 0.5 * rng.normal_matrix<double>(1, 4);
  MatXd mp = rng.normal_matrix<double>(1, 4);
  MatXd lp = 0.5 * rng.normal_matrix<double>(1, 4);
  double closed = kl_diag_gaussians_plain<double>(mq, lq, mp, lp)(0, 0);

  const int n = 1'000'000;
  Rng sampler(105);
  MatXd z = reparam_sample_plain<double>(mq.replicate(n, 1),
                                         lq.replicate(n, 1), sampler);
  MatXd lq_full = lq.replicate(n, 1);
  MatXd lp_full = lp.replicate(n, 1);
  MatXd log_q = gaussian_log_likelihood_plain<double>(z, mq.replicate(n, 1),
                                                      lq_full);
  MatXd log_p = gaussian_log_likelihood_plain<double>(z, mp.replicate(n, 1),
                                                      lp_full);
  double mc = (log_q - log_p).mean();
  CHECK(std::abs(closed - mc) / std::abs(closed) < 0.01);
}

TEST_CASE("gumbel softmax properties") {
  Tape<double> t;
  Rng rng(106);
  // high temperature flattens toward uniform
  MatXd logits = rng.normal_matrix<double>(1, 5);
  MatXd g = gumbel_noise<double>(rng, 1, 5);
  MatXd y =
      gumbel_softmax_sample(t.input(logits), t.input(g), 1000.0).val();
  CHECK(y.sum() == doctest::Approx(1.0));
  for (int k = 0; k < 5; ++k) CHECK(std::abs(y(0, k) - 0.2) < 0.01);

  // dominant logit wins at moderate temperature
  MatXd strong(1, 3);
  strong << 10.0, 0.0, 0.0;
  MatXd g3 = gumbel_noise<double>(rng, 1, 3);
  MatXd ys = gumbel_softmax_sample(t.input(strong), t.input(g3), 0.5).val();
  CHECK(ys(0, 0) > 0.9);

  // simplex invariant across random draws and temperatures
  for (int i = 0; i < 200; ++i) {
    MatXd l = 2.0 * rng.normal_matrix<double>(1, 7);
    MatXd gg = gumbel_noise<double>(rng, 1, 7);
    double tau = rng.uniform(0.05, 5.0);
    MatXd p = gumbel_softmax_sample(t.input(l), t.input(gg), tau).val();
    CHECK(p.sum() == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(p.minCoeff() >= 0.0);
  }
}

TEST_CASE("gumbel softmax argmax frequencies match the categorical") {
  Rng rng(107);
  MatXd logits(1, 4);
  logits << 0.5, -0.3, 1.2, 0.0;
  MatXd probs = softmax_rows_plain<double>(logits);
  const int n = 100'000;
  Eigen::Vector4d counts = Eigen::Vector4d::Zero();
  Tape<double> t;
  Var<double> vl = t.input(logits);
  for (int i = 0; i < n; ++i) {
    MatXd g = gumbel_noise<double>(rng, 1, 4);
    MatXd y = gumbel_softmax_sample(vl, t.input(g), 0.1).val();
    Eigen::Index k;
    y.row(0).maxCoeff(&k);
    counts(k) += 1.0;
    t.clear();
    vl = t.input(logits);
  }
  counts /= n;
  for (int k = 0; k < 4; ++k)
    CHECK(std::abs(counts(k) - probs(0, k)) < 0.02);
}

TEST_CASE("categorical entropy endpoints") {
  Tape<double> t;
  MatXd onehotish(1, 4);
  onehotish << 50.0, 0.0, 0.0, 0.0;
  MatXd h1 = categorical_entropy(log_softmax_rows(t.input(onehotish))).val();
  CHECK(h1(0, 0) == doctest::Approx(0.0).epsilon(1e-6));

  MatXd uniform13 = MatXd::Zero(1, 13);
  MatXd h2 = categorical_entropy(log_softmax_rows(t.input(uniform13))).val();
  CHECK(h2(0, 0) == doctest::Approx(std::log(13.0)));

  MatXd half = MatXd::Zero(1, 2);
  MatXd h3 = categorical_entropy(log_softmax_rows(t.input(half))).val();
  CHECK(h3(0, 0) == doctest::Approx(std::log(2.0)));
}

TEST_CASE("categorical KL to uniform equals log K minus entropy") {
  Rng rng(108);
  for (int i = 0; i < 50; ++i) {
    MatXd logits = 3.0 * rng.normal_matrix<double>(1, 6);
    MatXd lp = log_softmax_rows_plain<double>(logits);
    MatXd p = lp.array().exp().matrix();
    double kl_direct = (p.array() * (lp.array() - std::log(1.0 / 6.0))).sum();
    double h = categorical_entropy_plain<double>(lp)(0, 0);
    CHECK(std::abs(kl_direct - (std::log(6.0) - h)) < 1e-6);
  }
}

TEST_CASE("gaussian log likelihood values") {
  Tape<double> t;
  MatXd x = MatXd::Zero(1, 1);
  MatXd mean = MatXd::Zero(1, 1);
  MatXd lv = MatXd::Zero(1, 1);
  double ll0 =
      gaussian_log_likelihood(t.input(x), t.input(mean), t.input(lv)).val()(0,
                                                                            0);
  CHECK(ll0 == doctest::Approx(-kHalfLog2Pi));

  MatXd x1 = MatXd::Constant(1, 1, 1.0);
  double ll1 =
      gaussian_log_likelihood(t.input(x1), t.input(mean), t.input(lv)).val()(
          0, 0);
  CHECK(ll1 == doctest::Approx(-kHalfLog2Pi - 0.5));

  // wide vector agrees with independent per-element summation
  Rng rng(109);
  MatXd xw = rng.normal_matrix<double>(1, 360);
  MatXd mw = rng.normal_matrix<double>(1, 360);
  MatXd lw = 0.3 * rng.normal_matrix<double>(1, 360);
  double got = gaussian_log_likelihood_plain<double>(xw, mw, lw)(0, 0);
  double expect = 0.0;
  for (int i = 0; i < 360; ++i) {
    double var = std::exp(lw(0, i));
    expect += -0.5 * std::log(2.0 * M_PI * var) -
              (xw(0, i) - mw(0, i)) * (xw(0, i) - mw(0, i)) / (2.0 * var);
  }
  CHECK(std::abs(got - expect) < 1e-6);
}

TEST_CASE("distribution gradients match finite differences") {
  Rng rng(110);
  MatXd mean = rng.normal_matrix<double>(2, 4);
  MatXd lv = 0.5 * rng.normal_matrix<double>(2, 4);
  MatXd eps = rng.normal_matrix<double>(2, 4);
  MatXd mp = rng.normal_matrix<double>(2, 4);
  MatXd lp = 0.5 * rng.normal_matrix<double>(2, 4);
  MatXd logits = rng.normal_matrix<double>(2, 5);

  std::vector<MatXd*> params = {&mean, &lv};
  check_param_gradients(params, [&](Tape<double>& t, Binder<double>& b) {
    Var<double> s = reparam_sample(b(mean), b(lv), t.constant(eps));
    return sum_all(square(s));
  });

  std::vector<MatXd*> klp = {&mean, &lv, &mp, &lp};
  check_param_gradients(klp, [&](Tape<double>& t, Binder<double>& b) {
    return sum_all(kl_diag_gaussians(b(mean), b(lv), b(mp), b(lp)));
  });

  std::vector<MatXd*> ent = {&logits};
  check_param_gradients(ent, [&](Tape<double>& t, Binder<double>& b) {
    return sum_all(categorical_entropy(log_softmax_rows(b(logits))));
  });

  MatXd g = gumbel_noise<double>(rng, 2, 5);
  check_param_gradients(ent, [&](Tape<double>& t, Binder<double>& b) {
    Var<double> y = gumbel_softmax_sample(b(logits), t.constant(g), 0.7);
    return sum_all(square(y));
  });
}

TEST_CASE("dense init respects fan-in bound and zero bias") {
  Rng rng(111);
  auto d = make_dense<double>(64, 32, rng);
  double bound = std::sqrt(1.0 / 64.0);
  CHECK(d.w.cwiseAbs().maxCoeff() <= bound);
  CHECK(d.w.cwiseAbs().maxCoeff() > 0.5 * bound);  // actually filled
  CHECK(d.b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("orthogonal init") {
  Rng rng(112);
  MatXd q = orthogonal_matrix<double>(16, rng);
  CHECK((q.transpose() * q - MatXd::Identity(16, 16)).cwiseAbs().maxCoeff() <
        1e-10);

  auto cell = make_lstm<double>(5, 8, rng);
  REQUIRE(cell.w.rows() == 13);
  REQUIRE(cell.w.cols() == 32);
  for (int gate = 0; gate < 4; ++gate) {
    MatXd blk = cell.w.block(5, gate * 8, 8, 8);
    CHECK((blk.transpose() * blk - MatXd::Identity(8, 8))
              .cwiseAbs()
              .maxCoeff() < 1e-5);
  }
  CHECK(cell.b.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("lstm step matches a scalar transcription") {
  Rng rng(113);
  auto cell = make_lstm<double>(2, 3, rng);
  MatXd x = rng.normal_matrix<double>(1, 2);
  MatXd h0 = rng.normal_matrix<double>(1, 3);
  MatXd c0 = rng.normal_matrix<double>(1, 3);

  Tape<double> t;
  Binder<double> b(t);
  LstmCell<double>::State s{t.input(h0), t.input(c0)};
  auto s1 = cell.step(b, t.input(x), s);

  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Eigen::RowVectorXd xh(5);
  xh << x(0, 0), x(0, 1), h0(0, 0), h0(0, 1), h0(0, 2);
  for (int j = 0; j < 3; ++j) {
    double zi = xh.dot(cell.w.col(j)) + cell.b(0, j);
    double zf = xh.dot(cell.w.col(3 + j)) + cell.b(0, 3 + j);
    double zo = xh.dot(cell.w.col(6 + j)) + cell.b(0, 6 + j);
    double zg = xh.dot(cell.w.col(9 + j)) + cell.b(0, 9 + j);
    double c1 = sig(zf) * c0(0, j) + sig(zi) * std::tanh(zg);
    double h1 = sig(zo) * std::tanh(c1);
    CHECK(s1.c.val()(0, j) == doctest::Approx(c1).epsilon(1e-12));
    CHECK(s1.h.val()(0, j) == doctest::Approx(h1).epsilon(1e-12));
  }
}

TEST_CASE("binder binds each parameter once") {
  Rng rng(114);
  auto cell = make_lstm<double>(2, 3, rng);
  Tape<double> t;
  Binder<double> b(t);
  auto s = cell.zero_state(t, 4);
  Var<double> x = t.input(rng.normal_matrix<double>(4, 2));
  for (int i = 0; i < 5; ++i) s = cell.step(b, x, s);
  CHECK(b.entries().size() == 2);
}

TEST_CASE("network block gradients through repeated binding") {
  Rng rng(115);
  auto cell = make_lstm<double>(2, 3, rng);
  auto head = make_gaussian_block<double>(3, 4, 2, rng);
  MatXd x0 = rng.normal_matrix<double>(2, 2);
  MatXd x1 = rng.normal_matrix<double>(2, 2);
  MatXd x2 = rng.normal_matrix<double>(2, 2);

  std::vector<MatXd*> params;
  cell.visit("cell", [&](const std::string&, MatXd& p) {
    params.push_back(&p);
  });
  head.visit("head", [&](const std::string&, MatXd& p) {
    params.push_back(&p);
  });

  check_param_gradients(params, [&](Tape<double>& t, Binder<double>& b) {
    auto s = cell.zero_state(t, 2);
    s = cell.step(b, t.input(x0), s);
    s = cell.step(b, t.input(x1), s);
    s = cell.step(b, t.input(x2), s);
    auto g = head.forward(b, s.h);
    return sum_all(square(g.mean)) + sum_all(square(g.log_var));
  });
}

TEST_CASE("gaussian block clamps log variance") {
  Rng rng(116);
  auto head = make_gaussian_block<double>(2, 4, 3, rng);
  // blow up the logvar head weights to force saturation
  head.logvar_head.w *= 1e6;
  Tape<double> t;
  Binder<double> b(t);
  auto out = head.forward(b, t.input(rng.normal_matrix<double>(8, 2)));
  CHECK(out.log_var.val().maxCoeff() <= kLogVarMax);
  CHECK(out.log_var.val().minCoeff() >= kLogVarMin);
}
