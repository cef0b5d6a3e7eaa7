#include "discvae/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <map>
#include <stdexcept>
#include <utility>

#include "CLI11.hpp"
#include "json.hpp"

#include "discvae/checkpoint.hpp"
#include "discvae/dataset.hpp"
#include "discvae/eval.hpp"
#include "discvae/train.hpp"

namespace discvae::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const std::set<std::string> kModels = {"discvae", "gmvae", "vrnn", "dseqvae",
                                       "bilstm"};
const std::set<std::string> kObjectives = {"entropy", "uniform-kl"};
constexpr int kClasses = 12;  // manoeuvre x width labels

json to_json(const RunConfig& c) {
  return json{{"out", c.out},
              {"data", c.data},
              {"checkpoint", c.checkpoint},
              {"report", c.report},
              {"resume", c.resume},
              {"model", c.model},
              {"objective", c.objective},
              {"k", c.k},
              {"dim_global", c.dim_global},
              {"dim_local", c.dim_local},
              {"beams", c.beams},
              {"t", c.t},
              {"horizon", c.horizon},
              {"d_a", c.d_a},
              {"d_l", c.d_l},
              {"bi_state", c.bi_state},
              {"local_state", c.local_state},
              {"hidden", c.hidden},
              {"trainval_episodes", c.trainval_episodes},
              {"test_episodes", c.test_episodes},
              {"stride", c.stride},
              {"batch", c.batch},
              {"lr0", c.lr0},
              {"beta1", c.beta1},
              {"beta2", c.beta2},
              {"eps", c.eps},
              {"epochs", c.epochs},
              {"patience", c.patience},
              {"knn_k", c.knn_k},
              {"samples_per_cluster", c.samples_per_cluster},
              {"sample_index", c.sample_index},
              {"k_candidates", c.k_candidates},
              {"seed", c.seed}};
}

void apply_key(RunConfig& c, const std::string& key, const json& v) {
  try {
    if (key == "out") c.out = v.get<std::string>();
    else if (key == "data") c.data = v.get<std::string>();
    else if (key == "checkpoint") c.checkpoint = v.get<std::string>();
    else if (key == "report") c.report = v.get<std::string>();
    else if (key == "resume") c.resume = v.get<std::string>();
    else if (key == "model") c.model = v.get<std::string>();
    else if (key == "objective") c.objective = v.get<std::string>();
    else if (key == "k") c.k = v.get<int>();
    else if (key == "dim_global") c.dim_global = v.get<int>();
    else if (key == "dim_local") c.dim_local = v.get<int>();
    else if (key == "beams") c.beams = v.get<int>();
    else if (key == "t") c.t = v.get<int>();
    else if (key == "horizon") c.horizon = v.get<int>();
    else if (key == "d_a") c.d_a = v.get<int>();
    else if (key == "d_l") c.d_l = v.get<int>();
    else if (key == "bi_state") c.bi_state = v.get<int>();
    else if (key == "local_state") c.local_state = v.get<int>();
    else if (key == "hidden") c.hidden = v.get<int>();
    else if (key == "trainval_episodes") c.trainval_episodes = v.get<int>();
    else if (key == "test_episodes") c.test_episodes = v.get<int>();
    else if (key == "stride") c.stride = v.get<int>();
    else if (key == "batch") c.batch = v.get<int>();
    else if (key == "lr0") c.lr0 = v.get<double>();
    else if (key == "beta1") c.beta1 = v.get<double>();
    else if (key == "beta2") c.beta2 = v.get<double>();
    else if (key == "eps") c.eps = v.get<double>();
    else if (key == "epochs") c.epochs = v.get<int>();
    else if (key == "patience") c.patience = v.get<int>();
    else if (key == "knn_k") c.knn_k = v.get<int>();
    else if (key == "samples_per_cluster") c.samples_per_cluster = v.get<int>();
    else if (key == "sample_index") c.sample_index = v.get<int>();
    else if (key == "k_candidates") c.k_candidates = v.get<std::vector<int>>();
    else if (key == "seed") c.seed = v.get<std::uint64_t>();
    else throw std::invalid_argument("unknown config key: " + key);
  } catch (const json::exception& e) {
    throw std::invalid_argument("config key " + key + ": " + e.what());
  }
  c.provided.insert(key);
}

void validate(const RunConfig& c) {
  if (!kModels.count(c.model))
    throw std::invalid_argument("unknown model kind: " + c.model);
  if (!kObjectives.count(c.objective))
    throw std::invalid_argument("unknown objective form: " + c.objective);
  const std::pair<const char*, int> positives[] = {
      {"k", c.k},           {"dim_global", c.dim_global},
      {"dim_local", c.dim_local}, {"beams", c.beams},
      {"t", c.t},           {"horizon", c.horizon},
      {"d_a", c.d_a},       {"d_l", c.d_l},
      {"bi_state", c.bi_state}, {"local_state", c.local_state},
      {"hidden", c.hidden}, {"trainval_episodes", c.trainval_episodes},
      {"test_episodes", c.test_episodes}, {"stride", c.stride},
      {"batch", c.batch},   {"epochs", c.epochs},
      {"patience", c.patience}, {"knn_k", c.knn_k},
      {"samples_per_cluster", c.samples_per_cluster}};
  for (const auto& [key, value] : positives)
    if (value < 1)
      throw std::invalid_argument(std::string(key) + " must be positive");
  if (c.sample_index < 0)
    throw std::invalid_argument("sample_index must be non-negative");
  if (c.lr0 < 0) throw std::invalid_argument("lr0 must be non-negative");
  if (c.beta1 <= 0 || c.beta1 >= 1 || c.beta2 <= 0 || c.beta2 >= 1)
    throw std::invalid_argument("adam decay rates must lie in (0, 1)");
  if (c.eps <= 0) throw std::invalid_argument("eps must be positive");
  if (c.k_candidates.empty())
    throw std::invalid_argument("k_candidates must not be empty");
  for (int k : c.k_candidates)
    if (k < 1) throw std::invalid_argument("k_candidates must be positive");
}

// Stable identity of an experiment: every knob except paths.
std::string config_hash(const RunConfig& c) {
  json j = to_json(c);
  for (const char* key : {"out", "data", "checkpoint", "report", "resume"})
    j.erase(key);
  const std::string s = j.dump();
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char ch : s) {
    h ^= ch;
    h *= 1099511628211ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

void need(const std::string& value, const char* flag, const char* cmd) {
  if (value.empty())
    throw std::invalid_argument(std::string(cmd) + " requires " + flag);
}

ObjectiveForm form_of(const RunConfig& c) {
  return c.objective == "entropy" ? ObjectiveForm::entropy
                                  : ObjectiveForm::uniform_kl;
}

DiscvaeConfig discvae_config(const RunConfig& c) {
  DiscvaeConfig m;
  m.K = c.model == "dseqvae" ? 1 : c.k;
  m.dim_global = c.dim_global;
  m.dim_local = c.dim_local;
  m.beams = c.beams;
  m.d_a = c.d_a;
  m.d_l = c.d_l;
  m.bi_state = c.bi_state;
  m.local_state = c.local_state;
  m.hidden = c.hidden;
  m.fixed_global_prior = c.model == "dseqvae";
  return m;
}

int meta_int(const ckpt::CheckpointMeta& m, const char* key) {
  auto it = m.config.find(key);
  if (it == m.config.end())
    throw std::runtime_error(std::string("checkpoint config missing ") + key);
  return static_cast<int>(it->second);
}

std::map<std::string, double> config_map(const RunConfig& c, int k_eff) {
  return {{"k", static_cast<double>(k_eff)},
          {"dim_global", static_cast<double>(c.dim_global)},
          {"dim_local", static_cast<double>(c.dim_local)},
          {"beams", static_cast<double>(c.beams)},
          {"t", static_cast<double>(c.t)},
          {"horizon", static_cast<double>(c.horizon)},
          {"d_a", static_cast<double>(c.d_a)},
          {"d_l", static_cast<double>(c.d_l)},
          {"bi_state", static_cast<double>(c.bi_state)},
          {"local_state", static_cast<double>(c.local_state)},
          {"hidden", static_cast<double>(c.hidden)}};
}

DiscvaeConfig discvae_config_from_meta(const ckpt::CheckpointMeta& m) {
  DiscvaeConfig c;
  c.K = meta_int(m, "k");
  c.dim_global = meta_int(m, "dim_global");
  c.dim_local = meta_int(m, "dim_local");
  c.beams = meta_int(m, "beams");
  c.d_a = meta_int(m, "d_a");
  c.d_l = meta_int(m, "d_l");
  c.bi_state = meta_int(m, "bi_state");
  c.local_state = meta_int(m, "local_state");
  c.hidden = meta_int(m, "hidden");
  c.fixed_global_prior = m.model == "dseqvae";
  return c;
}

// ---------------------------------------------------------------------------
// commands

void cmd_gen_data(RunConfig& cfg) {
  data::DatasetConfig dc;
  dc.T = cfg.t;
  dc.horizon = cfg.horizon;
  dc.stride = cfg.stride;
  dc.trainval_episodes_per_mode_map = cfg.trainval_episodes;
  dc.test_episodes_per_mode = cfg.test_episodes;
  dc.sim.beams = cfg.beams;
  Rng rng(seed_for(cfg.seed, "data"));
  data::Dataset ds = data::build_dataset(dc, rng);
  ds.seed = cfg.seed;
  data::save_dataset(ds, cfg.out);
}

void cmd_train(RunConfig& cfg) {
  need(cfg.data, "--data", "train");
  data::Dataset ds = data::load_dataset(cfg.data);

  auto adopt = [&](const char* key, int& field, int manifest) {
    if (!cfg.has(key)) {
      field = manifest;
    } else if (field != manifest) {
      throw std::runtime_error(std::string("train: ") + key + "=" +
                               std::to_string(field) +
                               " does not match the dataset manifest (" +
                               std::to_string(manifest) + ")");
    }
  };
  adopt("beams", cfg.beams, ds.beams);
  adopt("t", cfg.t, ds.T);
  adopt("horizon", cfg.horizon, ds.horizon);

  if (cfg.model == "dseqvae") {
    if (cfg.has("k") && cfg.k != 1)
      throw std::invalid_argument("dseqvae is the single-cluster reduction");
    cfg.k = 1;
  }

  train::TrainConfig tc;
  tc.batch = cfg.batch;
  tc.lr0 = cfg.lr0;
  tc.beta1 = cfg.beta1;
  tc.beta2 = cfg.beta2;
  tc.eps = cfg.eps;
  tc.max_epochs = cfg.epochs;
  tc.patience = cfg.patience;
  tc.seed = seed_for(cfg.seed, "train");

  const fs::path outp(cfg.out);
  const int k_eff = cfg.model == "dseqvae" ? 1 : cfg.k;

  auto maybe_resume = [&](auto& model) -> long {
    if (cfg.resume.empty()) return 0;
    ckpt::CheckpointMeta rm = ckpt::read_checkpoint_meta(cfg.resume);
    if (rm.model != cfg.model)
      throw std::runtime_error("resume: checkpoint holds a " + rm.model +
                               " model");
    ckpt::load_checkpoint(model, cfg.resume);
    return rm.step;
  };
  auto finish = [&](auto& model, const train::FitResult& res,
                    long base_step) {
    ckpt::CheckpointMeta meta;
    meta.model = cfg.model;
    meta.config = config_map(cfg, k_eff);
    meta.stats = ds.stats;
    meta.seed = cfg.seed;
    meta.step = base_step + res.steps;
    ckpt::save_checkpoint(model, (outp / "checkpoint").string(), meta);
    train::write_history(res.history, (outp / "history.csv").string());
  };

  Rng init(seed_for(cfg.seed, "init"));
  if (cfg.model == "discvae" || cfg.model == "dseqvae") {
    auto m = make_discvae<float>(discvae_config(cfg), init);
    const long base = maybe_resume(m);
    auto res = train::fit(m, train::DiscvaeForward{cfg.t, form_of(cfg)},
                          ds.train, ds.val, tc);
    finish(m, res, base);
  } else if (cfg.model == "gmvae") {
    GmvaeConfig gc{.K = cfg.k,
                   .dim_x = 2 + cfg.beams,
                   .dim_z = cfg.dim_global,
                   .hidden = cfg.hidden};
    auto m = make_gmvae<float>(gc, init);
    const long base = maybe_resume(m);
    auto res = train::fit(m, train::GmvaeForward{cfg.t, form_of(cfg)},
                          ds.train, ds.val, tc);
    finish(m, res, base);
  } else if (cfg.model == "vrnn") {
    VrnnConfig vc;
    vc.beams = cfg.beams;
    vc.d_a = cfg.d_a;
    vc.d_l = cfg.d_l;
    vc.state = cfg.local_state;
    vc.dim_z = cfg.dim_local;
    vc.hidden = cfg.hidden;
    auto m = make_vrnn<float>(vc, init);
    const long base = maybe_resume(m);
    auto res = train::fit(m, train::VrnnForward{cfg.t}, ds.train, ds.val, tc);
    finish(m, res, base);
  } else {
    BilstmConfig bc;
    bc.beams = cfg.beams;
    bc.d_a = cfg.d_a;
    bc.d_l = cfg.d_l;
    bc.state = cfg.bi_state;
    bc.hidden = cfg.hidden;
    bc.classes = kClasses;
    auto m = make_bilstm<float>(bc, init);
    const long base = maybe_resume(m);
    auto res =
        train::fit(m, train::BilstmForward{cfg.t}, ds.train, ds.val, tc);
    finish(m, res, base);
  }
}

// Deterministic per-window summary of the stepwise mixture model: features
// are the mean posterior z (expected assignment, no sampling), the cluster
// is the majority per-step argmax.
std::pair<MatXd, std::vector<int>> gmvae_window_summary(
    const Gmvae<float>& m, const SequenceBatch<float>& prefix) {
  const Eigen::Index B = prefix.batch();
  const int T = static_cast<int>(prefix.steps());
  MatXf x = train::per_step_rows(prefix, T);
  MatXf logits = dense_block_plain(m.encoder_y, x);
  MatXf y_soft = softmax_rows_plain<float>(logits);
  MatXf xy(x.rows(), x.cols() + m.cfg.K);
  xy << x, y_soft;
  MatXf z_mean = gaussian_block_plain(m.encoder_z, xy).first;

  MatXd feat = MatXd::Zero(B, z_mean.cols());
  std::vector<int> cluster(static_cast<size_t>(B), 0);
  std::vector<int> votes(static_cast<size_t>(m.cfg.K));
  for (Eigen::Index w = 0; w < B; ++w) {
    std::fill(votes.begin(), votes.end(), 0);
    for (int t = 0; t < T; ++t) {
      const Eigen::Index r = w * T + t;
      feat.row(w) += z_mean.row(r).cast<double>() / T;
      Eigen::Index best;
      logits.row(r).maxCoeff(&best);
      ++votes[static_cast<size_t>(best)];
    }
    int top = 0;
    for (int k = 1; k < m.cfg.K; ++k)
      if (votes[static_cast<size_t>(k)] > votes[static_cast<size_t>(top)])
        top = k;
    cluster[static_cast<size_t>(w)] = top;
  }
  return {feat, cluster};
}

json report_json(const eval::EvalReport& r) {
  json j{{"model", r.model},
         {"seed", r.seed},
         {"config_hash", r.config_hash},
         {"accuracy_pct", r.accuracy_pct},
         {"macro_f1", r.macro_f1},
         {"nmi_modes", r.nmi_modes},
         {"forecast_mse_joystick", r.forecast.joystick},
         {"forecast_mse_laser", r.forecast.laser}};
  j["by_manoeuvre"] = json::array();
  for (Eigen::Index c = 0; c < r.clusters.by_manoeuvre.rows(); ++c) {
    json row = json::array();
    for (Eigen::Index m = 0; m < 6; ++m)
      row.push_back(r.clusters.by_manoeuvre(c, m));
    j["by_manoeuvre"].push_back(row);
  }
  j["by_narrow"] = json::array();
  for (Eigen::Index c = 0; c < r.clusters.by_narrow.rows(); ++c)
    j["by_narrow"].push_back(
        json::array({r.clusters.by_narrow(c, 0), r.clusters.by_narrow(c, 1)}));
  return j;
}

double num_or_nan(const json& v) {
  return v.is_number() ? v.get<double>()
                       : std::numeric_limits<double>::quiet_NaN();
}

eval::EvalReport report_from_json(const json& j) {
  eval::EvalReport r;
  try {
    r.model = j.at("model").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    r.accuracy_pct = num_or_nan(j.at("accuracy_pct"));
    r.macro_f1 = num_or_nan(j.at("macro_f1"));
    r.nmi_modes = num_or_nan(j.at("nmi_modes"));
    r.forecast.joystick = num_or_nan(j.at("forecast_mse_joystick"));
    r.forecast.laser = num_or_nan(j.at("forecast_mse_laser"));
    const auto& bm = j.at("by_manoeuvre");
    const auto& bn = j.at("by_narrow");
    if (bm.size() != bn.size())
      throw std::runtime_error("report tables disagree on cluster count");
    const Eigen::Index K = static_cast<Eigen::Index>(bm.size());
    r.clusters.by_manoeuvre = Eigen::MatrixXi::Zero(K, 6);
    r.clusters.by_narrow = Eigen::MatrixXi::Zero(K, 2);
    for (Eigen::Index c = 0; c < K; ++c) {
      if (bm.at(c).size() != 6 || bn.at(c).size() != 2)
        throw std::runtime_error("report table row has the wrong width");
      for (Eigen::Index m = 0; m < 6; ++m)
        r.clusters.by_manoeuvre(c, m) = bm.at(c).at(m).get<int>();
      r.clusters.by_narrow(c, 0) = bn.at(c).at(0).get<int>();
      r.clusters.by_narrow(c, 1) = bn.at(c).at(1).get<int>();
    }
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed report: ") + e.what());
  }
  return r;
}

// Shared by eval and sample: load dataset + checkpoint, reconcile shapes.
struct LoadedRun {
  data::Dataset ds;
  ckpt::CheckpointMeta meta;
};

LoadedRun load_run(RunConfig& cfg, const char* cmd) {
  need(cfg.data, "--data", cmd);
  need(cfg.checkpoint, "--checkpoint", cmd);
  LoadedRun lr{data::load_dataset(cfg.data),
               ckpt::read_checkpoint_meta(cfg.checkpoint)};
  if (cfg.has("model") && cfg.model != lr.meta.model)
    throw std::runtime_error("checkpoint holds a " + lr.meta.model +
                             " model, not " + cfg.model);
  cfg.model = lr.meta.model;
  if (meta_int(lr.meta, "beams") != lr.ds.beams ||
      meta_int(lr.meta, "t") != lr.ds.T)
    throw std::runtime_error(
        "checkpoint was trained on a different dataset shape");
  cfg.beams = lr.ds.beams;
  cfg.t = lr.ds.T;
  cfg.k = meta_int(lr.meta, "k");
  return lr;
}

void cmd_eval(RunConfig& cfg) {
  LoadedRun lr = load_run(cfg, "eval");
  const data::Dataset& ds = lr.ds;
  if (!cfg.has("horizon")) cfg.horizon = ds.horizon;
  if (cfg.horizon > ds.horizon)
    throw std::runtime_error("horizon exceeds the stored continuation");

  const SequenceBatch<float> train_prefix = slice_steps(ds.train, 0, ds.T);
  const SequenceBatch<float> test_prefix = slice_steps(ds.test, 0, ds.T);
  Rng scratch(seed_for(cfg.seed, "init"));
  Rng eval_rng(seed_for(cfg.seed, "eval"));
  const double qnan = std::numeric_limits<double>::quiet_NaN();

  eval::EvalReport r;
  r.model = cfg.model;
  r.seed = cfg.seed;
  r.config_hash = config_hash(cfg);

  if (cfg.model == "discvae" || cfg.model == "dseqvae") {
    auto m = make_discvae<float>(discvae_config_from_meta(lr.meta), scratch);
    ckpt::load_checkpoint(m, cfg.checkpoint);
    auto inf_tr = discvae_infer(m, train_prefix);
    auto inf_te = discvae_infer(m, test_prefix);
    auto pred = eval::knn_classify(inf_tr.zG_mean.cast<double>(),
                                   ds.train.label,
                                   inf_te.zG_mean.cast<double>(), cfg.knn_k);
    auto af = eval::accuracy_f1(pred, ds.test.label, kClasses);
    r.accuracy_pct = af.accuracy_pct;
    r.macro_f1 = af.macro_f1;
    r.nmi_modes = eval::nmi(inf_te.cluster, ds.test.mode);
    r.clusters = eval::cluster_report(inf_te.cluster, ds.test.manoeuvre,
                                      ds.test.narrow, m.cfg.K);
    r.forecast = eval::forecast_mse(
        ds.test, ds.T, cfg.horizon,
        [&](const SequenceBatch<float>& p, int h) {
          auto roll = predict_rollout(m, p, h, eval_rng);
          return std::pair{roll.joystick, roll.laser};
        });
  } else if (cfg.model == "vrnn") {
    VrnnConfig vc;
    vc.beams = cfg.beams;
    vc.d_a = meta_int(lr.meta, "d_a");
    vc.d_l = meta_int(lr.meta, "d_l");
    vc.state = meta_int(lr.meta, "local_state");
    vc.dim_z = meta_int(lr.meta, "dim_local");
    vc.hidden = meta_int(lr.meta, "hidden");
    auto m = make_vrnn<float>(vc, scratch);
    ckpt::load_checkpoint(m, cfg.checkpoint);
    auto pred = eval::knn_classify(
        vrnn_latent(m, train_prefix).cast<double>(), ds.train.label,
        vrnn_latent(m, test_prefix).cast<double>(), cfg.knn_k);
    auto af = eval::accuracy_f1(pred, ds.test.label, kClasses);
    r.accuracy_pct = af.accuracy_pct;
    r.macro_f1 = af.macro_f1;
    // no clustering head: one degenerate cluster, zero information
    std::vector<int> constant(ds.test.label.size(), 0);
    r.nmi_modes = eval::nmi(constant, ds.test.mode);
    r.clusters =
        eval::cluster_report(constant, ds.test.manoeuvre, ds.test.narrow, 1);
    r.forecast = eval::forecast_mse(
        ds.test, ds.T, cfg.horizon,
        [&](const SequenceBatch<float>& p, int h) {
          auto roll = vrnn_rollout(m, p, h, eval_rng);
          return std::pair{roll.joystick, roll.laser};
        });
  } else if (cfg.model == "gmvae") {
    GmvaeConfig gc{.K = cfg.k,
                   .dim_x = 2 + cfg.beams,
                   .dim_z = meta_int(lr.meta, "dim_global"),
                   .hidden = meta_int(lr.meta, "hidden")};
    auto m = make_gmvae<float>(gc, scratch);
    ckpt::load_checkpoint(m, cfg.checkpoint);
    auto [ftr, ctr] = gmvae_window_summary(m, train_prefix);
    auto [fte, cte] = gmvae_window_summary(m, test_prefix);
    (void)ctr;
    auto pred = eval::knn_classify(ftr, ds.train.label, fte, cfg.knn_k);
    auto af = eval::accuracy_f1(pred, ds.test.label, kClasses);
    r.accuracy_pct = af.accuracy_pct;
    r.macro_f1 = af.macro_f1;
    r.nmi_modes = eval::nmi(cte, ds.test.mode);
    r.clusters =
        eval::cluster_report(cte, ds.test.manoeuvre, ds.test.narrow, cfg.k);
    r.forecast = {qnan, qnan};  // stepwise model, no sequence rollout
  } else {
    BilstmConfig bc;
    bc.beams = cfg.beams;
    bc.d_a = meta_int(lr.meta, "d_a");
    bc.d_l = meta_int(lr.meta, "d_l");
    bc.state = meta_int(lr.meta, "bi_state");
    bc.hidden = meta_int(lr.meta, "hidden");
    bc.classes = kClasses;
    auto m = make_bilstm<float>(bc, scratch);
    ckpt::load_checkpoint(m, cfg.checkpoint);
    auto pred = bilstm_classify(m, test_prefix);
    auto af = eval::accuracy_f1(pred, ds.test.label, kClasses);
    r.accuracy_pct = af.accuracy_pct;
    r.macro_f1 = af.macro_f1;
    r.nmi_modes = eval::nmi(pred, ds.test.mode);
    r.clusters = eval::cluster_report(pred, ds.test.manoeuvre, ds.test.narrow,
                                      kClasses);
    r.forecast = {qnan, qnan};  // discriminative model, nothing to roll out
  }

  const fs::path outp(cfg.out);
  eval::write_report(r, (outp / "report.txt").string());
  eval::write_cluster_svg(r.clusters, (outp / "clusters.svg").string());
  std::ofstream jout(outp / "report.json");
  if (!jout) throw std::runtime_error("cannot write report.json");
  jout << report_json(r).dump(2) << "\n";
}

void cmd_sample(RunConfig& cfg) {
  LoadedRun lr = load_run(cfg, "sample");
  const data::Dataset& ds = lr.ds;
  if (cfg.model != "discvae" && cfg.model != "dseqvae")
    throw std::runtime_error(
        "sampling needs a cluster-conditional model, got " + cfg.model);
  if (cfg.sample_index >= static_cast<int>(ds.test.batch()))
    throw std::invalid_argument("sample_index beyond the test split");
  if (!cfg.has("horizon")) cfg.horizon = ds.horizon;

  Rng scratch(seed_for(cfg.seed, "init"));
  auto m = make_discvae<float>(discvae_config_from_meta(lr.meta), scratch);
  ckpt::load_checkpoint(m, cfg.checkpoint);

  const SequenceBatch<float> prefix =
      slice_steps(select_rows(ds.test, {cfg.sample_index}), 0, ds.T);
  auto inf = discvae_infer(m, prefix);

  const fs::path outp(cfg.out);
  {
    std::ofstream h(outp / "histogram.csv");
    if (!h) throw std::runtime_error("cannot write histogram.csv");
    h.precision(10);
    h << "cluster,probability\n";
    for (int k = 0; k < m.cfg.K; ++k)
      h << k << ',' << std::exp(static_cast<double>(inf.log_q_y(0, k)))
        << '\n';
  }

  Rng rng(seed_for(cfg.seed, "eval"));
  for (int k = 0; k < m.cfg.K; ++k) {
    std::ofstream f(outp / ("cluster_" + std::to_string(k) + ".csv"));
    if (!f) throw std::runtime_error("cannot write cluster table");
    f.precision(10);
    f << "sample,step,v,omega";
    for (int b = 0; b < m.cfg.beams; ++b) f << ",range_" << b;
    f << '\n';
    for (int s = 0; s < cfg.samples_per_cluster; ++s) {
      auto roll = predict_rollout(m, prefix, cfg.horizon, rng, k);
      for (int t = 0; t < cfg.horizon; ++t) {
        f << s << ',' << t << ',' << roll.joystick[static_cast<size_t>(t)](0, 0)
          << ',' << roll.joystick[static_cast<size_t>(t)](0, 1);
        for (int b = 0; b < m.cfg.beams; ++b)
          f << ',' << roll.laser[static_cast<size_t>(t)](0, b);
        f << '\n';
      }
    }
  }
}

void cmd_select_k(RunConfig& cfg) {
  need(cfg.data, "--data", "select-k");
  if (cfg.has("model") && cfg.model != "discvae")
    throw std::invalid_argument("select-k sweeps the clustering model only");
  data::Dataset ds = data::load_dataset(cfg.data);
  if (!cfg.has("beams")) cfg.beams = ds.beams;
  if (!cfg.has("t")) cfg.t = ds.T;
  if (cfg.beams != ds.beams || cfg.t != ds.T)
    throw std::runtime_error("select-k: config does not match the manifest");

  train::TrainConfig tc;
  tc.batch = cfg.batch;
  tc.lr0 = cfg.lr0;
  tc.beta1 = cfg.beta1;
  tc.beta2 = cfg.beta2;
  tc.eps = cfg.eps;
  tc.max_epochs = cfg.epochs;
  tc.patience = cfg.patience;
  tc.seed = seed_for(cfg.seed, "train");

  auto rows =
      eval::select_k(ds, cfg.k_candidates, discvae_config(cfg), tc,
                     form_of(cfg));
  std::ofstream out(fs::path(cfg.out) / "selection.csv");
  if (!out) throw std::runtime_error("cannot write selection.csv");
  out.precision(10);
  out << "k,nmi_modes\n";
  const eval::KSelection* best = &rows.front();
  for (const auto& row : rows) {
    out << row.K << ',' << row.nmi_modes << '\n';
    if (row.nmi_modes > best->nmi_modes) best = &row;
  }
  std::cout << "best K by mode agreement: " << best->K << " (nmi "
            << best->nmi_modes << ")\n";
}

void cmd_report(RunConfig& cfg) {
  need(cfg.report, "--report", "report");
  std::ifstream in(fs::path(cfg.report) / "report.json");
  if (!in)
    throw std::runtime_error("no report.json under " + cfg.report);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("malformed report: ") + e.what());
  }
  eval::EvalReport r = report_from_json(j);
  const fs::path outp(cfg.out);
  eval::write_report(r, (outp / "report.txt").string());
  eval::write_cluster_svg(r.clusters, (outp / "clusters.svg").string());
}

void dispatch(RunConfig& cfg) {
  if (cfg.command == "gen-data") cmd_gen_data(cfg);
  else if (cfg.command == "train") cmd_train(cfg);
  else if (cfg.command == "eval") cmd_eval(cfg);
  else if (cfg.command == "sample") cmd_sample(cfg);
  else if (cfg.command == "select-k") cmd_select_k(cfg);
  else if (cfg.command == "report") cmd_report(cfg);
  else throw std::invalid_argument("unknown command: " + cfg.command);
}

}  // namespace

RunConfig parse_args(int argc, const char* const* argv) {
  RunConfig cfg;
  RunConfig flags;
  std::string config_path;

  CLI::App app{"sequence clustering and forecasting experiments"};
  app.require_subcommand(1);

  std::vector<std::pair<CLI::Option*, std::string>> bound;
  auto add_common = [&](CLI::App* a) {
    auto opt = [&](const std::string& flag, auto& field,
                   const std::string& key, const std::string& desc) {
      bound.push_back({a->add_option(flag, field, desc), key});
    };
    opt("--config", config_path, "",
        "JSON config file; explicit flags win over file values");
    opt("--out", flags.out, "out", "output directory");
    opt("--seed", flags.seed, "seed", "root seed, split per subsystem");
    opt("--model", flags.model, "model",
        "discvae|gmvae|vrnn|dseqvae|bilstm");
    opt("--objective", flags.objective, "objective", "entropy|uniform-kl");
    opt("--k", flags.k, "k", "cluster count");
    opt("--dim-global", flags.dim_global, "dim_global",
        "global latent width");
    opt("--dim-local", flags.dim_local, "dim_local", "per-step latent width");
    opt("--beams", flags.beams, "beams", "rangefinder beam count");
    opt("--t", flags.t, "t", "model input steps per window");
    opt("--horizon", flags.horizon, "horizon", "forecast steps");
    opt("--epochs", flags.epochs, "epochs", "training epoch cap");
    opt("--hidden", flags.hidden, "hidden", "decoder/encoder mlp width");
    opt("--bi-state", flags.bi_state, "bi_state",
        "bidirectional recogniser state width");
    opt("--local-state", flags.local_state, "local_state",
        "recurrent state width");
    opt("--d-a", flags.d_a, "d_a", "joystick embedding width");
    opt("--d-l", flags.d_l, "d_l", "laser embedding width");
    opt("--data", flags.data, "data", "dataset directory");
    opt("--checkpoint", flags.checkpoint, "checkpoint",
        "checkpoint directory");
    opt("--report", flags.report, "report", "evaluation output directory");
    opt("--resume", flags.resume, "resume", "checkpoint to continue from");
    opt("--batch", flags.batch, "batch", "minibatch size");
    opt("--lr0", flags.lr0, "lr0", "initial learning rate");
    opt("--patience", flags.patience, "patience",
        "epochs without validation improvement");
    opt("--stride", flags.stride, "stride", "window stride in ticks");
    opt("--episodes", flags.trainval_episodes, "trainval_episodes",
        "train+val episodes per mode and map");
    opt("--test-episodes", flags.test_episodes, "test_episodes",
        "test episodes per mode");
    opt("--knn-k", flags.knn_k, "knn_k", "neighbour count for probes");
    opt("--samples", flags.samples_per_cluster, "samples_per_cluster",
        "rollouts per cluster");
    opt("--sample-index", flags.sample_index, "sample_index",
        "test window to sample from");
    bound.push_back({a->add_option("--candidates", flags.k_candidates,
                                   "cluster counts for select-k")
                         ->delimiter(','),
                     "k_candidates"});
  };

  add_common(&app);
  for (const char* name :
       {"gen-data", "train", "eval", "sample", "select-k", "report"}) {
    CLI::App* sub = app.add_subcommand(
        name, std::string("run the ") + name + " stage");
    add_common(sub);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      (void)app.exit(e);
      cfg.command.clear();
      return cfg;
    }
    throw std::invalid_argument(e.what());
  }

  cfg.command = app.get_subcommands().front()->get_name();

  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in)
      throw std::invalid_argument("cannot read config file: " + config_path);
    json j;
    try {
      in >> j;
    } catch (const json::exception& e) {
      throw std::invalid_argument(std::string("config file: ") + e.what());
    }
    if (!j.is_object())
      throw std::invalid_argument("config file must hold a JSON object");
    for (const auto& [key, value] : j.items()) apply_key(cfg, key, value);
  }

  const json flag_j = to_json(flags);
  for (const auto& [option, key] : bound)
    if (!key.empty() && option->count() > 0)
      apply_key(cfg, key, flag_j.at(key));

  validate(cfg);
  return cfg;
}

void run(const RunConfig& cfg0) {
  RunConfig cfg = cfg0;
  if (cfg.command.empty()) return;
  if (cfg.out.empty()) {
    const char* root = std::getenv("DISCVAE_OUT");
    cfg.out = (root && *root ? std::string(root) : std::string(".")) + "/" +
              cfg.command;
  }
  const fs::path outp(cfg.out);
  if (fs::exists(outp)) {
    if (!fs::is_directory(outp) || !fs::is_empty(outp))
      throw std::runtime_error("output path exists and is not empty: " +
                               cfg.out);
  } else {
    fs::create_directories(outp);
  }
  try {
    dispatch(cfg);
    json j = to_json(cfg);
    j["command"] = cfg.command;
    std::ofstream out(outp / "config.json");
    if (!out) throw std::runtime_error("cannot write resolved config");
    out << j.dump(2) << "\n";
  } catch (...) {
    std::error_code ec;
    fs::remove_all(outp, ec);
    throw;
  }
}

int main(int argc, const char* const* argv) {
  try {
    RunConfig cfg = parse_args(argc, argv);
    if (cfg.command.empty()) return 0;
    run(cfg);
    return 0;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace discvae::cli
