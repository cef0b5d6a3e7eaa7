#include "discvae/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "dataset blobs are little-endian");

namespace discvae::data {

namespace fs = std::filesystem;
using nlohmann::json;

int window_count(int len, int window, int stride) {
  if (window <= 0 || stride <= 0)
    throw std::invalid_argument("window_count: window and stride must be positive");
  if (len < window) return 0;
  return (len - window) / stride + 1;
}

namespace {

SequenceBatch<float> windows_of(const std::vector<sim::Episode>& eps,
                                const std::vector<int>& ids, int T,
                                int horizon, int stride, int beams) {
  const int L = T + horizon;
  int n = 0;
  for (int id : ids)
    n += window_count(static_cast<int>(eps[id].joystick.rows()), L, stride);

  SequenceBatch<float> b;
  b.joystick.assign(L, MatXf::Zero(n, 2));
  b.laser.assign(L, MatXf::Zero(n, beams));
  b.label.resize(n);
  b.manoeuvre.resize(n);
  b.narrow.resize(n);
  b.mode.resize(n);
  b.episode.resize(n);

  int r = 0;
  for (int id : ids) {
    const sim::Episode& ep = eps[id];
    const int len = static_cast<int>(ep.joystick.rows());
    for (int s = 0; s + L <= len; s += stride) {
      for (int t = 0; t < L; ++t) {
        b.joystick[t].row(r) = ep.joystick.row(s + t).cast<float>();
        b.laser[t].row(r) = ep.laser.row(s + t).cast<float>();
      }
      const sim::WindowLabel lab = sim::label_window(
          ep.joystick.middleRows(s, T), ep.laser.middleRows(s, T));
      b.label[r] = lab.cls;
      b.manoeuvre[r] = lab.manoeuvre;
      b.narrow[r] = lab.narrow;
      b.mode[r] = ep.mode;
      b.episode[r] = id;
      ++r;
    }
  }
  return b;
}

void accumulate(const std::vector<MatXf>& steps, double& sum, double& sumsq,
                std::int64_t& count) {
  for (const MatXf& m : steps) {
    sum += m.cast<double>().sum();
    sumsq += m.cast<double>().array().square().sum();
    count += m.size();
  }
}

void apply_norm(std::vector<MatXf>& steps, double mean, double std) {
  const float m = static_cast<float>(mean);
  const float s = static_cast<float>(std);
  for (MatXf& x : steps) x = ((x.array() - m) / s).matrix();
}

void normalize(SequenceBatch<float>& b, const NormStats& st) {
  apply_norm(b.joystick, st.joystick_mean, st.joystick_std);
  apply_norm(b.laser, st.laser_mean, st.laser_std);
}

}  // namespace

Dataset build_dataset(const DatasetConfig& cfg, Rng& rng) {
  if (cfg.T < 1 || cfg.horizon < 0 || cfg.stride < 1)
    throw std::invalid_argument("build_dataset: bad window geometry");
  if (cfg.val_fraction < 0.0 || cfg.val_fraction >= 1.0)
    throw std::invalid_argument("build_dataset: val_fraction out of range");
  if (cfg.sim.max_ticks < cfg.T + cfg.horizon)
    throw std::invalid_argument("build_dataset: episodes shorter than one window");

  std::vector<sim::Episode> eps;
  std::vector<int> ep_map;
  for (int map_id : {1, 2}) {
    const sim::WorldMap map = sim::make_world_map(map_id);
    for (int mode = 0; mode < sim::kNumModes; ++mode)
      for (int i = 0; i < cfg.trainval_episodes_per_mode_map; ++i) {
        eps.push_back(sim::generate_episode(map, mode, cfg.sim, rng));
        ep_map.push_back(map_id);
      }
  }
  const int n_trainval = static_cast<int>(eps.size());
  const sim::WorldMap map3 = sim::make_world_map(3);
  for (int mode = 0; mode < sim::kNumModes; ++mode)
    for (int i = 0; i < cfg.test_episodes_per_mode; ++i) {
      eps.push_back(sim::generate_episode(map3, mode, cfg.sim, rng));
      ep_map.push_back(3);
    }

  std::vector<int> order(n_trainval);
  std::iota(order.begin(), order.end(), 0);
  for (int i = n_trainval - 1; i > 0; --i)
    std::swap(order[i], order[rng.uniform_int(static_cast<std::uint64_t>(i) + 1)]);

  const int n_val = static_cast<int>(
      std::lround(cfg.val_fraction * static_cast<double>(n_trainval)));
  std::vector<int> val_ids(order.begin(), order.begin() + n_val);
  std::vector<int> train_ids(order.begin() + n_val, order.end());
  std::sort(val_ids.begin(), val_ids.end());
  std::sort(train_ids.begin(), train_ids.end());
  std::vector<int> test_ids(eps.size() - n_trainval);
  std::iota(test_ids.begin(), test_ids.end(), n_trainval);

  Dataset ds;
  ds.T = cfg.T;
  ds.horizon = cfg.horizon;
  ds.beams = cfg.sim.beams;
  ds.episode_maps = ep_map;
  ds.train = windows_of(eps, train_ids, cfg.T, cfg.horizon, cfg.stride, ds.beams);
  ds.val = windows_of(eps, val_ids, cfg.T, cfg.horizon, cfg.stride, ds.beams);
  ds.test = windows_of(eps, test_ids, cfg.T, cfg.horizon, cfg.stride, ds.beams);
  if (ds.train.batch() == 0)
    throw std::runtime_error("build_dataset: empty training split");

  double jsum = 0, jsq = 0, lsum = 0, lsq = 0;
  std::int64_t jn = 0, ln = 0;
  accumulate(ds.train.joystick, jsum, jsq, jn);
  accumulate(ds.train.laser, lsum, lsq, ln);
  ds.stats.joystick_mean = jsum / static_cast<double>(jn);
  ds.stats.joystick_std = std::sqrt(std::max(
      jsq / static_cast<double>(jn) - ds.stats.joystick_mean * ds.stats.joystick_mean,
      1e-12));
  ds.stats.laser_mean = lsum / static_cast<double>(ln);
  ds.stats.laser_std = std::sqrt(std::max(
      lsq / static_cast<double>(ln) - ds.stats.laser_mean * ds.stats.laser_mean,
      1e-12));
  normalize(ds.train, ds.stats);
  normalize(ds.val, ds.stats);
  normalize(ds.test, ds.stats);
  return ds;
}

namespace {

void write_blob_f32(const fs::path& path, const std::vector<float>& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(float)));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

void write_blob_i32(const fs::path& path, const std::vector<std::int32_t>& buf) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(buf.data()),
            static_cast<std::streamsize>(buf.size() * sizeof(std::int32_t)));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

std::vector<float> read_blob_f32(const fs::path& path, std::size_t expect) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expect * sizeof(float))
    throw std::runtime_error("blob size mismatch in " + path.string());
  std::vector<float> buf(expect);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("short read from " + path.string());
  return buf;
}

std::vector<std::int32_t> read_blob_i32(const fs::path& path,
                                        std::size_t expect) {
  std::ifstream in(path, std::ios::binary | std::ios::ate);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  const auto bytes = static_cast<std::size_t>(in.tellg());
  if (bytes != expect * sizeof(std::int32_t))
    throw std::runtime_error("blob size mismatch in " + path.string());
  std::vector<std::int32_t> buf(expect);
  in.seekg(0);
  in.read(reinterpret_cast<char*>(buf.data()),
          static_cast<std::streamsize>(bytes));
  if (!in) throw std::runtime_error("short read from " + path.string());
  return buf;
}

// Blob layout is (window, step, dim), row-major.
std::vector<float> flatten_steps(const std::vector<MatXf>& steps) {
  const int L = static_cast<int>(steps.size());
  const int n = L > 0 ? static_cast<int>(steps[0].rows()) : 0;
  const int d = L > 0 ? static_cast<int>(steps[0].cols()) : 0;
  std::vector<float> buf(static_cast<std::size_t>(n) * L * d);
  std::size_t k = 0;
  for (int r = 0; r < n; ++r)
    for (int t = 0; t < L; ++t)
      for (int c = 0; c < d; ++c) buf[k++] = steps[t](r, c);
  return buf;
}

std::vector<MatXf> unflatten_steps(const std::vector<float>& buf, int n, int L,
                                   int d) {
  std::vector<MatXf> steps(L, MatXf::Zero(n, d));
  std::size_t k = 0;
  for (int r = 0; r < n; ++r)
    for (int t = 0; t < L; ++t)
      for (int c = 0; c < d; ++c) steps[t](r, c) = buf[k++];
  return steps;
}

void save_split(const fs::path& dir, const SequenceBatch<float>& b,
                const std::vector<int>& episode_maps) {
  fs::create_directories(dir);
  const int n = static_cast<int>(b.batch());
  write_blob_f32(dir / "commands.f32", flatten_steps(b.joystick));
  write_blob_f32(dir / "ranges.f32", flatten_steps(b.laser));
  std::vector<std::int32_t> labels(static_cast<std::size_t>(n) * 3);
  std::vector<std::int32_t> meta(static_cast<std::size_t>(n) * 3);
  for (int r = 0; r < n; ++r) {
    labels[3 * r + 0] = b.label[r];
    labels[3 * r + 1] = b.manoeuvre[r];
    labels[3 * r + 2] = b.narrow[r];
    meta[3 * r + 0] = b.mode[r];
    meta[3 * r + 1] = b.episode[r];
    meta[3 * r + 2] = episode_maps.at(static_cast<std::size_t>(b.episode[r]));
  }
  write_blob_i32(dir / "labels.i32", labels);
  write_blob_i32(dir / "meta.i32", meta);
}

SequenceBatch<float> load_split(const fs::path& dir, int n, int L, int beams) {
  SequenceBatch<float> b;
  const std::size_t nz = static_cast<std::size_t>(n);
  b.joystick = unflatten_steps(
      read_blob_f32(dir / "commands.f32", nz * L * 2), n, L, 2);
  b.laser = unflatten_steps(
      read_blob_f32(dir / "ranges.f32", nz * L * beams), n, L, beams);
  const auto labels = read_blob_i32(dir / "labels.i32", nz * 3);
  const auto meta = read_blob_i32(dir / "meta.i32", nz * 3);
  b.label.resize(n);
  b.manoeuvre.resize(n);
  b.narrow.resize(n);
  b.mode.resize(n);
  b.episode.resize(n);
  for (int r = 0; r < n; ++r) {
    b.label[r] = labels[3 * r + 0];
    b.manoeuvre[r] = labels[3 * r + 1];
    b.narrow[r] = labels[3 * r + 2];
    b.mode[r] = meta[3 * r + 0];
    b.episode[r] = meta[3 * r + 1];
  }
  return b;
}

}  // namespace

void save_dataset(const Dataset& ds, const std::string& dir) {
  const fs::path root(dir);
  fs::create_directories(root);
  save_split(root / "train", ds.train, ds.episode_maps);
  save_split(root / "val", ds.val, ds.episode_maps);
  save_split(root / "test", ds.test, ds.episode_maps);

  json man;
  man["T"] = ds.T;
  man["horizon"] = ds.horizon;
  man["steps"] = ds.T + ds.horizon;
  man["beams"] = ds.beams;
  man["seed"] = ds.seed;
  man["stats"] = {{"joystick_mean", ds.stats.joystick_mean},
                  {"joystick_std", ds.stats.joystick_std},
                  {"laser_mean", ds.stats.laser_mean},
                  {"laser_std", ds.stats.laser_std}};
  man["episode_maps"] = ds.episode_maps;
  const std::pair<const char*, const SequenceBatch<float>*> splits[] = {
      {"train", &ds.train}, {"val", &ds.val}, {"test", &ds.test}};
  for (const auto& [name, split] : splits) {
    std::vector<int> maps;
    for (int ep : split->episode) {
      const int m = ds.episode_maps.at(static_cast<std::size_t>(ep));
      if (std::find(maps.begin(), maps.end(), m) == maps.end())
        maps.push_back(m);
    }
    std::sort(maps.begin(), maps.end());
    man["splits"][name] = {{"count", split->batch()}, {"maps", maps}};
  }
  std::ofstream out(root / "manifest.json");
  if (!out) throw std::runtime_error("cannot write dataset manifest");
  out << man.dump(2) << "\n";
}

Dataset load_dataset(const std::string& dir) {
  const fs::path root(dir);
  std::ifstream in(root / "manifest.json");
  if (!in) throw std::runtime_error("cannot read dataset manifest in " + dir);
  json man;
  in >> man;

  Dataset ds;
  ds.T = man.at("T").get<int>();
  ds.horizon = man.at("horizon").get<int>();
  ds.beams = man.at("beams").get<int>();
  ds.seed = man.at("seed").get<std::uint64_t>();
  ds.stats.joystick_mean = man.at("stats").at("joystick_mean").get<double>();
  ds.stats.joystick_std = man.at("stats").at("joystick_std").get<double>();
  ds.stats.laser_mean = man.at("stats").at("laser_mean").get<double>();
  ds.stats.laser_std = man.at("stats").at("laser_std").get<double>();
  ds.episode_maps = man.at("episode_maps").get<std::vector<int>>();

  const int L = ds.T + ds.horizon;
  ds.train = load_split(root / "train",
                        man.at("splits").at("train").at("count").get<int>(), L,
                        ds.beams);
  ds.val = load_split(root / "val",
                      man.at("splits").at("val").at("count").get<int>(), L,
                      ds.beams);
  ds.test = load_split(root / "test",
                       man.at("splits").at("test").at("count").get<int>(), L,
                       ds.beams);
  return ds;
}

}  // namespace discvae::data
