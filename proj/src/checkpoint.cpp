#include "discvae/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "checkpoint blobs are little-endian");

namespace discvae::ckpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string blob_name(std::size_t index) {
  std::ostringstream ss;
  ss << "param_" << std::setw(4) << std::setfill('0') << index << ".f32";
  return ss.str();
}

}  // namespace

void save_checkpoint_core(const std::string& dir,
                          const std::vector<NamedTensor>& params,
                          const CheckpointMeta& meta) {
  const fs::path root(dir);
  fs::create_directories(root);

  json man;
  man["format"] = "discvae-checkpoint-1";
  man["model"] = meta.model;
  man["seed"] = meta.seed;
  man["step"] = meta.step;
  man["config"] = meta.config;
  man["stats"] = {{"joystick_mean", meta.stats.joystick_mean},
                  {"joystick_std", meta.stats.joystick_std},
                  {"laser_mean", meta.stats.laser_mean},
                  {"laser_std", meta.stats.laser_std}};
  man["params"] = json::array();

  for (std::size_t i = 0; i < params.size(); ++i) {
    const MatXf& t = *params[i].tensor;
    const std::string file = blob_name(i);
    std::vector<float> buf(static_cast<std::size_t>(t.size()));
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) buf[k++] = t(r, c);
    std::ofstream out(root / file, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + (root / file).string());
    out.write(reinterpret_cast<const char*>(buf.data()),
              static_cast<std::streamsize>(buf.size() * sizeof(float)));
    if (!out) throw std::runtime_error("short write to " + (root / file).string());
    man["params"].push_back({{"name", params[i].name},
                             {"file", file},
                             {"rows", t.rows()},
                             {"cols", t.cols()},
                             {"dtype", "f32"}});
  }

  std::ofstream out(root / "manifest.json");
  if (!out) throw std::runtime_error("cannot write checkpoint manifest");
  out << man.dump(2) << "\n";
}

namespace {

json read_manifest(const fs::path& root) {
  std::ifstream in(root / "manifest.json");
  if (!in)
    throw std::runtime_error("cannot read checkpoint manifest in " +
                             root.string());
  json man;
  in >> man;
  if (man.value("format", "") != "discvae-checkpoint-1")
    throw std::runtime_error("unrecognized checkpoint format in " +
                             root.string());
  return man;
}

}  // namespace

CheckpointMeta read_checkpoint_meta(const std::string& dir) {
  const json man = read_manifest(fs::path(dir));
  CheckpointMeta meta;
  meta.model = man.at("model").get<std::string>();
  meta.seed = man.at("seed").get<std::uint64_t>();
  meta.step = man.at("step").get<long>();
  meta.config = man.at("config").get<std::map<std::string, double>>();
  meta.stats.joystick_mean = man.at("stats").at("joystick_mean").get<double>();
  meta.stats.joystick_std = man.at("stats").at("joystick_std").get<double>();
  meta.stats.laser_mean = man.at("stats").at("laser_mean").get<double>();
  meta.stats.laser_std = man.at("stats").at("laser_std").get<double>();
  return meta;
}

void load_checkpoint_core(const std::string& dir,
                          const std::vector<NamedTensor>& params) {
  const fs::path root(dir);
  const json man = read_manifest(root);

  struct Entry {
    std::string file;
    Eigen::Index rows, cols;
  };
  std::map<std::string, Entry> index;
  for (const json& p : man.at("params")) {
    if (p.value("dtype", "") != "f32")
      throw std::runtime_error("unsupported dtype in checkpoint " + dir);
    index[p.at("name").get<std::string>()] = {
        p.at("file").get<std::string>(), p.at("rows").get<Eigen::Index>(),
        p.at("cols").get<Eigen::Index>()};
  }

  for (const NamedTensor& want : params) {
    const auto it = index.find(want.name);
    if (it == index.end())
      throw std::runtime_error("checkpoint is missing parameter " + want.name);
    const Entry& e = it->second;
    MatXf& t = *want.tensor;
    if (e.rows != t.rows() || e.cols != t.cols()) {
      std::ostringstream ss;
      ss << "shape mismatch for " << want.name << ": checkpoint " << e.rows
         << "x" << e.cols << ", model " << t.rows() << "x" << t.cols();
      throw std::runtime_error(ss.str());
    }
    std::ifstream in(root / e.file, std::ios::binary | std::ios::ate);
    if (!in) throw std::runtime_error("cannot read " + (root / e.file).string());
    const auto bytes = static_cast<std::size_t>(in.tellg());
    const std::size_t expect = static_cast<std::size_t>(t.size()) * sizeof(float);
    if (bytes != expect)
      throw std::runtime_error("blob size mismatch for " + want.name);
    std::vector<float> buf(static_cast<std::size_t>(t.size()));
    in.seekg(0);
    in.read(reinterpret_cast<char*>(buf.data()),
            static_cast<std::streamsize>(bytes));
    if (!in) throw std::runtime_error("short read for " + want.name);
    std::size_t k = 0;
    for (Eigen::Index r = 0; r < t.rows(); ++r)
      for (Eigen::Index c = 0; c < t.cols(); ++c) t(r, c) = buf[k++];
  }
}

}  // namespace discvae::ckpt
