// Flat key=value run configuration.  Unknown keys are rejected so typos in a
// config file fail loudly instead of silently training a default model.
#pragma once

#include <map>

#include "gradicon/experiments.hpp"

namespace gradicon {

// Everything a run needs beyond the dataset itself.
struct RunConfig {
  TrainConfig train;
  UNetSpec unet;
  int image_size = 64;
  int dataset_size = 24;
  int landmarks = 16;
  long instance_iters = 50;
  long stage2_iters = -1;  // -1: same as stage 1
};

inline SimilarityConfig::Kind parse_sim_kind(const std::string& s) {
  if (s == "lncc") return SimilarityConfig::Kind::LNCC;
  if (s == "mse") return SimilarityConfig::Kind::MSE;
  throw std::invalid_argument("unknown similarity: " + s);
}

inline RegularizerConfig::Kind parse_reg_kind(const std::string& s) {
  if (s == "icon") return RegularizerConfig::Kind::ICON;
  if (s == "gradicon") return RegularizerConfig::Kind::GradICON;
  if (s == "bending") return RegularizerConfig::Kind::BendingEnergy;
  if (s == "diffusion") return RegularizerConfig::Kind::Diffusion;
  throw std::invalid_argument("unknown regularizer: " + s);
}

inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open config: " + path);
  std::map<std::string, std::string> kv;
  std::string line;
  int lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": expected key=value");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
    };
    std::string key = trim(line.substr(0, eq)), val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty())
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": empty key or value");
    if (kv.count(key))
      throw std::runtime_error(path + ":" + std::to_string(lineno) +
                               ": duplicate key " + key);
    kv[key] = val;
  }
  return kv;
}

inline void apply_config(RunConfig& run, const std::map<std::string, std::string>& kv) {
  for (const auto& [key, val] : kv) {
    if (key == "image_size") run.image_size = std::stoi(val);
    else if (key == "dataset_size") run.dataset_size = std::stoi(val);
    else if (key == "landmarks") run.landmarks = std::stoi(val);
    else if (key == "iters") run.train.iters_per_stage = std::stol(val);
    else if (key == "stage2_iters") run.stage2_iters = std::stol(val);
    else if (key == "instance_iters") run.instance_iters = std::stol(val);
    else if (key == "batch") run.train.batch = std::stoi(val);
    else if (key == "seed") run.train.seed = std::stoull(val);
    else if (key == "lr") run.train.lr = std::stod(val);
    else if (key == "instance_lr") run.train.instance_lr = std::stod(val);
    else if (key == "lambda") run.train.lambda = std::stod(val);
    else if (key == "reg") run.train.reg.kind = parse_reg_kind(val);
    else if (key == "sim") run.train.sim.kind = parse_sim_kind(val);
    else if (key == "lncc_sigma") run.train.sim.lncc_sigma = std::stod(val);
    else if (key == "augment") run.train.augment = (val == "1" || val == "true");
    else if (key == "augment_gamma") run.train.aug.gamma = std::stod(val);
    else if (key == "log_every") run.train.log_every = std::stol(val);
    else if (key == "unet_levels") run.unet.levels = std::stoi(val);
    else if (key == "unet_base_channels") run.unet.base_channels = std::stoi(val);
    else throw std::runtime_error("unknown config key: " + key);
  }
}

inline void echo_config(const std::string& path, const RunConfig& run) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write config echo: " + path);
  f << std::setprecision(17);
  f << "image_size=" << run.image_size << '\n'
    << "dataset_size=" << run.dataset_size << '\n'
    << "landmarks=" << run.landmarks << '\n'
    << "iters=" << run.train.iters_per_stage << '\n'
    << "stage2_iters=" << run.stage2_iters << '\n'
    << "instance_iters=" << run.instance_iters << '\n'
    << "batch=" << run.train.batch << '\n'
    << "seed=" << run.train.seed << '\n'
    << "lr=" << run.train.lr << '\n'
    << "instance_lr=" << run.train.instance_lr << '\n'
    << "lambda=" << run.train.lambda << '\n'
    << "reg=" << reg_name(run.train.reg.kind) << '\n'
    << "sim=" << (run.train.sim.kind == SimilarityConfig::Kind::LNCC ? "lncc" : "mse")
    << '\n'
    << "lncc_sigma=" << run.train.sim.lncc_sigma << '\n'
    << "augment=" << (run.train.augment ? 1 : 0) << '\n'
    << "augment_gamma=" << run.train.aug.gamma << '\n'
    << "log_every=" << run.train.log_every << '\n'
    << "unet_levels=" << run.unet.levels << '\n'
    << "unet_base_channels=" << run.unet.base_channels << '\n';
}

}  // namespace gradicon
