// Command-line front end: dataset generation, training, single-pair
// registration, evaluation, lambda sweeps, convergence comparison, and the
// invariant check suite.
#include <CLI11.hpp>
#include <filesystem>
#include <iostream>

#include "gradicon/config.hpp"
#include "gradicon/experiments.hpp"
#include "gradicon/synthdata.hpp"

namespace fs = std::filesystem;
using namespace gradicon;

namespace {

struct CliOpts {
  std::string config;
  std::string out = "run";
  std::string data;
  std::string checkpoint;
  uint64_t seed = 0;
  bool seed_set = false;
  long iters = -1;
  double lambda = -1.0;
  std::string reg, sim;
};

void add_common(CLI::App* cmd, CliOpts& o) {
  cmd->add_option("--config", o.config, "key=value config file");
  cmd->add_option("--out", o.out, "output directory");
  cmd->add_option("--seed", o.seed, "rng seed")->each([&](const std::string&) {
    o.seed_set = true;
  });
  cmd->add_option("--iters", o.iters, "iterations per stage");
  cmd->add_option("--lambda", o.lambda, "regularizer weight");
  cmd->add_option("--reg", o.reg, "icon|gradicon|bending|diffusion");
  cmd->add_option("--sim", o.sim, "lncc|mse");
}

RunConfig load_run_config(const CliOpts& o) {
  RunConfig run;
  if (!o.config.empty()) apply_config(run, parse_config_file(o.config));
  // flags override the file
  if (o.seed_set) run.train.seed = o.seed;
  if (o.iters >= 0) run.train.iters_per_stage = o.iters;
  if (o.lambda >= 0.0) run.train.lambda = o.lambda;
  if (!o.reg.empty()) run.train.reg.kind = parse_reg_kind(o.reg);
  if (!o.sim.empty()) run.train.sim.kind = parse_sim_kind(o.sim);
  return run;
}

// Dataset directory layout: NNN.pgm (images), NNN_mask.pgm,
// NNN_landmarks.csv for elastic pairs (source NNN, target NNN+1).
std::string idx_name(int i) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%03d", i);
  return buf;
}

std::vector<Tensor> load_dataset(const std::string& dir) {
  std::vector<Tensor> images;
  for (int i = 0;; ++i) {
    const fs::path p = fs::path(dir) / (idx_name(i) + ".pgm");
    if (!fs::exists(p)) break;
    images.push_back(load_pgm(p.string()));
  }
  if (images.size() < 2) throw std::runtime_error("need >= 2 images in " + dir);
  return images;
}

void ensure_dir(const std::string& d) { fs::create_directories(d); }

int cmd_gen_data(const CliOpts& o) {
  RunConfig run = load_run_config(o);
  ensure_dir(o.out);
  std::vector<ShapeSample> shapes =
      gen_shapes(run.dataset_size, run.image_size, run.train.seed);
  for (int i = 0; i < run.dataset_size; ++i) {
    save_pgm(o.out + "/" + idx_name(i) + ".pgm", shapes[i].image);
    save_pgm(o.out + "/" + idx_name(i) + "_mask.pgm", shapes[i].mask);
  }
  // one elastic pair per shape: source image NNN, warped target + landmarks
  ElasticWarpSpec warp;
  for (int i = 0; i < run.dataset_size; ++i) {
    ElasticPair pair = gen_elastic_pairs(shapes[i].image, 1, warp,
                                         run.train.seed + 1 + i, run.landmarks)[0];
    save_pgm(o.out + "/" + idx_name(i) + "_warped.pgm", pair.target);
    save_pgm(o.out + "/" + idx_name(i) + "_warped_mask.pgm",
             warp_mask_nearest(shapes[i].mask, pair.truth));
    save_landmarks_csv(o.out + "/" + idx_name(i) + "_landmarks.csv",
                       pair.landmarks);
  }
  echo_config(o.out + "/config.echo", run);
  std::cout << "wrote " << run.dataset_size << " shapes + elastic pairs to " << o.out
            << "\n";
  return 0;
}

int cmd_train(const CliOpts& o) {
  RunConfig run = load_run_config(o);
  std::vector<Tensor> dataset = load_dataset(o.data);
  ensure_dir(o.out);
  echo_config(o.out + "/config.echo", run);
  TrainConfig cfg2 = run.train;
  if (run.stage2_iters >= 0) cfg2.iters_per_stage = run.stage2_iters;
  TwoStageResult res = train_two_stage(run.unet, dataset, run.train, cfg2);
  write_curve_csv(o.out + "/curves_stage1.csv", res.stage1_curve.curve);
  write_curve_csv(o.out + "/curves_stage2.csv", res.stage2_curve.curve);
  save_checkpoint(o.out + "/model.ckpt", *res.stage2.stage);
  std::cout << "final loss " << res.stage2_curve.curve.back().loss.total
            << ", checkpoint " << o.out << "/model.ckpt\n";
  return 0;
}

StageModels load_stage2_checkpoint(const RunConfig& run, const std::string& path) {
  StageModels m = build_stage2(build_stage1(run.unet, run.train.seed), run.unet,
                               run.train.seed);
  load_checkpoint(path, *m.stage);
  return m;
}

int cmd_register(const CliOpts& o, const std::string& image_a,
                 const std::string& image_b) {
  RunConfig run = load_run_config(o);
  StageModels m = load_stage2_checkpoint(run, o.checkpoint);
  Image ia = make_image(load_pgm(image_a)), ib = make_image(load_pgm(image_b));
  ensure_dir(o.out + "/fields");
  ensure_dir(o.out + "/images");

  TransformMap init_ab = m.stage->predict(ia, ib);
  TransformMap init_ba = m.stage->predict(ib, ia);
  InstanceResult inst = instance_optimize(init_ab, init_ba, ia, ib, run.train,
                                          run.instance_iters);
  const int H = ia.height(), W = ia.width();
  save_field_raw(o.out + "/fields/phi_ab.bin",
                 export_displacement(inst.phi_ab, H, W)->value);
  save_field_raw(o.out + "/fields/phi_ba.bin",
                 export_displacement(inst.phi_ba, H, W)->value);
  save_pgm(o.out + "/images/warped_ab.pgm",
           resample_image(ia, inst.phi_ab).grid->value);
  FoldReport fold = fold_fraction(inst.phi_ab, H, W);
  std::ofstream metrics(o.out + "/metrics.csv");
  metrics << std::setprecision(17) << "loss_initial,loss_final,fold_fraction\n"
          << inst.initial.total << ',' << inst.final_.total << ','
          << fold.fraction_negative << '\n';
  std::cout << "loss " << inst.initial.total << " -> " << inst.final_.total
            << ", fold fraction " << fold.fraction_negative << "\n";
  return 0;
}

int cmd_eval(const CliOpts& o) {
  RunConfig run = load_run_config(o);
  StageModels m = load_stage2_checkpoint(run, o.checkpoint);
  ensure_dir(o.out);
  std::ofstream metrics(o.out + "/metrics.csv");
  metrics << std::setprecision(17)
          << "pair,dissim,fold_fraction,mtre_px,dice_before,dice_after\n";
  int n = 0;
  double sum_mtre = 0.0;
  for (int i = 0;; ++i) {
    const std::string base = o.data + "/" + idx_name(i);
    if (!fs::exists(base + "_warped.pgm")) break;
    Image ia = make_image(load_pgm(base + ".pgm"));
    Image ib = make_image(load_pgm(base + "_warped.pgm"));
    TransformMap phi = m.stage->predict(ia, ib);
    LandmarkSet lm = load_landmarks_csv(base + "_landmarks.csv");
    MtreResult tre = mtre(lm, phi, ia.height());
    double dissim =
        similarity_dissim(resample_image(ia, phi), ib, run.train.sim)->value.data[0];
    FoldReport fold = fold_fraction(phi, ia.height(), ia.width());
    Tensor mask_a = load_pgm(base + "_mask.pgm");
    Tensor mask_b = load_pgm(base + "_warped_mask.pgm");
    metrics << i << ',' << dissim << ',' << fold.fraction_negative << ','
            << tre.pixels << ',' << dice(mask_a, mask_b) << ','
            << dice(warp_mask_nearest(mask_a, phi), mask_b) << '\n';
    sum_mtre += tre.pixels;
    ++n;
  }
  std::cout << "evaluated " << n << " pairs, mean mTRE "
            << (n ? sum_mtre / n : 0.0) << " px\n";
  return 0;
}

int cmd_sweep(const CliOpts& o) {
  RunConfig run = load_run_config(o);
  std::vector<Tensor> dataset = load_dataset(o.data);
  ensure_dir(o.out);
  echo_config(o.out + "/config.echo", run);
  std::vector<RegularizerConfig::Kind> regs = {
      RegularizerConfig::Kind::GradICON, RegularizerConfig::Kind::ICON,
      RegularizerConfig::Kind::BendingEnergy, RegularizerConfig::Kind::Diffusion};
  std::vector<double> lambda0(regs.size(), run.train.lambda);
  SweepResult sweep = lambda_sweep(dataset, regs, lambda0, {run.train.seed}, run.unet,
                                   run.train, [](const SweepCell& c) {
                                     std::cout << reg_name(c.reg) << " i=" << c.i
                                               << " lambda=" << c.lambda
                                               << (c.diverged ? " diverged" : "")
                                               << "\n";
                                   });
  write_sweep_csv(o.out + "/sweep.csv", sweep);
  std::cout << "wrote " << sweep.cells.size() << " cells to " << o.out
            << "/sweep.csv\n";
  return 0;
}

int cmd_converge(const CliOpts& o) {
  RunConfig run = load_run_config(o);
  std::vector<Tensor> dataset = load_dataset(o.data);
  ensure_dir(o.out);
  echo_config(o.out + "/config.echo", run);
  std::vector<uint64_t> seeds = {run.train.seed, run.train.seed + 1,
                                 run.train.seed + 2};
  auto runs = convergence_compare(dataset, run.train.lambda, run.train.lambda,
                                  run.train.iters_per_stage, seeds, run.unet,
                                  run.train);
  write_convergence_csv(o.out + "/convergence.csv", runs);
  for (const auto& r : runs)
    std::cout << reg_name(r.reg) << " seed " << r.seed << " final dissim "
              << r.final_dissim << "\n";
  return 0;
}

int cmd_check() {
  auto results = run_invariant_checks();
  bool all = true;
  for (const auto& r : results) {
    std::cout << (r.passed ? "PASS " : "FAIL ") << r.name << " (observed "
              << r.observed << ", threshold " << r.threshold << ")\n";
    all = all && r.passed;
  }
  return all ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"2D deformable registration with inverse-consistency regularizers"};
  app.require_subcommand(1);

  CliOpts o;
  std::string image_a, image_b;

  auto* gen = app.add_subcommand("gen-data", "generate a synthetic shape dataset");
  add_common(gen, o);

  auto* train = app.add_subcommand("train", "two-stage training on a dataset");
  add_common(train, o);
  train->add_option("--data", o.data, "dataset directory")->required();

  auto* reg = app.add_subcommand("register", "register one image pair");
  add_common(reg, o);
  reg->add_option("--checkpoint", o.checkpoint, "trained model")->required();
  reg->add_option("image_a", image_a, "moving image (pgm)")->required();
  reg->add_option("image_b", image_b, "fixed image (pgm)")->required();

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on elastic pairs");
  add_common(eval, o);
  eval->add_option("--data", o.data, "dataset directory")->required();
  eval->add_option("--checkpoint", o.checkpoint, "trained model")->required();

  auto* sweep = app.add_subcommand("sweep", "lambda grid over regularizers");
  add_common(sweep, o);
  sweep->add_option("--data", o.data, "dataset directory")->required();

  auto* conv = app.add_subcommand("converge", "icon vs gradicon convergence curves");
  add_common(conv, o);
  conv->add_option("--data", o.data, "dataset directory")->required();

  app.add_subcommand("check", "run the invariant suite");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_data(o);
    if (train->parsed()) return cmd_train(o);
    if (reg->parsed()) return cmd_register(o, image_a, image_b);
    if (eval->parsed()) return cmd_eval(o);
    if (sweep->parsed()) return cmd_sweep(o);
    if (conv->parsed()) return cmd_converge(o);
    return cmd_check();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
