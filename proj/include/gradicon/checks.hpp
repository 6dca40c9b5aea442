// Fast invariant suite behind the `check` CLI subcommand.  Each check is a
// mathematical identity that must hold to tight numeric tolerance; they run
// at small sizes so the whole suite finishes in seconds.
#pragma once

#include "gradicon/experiments.hpp"
#include "gradicon/synthdata.hpp"

namespace gradicon {

inline std::vector<CheckResult> run_invariant_checks() {
  std::vector<CheckResult> out;
  auto record = [&](const std::string& name, double observed, double threshold) {
    out.push_back({name, observed <= threshold, observed, threshold});
  };

  // 1. autodiff vs central finite differences through similarity + GradICON
  //    on a tiny direct-field pair.
  {
    const int H = 6, W = 6;
    std::mt19937_64 rng(11);
    Tensor a = random_uniform({1, H, W}, rng), b = random_uniform({1, H, W}, rng);
    Tensor f0 = random_normal({2, H, W}, rng, 0.0, 0.02);
    Tensor f1 = random_normal({2, H, W}, rng, 0.0, 0.02);
    SimilarityConfig sim;
    sim.kind = SimilarityConfig::Kind::MSE;
    RegularizerConfig reg;
    reg.kind = RegularizerConfig::Kind::GradICON;
    reg.lambda = 0.5;
    Tensor pts = sample_points(12, 5, reg.dx);
    auto build = [&](const std::vector<Var>& leaves) -> Var {
      Image ia = make_image(a), ib = make_image(b);
      TransformMap ab = TransformMap::field(leaves[0]);
      TransformMap ba = TransformMap::field(leaves[1]);
      return total_loss(ia, ib, ab, ba, sim, reg, constant(pts)).node;
    };
    record("gradient_check", check_gradients({f0, f1}, build), 1e-4);
  }

  // 2. translation nullspace: constant displacements c forward and d backward
  //    give gradicon == 0 while icon == |c + d|^2 exactly.
  {
    const int H = 16, W = 16;
    const double cy = 0.07, cx = -0.04, dy = -0.02, dx = 0.05;
    Tensor fwd({2, H, W}), bwd({2, H, W});
    for (int i = 0; i < H * W; ++i) {
      fwd.data[i] = cy;
      fwd.data[H * W + i] = cx;
      bwd.data[i] = dy;
      bwd.data[H * W + i] = dx;
    }
    TransformMap ab = TransformMap::field(constant(fwd));
    TransformMap ba = TransformMap::field(constant(bwd));
    Var pts = constant(sample_points(64, 3, 0.2));
    const double g = gradicon_reg(ab, ba, pts)->value.data[0];
    const double ic = icon_reg(ab, ba, pts)->value.data[0];
    const double want = (cy + dy) * (cy + dy) + (cx + dx) * (cx + dx);
    record("translation_gradicon_null", g, 1e-9);
    record("translation_icon_value", std::abs(ic - want), 1e-9);
  }

  // 3. finite-difference / correlation identity on a random periodic field.
  {
    std::mt19937_64 rng(29);
    Tensor psi = random_normal({2, 24, 24}, rng);
    CorrelationIdentity id = correlation_identity_check(psi, 3);
    const double denom = std::max(std::abs(id.lhs), std::abs(id.rhs));
    record("correlation_identity", std::abs(id.lhs - id.rhs) / denom, 1e-9);
  }

  // 4. operator algebra: TwoStep{Down{Phi}, Psi} agrees with the manual
  //    composition at every pixel center.
  {
    const int H = 16, W = 16;
    std::mt19937_64 rng(41);
    Tensor a = random_uniform({1, H, W}, rng), b = random_uniform({1, H, W}, rng);
    auto phi = std::make_shared<DirectFieldModel>(
        random_normal({2, H / 2, W / 2}, rng, 0.0, 0.03));
    auto psi =
        std::make_shared<DirectFieldModel>(random_normal({2, H, W}, rng, 0.0, 0.03));
    auto down = std::make_shared<DownModel>(phi);
    TwoStepModel ts(down, psi);
    Image ia = make_image(a), ib = make_image(b);
    TransformMap got = ts.predict(ia, ib);
    // manual: coarse prediction on pooled inputs, residual on warped input
    TransformMap coarse = down->predict(ia, ib);
    TransformMap residual = psi->predict(resample_image(ia, coarse), ib);
    TransformMap want = compose(coarse, residual);
    Tensor pts = pixel_center_grid(H, W);
    Tensor pg = got.eval(pts), pw = want.eval(pts);
    double err = 0.0;
    for (size_t i = 0; i < pg.data.size(); ++i)
      err = std::max(err, std::abs(pg.data[i] - pw.data[i]));
    record("operator_algebra", err, 1e-12);
  }

  // 5. zero-initialized network head => identity map at initialization.
  {
    UNetSpec spec;
    spec.levels = 2;
    spec.base_channels = 4;
    StageModels m = build_stage1(spec, 7);
    std::mt19937_64 rng(53);
    Image ia = make_image(random_uniform({1, 16, 16}, rng));
    Image ib = make_image(random_uniform({1, 16, 16}, rng));
    TransformMap phi = m.stage->predict(ia, ib);
    Tensor pts = pixel_center_grid(16, 16);
    Tensor mapped = phi.eval(pts);
    double err = 0.0;
    for (size_t i = 0; i < pts.data.size(); ++i)
      err = std::max(err, std::abs(mapped.data[i] - pts.data[i]));
    record("zero_init_identity", err, 1e-12);
  }

  // 6. field export round trip through both on-disk formats.
  {
    std::mt19937_64 rng(67);
    Tensor f = random_normal({2, 8, 8}, rng, 0.0, 0.1);
    const std::string csv = "/tmp/gradicon_check_field.csv";
    const std::string raw = "/tmp/gradicon_check_field.bin";
    save_field_csv(csv, f);
    save_field_raw(raw, f);
    Tensor fc = load_field_csv(csv), fr = load_field_raw(raw);
    double err = 0.0;
    for (size_t i = 0; i < f.data.size(); ++i) {
      err = std::max(err, std::abs(f.data[i] - fc.data[i]));
      err = std::max(err, std::abs(f.data[i] - fr.data[i]));
    }
    record("field_io_roundtrip", err, 0.0);
  }

  return out;
}

}  // namespace gradicon
