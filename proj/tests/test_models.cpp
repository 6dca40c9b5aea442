#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "gradicon/models.hpp"
#include "gradicon/training.hpp"

using namespace gradicon;

namespace {

double max_pointwise_gap(TransformMap a, TransformMap b, int H, int W) {
  Tensor pts = pixel_center_grid(H, W);
  Tensor pa = a.eval(pts), pb = b.eval(pts);
  double m = 0.0;
  for (size_t i = 0; i < pa.data.size(); ++i)
    m = std::max(m, std::abs(pa.data[i] - pb.data[i]));
  return m;
}

std::pair<Image, Image> random_pair(int H, int W, uint64_t seed) {
  std::mt19937_64 rng(seed);
  return {make_image(random_uniform({1, H, W}, rng)),
          make_image(random_uniform({1, H, W}, rng))};
}

}  // namespace

TEST_CASE("two-step with identity on either side collapses") {
  const int H = 16, W = 16;
  std::mt19937_64 rng(1);
  auto phi = std::make_shared<DirectFieldModel>(random_normal({2, H, W}, rng, 0.0, 0.03));
  auto id = std::make_shared<IdentityModel>();
  auto [ia, ib] = random_pair(H, W, 2);

  TwoStepModel phi_then_id(phi, id);
  TwoStepModel id_then_phi(id, phi);
  CHECK(max_pointwise_gap(phi_then_id.predict(ia, ib), phi->predict(ia, ib), H, W) <=
        1e-12);
  CHECK(max_pointwise_gap(id_then_phi.predict(ia, ib), phi->predict(ia, ib), H, W) <=
        1e-12);
}

TEST_CASE("down of identity is identity") {
  auto down = DownModel(std::make_shared<IdentityModel>());
  auto [ia, ib] = random_pair(16, 16, 3);
  CHECK(max_pointwise_gap(down.predict(ia, ib), TransformMap::identity(), 16, 16) <=
        1e-12);
}

TEST_CASE("down runs its inner model at half resolution") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  auto atom = std::make_shared<UNetModel>(spec, 5);
  DownModel down(atom);
  auto [ia, ib] = random_pair(32, 32, 4);
  down.predict(ia, ib);
  CHECK(atom->last_input_height() == 16);
  CHECK(atom->last_input_width() == 16);
}

TEST_CASE("stage1 runs its atoms at quarter/half/full resolution") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  StageModels m = build_stage1(spec, 6);
  auto [ia, ib] = random_pair(64, 64, 7);
  m.stage->predict(ia, ib);
  CHECK(m.atoms[0]->last_input_height() == 16);
  CHECK(m.atoms[1]->last_input_height() == 32);
  CHECK(m.atoms[2]->last_input_height() == 64);
}

TEST_CASE("zero-initialized head makes every stage the identity map") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  auto [ia, ib] = random_pair(32, 32, 8);
  StageModels s1 = build_stage1(spec, 9);
  CHECK(max_pointwise_gap(s1.stage->predict(ia, ib), TransformMap::identity(), 32, 32) <=
        1e-12);
  StageModels s2 = build_stage2(s1, spec, 9);
  CHECK(max_pointwise_gap(s2.stage->predict(ia, ib), TransformMap::identity(), 32, 32) <=
        1e-12);
}

TEST_CASE("unet parameter count follows the layer layout") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  UNetModel net(spec, 10);
  // encoder: 2->4, 4->8; bottleneck: 8->8; decoder: (8+8)->8, (8+4)->4;
  // head: 4->2 1x1. Each conv also has a bias per output channel.
  long want = 0;
  auto conv = [&](int o, int i, int k) { want += static_cast<long>(o) * i * k * k + o; };
  conv(4, 2, 3);
  conv(8, 4, 3);
  conv(8, 8, 3);
  conv(8, 16, 3);
  conv(4, 12, 3);
  conv(2, 4, 1);
  CHECK(param_count(net) == want);
}

TEST_CASE("stage params are the union of atom params, stable order") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  StageModels m = build_stage1(spec, 11);
  std::vector<Var> all = m.stage->params();
  size_t off = 0;
  for (const auto& atom : m.atoms) {
    for (const Var& p : atom->params()) {
      REQUIRE(off < all.size());
      CHECK(all[off].get() == p.get());
      ++off;
    }
  }
  CHECK(off == all.size());
}

TEST_CASE("gradient reaches every atom through the stage1 loss") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  StageModels m = build_stage1(spec, 12);
  auto [ia, ib] = random_pair(16, 16, 13);
  // nudge the heads off zero so predictions depend on earlier layers
  std::mt19937_64 rng(14);
  for (const Var& p : m.stage->params())
    if (p->value.shape.size() == 4 && p->value.shape[2] == 1)
      p->value = random_normal(p->value.shape, rng, 0.0, 0.01);

  TrainConfig cfg;
  cfg.sim.kind = SimilarityConfig::Kind::MSE;
  cfg.reg.kind = RegularizerConfig::Kind::GradICON;
  TotalLoss tl = evaluate_pair_loss(*m.stage, ia, ib, cfg, 0);
  backward(tl.node);
  for (const auto& atom : m.atoms) {
    double g = 0.0;
    for (const Var& p : atom->params())
      for (double v : p->grad.data) g += std::abs(v);
    CHECK(g > 0.0);
  }
}

TEST_CASE("checkpoint round trip is bit exact") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  StageModels a = build_stage1(spec, 15);
  std::mt19937_64 rng(16);
  for (const Var& p : a.stage->params())
    p->value = random_normal(p->value.shape, rng, 0.0, 0.1);
  save_checkpoint("/tmp/models_ckpt.bin", *a.stage);

  StageModels b = build_stage1(spec, 15);
  load_checkpoint("/tmp/models_ckpt.bin", *b.stage);
  auto pa = a.stage->params(), pb = b.stage->params();
  REQUIRE(pa.size() == pb.size());
  for (size_t i = 0; i < pa.size(); ++i)
    CHECK(pa[i]->value.data == pb[i]->value.data);
}

TEST_CASE("checkpoint header mismatch is rejected") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  StageModels a = build_stage1(spec, 17);
  save_checkpoint("/tmp/models_ckpt2.bin", *a.stage);
  UNetSpec other = spec;
  other.base_channels = 8;
  StageModels b = build_stage1(other, 17);
  CHECK_THROWS(load_checkpoint("/tmp/models_ckpt2.bin", *b.stage));
}

TEST_CASE("same seed builds identical networks, different seeds differ") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  UNetModel a(spec, 18), b(spec, 18), c(spec, 19);
  auto pa = a.params(), pb = b.params(), pc = c.params();
  bool all_equal = true, any_diff = false;
  for (size_t i = 0; i < pa.size(); ++i) {
    all_equal = all_equal && pa[i]->value.data == pb[i]->value.data;
    any_diff = any_diff || pa[i]->value.data != pc[i]->value.data;
  }
  CHECK(all_equal);
  CHECK(any_diff);
}

TEST_CASE("unet rejects mismatched image shapes") {
  UNetSpec spec;
  spec.levels = 2;
  spec.base_channels = 4;
  UNetModel net(spec, 20);
  std::mt19937_64 rng(21);
  Image ia = make_image(random_uniform({1, 16, 16}, rng));
  Image ib = make_image(random_uniform({1, 16, 32}, rng));
  CHECK_THROWS(net.predict(ia, ib));
}
