#include <cmath>

#include "doctest.h"
#include "testutil.hpp"
#include "tp3m/pipeline.hpp"
#include "tp3m/train.hpp"

using namespace tp3m;
using testutil::gradient_check;
using testutil::random_tensor;

namespace {

std::vector<SceneSample> tiny_dataset(int count, int size = 32) {
  PerturbationSpec spec;
  spec.rot_deg = 4.0;
  spec.trans_frac = 0.03;
  spec.noise_sigma = 0.0;
  std::vector<SceneSample> out;
  for (int i = 0; i < count; ++i) out.push_back(gen_planar(500 + i, spec, size));
  return out;
}

TrainSettings fast_settings() {
  TrainSettings ts;
  ts.edge_steps = 2;
  ts.joint_steps_override = 3;
  return ts;
}

}  // namespace

TEST_CASE("loss_2d2d hand values") {
  // P = 1 at the gt pair -> zero loss
  Tensor p1 = Tensor::full({2, 2}, 1.0);
  CHECK((*loss_2d2d(p1, {{0, 0, 1.0}}).data)[0] == doctest::Approx(0.0));

  // single pair, alpha = 1, P = 0.5 -> ln 2
  Tensor ph = Tensor::full({2, 2}, 0.5);
  CHECK((*loss_2d2d(ph, {{0, 1, 1.0}}).data)[0] == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  // halving every alpha halves the loss
  Rng rng(3);
  Tensor p = random_tensor({4, 4}, rng, false, 0.05, 0.9);
  std::vector<GtPair> gt{{0, 1, 0.8}, {2, 3, 0.4}, {3, 0, 1.0}};
  std::vector<GtPair> gt_half = gt;
  for (auto& g : gt_half) g.w *= 0.5;
  CHECK((*loss_2d2d(p, gt_half).data)[0] ==
        doctest::Approx(0.5 * (*loss_2d2d(p, gt).data)[0]).epsilon(1e-12));

  CHECK_THROWS(loss_2d2d(p, {}));
}

TEST_CASE("loss_2d3d hand values and monotonicity") {
  Tensor p1 = Tensor::full({2, 2}, 1.0);
  CHECK((*loss_2d3d(p1, {{0, 0, 0, 0, 1.0}}).data)[0] == doctest::Approx(0.0));

  // single pair, beta = 0.5, P = e^-1 -> 0.5
  Tensor pe = Tensor::full({2, 2}, std::exp(-1.0));
  Gt3D g;
  g.a_idx = 0;
  g.b_idx = 1;
  g.w = 0.5;
  CHECK((*loss_2d3d(pe, {g}).data)[0] == doctest::Approx(0.5).epsilon(1e-12));

  // raising P at a gt pair strictly lowers the loss
  Rng rng(5);
  Tensor p = random_tensor({3, 3}, rng, false, 0.1, 0.5);
  std::vector<Gt3D> gt;
  for (int i = 0; i < 3; ++i) {
    Gt3D gg;
    gg.a_idx = i;
    gg.b_idx = i;
    gg.w = 1.0;
    gt.push_back(gg);
  }
  const double before = (*loss_2d3d(p, gt).data)[0];
  p.at(1, 1) = 0.9;
  const double after = (*loss_2d3d(p, gt).data)[0];
  CHECK(after < before);
}

TEST_CASE("loss_3d hand values, skip counter and zero at exact prediction") {
  const int grid_w = 8;
  // P concentrated at one cell -> soft position lands exactly on it
  Tensor p = Tensor::zeros({8, 64});
  p.at(2, 0 * grid_w + 4) = 0.5;  // predicted token (row 0, col 4)

  Gt3D g;
  g.a_idx = 2;
  g.b_idx = 4;
  g.jx = 0.0;  // gt at (row 0, col 0): distance 4 tokens
  g.jy = 0.0;
  g.w = 1.0;
  // delta(i) = delta0 / maxP = 1/0.5 = 2 -> contribution = 4/2 = 2
  auto res = loss_3d(p, {g}, 0.2, 1.0, grid_w);
  CHECK((*res.value.data)[0] == doctest::Approx(2.0).epsilon(1e-12));
  CHECK(res.skipped == 0);

  // exact prediction -> exactly zero
  Gt3D exact = g;
  exact.jx = 4.0;
  exact.jy = 0.0;
  auto res0 = loss_3d(p, {exact}, 0.2, 1.0, grid_w);
  CHECK((*res0.value.data)[0] == 0.0);

  // below the confidence threshold -> skipped, zero loss
  Tensor low = Tensor::full({8, 64}, 1e-3);
  auto skipped = loss_3d(low, {g}, 0.2, 1.0, grid_w);
  CHECK((*skipped.value.data)[0] == 0.0);
  CHECK(skipped.skipped == 1);
}

TEST_CASE("loss nonnegativity and exact additivity on random instances") {
  Rng rng(7);
  for (int trial = 0; trial < 100; ++trial) {
    Tensor p = random_tensor({6, 6}, rng, false, 1e-4, 1.0);
    std::vector<GtPair> gt2d{{rng.uniform_int(0, 5), rng.uniform_int(0, 5), rng.uniform(0.05, 1.0)}};
    std::vector<Gt3D> gt3d;
    Gt3D g;
    g.a_idx = rng.uniform_int(0, 5);
    g.b_idx = rng.uniform_int(0, 5);
    g.jx = rng.uniform(0, 5);
    g.jy = 0;
    g.w = rng.uniform(0.05, 1.0);
    gt3d.push_back(g);

    const double l1 = (*loss_2d2d(p, gt2d).data)[0];
    const double l2 = (*loss_2d3d(p, gt3d).data)[0];
    const double l3 = (*loss_3d(p, gt3d, 0.2, 1.0, 6).value.data)[0];
    CHECK(l1 >= 0.0);
    CHECK(l2 >= 0.0);
    CHECK(l3 >= 0.0);
    const double total = l1 + l2 + l3;
    CHECK(total == l1 + l2 + l3);  // additivity is exact by construction
  }
}

TEST_CASE("loss gradients match finite differences") {
  Rng rng(11);
  Tensor s = random_tensor({4, 4}, rng, true, -1, 1);
  std::vector<GtPair> gt{{0, 1, 0.7}, {2, 2, 0.9}};
  const double err = gradient_check({s}, [&] { return loss_2d2d(dual_softmax(s), gt); });
  CHECK(err < 1e-4);

  std::vector<Gt3D> gt3;
  Gt3D g;
  g.a_idx = 1;
  g.b_idx = 2;
  g.jx = 2.4;
  g.jy = 0.2;
  g.w = 0.8;
  gt3.push_back(g);
  const double err3 = gradient_check({s}, [&] {
    return loss_3d(dual_softmax(scale(s, 12.0)), gt3, 0.05, 1.0, 4).value;
  });
  CHECK(err3 < 1e-3);
}

TEST_CASE("ground truth pairs are mutual and pass reprojection") {
  PerturbationSpec spec;
  spec.rot_deg = 4.0;
  spec.trans_frac = 0.03;
  const SceneSample s = gen_planar(77, spec, 32);
  TrainSettings ts;
  const GroundTruth gt = build_ground_truth(s, PyramidDims{}, ts);
  CHECK(!gt.l3.empty());
  CHECK(!gt.l2.empty());
  CHECK(!gt.m3d.empty());
  // every level-3 pair's warped source center lies within one token of the
  // target token center
  const int grid = 32 / 8;
  for (const auto& g : gt.l3) {
    const double cx = (g.a_idx % grid) * 8 + 4;
    const double cy = (g.a_idx / grid) * 8 + 4;
    const Vec2 q = apply_homography(s.h_ab, Vec2(cx, cy));
    const double tx = (g.b_idx % grid) * 8 + 4;
    const double ty = (g.b_idx / grid) * 8 + 4;
    CHECK(std::abs(q.x() - tx) <= 8.0);
    CHECK(std::abs(q.y() - ty) <= 8.0);
    CHECK(g.w >= 0.05);
    CHECK(g.w <= 1.0);
  }
  // m3d carries the exact continuous target
  for (const auto& g : gt.m3d) {
    const double cx = (g.a_idx % grid) * 8 + 4;
    const double cy = (g.a_idx / grid) * 8 + 4;
    const Vec2 q = apply_homography(s.h_ab, Vec2(cx, cy));
    CHECK(g.jx == doctest::Approx((q.x() - 4) / 8).epsilon(1e-9));
    CHECK(g.jy == doctest::Approx((q.y() - 4) / 8).epsilon(1e-9));
  }
}

TEST_CASE("lr zero leaves parameters bit-identical") {
  auto samples = tiny_dataset(2);
  Model model(99);
  const auto before = model.reg.snapshot();
  TrainSettings ts = fast_settings();
  ts.lr_edge = 0.0;
  ts.lr_joint = 0.0;
  Trainer trainer(model, ts);
  testutil::TempDir dir("lr0");
  trainer.run(samples, 1, 7, dir.file("losses.tsv"), dir.file("ckpt.bin"));
  const auto after = model.reg.snapshot();
  REQUIRE(before.size() == after.size());
  for (std::size_t i = 0; i < before.size(); ++i) CHECK(before[i].values == after[i].values);
}

TEST_CASE("same seed twice gives byte-identical loss curves") {
  auto samples = tiny_dataset(2);
  testutil::TempDir dir("det");
  for (int run = 0; run < 2; ++run) {
    Model model(42);
    Trainer trainer(model, fast_settings());
    trainer.run(samples, 1, 11, dir.file("losses_" + std::to_string(run) + ".tsv"),
                dir.file("ckpt_" + std::to_string(run) + ".bin"));
  }
  CHECK(testutil::slurp(dir.file("losses_0.tsv")) == testutil::slurp(dir.file("losses_1.tsv")));
  CHECK(testutil::slurp(dir.file("ckpt_0.bin")) == testutil::slurp(dir.file("ckpt_1.bin")));
}

TEST_CASE("resume from checkpoint continues with the identical next-step loss") {
  auto samples = tiny_dataset(2);
  testutil::TempDir dir("resume");

  TrainSettings full_ts = fast_settings();
  full_ts.joint_steps_override = 4;
  Model full(5);
  Trainer full_trainer(full, full_ts);
  const auto full_hist =
      full_trainer.run(samples, 1, 13, dir.file("full.tsv"), dir.file("full.bin"));
  REQUIRE(full_hist.size() == 4);

  TrainSettings half_ts = fast_settings();
  half_ts.joint_steps_override = 2;
  Model half(5);
  Trainer half_trainer(half, half_ts);
  half_trainer.run(samples, 1, 13, dir.file("half.tsv"), dir.file("half.bin"));

  TrainSettings rest_ts = fast_settings();
  rest_ts.joint_steps_override = 4;
  Model rest(5);
  Trainer rest_trainer(rest, rest_ts);
  const auto rest_hist = rest_trainer.run(samples, 1, 13, dir.file("rest.tsv"),
                                          dir.file("rest.bin"), dir.file("half.bin"));
  REQUIRE(rest_hist.size() == 2);
  CHECK(rest_hist[0].total == doctest::Approx(full_hist[2].total).epsilon(1e-12));
}

TEST_CASE("training on an empty dataset is an error") {
  Model model(1);
  Trainer trainer(model, fast_settings());
  testutil::TempDir dir("empty");
  CHECK_THROWS(trainer.run({}, 1, 1, dir.file("l.tsv"), dir.file("c.bin")));
}

TEST_CASE("epochs zero writes a checkpoint equal to initialization") {
  auto samples = tiny_dataset(1);
  Model model(3);
  const auto before = model.reg.snapshot();
  TrainSettings ts;
  ts.edge_steps = 5;  // must not run when epochs == 0
  ts.joint_steps_override = 0;
  Trainer trainer(model, ts);
  testutil::TempDir dir("zeroep");
  trainer.run(samples, 0, 1, dir.file("l.tsv"), dir.file("c.bin"));
  Model fresh(999);
  fresh.load(dir.file("c.bin"));
  for (const auto& rec : before) {
    CHECK(*fresh.reg.find(rec.name)->data == rec.values);
  }
}
