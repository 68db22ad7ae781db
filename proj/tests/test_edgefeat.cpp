#include <cmath>
#include <set>

#include "doctest.h"
#include "testutil.hpp"
#include "tp3m/edgefeat.hpp"
#include "tp3m/ops.hpp"
#include "tp3m/synthgen.hpp"

using namespace tp3m;
using testutil::gradient_check;
using testutil::random_tensor;

namespace {

Image noise_image(int h, int w, std::uint64_t seed) {
  Rng rng(seed);
  Image img(h, w);
  for (double& v : img.v) v = rng.uniform();
  return img;
}

}  // namespace

TEST_CASE("pyramid shape contract across sizes") {
  ParamRegistry reg(3);
  EdgeExtractor ext(reg);
  for (int size : {32, 64}) {
    const Image img = noise_image(size, size, 17);
    const FeaturePyramid pyr = ext.extract(img);
    CHECK(pyr.f3.shape == std::vector<int>{64, size / 8, size / 8});
    CHECK(pyr.f2.shape == std::vector<int>{32, size / 4, size / 4});
    CHECK(pyr.f1.shape == std::vector<int>{16, size, size});
    CHECK(pyr.edge_map.h == size);
    for (double v : pyr.edge_map.v) {
      CHECK(v >= 0.0);
      CHECK(v <= 1.0);
    }
  }
  Image bad(30, 30, 0.5);
  CHECK_THROWS(ext.extract(bad));
}

TEST_CASE("extractor is deterministic for identical inputs") {
  ParamRegistry reg(5);
  EdgeExtractor ext(reg);
  const Image img = noise_image(32, 32, 23);
  const FeaturePyramid p1 = ext.extract(img);
  const FeaturePyramid p2 = ext.extract(img);
  CHECK(*p1.f1.data == *p2.f1.data);
  CHECK(*p1.f2.data == *p2.f2.data);
  CHECK(*p1.f3.data == *p2.f3.data);
  CHECK(p1.edge_map.v == p2.edge_map.v);
}

TEST_CASE("positional patch embed shapes and zero behaviour") {
  ParamRegistry reg(7);
  Tensor w = reg.create("w", {8, 1, 3, 3}, 9);
  Tensor b = reg.create_zeros("b", {8});
  Tensor dw = reg.create("dw", {8, 3, 3}, 9);
  Tensor dwb = reg.create_zeros("dwb", {8});

  Tensor in = Tensor::zeros({1, 16, 16});
  Tensor out = positional_patch_embed(in, w, b, dw, dwb);
  CHECK(out.shape == std::vector<int>{8, 8, 8});
  for (double v : *out.data) CHECK(v == 0.0);  // zero input, zero bias -> zero tokens

  Tensor tiny = Tensor::zeros({1, 2, 2});
  CHECK_THROWS(positional_patch_embed(tiny, w, b, dw, dwb));
}

TEST_CASE("positional patch embed gradient through both branches") {
  Rng r(29);
  Tensor in = random_tensor({1, 8, 8}, r, true);
  Tensor w = random_tensor({4, 1, 3, 3}, r, true);
  Tensor b = random_tensor({4}, r, true);
  Tensor dw = random_tensor({4, 3, 3}, r, true);
  Tensor dwb = random_tensor({4}, r, true);
  const double err = gradient_check(
      {in, w, b, dw, dwb}, [&] { return sum(positional_patch_embed(in, w, b, dw, dwb)); });
  CHECK(err < 1e-4);
}

TEST_CASE("gradients reach every extractor parameter") {
  ParamRegistry reg(11);
  EdgeExtractor ext(reg);
  std::map<std::string, bool> touched;
  for (const auto& [name, t] : reg.all()) touched[name] = false;

  for (int seed = 0; seed < 5; ++seed) {
    reg.zero_grad();
    const Image img = noise_image(16, 16, 100 + seed);
    FeaturePyramid pyr = ext.extract(img);
    Tensor loss = mean(mul(pyr.edge_logits, pyr.edge_logits));
    loss.backward();
    for (const auto& [name, t] : reg.all()) {
      for (double g : *t.grad) {
        if (g != 0.0) {
          touched[name] = true;
          break;
        }
      }
    }
  }
  for (const auto& [name, hit] : touched) {
    INFO("parameter with zero gradient in all seeds: " << name);
    CHECK(hit);
  }
}

TEST_CASE("canny on constant image is empty") {
  Image flat(32, 32, 0.7);
  const Image edges = canny_edges(flat);
  for (double v : edges.v) CHECK(v == 0.0);
}

TEST_CASE("canny localizes a vertical step to one column band") {
  Image step(32, 32, 0.0);
  const int c = 16;
  for (int y = 0; y < 32; ++y)
    for (int x = c; x < 32; ++x) step.at(y, x) = 1.0;
  const Image edges = canny_edges(step);
  int count = 0;
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      if (edges.at(y, x) > 0) {
        ++count;
        CHECK(x >= c - 1);
        CHECK(x <= c + 1);
      }
    }
  }
  CHECK(count > 0);
}

TEST_CASE("canny on a white square yields a thin closed contour") {
  Image img(48, 48, 0.0);
  for (int y = 12; y < 36; ++y)
    for (int x = 12; x < 36; ++x) img.at(y, x) = 1.0;
  const Image edges = canny_edges(img);

  // every edge pixel is within 2 px of the square boundary
  auto near_boundary = [](int y, int x) {
    const bool near_v = (std::abs(x - 12) <= 2 || std::abs(x - 35) <= 2) && y >= 9 && y <= 38;
    const bool near_h = (std::abs(y - 12) <= 2 || std::abs(y - 35) <= 2) && x >= 9 && x <= 38;
    return near_v || near_h;
  };
  int per_side[4] = {0, 0, 0, 0};
  for (int y = 0; y < 48; ++y) {
    for (int x = 0; x < 48; ++x) {
      if (edges.at(y, x) == 0.0) continue;
      CHECK(near_boundary(y, x));
      if (std::abs(x - 12) <= 2 && y > 14 && y < 33) ++per_side[0];
      if (std::abs(x - 35) <= 2 && y > 14 && y < 33) ++per_side[1];
      if (std::abs(y - 12) <= 2 && x > 14 && x < 33) ++per_side[2];
      if (std::abs(y - 35) <= 2 && x > 14 && x < 33) ++per_side[3];
    }
  }
  // all four sides carry near-contiguous responses
  for (int s = 0; s < 4; ++s) CHECK(per_side[s] >= 14);
}

TEST_CASE("laplacian weights: constant image, impulse, scale invariance") {
  Image flat(8, 8, 0.3);
  const Image wf = laplacian_weights(flat);
  for (double v : wf.v) CHECK(v == doctest::Approx(0.05));

  Image impulse(9, 9, 0.0);
  impulse.at(4, 4) = 1.0;
  const Image wi = laplacian_weights(impulse);
  CHECK(wi.at(4, 4) == doctest::Approx(1.0));       // |lap| = 4 at the peak
  CHECK(wi.at(4, 5) == doctest::Approx(0.25));      // |lap| = 1 at 4-neighbours
  CHECK(wi.at(3, 4) == doctest::Approx(0.25));

  Image doubled = impulse;
  for (double& v : doubled.v) v *= 2.0;
  const Image wd = laplacian_weights(doubled);
  CHECK(wd.v == wi.v);
}

TEST_CASE("edge head is invariant to matched channel permutations") {
  // permuting the feature channels together with the in-channel dim of the
  // head weights leaves the response unchanged
  Rng r(31);
  Tensor feat = random_tensor({4, 6, 6}, r, false);
  Tensor w = random_tensor({1, 4, 3, 3}, r, false);
  Tensor b = random_tensor({1}, r, false);
  const int perm[4] = {2, 0, 3, 1};
  Tensor feat_p = Tensor::zeros({4, 6, 6});
  Tensor w_p = Tensor::zeros({1, 4, 3, 3});
  for (int c = 0; c < 4; ++c) {
    for (int i = 0; i < 36; ++i)
      (*feat_p.data)[c * 36 + i] = (*feat.data)[perm[c] * 36 + i];
    for (int i = 0; i < 9; ++i) (*w_p.data)[c * 9 + i] = (*w.data)[perm[c] * 9 + i];
  }
  Tensor out = sigmoid(conv2d(feat, w, &b, 1, 1));
  Tensor out_p = sigmoid(conv2d(feat_p, w_p, &b, 1, 1));
  for (std::size_t i = 0; i < out.data->size(); ++i)
    CHECK((*out.data)[i] == doctest::Approx((*out_p.data)[i]).epsilon(1e-12));
}

TEST_CASE("edge map values stay in [0,1] on a textured input") {
  ParamRegistry reg(13);
  EdgeExtractor ext(reg);
  PerturbationSpec spec;
  const SceneSample s = gen_planar(19, spec, 32);
  const FeaturePyramid pyr = ext.extract(s.a);
  for (double v : pyr.edge_map.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}
