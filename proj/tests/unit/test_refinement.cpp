#include <doctest.h>
#include <torch/torch.h>

#include "cris/refinement.hpp"
#include "helpers.hpp"

using namespace cris;

TEST_SUITE("refinement") {

TEST_CASE("default build produces the documented layer stack") {
  auto m = build_refinement({});
  const auto layers = m->layout();

  // expand (1x1, 1->32) + relu + dropout, then one conv/relu/dropout block
  // per kernel, then project (1x1, ->1) + sigmoid
  std::vector<std::string> kinds;
  for (const auto& l : layers) kinds.push_back(l.kind);
  const std::vector<std::string> expected{
      "conv", "relu", "dropout",  // expand
      "conv", "relu", "dropout",  // 7x7
      "conv", "relu", "dropout",  // 5x5
      "conv", "relu", "dropout",  // 3x3
      "conv", "sigmoid"};
  CHECK(kinds == expected);

  CHECK(layers[0].in_channels == 1);
  CHECK(layers[0].out_channels == 32);
  CHECK(layers[0].kernel == 1);
  CHECK(layers[3].kernel == 7);
  CHECK(layers[6].kernel == 5);
  CHECK(layers[9].kernel == 3);
  CHECK(layers[12].in_channels == 32);
  CHECK(layers[12].out_channels == 1);
  CHECK(layers[12].kernel == 1);

  int dropout_sites = 0;
  for (const auto& l : layers) {
    if (l.kind == "dropout") {
      CHECK(l.p == 0.01);
      ++dropout_sites;
    }
  }
  // one site per inter-layer boundary: kernels + the expansion block
  CHECK(dropout_sites == 4);
}

TEST_CASE("config validation rejects malformed kernel stacks") {
  auto expect_invalid = [](RefinementConfig cfg) {
    try {
      build_refinement(cfg);
      FAIL("expected invalid-config");
    } catch (const Error& e) {
      CHECK(e.code() == "invalid-config");
    }
  };
  expect_invalid({.kernel_sizes = {3, 5}});      // not decreasing
  expect_invalid({.kernel_sizes = {7, 7, 3}});   // not strictly decreasing
  expect_invalid({.kernel_sizes = {4}});         // even
  expect_invalid({.kernel_sizes = {}});          // empty
  expect_invalid({.kernel_sizes = {3}, .dropout_p = 1.0});
  expect_invalid({.expand_channels = 0});
}

TEST_CASE("identical configs build bit-identical parameters") {
  const RefinementConfig cfg{.seed = 21};
  const auto a = build_refinement(cfg);
  const auto b = build_refinement(cfg);
  const auto pa = a->parameters();
  const auto pb = b->parameters();
  REQUIRE(pa.size() == pb.size());
  for (std::size_t i = 0; i < pa.size(); ++i) {
    CHECK(test::bitwise_equal(pa[i], pb[i]));
  }
}

TEST_CASE("refine preserves shape and range") {
  torch::manual_seed(31);
  auto m = build_refinement({.seed = 1});
  m->eval();
  const auto p = test::random_prob(32, 32);
  const auto out = refine(m, p);
  CHECK(out.height() == 32);
  CHECK(out.width() == 32);
  CHECK(out.tensor().min().item<float>() >= 0.0f);
  CHECK(out.tensor().max().item<float>() <= 1.0f);

  // repeated eval-mode calls are identical
  CHECK(test::bitwise_equal(refine(m, p).tensor(), refine(m, p).tensor()));
}

TEST_CASE("inputs below the largest kernel are rejected") {
  auto m = build_refinement({});
  m->eval();
  CHECK_THROWS_AS(m->forward(torch::rand({1, 1, 5, 5})), ShapeError);
  CHECK_THROWS_AS(m->forward(torch::rand({1, 2, 32, 32})), ShapeError);
  CHECK_NOTHROW(m->forward(torch::rand({1, 1, 7, 7})));
}

TEST_CASE("gradient flows back into the input map") {
  torch::manual_seed(32);
  auto m = build_refinement({.seed = 3});
  m->to(torch::kFloat64);
  m->eval();
  auto p = torch::rand({1, 1, 16, 16}, torch::kFloat64).requires_grad_(true);
  m->forward(p).sum().backward();
  const auto grad = p.grad();
  REQUIRE(grad.defined());

  // central differences at fixed pixels (probes straddling a ReLU kink are
  // not derivative estimates and are skipped)
  const double h = 1e-4;
  int probes = 0;
  for (const auto [y, x] : std::vector<std::pair<int, int>>{
           {2, 3}, {8, 8}, {13, 5}, {5, 11}, {10, 2}}) {
    torch::NoGradGuard ng;
    auto probe = p.detach().clone();
    const auto fd = test::fd_probe(
        [&](double v) {
          probe[0][0][y][x] = v;
          return m->forward(probe).sum().item<double>();
        },
        probe[0][0][y][x].item<double>(), h);
    if (!fd.valid) continue;
    CHECK(test::grad_close(grad[0][0][y][x].item<double>(), fd.central));
    ++probes;
  }
  CHECK(probes >= 3);
}

TEST_CASE("dropout is live in train mode and dead in eval mode") {
  torch::manual_seed(33);
  const auto p = torch::rand({1, 1, 16, 16});

  auto noisy = build_refinement({.dropout_p = 0.5, .seed = 4});
  noisy->train();
  torch::manual_seed(100);
  const auto a = noisy->forward(p);
  torch::manual_seed(101);
  const auto b = noisy->forward(p);
  CHECK_FALSE(torch::equal(a, b));

  auto off = build_refinement({.dropout_p = 0.0, .seed = 4});
  off->train();
  const auto c = off->forward(p);
  off->eval();
  const auto d = off->forward(p);
  CHECK(test::bitwise_equal(c, d));
}

TEST_CASE("compose exposes both outputs and matches manual chaining") {
  torch::manual_seed(34);
  auto backbone = build_backbone({BackboneKind::kUNet, 4, 2, 11});
  auto refinement = build_refinement({.seed = 12});
  auto model = compose(backbone, refinement);
  model->eval();

  const auto img = ImageTensor::from_tensor(torch::rand({3, 16, 16}));
  torch::NoGradGuard ng;
  const auto out = model->forward(img.tensor().unsqueeze(0));
  CHECK(out.intermediate.sizes() == torch::IntArrayRef({1, 1, 16, 16}));
  CHECK(out.refined.sizes() == torch::IntArrayRef({1, 1, 16, 16}));

  // random refinement must actually change the map
  CHECK_FALSE(torch::equal(out.intermediate, out.refined));

  // bit-exact agreement with the two-step composition
  const auto two_step = refine(refinement, backbone_forward(backbone, img));
  CHECK(test::bitwise_equal(out.refined.squeeze(0), two_step.tensor()));
}

TEST_CASE("identity head stubs pass the intermediate through") {
  torch::manual_seed(35);
  auto backbone = build_backbone({BackboneKind::kSegNet, 4, 2, 13});
  auto model = compose(backbone, torch::nn::AnyModule(torch::nn::Identity()),
                       "refine");
  model->eval();
  torch::NoGradGuard ng;
  const auto out = model->forward(torch::rand({1, 3, 16, 16}));
  CHECK(test::bitwise_equal(out.intermediate, out.refined));
}

}  // TEST_SUITE
