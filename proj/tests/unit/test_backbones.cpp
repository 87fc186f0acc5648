#include <doctest.h>
#include <torch/torch.h>

#include <map>

#include "cris/backbones.hpp"
#include "helpers.hpp"

using namespace cris;

namespace {

std::int64_t parameter_count(const Backbone& b) {
  std::int64_t n = 0;
  for (const auto& p : b->parameters()) n += p.numel();
  return n;
}

const std::vector<BackboneKind> kAllKinds{
    BackboneKind::kUNet, BackboneKind::kUNetPP, BackboneKind::kSegNet};

}  // namespace

TEST_SUITE("backbones") {

TEST_CASE("kind parsing round-trips and rejects unknowns") {
  for (const auto kind : kAllKinds) {
    CHECK(backbone_kind_from_string(to_string(kind)) == kind);
  }
  try {
    backbone_kind_from_string("resnet");
    FAIL("expected unsupported-kind");
  } catch (const Error& e) {
    CHECK(e.code() == "unsupported-kind");
  }
}

TEST_CASE("config validation") {
  CHECK_THROWS_AS(build_backbone({BackboneKind::kUNet, 16, 1, 0}),
                  InvalidArgument);
  CHECK_THROWS_AS(build_backbone({BackboneKind::kUNet, 2, 3, 0}),
                  InvalidArgument);
}

TEST_CASE("identical configs build bit-identical parameters") {
  for (const auto kind : kAllKinds) {
    const BackboneConfig cfg{kind, 8, 2, 0};
    const auto a = build_backbone(cfg);
    const auto b = build_backbone(cfg);
    const auto pa = a->parameters();
    const auto pb = b->parameters();
    REQUIRE(pa.size() == pb.size());
    for (std::size_t i = 0; i < pa.size(); ++i) {
      CHECK(test::bitwise_equal(pa[i], pb[i]));
    }
    // different seeds give different weights
    const auto c = build_backbone({kind, 8, 2, 1});
    bool any_diff = false;
    const auto pc = c->parameters();
    for (std::size_t i = 0; i < pa.size(); ++i) {
      any_diff = any_diff || !torch::equal(pa[i], pc[i]);
    }
    CHECK(any_diff);
  }
}

TEST_CASE("output shape and range contract") {
  torch::manual_seed(1);
  const auto x = torch::rand({2, 3, 32, 32});
  for (const auto kind : kAllKinds) {
    auto b = build_backbone({kind, 8, 3, 0});
    b->eval();
    torch::NoGradGuard ng;
    const auto y = b->forward(x);
    CHECK(y.sizes() == torch::IntArrayRef({2, 1, 32, 32}));
    CHECK(y.min().item<float>() >= 0.0f);
    CHECK(y.max().item<float>() <= 1.0f);
  }
}

TEST_CASE("input sides must divide by 2^depth") {
  auto b = build_backbone({BackboneKind::kUNet, 4, 4, 0});
  torch::NoGradGuard ng;
  b->eval();
  CHECK_NOTHROW(b->forward(torch::rand({1, 3, 32, 32})));
  CHECK_THROWS_AS(b->forward(torch::rand({1, 3, 24, 24})), ShapeError);
  CHECK_THROWS_AS(b->forward(torch::rand({1, 3, 32})), ShapeError);
  CHECK_THROWS_AS(b->forward(torch::rand({1, 1, 32, 32})), ShapeError);
}

TEST_CASE("eval-mode forwards are repeatable") {
  torch::manual_seed(2);
  const auto x = torch::rand({1, 3, 16, 16});
  for (const auto kind : kAllKinds) {
    auto b = build_backbone({kind, 4, 2, 3});
    b->eval();
    torch::NoGradGuard ng;
    CHECK(test::bitwise_equal(b->forward(x), b->forward(x)));
  }
}

TEST_CASE("backbone_forward wraps single images") {
  torch::manual_seed(3);
  auto b = build_backbone({BackboneKind::kSegNet, 4, 2, 0});
  b->eval();
  const auto img = ImageTensor::from_tensor(torch::rand({3, 32, 32}));
  const auto prob = backbone_forward(b, img);
  CHECK(prob.height() == 32);
  CHECK(prob.width() == 32);
}

TEST_CASE("parameter counts are stable") {
  const std::map<BackboneKind, std::pair<std::int64_t, std::int64_t>> expected{
      {BackboneKind::kUNet, {482737, 7549}},
      {BackboneKind::kUNetPP, {552945, 8273}},
      {BackboneKind::kSegNet, {111745, 1921}},
  };
  for (const auto& [kind, counts] : expected) {
    CHECK(parameter_count(build_backbone({kind, 16, 3, 0})) == counts.first);
    CHECK(parameter_count(build_backbone({kind, 4, 2, 0})) == counts.second);
  }
}

TEST_CASE("autodiff matches central finite differences") {
  // double precision, eval mode (fixed BN statistics) for a smooth f(theta)
  torch::manual_seed(4);
  auto b = build_backbone({BackboneKind::kUNet, 4, 2, 5});
  b->to(torch::kFloat64);
  b->eval();
  const auto x = torch::rand({1, 3, 16, 16}, torch::kFloat64);

  auto params = b->parameters();
  auto f = [&] { return b->forward(x).sum(); };

  auto loss = f();
  loss.backward();

  const double h = 1e-4;
  int checked = 0;
  for (const auto& p : params) {
    auto grad = p.grad();
    if (!grad.defined()) continue;
    auto flat = p.view(-1);
    auto gflat = grad.view(-1);
    for (const auto idx : {flat.numel() / 3, flat.numel() / 2}) {
      const double g_ad = gflat[idx].item<double>();
      if (std::abs(g_ad) < 1e-6) continue;

      torch::NoGradGuard ng;
      const double orig = flat[idx].item<double>();
      const auto probe = test::fd_probe(
          [&](double v) {
            flat[idx] = v;
            return f().item<double>();
          },
          orig, h);
      flat[idx] = orig;
      if (!probe.valid) continue;  // kink inside the difference window
      CHECK(test::grad_close(g_ad, probe.central));
      ++checked;
    }
    if (checked >= 8) break;
  }
  CHECK(checked >= 4);
}

TEST_CASE("every parameter receives gradient on some batch") {
  torch::manual_seed(6);
  for (const auto kind : kAllKinds) {
    auto b = build_backbone({kind, 4, 2, 7});
    b->train();
    auto params = b->parameters();
    std::vector<bool> touched(params.size(), false);

    for (int attempt = 0; attempt < 5; ++attempt) {
      for (auto& p : params) {
        if (p.mutable_grad().defined()) p.mutable_grad().zero_();
      }
      const auto x = torch::rand({4, 3, 16, 16});
      b->forward(x).sum().backward();
      for (std::size_t i = 0; i < params.size(); ++i) {
        const auto& g = params[i].grad();
        if (g.defined() && g.abs().max().item<float>() > 0.0f) {
          touched[i] = true;
        }
      }
      if (std::all_of(touched.begin(), touched.end(),
                      [](bool t) { return t; })) {
        break;
      }
    }
    for (std::size_t i = 0; i < touched.size(); ++i) {
      INFO(to_string(kind) << " parameter " << i << " never saw a gradient");
      CHECK(touched[i]);
    }
  }
}

}  // TEST_SUITE
