#include "cris/backbones.hpp"

#include <vector>

namespace cris {

namespace {

// Two conv3x3+BN+ReLU units; bias is omitted where BN immediately
// renormalizes.
torch::nn::Sequential double_conv(std::int64_t in, std::int64_t out) {
  return torch::nn::Sequential(
      torch::nn::Conv2d(torch::nn::Conv2dOptions(in, out, 3).padding(1).bias(false)),
      torch::nn::BatchNorm2d(out), torch::nn::ReLU(),
      torch::nn::Conv2d(torch::nn::Conv2dOptions(out, out, 3).padding(1).bias(false)),
      torch::nn::BatchNorm2d(out), torch::nn::ReLU());
}

class UNetImpl : public BackboneImpl {
 public:
  explicit UNetImpl(const BackboneConfig& cfg) : BackboneImpl(cfg) {
    const auto c = [&](std::int64_t i) { return cfg.base_channels << i; };
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
      encoders_.push_back(register_module(
          "enc_" + std::to_string(i), double_conv(i == 0 ? 3 : c(i - 1), c(i))));
    }
    bottleneck_ = register_module("bottleneck", double_conv(c(cfg.depth - 1), c(cfg.depth)));
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
      ups_.push_back(register_module(
          "up_" + std::to_string(i),
          torch::nn::ConvTranspose2d(
              torch::nn::ConvTranspose2dOptions(c(i + 1), c(i), 2).stride(2))));
      decoders_.push_back(register_module("dec_" + std::to_string(i),
                                          double_conv(2 * c(i), c(i))));
    }
    head_ = register_module(
        "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(c(0), 1, 1)));
  }

  torch::Tensor forward_impl(const torch::Tensor& input) override {
    std::vector<torch::Tensor> skips;
    auto x = input;
    for (auto& enc : encoders_) {
      x = enc->forward(x);
      skips.push_back(x);
      x = torch::max_pool2d(x, 2);
    }
    x = bottleneck_->forward(x);
    for (std::int64_t i = config_.depth - 1; i >= 0; --i) {
      x = ups_[i]->forward(x);
      x = torch::cat({skips[i], x}, 1);
      x = decoders_[i]->forward(x);
    }
    return torch::sigmoid(head_->forward(x));
  }

 private:
  std::vector<torch::nn::Sequential> encoders_;
  torch::nn::Sequential bottleneck_ = nullptr;
  std::vector<torch::nn::ConvTranspose2d> ups_;
  std::vector<torch::nn::Sequential> decoders_;
  torch::nn::Conv2d head_ = nullptr;
};

// Nested dense skip connections; a single output head on the outermost node
// (no deep supervision).
class UNetPPImpl : public BackboneImpl {
 public:
  explicit UNetPPImpl(const BackboneConfig& cfg) : BackboneImpl(cfg) {
    const auto c = [&](std::int64_t i) { return cfg.base_channels << i; };
    const std::int64_t d = cfg.depth;
    nodes_.assign(d + 1, {});
    ups_.assign(d + 1, {});
    for (std::int64_t i = 0; i <= d; ++i) {
      nodes_[i].push_back(register_module(
          node_name(i, 0), double_conv(i == 0 ? 3 : c(i - 1), c(i))));
    }
    for (std::int64_t j = 1; j <= d; ++j) {
      for (std::int64_t i = 0; i + j <= d; ++i) {
        ups_[i].push_back(register_module(
            "up_" + std::to_string(i) + "_" + std::to_string(j),
            torch::nn::ConvTranspose2d(
                torch::nn::ConvTranspose2dOptions(c(i + 1), c(i), 2).stride(2))));
        nodes_[i].push_back(
            register_module(node_name(i, j), double_conv((j + 1) * c(i), c(i))));
      }
    }
    head_ = register_module(
        "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(c(0), 1, 1)));
  }

  torch::Tensor forward_impl(const torch::Tensor& input) override {
    const std::int64_t d = config_.depth;
    // outputs[i][j] of node (i, j); column 0 is the plain encoder chain.
    std::vector<std::vector<torch::Tensor>> out(d + 1);
    auto x = input;
    for (std::int64_t i = 0; i <= d; ++i) {
      if (i > 0) x = torch::max_pool2d(x, 2);
      x = nodes_[i][0]->forward(x);
      out[i].push_back(x);
    }
    for (std::int64_t j = 1; j <= d; ++j) {
      for (std::int64_t i = 0; i + j <= d; ++i) {
        std::vector<torch::Tensor> cat_in(out[i].begin(), out[i].begin() + j);
        cat_in.push_back(ups_[i][j - 1]->forward(out[i + 1][j - 1]));
        out[i].push_back(nodes_[i][j]->forward(torch::cat(cat_in, 1)));
      }
    }
    return torch::sigmoid(head_->forward(out[0][d]));
  }

 private:
  static std::string node_name(std::int64_t i, std::int64_t j) {
    return "x_" + std::to_string(i) + "_" + std::to_string(j);
  }

  std::vector<std::vector<torch::nn::Sequential>> nodes_;
  std::vector<std::vector<torch::nn::ConvTranspose2d>> ups_;
  torch::nn::Conv2d head_ = nullptr;
};

// Pooling-index unpooling in the decoder is the defining SegNet feature and
// is kept in the scaled variant.
class SegNetImpl : public BackboneImpl {
 public:
  explicit SegNetImpl(const BackboneConfig& cfg) : BackboneImpl(cfg) {
    const auto c = [&](std::int64_t i) { return cfg.base_channels << i; };
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
      encoders_.push_back(register_module(
          "enc_" + std::to_string(i), double_conv(i == 0 ? 3 : c(i - 1), c(i))));
    }
    for (std::int64_t i = 0; i < cfg.depth; ++i) {
      decoders_.push_back(register_module(
          "dec_" + std::to_string(i), double_conv(c(i), i == 0 ? c(0) : c(i - 1))));
    }
    head_ = register_module(
        "head", torch::nn::Conv2d(torch::nn::Conv2dOptions(c(0), 1, 1)));
  }

  torch::Tensor forward_impl(const torch::Tensor& input) override {
    std::vector<torch::Tensor> indices;
    std::vector<std::vector<std::int64_t>> sizes;
    auto x = input;
    for (auto& enc : encoders_) {
      x = enc->forward(x);
      sizes.push_back({x.size(2), x.size(3)});
      auto [pooled, idx] = torch::max_pool2d_with_indices(x, 2, 2);
      x = pooled;
      indices.push_back(idx);
    }
    for (std::int64_t i = config_.depth - 1; i >= 0; --i) {
      x = torch::max_unpool2d(x, indices[i], sizes[i]);
      x = decoders_[i]->forward(x);
    }
    return torch::sigmoid(head_->forward(x));
  }

 private:
  std::vector<torch::nn::Sequential> encoders_;
  std::vector<torch::nn::Sequential> decoders_;
  torch::nn::Conv2d head_ = nullptr;
};

}  // namespace

BackboneKind backbone_kind_from_string(std::string_view s) {
  if (s == "unet") return BackboneKind::kUNet;
  if (s == "unetpp") return BackboneKind::kUNetPP;
  if (s == "segnet") return BackboneKind::kSegNet;
  throw InvalidArgument("unsupported-kind",
                        "unknown backbone kind '" + std::string(s) + "'");
}

std::string to_string(BackboneKind kind) {
  switch (kind) {
    case BackboneKind::kUNet: return "unet";
    case BackboneKind::kUNetPP: return "unetpp";
    case BackboneKind::kSegNet: return "segnet";
  }
  throw InvalidArgument("unsupported-kind", "invalid backbone kind value");
}

void BackboneConfig::validate() const {
  if (depth < 2) {
    throw InvalidArgument("invalid-config", "backbone depth must be >= 2");
  }
  if (base_channels < 4) {
    throw InvalidArgument("invalid-config", "base_channels must be >= 4");
  }
}

torch::Tensor BackboneImpl::forward(const torch::Tensor& x) {
  check_input(x);
  return forward_impl(x);
}

void BackboneImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != 3) {
    throw ShapeError("backbone input must be Nx3xHxW, got " +
                     c10::str(x.sizes()));
  }
  const std::int64_t divisor = std::int64_t{1} << config_.depth;
  if (x.size(2) % divisor != 0 || x.size(3) % divisor != 0 ||
      x.size(2) < divisor || x.size(3) < divisor) {
    throw ShapeError("backbone with depth " + std::to_string(config_.depth) +
                     " needs input sides divisible by " +
                     std::to_string(divisor) + ", got " + c10::str(x.sizes()));
  }
}

Backbone build_backbone(const BackboneConfig& cfg) {
  cfg.validate();
  torch::manual_seed(cfg.seed);
  switch (cfg.kind) {
    case BackboneKind::kUNet: return std::make_shared<UNetImpl>(cfg);
    case BackboneKind::kUNetPP: return std::make_shared<UNetPPImpl>(cfg);
    case BackboneKind::kSegNet: return std::make_shared<SegNetImpl>(cfg);
  }
  throw InvalidArgument("unsupported-kind", "invalid backbone kind value");
}

ProbMap backbone_forward(const Backbone& b, const ImageTensor& img) {
  return ProbMap::from_tensor(b->forward(img.tensor().unsqueeze(0)).squeeze(0));
}

}  // namespace cris
