#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "cris/backbones.hpp"
#include "cris/types.hpp"

namespace cris {

/// Fully convolutional refinement head: a 1x1 channel expansion, a stack of
/// same-padded convolutions with strictly decreasing kernel sizes, and a 1x1
/// projection back to one channel followed by sigmoid. Dropout sits after
/// every conv+activation block between trainable layers.
struct RefinementConfig {
  std::int64_t expand_channels = 32;
  std::vector<std::int64_t> kernel_sizes = {7, 5, 3};
  double dropout_p = 0.01;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const RefinementConfig&) const = default;
};

class RefinementImpl : public torch::nn::Module {
 public:
  explicit RefinementImpl(RefinementConfig cfg);

  /// Nx1xHxW probabilities in, Nx1xHxW probabilities out, same spatial size.
  /// Differentiable w.r.t. both parameters and input. Inputs smaller than the
  /// largest kernel are rejected.
  torch::Tensor forward(const torch::Tensor& x);

  const RefinementConfig& config() const { return config_; }

  struct LayerInfo {
    std::string kind;  // "conv", "relu", "dropout", "sigmoid"
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t kernel = 0;
    double p = 0.0;  // dropout probability
  };

  /// Flat description of the layer stack, for structural checks.
  std::vector<LayerInfo> layout() const;

 private:
  RefinementConfig config_;
  torch::nn::Sequential seq_ = nullptr;
};

using Refinement = std::shared_ptr<RefinementImpl>;

/// Deterministic build from cfg.seed, like build_backbone.
Refinement build_refinement(const RefinementConfig& cfg);

/// Single-map forward in the current module mode.
ProbMap refine(const Refinement& m, const ProbMap& p);

struct FullOutput {
  torch::Tensor intermediate;  // backbone probability map B(I)
  torch::Tensor refined;       // refinement output M_B(I)
};

/// Backbone and refinement head composed into one trainable model. A single
/// forward pass exposes both the intermediate and the refined map. The head
/// slot is type-erased so tests can substitute stubs (e.g. identity).
class FullModelImpl : public torch::nn::Module {
 public:
  FullModelImpl(Backbone backbone, Refinement refinement);
  FullModelImpl(Backbone backbone, torch::nn::AnyModule head,
                std::string head_label);

  FullOutput forward(const torch::Tensor& x);

  const Backbone& backbone() const { return backbone_; }
  /// Null when the head is a stub installed through the AnyModule overload.
  const Refinement& refinement() const { return refinement_; }
  std::shared_ptr<torch::nn::Module> head_module() const { return head_.ptr(); }

  std::vector<torch::Tensor> backbone_parameters() const;
  std::vector<torch::Tensor> head_parameters() const;

 private:
  Backbone backbone_;
  Refinement refinement_;
  torch::nn::AnyModule head_;
};

using FullModel = std::shared_ptr<FullModelImpl>;

FullModel compose(Backbone b, Refinement m);
FullModel compose(Backbone b, torch::nn::AnyModule head, std::string label);

}  // namespace cris
