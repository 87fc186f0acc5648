#include "cris/refinement.hpp"

namespace cris {

void RefinementConfig::validate() const {
  if (expand_channels < 1) {
    throw InvalidArgument("invalid-config", "expand_channels must be positive");
  }
  if (kernel_sizes.empty()) {
    throw InvalidArgument("invalid-config", "kernel_sizes must be nonempty");
  }
  for (std::size_t i = 0; i < kernel_sizes.size(); ++i) {
    const auto k = kernel_sizes[i];
    if (k < 3 || k % 2 == 0) {
      throw InvalidArgument("invalid-config",
                            "kernel sizes must be odd and >= 3, got " +
                                std::to_string(k));
    }
    if (i > 0 && kernel_sizes[i] >= kernel_sizes[i - 1]) {
      throw InvalidArgument("invalid-config",
                            "kernel sizes must be strictly decreasing");
    }
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw InvalidArgument("invalid-config", "dropout_p must lie in [0, 1)");
  }
}

RefinementImpl::RefinementImpl(RefinementConfig cfg) : config_(std::move(cfg)) {
  config_.validate();
  const auto e = config_.expand_channels;
  seq_ = torch::nn::Sequential();
  seq_->push_back("expand",
                  torch::nn::Conv2d(torch::nn::Conv2dOptions(1, e, 1)));
  seq_->push_back("expand_act", torch::nn::ReLU());
  seq_->push_back("expand_drop", torch::nn::Dropout(config_.dropout_p));
  for (std::size_t i = 0; i < config_.kernel_sizes.size(); ++i) {
    const auto k = config_.kernel_sizes[i];
    const auto tag = std::to_string(k);
    seq_->push_back("conv" + tag,
                    torch::nn::Conv2d(
                        torch::nn::Conv2dOptions(e, e, k).padding(k / 2)));
    seq_->push_back("conv" + tag + "_act", torch::nn::ReLU());
    seq_->push_back("conv" + tag + "_drop", torch::nn::Dropout(config_.dropout_p));
  }
  seq_->push_back("project",
                  torch::nn::Conv2d(torch::nn::Conv2dOptions(e, 1, 1)));
  seq_->push_back("out_act", torch::nn::Sigmoid());
  register_module("seq", seq_);
}

torch::Tensor RefinementImpl::forward(const torch::Tensor& x) {
  if ((x.dim() != 4 && x.dim() != 3) || x.size(x.dim() - 3) != 1) {
    throw ShapeError("refinement input must be Nx1xHxW or 1xHxW, got " +
                     c10::str(x.sizes()));
  }
  const auto k_max = config_.kernel_sizes.front();
  if (x.size(x.dim() - 2) < k_max || x.size(x.dim() - 1) < k_max) {
    throw ShapeError("refinement input sides must be at least the largest "
                     "kernel (" + std::to_string(k_max) + "), got " +
                     c10::str(x.sizes()));
  }
  return seq_->forward(x);
}

std::vector<RefinementImpl::LayerInfo> RefinementImpl::layout() const {
  std::vector<LayerInfo> layers;
  for (const auto& item : seq_->named_children()) {
    LayerInfo info;
    if (auto conv = std::dynamic_pointer_cast<torch::nn::Conv2dImpl>(item.value())) {
      info.kind = "conv";
      info.in_channels = conv->options.in_channels();
      info.out_channels = conv->options.out_channels();
      info.kernel = conv->options.kernel_size()->at(0);
    } else if (std::dynamic_pointer_cast<torch::nn::ReLUImpl>(item.value())) {
      info.kind = "relu";
    } else if (auto drop = std::dynamic_pointer_cast<torch::nn::DropoutImpl>(item.value())) {
      info.kind = "dropout";
      info.p = drop->options.p();
    } else if (std::dynamic_pointer_cast<torch::nn::SigmoidImpl>(item.value())) {
      info.kind = "sigmoid";
    } else {
      info.kind = "unknown";
    }
    layers.push_back(info);
  }
  return layers;
}

Refinement build_refinement(const RefinementConfig& cfg) {
  cfg.validate();
  torch::manual_seed(cfg.seed);
  return std::make_shared<RefinementImpl>(cfg);
}

ProbMap refine(const Refinement& m, const ProbMap& p) {
  return ProbMap::from_tensor(m->forward(p.tensor().unsqueeze(0)).squeeze(0));
}

FullModelImpl::FullModelImpl(Backbone backbone, Refinement refinement)
    : backbone_(std::move(backbone)), refinement_(std::move(refinement)) {
  head_ = torch::nn::AnyModule(refinement_);
  register_module("backbone", backbone_);
  register_module("refine", refinement_);
}

FullModelImpl::FullModelImpl(Backbone backbone, torch::nn::AnyModule head,
                             std::string head_label)
    : backbone_(std::move(backbone)), head_(std::move(head)) {
  register_module("backbone", backbone_);
  register_module(head_label.empty() ? "refine" : head_label, head_.ptr());
}

FullOutput FullModelImpl::forward(const torch::Tensor& x) {
  FullOutput out;
  out.intermediate = backbone_->forward(x);
  out.refined = head_.forward(out.intermediate);
  return out;
}

std::vector<torch::Tensor> FullModelImpl::backbone_parameters() const {
  return backbone_->parameters();
}

std::vector<torch::Tensor> FullModelImpl::head_parameters() const {
  return head_.ptr()->parameters();
}

FullModel compose(Backbone b, Refinement m) {
  return std::make_shared<FullModelImpl>(std::move(b), std::move(m));
}

FullModel compose(Backbone b, torch::nn::AnyModule head, std::string label) {
  return std::make_shared<FullModelImpl>(std::move(b), std::move(head),
                                         std::move(label));
}

}  // namespace cris
