#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <memory>
#include <ostream>
#include <string>
#include <string_view>

#include "cris/types.hpp"

namespace cris {

enum class BackboneKind { kUNet, kUNetPP, kSegNet };

BackboneKind backbone_kind_from_string(std::string_view s);
std::string to_string(BackboneKind kind);

inline std::ostream& operator<<(std::ostream& os, BackboneKind kind) {
  return os << to_string(kind);
}

/// Width/depth-scaled variants of the published architectures. The defaults
/// (base 16, depth 3) train in minutes on a CPU; full-size runs raise
/// base_channels instead of touching code.
struct BackboneConfig {
  BackboneKind kind = BackboneKind::kUNet;
  std::int64_t base_channels = 16;
  std::int64_t depth = 3;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const BackboneConfig&) const = default;
};

/// Common surface of the three encoder-decoder networks. Maps NCHW float
/// images to single-channel probability maps of identical spatial size
/// (sigmoid output). Input sides must be divisible by 2^depth.
class BackboneImpl : public torch::nn::Module {
 public:
  torch::Tensor forward(const torch::Tensor& x);
  const BackboneConfig& config() const { return config_; }

 protected:
  explicit BackboneImpl(BackboneConfig cfg) : config_(cfg) {}
  virtual torch::Tensor forward_impl(const torch::Tensor& x) = 0;
  void check_input(const torch::Tensor& x) const;

  BackboneConfig config_;
};

using Backbone = std::shared_ptr<BackboneImpl>;

/// Builds the configured backbone with parameters initialized from
/// cfg.seed; two builds from the same config are bit-identical.
Backbone build_backbone(const BackboneConfig& cfg);

/// Single-image forward in the current module mode.
ProbMap backbone_forward(const Backbone& b, const ImageTensor& img);

}  // namespace cris
