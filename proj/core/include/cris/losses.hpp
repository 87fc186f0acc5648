#pragma once

#include <torch/torch.h>

#include <cstdint>

#include "cris/types.hpp"

namespace cris {

/// Probability clamp applied before the BCE logs.
inline constexpr double kBceEps = 1e-7;

/// Mean squared error between a probability map and a binary target:
/// per-image mean over all pixels, then mean over the batch. Accepts CHW or
/// NCHW; shapes must match exactly. Differentiable w.r.t. `pred`.
torch::Tensor mse_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Binary cross entropy -[g log p + (1-g) log(1-p)], with `pred` clamped to
/// [kBceEps, 1-kBceEps] before the logs. Same reduction and shape rules as
/// mse_loss.
torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target);

/// Scalar forms on the typed vocabulary.
double loss_mse(const ProbMap& p, const MaskTensor& g);
double loss_bce(const ProbMap& p, const MaskTensor& g);

/// Parity-complementary epoch weights: epoch e activates the backbone MSE
/// term when e is even and the refined-output BCE term when e is odd, i.e.
/// (w1, w2) = (1 - e mod 2, e mod 2). Training starts at e = 0 with w1 = 1 so
/// the backbone learns to produce masks before the refinement head trains.
struct EpochLossWeights {
  int w1 = 1;
  int w2 = 0;
};

EpochLossWeights epoch_weights(std::int64_t epoch);

}  // namespace cris
