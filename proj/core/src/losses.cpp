#include "cris/losses.hpp"

namespace cris {

namespace {

void check_same_shape(const torch::Tensor& pred, const torch::Tensor& target) {
  if (pred.sizes() != target.sizes()) {
    throw ShapeError("loss: prediction shape " + c10::str(pred.sizes()) +
                     " does not match target " + c10::str(target.sizes()));
  }
  if (pred.dim() != 3 && pred.dim() != 4) {
    throw ShapeError("loss: expected CHW or NCHW input, got " +
                     c10::str(pred.sizes()));
  }
}

// Per-image mean over channel and spatial dims, then mean over the batch.
torch::Tensor reduce(const torch::Tensor& per_pixel) {
  if (per_pixel.dim() == 4) {
    return per_pixel.mean({1, 2, 3}).mean();
  }
  return per_pixel.mean();
}

}  // namespace

torch::Tensor mse_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_same_shape(pred, target);
  return reduce((pred - target).square());
}

torch::Tensor bce_loss(const torch::Tensor& pred, const torch::Tensor& target) {
  check_same_shape(pred, target);
  const auto p = pred.clamp(kBceEps, 1.0 - kBceEps);
  return reduce(-(target * p.log() + (1.0 - target) * (1.0 - p).log()));
}

double loss_mse(const ProbMap& p, const MaskTensor& g) {
  return cris::mse_loss(p.tensor(), g.tensor()).item<double>();
}

double loss_bce(const ProbMap& p, const MaskTensor& g) {
  return cris::bce_loss(p.tensor(), g.tensor()).item<double>();
}

EpochLossWeights epoch_weights(std::int64_t epoch) {
  if (epoch < 0) {
    throw InvalidArgument("invalid-epoch", "epoch index must be nonnegative");
  }
  const int parity = static_cast<int>(epoch % 2);
  return EpochLossWeights{1 - parity, parity};
}

}  // namespace cris
