#pragma once

#include <torch/torch.h>

#include <cstdint>
#include <string>
#include <vector>

#include "cris/errors.hpp"

namespace cris {

/// Minimum spatial side for network inputs; guarantees the largest refinement
/// kernel fits with same-padding and leaves room for two pooling stages.
inline constexpr std::int64_t kMinImageSide = 16;

/// RGB image, float32, shape 3xHxW, values in [0, 1]. Immutable after
/// construction; instances share storage and are cheap to copy.
class ImageTensor {
 public:
  /// Validates shape, range and minimum size. The tensor is converted to
  /// contiguous float32.
  static ImageTensor from_tensor(torch::Tensor t);

  /// No validation; for loaders that already guarantee the invariants and
  /// for tests that need deliberately malformed values.
  static ImageTensor unchecked(torch::Tensor t) { return ImageTensor(std::move(t)); }

  const torch::Tensor& tensor() const { return data_; }
  std::int64_t height() const { return data_.size(1); }
  std::int64_t width() const { return data_.size(2); }

 private:
  explicit ImageTensor(torch::Tensor t) : data_(std::move(t)) {}
  torch::Tensor data_;
};

/// Binary mask, float32, shape 1xHxW, every element exactly 0 or 1.
class MaskTensor {
 public:
  static MaskTensor from_tensor(torch::Tensor t);
  static MaskTensor unchecked(torch::Tensor t) { return MaskTensor(std::move(t)); }

  const torch::Tensor& tensor() const { return data_; }
  std::int64_t height() const { return data_.size(1); }
  std::int64_t width() const { return data_.size(2); }
  std::int64_t positive_count() const;

 private:
  explicit MaskTensor(torch::Tensor t) : data_(std::move(t)) {}
  torch::Tensor data_;
};

/// Per-pixel probability map, float32, shape 1xHxW, values in [0, 1].
class ProbMap {
 public:
  static ProbMap from_tensor(torch::Tensor t);
  static ProbMap unchecked(torch::Tensor t) { return ProbMap(std::move(t)); }

  const torch::Tensor& tensor() const { return data_; }
  std::int64_t height() const { return data_.size(1); }
  std::int64_t width() const { return data_.size(2); }

 private:
  explicit ProbMap(torch::Tensor t) : data_(std::move(t)) {}
  torch::Tensor data_;
};

struct Sample {
  std::string id;
  ImageTensor image;
  MaskTensor mask;
};

struct Dataset {
  std::string name;
  std::vector<Sample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
};

/// Thresholds a probability map into a binary mask. The comparison is >=,
/// so t = 0 yields the all-positive mask and PR-curve endpoints stay defined.
/// Throws InvalidArgument("invalid-threshold") for t outside [0, 1].
MaskTensor binarize(const ProbMap& p, double threshold);

/// Checks a sample's cross-invariants: matching spatial shape, image values
/// in [0, 1], strictly binary mask. Throws the specific violation:
/// "shape-mismatch", "out-of-range-pixel" or "non-binary-mask".
void validate_pair(const Sample& s);

/// Checks id uniqueness across the dataset; throws "duplicate-id".
void validate_dataset(const Dataset& d);

}  // namespace cris
