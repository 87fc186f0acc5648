#include "cris/types.hpp"

#include <unordered_set>

namespace cris {

namespace {

torch::Tensor to_float_contiguous(torch::Tensor t) {
  return t.to(torch::kFloat32).contiguous();
}

void check_chw(const torch::Tensor& t, std::int64_t channels, const char* what) {
  if (t.dim() != 3 || t.size(0) != channels) {
    throw ShapeError(std::string(what) + ": expected shape " +
                     std::to_string(channels) + "xHxW, got " +
                     c10::str(t.sizes()));
  }
}

}  // namespace

ImageTensor ImageTensor::from_tensor(torch::Tensor t) {
  auto data = to_float_contiguous(std::move(t));
  check_chw(data, 3, "image");
  if (data.size(1) < kMinImageSide || data.size(2) < kMinImageSide) {
    throw InvalidArgument("image-too-small",
                          "image sides must be at least " +
                              std::to_string(kMinImageSide) + ", got " +
                              c10::str(data.sizes()));
  }
  if (data.numel() == 0 || data.min().item<float>() < 0.0f ||
      data.max().item<float>() > 1.0f) {
    throw InvalidArgument("out-of-range-pixel",
                          "image values must lie in [0, 1]");
  }
  return ImageTensor(std::move(data));
}

MaskTensor MaskTensor::from_tensor(torch::Tensor t) {
  auto data = to_float_contiguous(std::move(t));
  check_chw(data, 1, "mask");
  if (!torch::all((data == 0.0f) | (data == 1.0f)).item<bool>()) {
    throw InvalidArgument("non-binary-mask",
                          "mask values must be exactly 0 or 1");
  }
  return MaskTensor(std::move(data));
}

std::int64_t MaskTensor::positive_count() const {
  return data_.sum().item<std::int64_t>();
}

ProbMap ProbMap::from_tensor(torch::Tensor t) {
  auto data = to_float_contiguous(std::move(t));
  check_chw(data, 1, "probability map");
  if (data.numel() == 0 || data.min().item<float>() < 0.0f ||
      data.max().item<float>() > 1.0f) {
    throw InvalidArgument("out-of-range-pixel",
                          "probability values must lie in [0, 1]");
  }
  return ProbMap(std::move(data));
}

MaskTensor binarize(const ProbMap& p, double threshold) {
  if (!(threshold >= 0.0 && threshold <= 1.0)) {
    throw InvalidArgument("invalid-threshold",
                          "threshold must lie in [0, 1], got " +
                              std::to_string(threshold));
  }
  return MaskTensor::unchecked(
      (p.tensor() >= static_cast<float>(threshold)).to(torch::kFloat32));
}

void validate_pair(const Sample& s) {
  const auto& img = s.image.tensor();
  const auto& mask = s.mask.tensor();
  if (img.dim() != 3 || img.size(0) != 3) {
    throw ShapeError("sample '" + s.id + "': image is not 3xHxW");
  }
  if (mask.dim() != 3 || mask.size(0) != 1 || mask.size(1) != img.size(1) ||
      mask.size(2) != img.size(2)) {
    throw ShapeError("sample '" + s.id + "': mask shape " +
                     c10::str(mask.sizes()) + " does not match image " +
                     c10::str(img.sizes()));
  }
  if (!torch::all((mask == 0.0f) | (mask == 1.0f)).item<bool>()) {
    throw InvalidArgument("non-binary-mask",
                          "sample '" + s.id + "': mask is not binary");
  }
  if (img.min().item<float>() < 0.0f || img.max().item<float>() > 1.0f) {
    throw InvalidArgument("out-of-range-pixel",
                          "sample '" + s.id + "': image values outside [0, 1]");
  }
}

void validate_dataset(const Dataset& d) {
  std::unordered_set<std::string> seen;
  seen.reserve(d.samples.size());
  for (const auto& s : d.samples) {
    if (!seen.insert(s.id).second) {
      throw InvalidArgument("duplicate-id",
                            "dataset '" + d.name + "': duplicate sample id '" +
                                s.id + "'");
    }
  }
}

}  // namespace cris
