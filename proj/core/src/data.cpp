#include "cris/data.hpp"

#include <torch/torch.h>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "cris/rng.hpp"

namespace cris {

namespace fs = std::filesystem;

namespace {

bool is_raster_file(const fs::path& p) {
  auto ext = p.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".jpg" || ext == ".jpeg" || ext == ".bmp" ||
         ext == ".tif" || ext == ".tiff";
}

std::map<std::string, fs::path> scan_stems(const fs::path& dir,
                                           const char* what) {
  if (!fs::is_directory(dir)) {
    throw IoError("io-error",
                  std::string(what) + " directory does not exist: " + dir.string());
  }
  std::map<std::string, fs::path> stems;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file() || !is_raster_file(entry.path())) continue;
    const auto stem = entry.path().stem().string();
    if (!stems.emplace(stem, entry.path()).second) {
      throw InvalidArgument("duplicate-stem",
                            std::string(what) + " stem '" + stem +
                                "' appears with multiple extensions");
    }
  }
  return stems;
}

torch::Tensor image_to_tensor(const cv::Mat& rgb) {
  auto t = torch::from_blob(rgb.data, {rgb.rows, rgb.cols, 3}, torch::kUInt8);
  return t.permute({2, 0, 1}).to(torch::kFloat32).div(255.0f).contiguous();
}

Sample load_pair(const std::string& stem, const fs::path& image_path,
                 const fs::path& mask_path,
                 std::pair<std::int64_t, std::int64_t> target_hw) {
  cv::Mat bgr = cv::imread(image_path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) {
    throw IoError("unreadable-file", "cannot decode " + image_path.string());
  }
  cv::Mat gray = cv::imread(mask_path.string(), cv::IMREAD_GRAYSCALE);
  if (gray.empty()) {
    throw IoError("unreadable-file", "cannot decode " + mask_path.string());
  }
  const cv::Size target(static_cast<int>(target_hw.second),
                        static_cast<int>(target_hw.first));
  if (bgr.size() != target) cv::resize(bgr, bgr, target, 0, 0, cv::INTER_LINEAR);
  if (gray.size() != target) cv::resize(gray, gray, target, 0, 0, cv::INTER_NEAREST);
  cv::Mat rgb;
  cv::cvtColor(bgr, rgb, cv::COLOR_BGR2RGB);

  auto img = image_to_tensor(rgb).clamp(0.0f, 1.0f);
  auto mask_u8 = torch::from_blob(gray.data, {gray.rows, gray.cols}, torch::kUInt8);
  // Near-binary sources (e.g. JPEG-compressed masks) binarize at mid-scale.
  auto mask = (mask_u8 >= 128).to(torch::kFloat32).unsqueeze(0).contiguous();

  Sample s{stem, ImageTensor::unchecked(std::move(img)),
           MaskTensor::unchecked(std::move(mask))};
  validate_pair(s);
  return s;
}

}  // namespace

void SplitSpec::validate() const {
  if (!(train_frac > 0.0 && val_frac >= 0.0 && test_frac >= 0.0)) {
    throw InvalidArgument("invalid-config", "split fractions must be positive");
  }
  if (train_frac + val_frac + test_frac != 1.0) {
    throw InvalidArgument("invalid-config", "split fractions must sum to 1.0");
  }
}

Dataset load_dataset(const DatasetLayout& layout,
                     std::pair<std::int64_t, std::int64_t> target_hw,
                     std::string_view name) {
  const auto images = scan_stems(layout.images_dir, "images");
  const auto masks = scan_stems(layout.masks_dir, "masks");
  for (const auto& [stem, path] : images) {
    if (!masks.count(stem)) {
      throw InvalidArgument("unpaired-stem",
                            "image '" + stem + "' has no mask");
    }
  }
  for (const auto& [stem, path] : masks) {
    if (!images.count(stem)) {
      throw InvalidArgument("unpaired-stem",
                            "mask '" + stem + "' has no image");
    }
  }
  if (images.empty()) {
    throw InvalidArgument("empty-dataset",
                          "no raster files under " + layout.images_dir.string());
  }

  Dataset d;
  d.name = name.empty() ? layout.images_dir.parent_path().filename().string()
                        : std::string(name);
  d.samples.reserve(images.size());
  for (const auto& [stem, path] : images) {  // std::map iterates stems sorted
    d.samples.push_back(load_pair(stem, path, masks.at(stem), target_hw));
  }
  validate_dataset(d);
  return d;
}

DatasetSplits split_dataset(const Dataset& d, const SplitSpec& spec) {
  spec.validate();
  const auto n = d.samples.size();
  if (n < 3) {
    throw InvalidArgument("dataset-too-small",
                          "need at least 3 samples to split, got " +
                              std::to_string(n));
  }
  const auto perm = seeded_permutation(n, spec.seed);
  const auto n_train = static_cast<std::size_t>(
      std::floor(spec.train_frac * static_cast<double>(n)));
  const auto n_val = static_cast<std::size_t>(
      std::floor(spec.val_frac * static_cast<double>(n)));

  DatasetSplits splits;
  splits.train.name = d.name + "/train";
  splits.val.name = d.name + "/val";
  splits.test.name = d.name + "/test";
  for (std::size_t k = 0; k < n; ++k) {
    auto& target = k < n_train          ? splits.train
                   : k < n_train + n_val ? splits.val
                                         : splits.test;
    target.samples.push_back(d.samples[perm[k]]);
  }
  return splits;
}

Dataset synth_shapes(std::int64_t n,
                     std::pair<std::int64_t, std::int64_t> size,
                     std::uint64_t seed) {
  if (n < 1) {
    throw InvalidArgument("invalid-config", "sample count must be positive");
  }
  const auto [h, w] = size;
  if (h < 32 || w < 32) {
    throw InvalidArgument("invalid-config",
                          "synthetic images must be at least 32x32");
  }

  Dataset d;
  d.name = "synth";
  d.samples.reserve(static_cast<std::size_t>(n));
  const double min_side = static_cast<double>(std::min(h, w));

  for (std::int64_t i = 0; i < n; ++i) {
    SplitMix64 rng(seed_mix(seed, static_cast<std::uint64_t>(i)));

    struct Ellipse {
      double cx, cy, a, b, cos_t, sin_t;
    };
    std::vector<Ellipse> shapes;
    std::vector<float> mask(static_cast<std::size_t>(h * w), 0.0f);
    std::vector<float> blend(static_cast<std::size_t>(h * w), 0.0f);

    // Redraw the ellipse set until coverage lands in [1%, 60%].
    for (int attempt = 0; attempt < 64; ++attempt) {
      shapes.clear();
      const auto count = 1 + rng.uniform_int(3);
      for (std::uint64_t k = 0; k < count; ++k) {
        Ellipse e;
        e.cx = rng.uniform(0.20, 0.80) * static_cast<double>(w);
        e.cy = rng.uniform(0.20, 0.80) * static_cast<double>(h);
        e.a = rng.uniform(0.10, 0.25) * min_side;
        e.b = rng.uniform(0.10, 0.25) * min_side;
        const double theta = rng.uniform(0.0, std::numbers::pi);
        e.cos_t = std::cos(theta);
        e.sin_t = std::sin(theta);
        shapes.push_back(e);
      }
      std::int64_t positives = 0;
      for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
          double best_r2 = 1e30;
          for (const auto& e : shapes) {
            const double dx = static_cast<double>(x) - e.cx;
            const double dy = static_cast<double>(y) - e.cy;
            const double u = (dx * e.cos_t + dy * e.sin_t) / e.a;
            const double v = (-dx * e.sin_t + dy * e.cos_t) / e.b;
            best_r2 = std::min(best_r2, u * u + v * v);
          }
          const auto at = static_cast<std::size_t>(y * w + x);
          mask[at] = best_r2 <= 1.0 ? 1.0f : 0.0f;
          if (mask[at] > 0.0f) ++positives;
          // Soft interior-to-edge ramp for the rendered intensity only;
          // the mask itself stays hard.
          double ramp = (1.0 - best_r2) / 0.3;
          ramp = std::clamp(ramp, 0.0, 1.0);
          blend[at] = static_cast<float>(ramp * ramp * (3.0 - 2.0 * ramp));
        }
      }
      const double frac =
          static_cast<double>(positives) / static_cast<double>(h * w);
      if (frac >= 0.01 && frac <= 0.60) break;
      if (attempt == 63) {
        throw Error("synth-failed",
                    "could not draw a mask within coverage bounds");
      }
    }

    // Background: tinted base + two low-frequency sinusoid fields.
    const double base_gray = rng.uniform(0.25, 0.50);
    double base[3], delta[3];
    const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
    for (int c = 0; c < 3; ++c) {
      base[c] = base_gray + rng.uniform(-0.06, 0.06);
      delta[c] = sign * rng.uniform(0.20, 0.40);
    }
    const double amp1 = rng.uniform(0.04, 0.09);
    const double amp2 = rng.uniform(0.04, 0.09);
    const double fx1 = rng.uniform(0.5, 2.5), fy1 = rng.uniform(0.5, 2.5);
    const double fx2 = rng.uniform(0.5, 2.5), fy2 = rng.uniform(0.5, 2.5);
    const double ph1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double ph2 = rng.uniform(0.0, 2.0 * std::numbers::pi);

    auto img = torch::empty({3, h, w}, torch::kFloat32);
    auto img_acc = img.accessor<float, 3>();
    const double tau = 2.0 * std::numbers::pi;
    for (std::int64_t y = 0; y < h; ++y) {
      for (std::int64_t x = 0; x < w; ++x) {
        const double xn = static_cast<double>(x) / static_cast<double>(w);
        const double yn = static_cast<double>(y) / static_cast<double>(h);
        const double field =
            amp1 * std::sin(tau * (fx1 * xn + fy1 * yn) + ph1) +
            amp2 * std::sin(tau * (fx2 * xn - fy2 * yn) + ph2);
        const auto at = static_cast<std::size_t>(y * w + x);
        for (int c = 0; c < 3; ++c) {
          double v = base[c] + field + blend[at] * delta[c] +
                     rng.uniform(-0.025, 0.025);
          img_acc[c][y][x] = static_cast<float>(std::clamp(v, 0.0, 1.0));
        }
      }
    }

    auto mask_t = torch::from_blob(mask.data(), {1, h, w}, torch::kFloat32)
                      .clone();
    char id[32];
    std::snprintf(id, sizeof(id), "shape_%05lld", static_cast<long long>(i));
    Sample s{id, ImageTensor::unchecked(std::move(img)),
             MaskTensor::unchecked(std::move(mask_t))};
    validate_pair(s);
    d.samples.push_back(std::move(s));
  }
  validate_dataset(d);
  return d;
}

std::vector<ManifestEntry> manifest_entries(const DatasetSplits& splits) {
  std::vector<ManifestEntry> entries;
  entries.reserve(splits.train.size() + splits.val.size() + splits.test.size());
  for (const auto& s : splits.train.samples) entries.push_back({s.id, "train"});
  for (const auto& s : splits.val.samples) entries.push_back({s.id, "val"});
  for (const auto& s : splits.test.samples) entries.push_back({s.id, "test"});
  std::sort(entries.begin(), entries.end(),
            [](const auto& a, const auto& b) { return a.stem < b.stem; });
  return entries;
}

void write_dataset_png(const Dataset& d, const DatasetLayout& layout) {
  fs::create_directories(layout.images_dir);
  fs::create_directories(layout.masks_dir);
  for (const auto& s : d.samples) {
    const auto img =
        s.image.tensor().mul(255.0f).round().to(torch::kUInt8).permute({1, 2, 0})
            .contiguous();
    cv::Mat rgb(static_cast<int>(s.image.height()),
                static_cast<int>(s.image.width()), CV_8UC3,
                const_cast<void*>(img.const_data_ptr()));
    cv::Mat bgr;
    cv::cvtColor(rgb, bgr, cv::COLOR_RGB2BGR);
    if (!cv::imwrite((layout.images_dir / (s.id + ".png")).string(), bgr)) {
      throw IoError("io-error", "failed to write image for " + s.id);
    }
    const auto mask =
        s.mask.tensor().mul(255.0f).to(torch::kUInt8).squeeze(0).contiguous();
    cv::Mat gray(static_cast<int>(s.mask.height()),
                 static_cast<int>(s.mask.width()), CV_8UC1,
                 const_cast<void*>(mask.const_data_ptr()));
    if (!cv::imwrite((layout.masks_dir / (s.id + ".png")).string(), gray)) {
      throw IoError("io-error", "failed to write mask for " + s.id);
    }
  }
}

}  // namespace cris
