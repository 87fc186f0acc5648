#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "cris/types.hpp"

namespace cris {

/// 70/15/15 split driven by a seeded permutation. Counts follow the floor
/// rule: n_train = floor(0.70 N), n_val = floor(0.15 N), n_test = remainder,
/// so the test split is never starved by rounding.
struct SplitSpec {
  double train_frac = 0.70;
  double val_frac = 0.15;
  double test_frac = 0.15;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Directory pair with samples paired by identical filename stem.
struct DatasetLayout {
  std::filesystem::path images_dir;
  std::filesystem::path masks_dir;
};

struct DatasetSplits {
  Dataset train;
  Dataset val;
  Dataset test;
};

/// Loads an images/masks directory tree. Images are resized to target
/// (height, width) with bilinear interpolation and scaled to [0, 1]; masks
/// are resized with nearest-neighbor and binarized at 0.5. Samples are
/// ordered by stem so load order is stable across filesystems.
Dataset load_dataset(const DatasetLayout& layout,
                     std::pair<std::int64_t, std::int64_t> target_hw,
                     std::string_view name = "");

/// Seeded Fisher-Yates permutation (see rng.hpp), then contiguous
/// train/val/test slices. Identical (dataset, seed) inputs give identical
/// splits on every platform.
DatasetSplits split_dataset(const Dataset& d, const SplitSpec& spec);

/// Deterministic synthetic dataset: 1-3 filled, rotated ellipses with soft
/// edges and randomized tint over a textured, noisy background; the mask is
/// the exact analytic ellipse union. Sample i depends only on (seed, i).
/// Every mask covers between 1% and 60% of the image.
Dataset synth_shapes(std::int64_t n, std::pair<std::int64_t, std::int64_t> size,
                     std::uint64_t seed);

struct ManifestEntry {
  std::string stem;
  std::string split;  // "train" | "val" | "test"
};

/// (stem, split) assignments sorted by stem.
std::vector<ManifestEntry> manifest_entries(const DatasetSplits& splits);

/// Writes a dataset to disk as 8-bit PNG pairs in the given layout
/// (used to materialize synthetic datasets for the CLI).
void write_dataset_png(const Dataset& d, const DatasetLayout& layout);

}  // namespace cris
