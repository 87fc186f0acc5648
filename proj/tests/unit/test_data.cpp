#include <doctest.h>
#include <torch/torch.h>

#include <fstream>
#include <set>

#include "cris/data.hpp"
#include "cris/rng.hpp"
#include "helpers.hpp"

using namespace cris;

namespace {

// lightweight dataset of n distinct ids sharing one tiny tensor pair
Dataset dummy_dataset(std::size_t n) {
  Dataset d;
  d.name = "dummy";
  const auto img = ImageTensor::unchecked(torch::zeros({3, 16, 16}));
  const auto mask = MaskTensor::unchecked(torch::zeros({1, 16, 16}));
  d.samples.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    char id[16];
    std::snprintf(id, sizeof(id), "s%06zu", i);
    d.samples.push_back({id, img, mask});
  }
  return d;
}

std::set<std::string> ids_of(const Dataset& d) {
  std::set<std::string> ids;
  for (const auto& s : d.samples) ids.insert(s.id);
  return ids;
}

}  // namespace

TEST_SUITE("data") {

TEST_CASE("split spec validation") {
  CHECK_NOTHROW(SplitSpec{}.validate());
  SplitSpec bad;
  bad.train_frac = 0.8;
  CHECK_THROWS_AS(bad.validate(), InvalidArgument);
}

TEST_CASE("split counts follow the floor rule") {
  const auto s1000 = split_dataset(dummy_dataset(1000), SplitSpec{});
  CHECK(s1000.train.size() == 700);
  CHECK(s1000.val.size() == 150);
  CHECK(s1000.test.size() == 150);

  const auto s612 = split_dataset(dummy_dataset(612), SplitSpec{});
  CHECK(s612.train.size() == 428);
  CHECK(s612.val.size() == 91);
  CHECK(s612.test.size() == 93);

  CHECK_THROWS_AS(split_dataset(dummy_dataset(2), SplitSpec{}),
                  InvalidArgument);
}

TEST_CASE("splits are disjoint and exhaustive") {
  SplitMix64 rng(17);
  for (int rep = 0; rep < 10; ++rep) {
    const auto n = 3 + rng.uniform_int(400);
    const auto d = dummy_dataset(n);
    SplitSpec spec;
    spec.seed = rng.next_u64();
    const auto s = split_dataset(d, spec);
    CHECK(s.train.size() + s.val.size() + s.test.size() == n);
    auto all = ids_of(s.train);
    for (const auto& id : ids_of(s.val)) CHECK(all.insert(id).second);
    for (const auto& id : ids_of(s.test)) CHECK(all.insert(id).second);
    CHECK(all == ids_of(d));
  }
}

TEST_CASE("splits are seed-deterministic and seed-sensitive") {
  const auto d = dummy_dataset(100);
  auto order = [&](std::uint64_t seed) {
    SplitSpec spec;
    spec.seed = seed;
    const auto s = split_dataset(d, spec);
    std::vector<std::string> ids;
    for (const auto& x : s.train.samples) ids.push_back(x.id);
    for (const auto& x : s.val.samples) ids.push_back(x.id);
    for (const auto& x : s.test.samples) ids.push_back(x.id);
    return ids;
  };
  std::set<std::vector<std::string>> seen;
  for (const std::uint64_t seed : {1ULL, 2ULL, 3ULL, 4ULL, 5ULL}) {
    CHECK(order(seed) == order(seed));
    seen.insert(order(seed));
  }
  CHECK(seen.size() == 5);
}

TEST_CASE("synthetic shapes satisfy the generation contract") {
  const auto d = synth_shapes(40, {64, 64}, 1);
  CHECK(d.size() == 40);
  for (const auto& s : d.samples) {
    CHECK_NOTHROW(validate_pair(s));
    const double frac =
        static_cast<double>(s.mask.positive_count()) / (64.0 * 64.0);
    CHECK(frac >= 0.01);
    CHECK(frac <= 0.60);
  }
}

TEST_CASE("synthetic shapes are bit-reproducible") {
  const auto a = synth_shapes(6, {32, 32}, 42);
  const auto b = synth_shapes(6, {32, 32}, 42);
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    CHECK(a.samples[i].id == b.samples[i].id);
    CHECK(test::bitwise_equal(a.samples[i].image.tensor(),
                              b.samples[i].image.tensor()));
    CHECK(test::bitwise_equal(a.samples[i].mask.tensor(),
                              b.samples[i].mask.tensor()));
  }
  // sample i depends only on (seed, i), not on n
  const auto longer = synth_shapes(8, {32, 32}, 42);
  CHECK(test::bitwise_equal(longer.samples[3].image.tensor(),
                            a.samples[3].image.tensor()));

  const auto other_seed = synth_shapes(6, {32, 32}, 43);
  CHECK_FALSE(torch::equal(other_seed.samples[0].image.tensor(),
                           a.samples[0].image.tensor()));
}

TEST_CASE("synthetic shapes input validation") {
  CHECK_THROWS_AS(synth_shapes(0, {64, 64}, 1), InvalidArgument);
  CHECK_THROWS_AS(synth_shapes(4, {16, 16}, 1), InvalidArgument);
}

TEST_CASE("png round trip through the directory loader") {
  test::TempDir tmp;
  const auto generated = synth_shapes(8, {64, 64}, 7);
  const DatasetLayout layout{tmp.path() / "images", tmp.path() / "masks"};
  write_dataset_png(generated, layout);

  const auto loaded = load_dataset(layout, {64, 64}, "roundtrip");
  REQUIRE(loaded.size() == 8);
  for (std::size_t i = 0; i < loaded.samples.size(); ++i) {
    CHECK(loaded.samples[i].id == generated.samples[i].id);
    CHECK_NOTHROW(validate_pair(loaded.samples[i]));
    // masks survive the 8-bit round trip exactly
    CHECK(test::bitwise_equal(loaded.samples[i].mask.tensor(),
                              generated.samples[i].mask.tensor()));
    // images survive up to 8-bit quantization
    CHECK((loaded.samples[i].image.tensor() - generated.samples[i].image.tensor())
              .abs()
              .max()
              .item<float>() <= 0.5f / 255.0f + 1e-6f);
  }
}

TEST_CASE("loader resizes with mask values kept binary") {
  test::TempDir tmp;
  const auto generated = synth_shapes(3, {64, 64}, 9);
  const DatasetLayout layout{tmp.path() / "images", tmp.path() / "masks"};
  write_dataset_png(generated, layout);

  const auto resized = load_dataset(layout, {48, 48}, "resized");
  for (const auto& s : resized.samples) {
    CHECK(s.image.height() == 48);
    CHECK(s.image.width() == 48);
    CHECK_NOTHROW(validate_pair(s));
  }
}

TEST_CASE("loader failure modes") {
  test::TempDir tmp;
  const auto generated = synth_shapes(3, {64, 64}, 11);
  const DatasetLayout layout{tmp.path() / "images", tmp.path() / "masks"};
  write_dataset_png(generated, layout);

  SUBCASE("unpaired stem is reported by name") {
    std::filesystem::remove(layout.masks_dir / "shape_00001.png");
    try {
      load_dataset(layout, {64, 64});
      FAIL("expected unpaired-stem");
    } catch (const Error& e) {
      CHECK(e.code() == "unpaired-stem");
      CHECK(std::string(e.what()).find("shape_00001") != std::string::npos);
    }
  }

  SUBCASE("extra mask is also unpaired") {
    std::ofstream(layout.masks_dir / "stray.png") << "not a real png";
    try {
      load_dataset(layout, {64, 64});
      FAIL("expected unpaired-stem");
    } catch (const Error& e) {
      CHECK(e.code() == "unpaired-stem");
    }
  }

  SUBCASE("undecodable file") {
    std::ofstream(layout.images_dir / "shape_00000.png", std::ios::trunc)
        << "garbage";
    try {
      load_dataset(layout, {64, 64});
      FAIL("expected unreadable-file");
    } catch (const Error& e) {
      CHECK(e.code() == "unreadable-file");
    }
  }

  SUBCASE("duplicate stems across extensions") {
    std::ofstream(layout.images_dir / "shape_00000.jpg") << "x";
    try {
      load_dataset(layout, {64, 64});
      FAIL("expected duplicate-stem");
    } catch (const Error& e) {
      CHECK(e.code() == "duplicate-stem");
    }
  }

  SUBCASE("empty directories") {
    std::filesystem::remove_all(layout.images_dir);
    std::filesystem::create_directories(layout.images_dir);
    std::filesystem::remove_all(layout.masks_dir);
    std::filesystem::create_directories(layout.masks_dir);
    try {
      load_dataset(layout, {64, 64});
      FAIL("expected empty-dataset");
    } catch (const Error& e) {
      CHECK(e.code() == "empty-dataset");
    }
  }

  SUBCASE("missing directory") {
    CHECK_THROWS_AS(load_dataset({tmp.path() / "nope", layout.masks_dir}, {64, 64}),
                    IoError);
  }
}

TEST_CASE("manifest entries are sorted by stem") {
  const auto d = synth_shapes(10, {32, 32}, 3);
  SplitSpec spec;
  spec.seed = 4;
  const auto entries = manifest_entries(split_dataset(d, spec));
  REQUIRE(entries.size() == 10);
  for (std::size_t i = 1; i < entries.size(); ++i) {
    CHECK(entries[i - 1].stem < entries[i].stem);
  }
  std::set<std::string> splits;
  for (const auto& e : entries) splits.insert(e.split);
  CHECK(splits == std::set<std::string>{"train", "val", "test"});
}

}  // TEST_SUITE
