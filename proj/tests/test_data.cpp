#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <numbers>
#include <set>

#include "scavit/data.hpp"
#include "scavit/errors.hpp"

using namespace scavit;
namespace fs = std::filesystem;

namespace {

const fs::path kFixtures = SCAVIT_FIXTURE_DIR;

std::string load_error(const fs::path& root) {
  try {
    load_dataset(root, 4);
  } catch (const DatasetError& e) {
    return e.what();
  }
  return "";
}

}  // namespace

TEST(Synthetic, ExactClassCounts) {
  SyntheticSpec spec;
  spec.n_samples = 10;
  const auto samples = generate_synthetic(spec);
  ASSERT_EQ(samples.size(), 10u);
  int pos = 0;
  for (const Sample& s : samples) pos += s.label;
  EXPECT_EQ(pos, 5);
  spec.n_samples = 7;
  spec.positive_fraction = 0.3;
  pos = 0;
  for (const Sample& s : generate_synthetic(spec)) pos += s.label;
  EXPECT_EQ(pos, 2);
}

TEST(Synthetic, SameSeedIsBitIdentical) {
  SyntheticSpec spec;
  spec.n_samples = 6;
  spec.seed = 7;
  const auto a = generate_synthetic(spec), b = generate_synthetic(spec);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].label, b[i].label);
    EXPECT_TRUE(std::ranges::equal(a[i].image.values(), b[i].image.values()));
  }
  spec.seed = 8;
  EXPECT_FALSE(std::ranges::equal(generate_synthetic(spec)[0].image.values(), a[0].image.values()));
}

TEST(Synthetic, LesionPairDiffersOnlyInsideTheLesion) {
  SyntheticSpec spec;
  spec.noise_sigma = 0.0;
  spec.lesion_intensity_min = 1.0;
  spec.lesion_intensity_max = 1.0;
  for (std::size_t index = 0; index < 20; ++index) {
    const Sample pos = render_synthetic(spec, index, true);
    const Sample neg = render_synthetic(spec, index, false);
    EXPECT_EQ(pos.label, 1);
    EXPECT_EQ(neg.label, 0);
    std::size_t changed = 0;
    for (std::size_t i = 0; i < pos.image.numel(); ++i) {
      if (pos.image[i] == neg.image[i]) continue;
      ++changed;
      EXPECT_EQ(pos.image[i], 1.0);
      EXPECT_LT(neg.image[i], 1.0);
    }
    const double r = spec.lesion_radius_max * static_cast<double>(spec.image_size);
    EXPECT_GT(changed, 0u);
    EXPECT_LE(static_cast<double>(changed), std::numbers::pi * (r + 1) * (r + 1));
  }
}

TEST(Synthetic, EveryImageIsInRangeAndSized) {
  SyntheticSpec spec;
  spec.n_samples = 1000;
  spec.image_size = 16;
  spec.noise_sigma = 0.2;
  for (const Sample& s : generate_synthetic(spec)) {
    ASSERT_EQ(s.image.shape(), (Shape{16, 16}));
    ASSERT_TRUE(s.label == 0 || s.label == 1);
    for (double v : s.image.values()) {
      ASSERT_GE(v, 0.0);
      ASSERT_LE(v, 1.0);
    }
  }
}

TEST(Synthetic, InvalidSpecs) {
  SyntheticSpec spec;
  spec.lesion_radius_max = 0.35;
  EXPECT_THROW(generate_synthetic(spec), DatasetError);
  spec = {};
  spec.positive_fraction = 1.5;
  EXPECT_THROW(generate_synthetic(spec), DatasetError);
}

TEST(Pgm, RoundTripWithinQuantization) {
  SyntheticSpec spec;
  const Sample s = render_synthetic(spec, 3, true);
  const fs::path dir = fs::temp_directory_path() / "scavit_pgm_roundtrip";
  fs::create_directories(dir);
  write_pgm(dir / "x.pgm", s.image);
  const Tensor back = read_pgm(dir / "x.pgm");
  ASSERT_EQ(back.shape(), s.image.shape());
  for (std::size_t i = 0; i < back.numel(); ++i) {
    EXPECT_LE(std::fabs(back[i] - s.image[i]), 1.0 / 255.0);
  }
}

TEST(Pgm, ResizeNearestPicksSourcePixels) {
  const Tensor src({2, 2}, {0.1, 0.2, 0.3, 0.4});
  const Tensor up = resize_nearest(src, 4);
  EXPECT_EQ(up.at(0, 0), 0.1);
  EXPECT_EQ(up.at(1, 1), 0.1);
  EXPECT_EQ(up.at(0, 3), 0.2);
  EXPECT_EQ(up.at(3, 0), 0.3);
  EXPECT_EQ(up.at(2, 2), 0.4);
}

TEST(Dataset, TwoImageFixture) {
  const Dataset ds = load_dataset(kFixtures / "two_images", 4);
  ASSERT_EQ(ds.samples.size(), 2u);
  EXPECT_EQ(ds.samples[0].label, 1);
  EXPECT_EQ(ds.samples[1].label, 0);
  EXPECT_EQ(ds.manifest.entries[0].path, "a.pgm");
  EXPECT_EQ(ds.samples[0].image.at(0, 1), 17.0 / 255.0);
  EXPECT_EQ(ds.samples[1].image.at(3, 3), 0.0);
  const Dataset big = load_dataset(kFixtures / "two_images", 8);
  EXPECT_EQ(big.samples[0].image.shape(), (Shape{8, 8}));
}

TEST(Dataset, BrokenCorpusGivesDistinctErrors) {
  const std::vector<std::pair<std::string, std::string>> cases{
      {"bad_magic", "bad magic"},    {"short_file", "truncated pixel data"},
      {"bad_label", "not in {0,1}"}, {"missing_file", "missing image file"},
      {"bad_row", "bad row"},
  };
  std::set<std::string> messages;
  for (const auto& [dir, fragment] : cases) {
    const std::string msg = load_error(kFixtures / "broken" / dir);
    EXPECT_NE(msg.find(fragment), std::string::npos) << dir << ": " << msg;
    messages.insert(msg);
  }
  EXPECT_EQ(messages.size(), cases.size());
  EXPECT_NE(load_error(kFixtures / "broken" / "missing_file").find("nothere.pgm"),
            std::string::npos);
  EXPECT_NE(load_error(kFixtures / "broken" / "bad_label").find("labels.csv:3"), std::string::npos);
  EXPECT_NE(load_error(kFixtures / "broken" / "bad_magic").find("x.pgm"), std::string::npos);
  EXPECT_THROW(load_dataset(kFixtures / "nowhere", 4), DatasetError);
}

TEST(Split, StratifiedAndSeeded) {
  SyntheticSpec spec;
  spec.n_samples = 10;
  spec.image_size = 8;
  const auto samples = generate_synthetic(spec);
  const auto [train, val] = split(samples, 0.2, 4);
  EXPECT_EQ(train.size(), 8u);
  ASSERT_EQ(val.size(), 2u);
  EXPECT_EQ(val[0].label + val[1].label, 1);
  const auto [train2, val2] = split(samples, 0.2, 4);
  for (std::size_t i = 0; i < 2; ++i)
    EXPECT_TRUE(std::ranges::equal(val[i].image.values(), val2[i].image.values()));
  EXPECT_THROW(split(samples, 0.0, 4), ValueError);
  EXPECT_THROW(split({samples[0]}, 0.2, 4), DatasetError);
}

TEST(Split, ClassRatioWithinOneSample) {
  SyntheticSpec spec;
  spec.n_samples = 97;
  spec.image_size = 8;
  spec.positive_fraction = 0.3;
  const auto samples = generate_synthetic(spec);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto [train, val] = split(samples, 0.25, seed);
    EXPECT_EQ(train.size() + val.size(), samples.size());
    double pos = 0;
    for (const Sample& s : val) pos += s.label;
    EXPECT_LE(std::fabs(pos - 0.3 * static_cast<double>(val.size())), 1.0);
  }
}

TEST(Batch, StacksImages) {
  SyntheticSpec spec;
  spec.n_samples = 5;
  spec.image_size = 8;
  const auto samples = generate_synthetic(spec);
  const auto [images, labels] = make_batch(samples, 1, 4);
  EXPECT_EQ(images.shape(), (Shape{3, 8, 8}));
  EXPECT_EQ(labels, (std::vector<int>{samples[1].label, samples[2].label, samples[3].label}));
  EXPECT_EQ(images[64], samples[2].image[0]);
  EXPECT_THROW(make_batch(samples, 3, 3), ValueError);
}
