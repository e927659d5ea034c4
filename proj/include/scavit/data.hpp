#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "scavit/rng.hpp"
#include "scavit/tensor.hpp"

namespace scavit {

/// Grayscale image [H, W] in [0, 1] with label 0 (non-tumor) or 1 (tumor).
struct Sample {
  Tensor image;
  int label = 0;
};

/// Parameters of the synthetic "brain scan" generator. Radii are fractions of
/// the image size.
struct SyntheticSpec {
  std::size_t n_samples = 400;
  std::size_t image_size = 32;
  double positive_fraction = 0.5;
  double noise_sigma = 0.04;
  double background = 0.05;
  double brain_intensity_min = 0.35;
  double brain_intensity_max = 0.5;
  double brain_radius_min = 0.30;
  double brain_radius_max = 0.42;
  double lesion_radius_min = 0.08;
  double lesion_radius_max = 0.14;
  double lesion_intensity_min = 0.85;
  double lesion_intensity_max = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Renders sample `index` of the stream described by `spec`. The geometry,
/// texture and noise depend only on (seed, index), so the same index rendered
/// with and without the lesion differs only inside the lesion mask.
Sample render_synthetic(const SyntheticSpec& spec, std::size_t index, bool with_lesion);

/// Exactly round(n * positive_fraction) positives, label order shuffled by
/// the seed. Deterministic.
std::vector<Sample> generate_synthetic(const SyntheticSpec& spec);

struct DatasetEntry {
  std::string path;  ///< relative to the dataset root
  int label = 0;
};

struct DatasetManifest {
  std::filesystem::path root;
  std::vector<DatasetEntry> entries;
  std::string format = "pgm-p5";
};

struct Dataset {
  DatasetManifest manifest;
  std::vector<Sample> samples;
};

/// Reads `root/labels.csv` (header `path,label`) and the referenced binary
/// PGM (P5) files, scaling pixels to [0, 1] and resizing with nearest
/// neighbour to `image_size` when they differ.
Dataset load_dataset(const std::filesystem::path& root, std::size_t image_size);

/// Writes samples as `img_NNNNN.pgm` files plus `labels.csv`.
void write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples);

Tensor read_pgm(const std::filesystem::path& path);
void write_pgm(const std::filesystem::path& path, const Tensor& image);
Tensor resize_nearest(const Tensor& image, std::size_t size);

/// Stratified, seeded train/validation split.
std::pair<std::vector<Sample>, std::vector<Sample>> split(const std::vector<Sample>& samples,
                                                          double val_fraction, std::uint64_t seed);

/// Stacks images into [B, H, W] and collects their labels.
std::pair<Tensor, std::vector<int>> make_batch(const std::vector<Sample>& samples,
                                               std::size_t begin, std::size_t end);

}  // namespace scavit
