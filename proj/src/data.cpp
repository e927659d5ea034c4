#include "scavit/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "scavit/errors.hpp"

namespace scavit {

void SyntheticSpec::validate() const {
  if (image_size < 8) throw DatasetError("synthetic image_size must be at least 8");
  if (!(positive_fraction >= 0.0 && positive_fraction <= 1.0)) {
    throw DatasetError("positive_fraction must be in [0, 1]");
  }
  if (noise_sigma < 0.0) throw DatasetError("noise_sigma must be non-negative");
  if (!(brain_radius_min > 0.0 && brain_radius_min <= brain_radius_max && brain_radius_max < 0.5)) {
    throw DatasetError("brain radii must satisfy 0 < min <= max < 0.5");
  }
  if (!(lesion_radius_min > 0.0 && lesion_radius_min <= lesion_radius_max)) {
    throw DatasetError("lesion radii must satisfy 0 < min <= max");
  }
  if (lesion_radius_max >= brain_radius_min) {
    throw DatasetError("lesion cannot fit: lesion_radius_max must be below brain_radius_min");
  }
  for (double v : {background, brain_intensity_min, brain_intensity_max, lesion_intensity_min,
                   lesion_intensity_max}) {
    if (!(v >= 0.0 && v <= 1.0)) throw DatasetError("intensities must lie in [0, 1]");
  }
}

namespace {

struct Ellipse {
  double cx, cy, rx, ry, angle;

  // <= 1 inside.
  double level(double x, double y) const {
    const double c = std::cos(angle), s = std::sin(angle);
    const double dx = x - cx, dy = y - cy;
    const double u = (c * dx + s * dy) / rx;
    const double v = (-s * dx + c * dy) / ry;
    return u * u + v * v;
  }
};

}  // namespace

Sample render_synthetic(const SyntheticSpec& spec, std::size_t index, bool with_lesion) {
  spec.validate();
  Rng rng(spec.seed, index + 1);
  const double size = static_cast<double>(spec.image_size);
  const double mid = size / 2.0;

  Ellipse brain{mid + rng.uniform(-0.04, 0.04) * size, mid + rng.uniform(-0.04, 0.04) * size,
                rng.uniform(spec.brain_radius_min, spec.brain_radius_max) * size,
                rng.uniform(spec.brain_radius_min, spec.brain_radius_max) * size,
                rng.uniform(0.0, std::numbers::pi)};
  const double brain_level = rng.uniform(spec.brain_intensity_min, spec.brain_intensity_max);

  // Low-frequency tissue texture: a few soft bumps inside the brain.
  struct Bump {
    double x, y, sigma, amp;
  };
  std::vector<Bump> bumps(3);
  for (Bump& b : bumps) {
    b.x = brain.cx + rng.uniform(-0.5, 0.5) * brain.rx;
    b.y = brain.cy + rng.uniform(-0.5, 0.5) * brain.ry;
    b.sigma = rng.uniform(0.08, 0.18) * size;
    b.amp = rng.uniform(-0.08, 0.08);
  }

  // The lesion lives inside the disc of radius min(rx, ry) - r around the
  // brain centre, so it always fits.
  const double lesion_r = rng.uniform(spec.lesion_radius_min, spec.lesion_radius_max) * size;
  const double lesion_aspect = rng.uniform(0.7, 1.0);
  const double reach = std::max(0.0, std::min(brain.rx, brain.ry) - lesion_r);
  const double dist = reach * std::sqrt(rng.uniform());
  const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
  Ellipse lesion{brain.cx + dist * std::cos(theta), brain.cy + dist * std::sin(theta), lesion_r,
                 lesion_r * lesion_aspect, rng.uniform(0.0, std::numbers::pi)};
  const double lesion_level = rng.uniform(spec.lesion_intensity_min, spec.lesion_intensity_max);

  std::vector<double> px(spec.image_size * spec.image_size);
  for (std::size_t y = 0; y < spec.image_size; ++y) {
    for (std::size_t x = 0; x < spec.image_size; ++x) {
      const double fx = static_cast<double>(x) + 0.5, fy = static_cast<double>(y) + 0.5;
      double v = spec.background;
      if (brain.level(fx, fy) <= 1.0) {
        v = brain_level;
        for (const Bump& b : bumps) {
          const double d2 = (fx - b.x) * (fx - b.x) + (fy - b.y) * (fy - b.y);
          v += b.amp * std::exp(-d2 / (2.0 * b.sigma * b.sigma));
        }
      }
      if (with_lesion && lesion.level(fx, fy) <= 1.0) v = lesion_level;
      const double noise = rng.normal() * spec.noise_sigma;
      px[y * spec.image_size + x] = std::clamp(v + noise, 0.0, 1.0);
    }
  }
  return {Tensor({spec.image_size, spec.image_size}, std::move(px)), with_lesion ? 1 : 0};
}

std::vector<Sample> generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  const auto positives = static_cast<std::size_t>(
      std::llround(static_cast<double>(spec.n_samples) * spec.positive_fraction));
  std::vector<int> labels(spec.n_samples, 0);
  std::fill_n(labels.begin(), positives, 1);
  Rng shuffle_rng(spec.seed, 0);
  for (std::size_t i = labels.size(); i > 1; --i) {
    std::swap(labels[i - 1], labels[shuffle_rng.below(i)]);
  }
  std::vector<Sample> samples;
  samples.reserve(spec.n_samples);
  for (std::size_t i = 0; i < spec.n_samples; ++i) {
    samples.push_back(render_synthetic(spec, i, labels[i] == 1));
  }
  return samples;
}

Tensor resize_nearest(const Tensor& image, std::size_t size) {
  const std::size_t h = image.dim(0), w = image.dim(1);
  if (h == size && w == size) return image;
  std::vector<double> out(size * size);
  for (std::size_t y = 0; y < size; ++y) {
    const std::size_t sy = y * h / size;
    for (std::size_t x = 0; x < size; ++x) out[y * size + x] = image.at(sy, x * w / size);
  }
  return Tensor({size, size}, std::move(out));
}

namespace {

// Next whitespace-delimited header token, skipping '#' comments.
std::string pgm_token(const std::string& bytes, std::size_t& pos, const std::string& name) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw DatasetError(name + ": truncated PGM header");
  return bytes.substr(start, pos - start);
}

std::size_t pgm_number(const std::string& token, const std::string& name) {
  if (token.empty() || !std::all_of(token.begin(), token.end(), ::isdigit) || token.size() > 9) {
    throw DatasetError(name + ": malformed PGM header field '" + token + "'");
  }
  return static_cast<std::size_t>(std::stoul(token));
}

}  // namespace

Tensor read_pgm(const std::filesystem::path& path) {
  const std::string name = path.string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DatasetError(name + ": cannot open image file");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '5') {
    throw DatasetError(name + ": bad magic, expected binary PGM 'P5'");
  }
  std::size_t pos = 2;
  const std::size_t width = pgm_number(pgm_token(bytes, pos, name), name);
  const std::size_t height = pgm_number(pgm_token(bytes, pos, name), name);
  const std::size_t maxval = pgm_number(pgm_token(bytes, pos, name), name);
  if (width == 0 || height == 0) throw DatasetError(name + ": zero image dimension");
  if (maxval == 0 || maxval > 255) {
    throw DatasetError(name + ": only 8-bit PGM is supported (maxval " + std::to_string(maxval) +
                       ")");
  }
  if (pos >= bytes.size()) throw DatasetError(name + ": truncated pixel data");
  ++pos;  // single whitespace after maxval
  if (bytes.size() - pos < width * height) {
    throw DatasetError(name + ": truncated pixel data (" + std::to_string(bytes.size() - pos) +
                       " of " + std::to_string(width * height) + " bytes)");
  }
  std::vector<double> px(width * height);
  for (std::size_t i = 0; i < px.size(); ++i) {
    px[i] = static_cast<double>(static_cast<unsigned char>(bytes[pos + i])) /
            static_cast<double>(maxval);
  }
  return Tensor({height, width}, std::move(px));
}

void write_pgm(const std::filesystem::path& path, const Tensor& image) {
  if (image.rank() != 2) throw ShapeError("write_pgm expects an [H, W] image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DatasetError(path.string() + ": cannot open for writing");
  out << "P5\n" << image.dim(1) << ' ' << image.dim(0) << "\n255\n";
  std::string data(image.numel(), '\0');
  for (std::size_t i = 0; i < image.numel(); ++i) {
    const double v = std::clamp(image[i], 0.0, 1.0);
    data[i] = static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0)));
  }
  out.write(data.data(), static_cast<std::streamsize>(data.size()));
  if (!out) throw DatasetError(path.string() + ": write failed");
}

Dataset load_dataset(const std::filesystem::path& root, std::size_t image_size) {
  const auto csv_path = root / "labels.csv";
  const std::string csv_name = csv_path.string();
  std::ifstream in(csv_path);
  if (!in) throw DatasetError(csv_name + ": missing labels file");
  Dataset ds;
  ds.manifest.root = root;
  std::string line;
  std::size_t line_no = 0;
  bool header_seen = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!header_seen) {
      if (line != "path,label") {
        throw DatasetError(csv_name + ":" + std::to_string(line_no) +
                           ": expected header 'path,label'");
      }
      header_seen = true;
      continue;
    }
    if (line.empty()) continue;
    const auto comma = line.rfind(',');
    if (comma == std::string::npos || comma == 0) {
      throw DatasetError(csv_name + ":" + std::to_string(line_no) + ": bad row '" + line + "'");
    }
    const std::string rel = line.substr(0, comma);
    const std::string label_text = line.substr(comma + 1);
    if (label_text != "0" && label_text != "1") {
      throw DatasetError(csv_name + ":" + std::to_string(line_no) + ": label '" + label_text +
                         "' not in {0,1}");
    }
    const int label = label_text == "1" ? 1 : 0;
    const auto image_path = root / rel;
    if (!std::filesystem::exists(image_path)) {
      throw DatasetError(csv_name + ":" + std::to_string(line_no) + ": missing image file " +
                         image_path.string());
    }
    ds.manifest.entries.push_back({rel, label});
    ds.samples.push_back({resize_nearest(read_pgm(image_path), image_size), label});
  }
  if (!header_seen) throw DatasetError(csv_name + ": empty labels file");
  return ds;
}

void write_dataset(const std::filesystem::path& root, const std::vector<Sample>& samples) {
  std::filesystem::create_directories(root);
  std::ofstream csv(root / "labels.csv", std::ios::binary);
  if (!csv) throw DatasetError((root / "labels.csv").string() + ": cannot open for writing");
  csv << "path,label\n";
  for (std::size_t i = 0; i < samples.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof(name), "img_%05zu.pgm", i);
    write_pgm(root / name, samples[i].image);
    csv << name << ',' << samples[i].label << '\n';
  }
}

std::pair<std::vector<Sample>, std::vector<Sample>> split(const std::vector<Sample>& samples,
                                                          double val_fraction, std::uint64_t seed) {
  if (!(val_fraction > 0.0 && val_fraction < 1.0)) {
    throw ValueError("val_fraction must be in (0, 1)");
  }
  std::vector<bool> is_val(samples.size(), false);
  for (int label : {0, 1}) {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (samples[i].label == label) idx.push_back(i);
    Rng rng(seed, 0x5eed0000u + static_cast<std::uint64_t>(label));
    for (std::size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[rng.below(i)]);
    const auto n_val =
        static_cast<std::size_t>(std::llround(static_cast<double>(idx.size()) * val_fraction));
    for (std::size_t i = 0; i < n_val; ++i) is_val[idx[i]] = true;
  }
  std::pair<std::vector<Sample>, std::vector<Sample>> out;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    (is_val[i] ? out.second : out.first).push_back(samples[i]);
  }
  if (out.first.empty() || out.second.empty()) {
    throw DatasetError("too few samples (" + std::to_string(samples.size()) +
                       ") for a train/validation split at fraction " +
                       std::to_string(val_fraction));
  }
  return out;
}

std::pair<Tensor, std::vector<int>> make_batch(const std::vector<Sample>& samples,
                                               std::size_t begin, std::size_t end) {
  if (begin >= end || end > samples.size()) throw ValueError("make_batch: bad range");
  const Shape& shape = samples[begin].image.shape();
  std::vector<double> px;
  px.reserve((end - begin) * samples[begin].image.numel());
  std::vector<int> labels;
  for (std::size_t i = begin; i < end; ++i) {
    if (samples[i].image.shape() != shape) throw ShapeError("make_batch: mixed image sizes");
    px.insert(px.end(), samples[i].image.values().begin(), samples[i].image.values().end());
    labels.push_back(samples[i].label);
  }
  return {Tensor::unchecked({end - begin, shape[0], shape[1]}, std::move(px)), std::move(labels)};
}

}  // namespace scavit
