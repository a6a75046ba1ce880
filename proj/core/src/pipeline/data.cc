// Copyright 2026 The fedval Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#include "fedval/pipeline/data.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <vector>

#include "fedval/util/errors.h"
#include "fedval/util/rng.h"

namespace fedval {
namespace {

constexpr std::uint32_t kIdxImagesMagic = 0x00000803;
constexpr std::uint32_t kIdxLabelsMagic = 0x00000801;
constexpr std::size_t kCifarRecord = 3073;

std::vector<unsigned char> ReadAll(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open '" + path + "'");
  return std::vector<unsigned char>(std::istreambuf_iterator<char>(in), {});
}

std::uint32_t BigEndian32(const std::vector<unsigned char>& b,
                          std::size_t offset, const std::string& path) {
  if (b.size() < offset + 4) {
    throw IoError("'" + path + "' is truncated in its header");
  }
  return (std::uint32_t{b[offset]} << 24) | (std::uint32_t{b[offset + 1]} << 16) |
         (std::uint32_t{b[offset + 2]} << 8) | std::uint32_t{b[offset + 3]};
}

std::string Hex(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "0x%08X", v);
  return buf;
}

void CheckMagic(std::uint32_t actual, std::uint32_t expected,
                const std::string& path) {
  if (actual != expected) {
    throw IoError("'" + path + "': bad IDX magic " + Hex(actual) +
                  ", expected " + Hex(expected));
  }
}

}  // namespace

Dataset LoadIdx(const std::string& images_path,
                const std::string& labels_path) {
  const std::vector<unsigned char> img = ReadAll(images_path);
  const std::vector<unsigned char> lab = ReadAll(labels_path);
  CheckMagic(BigEndian32(img, 0, images_path), kIdxImagesMagic, images_path);
  CheckMagic(BigEndian32(lab, 0, labels_path), kIdxLabelsMagic, labels_path);
  const std::size_t n = BigEndian32(img, 4, images_path);
  const std::size_t rows = BigEndian32(img, 8, images_path);
  const std::size_t cols = BigEndian32(img, 12, images_path);
  const std::size_t n_labels = BigEndian32(lab, 4, labels_path);
  if (n != n_labels) {
    throw IoError("IDX count mismatch: " + std::to_string(n) + " images in '" +
                  images_path + "' but " + std::to_string(n_labels) +
                  " labels in '" + labels_path + "'");
  }
  if (rows == 0 || cols == 0) {
    throw IoError("'" + images_path + "': zero image dimension");
  }
  const std::size_t plane = rows * cols;
  if (img.size() != 16 + n * plane) {
    throw IoError("'" + images_path + "' holds " +
                  std::to_string(img.size() - 16) + " pixel bytes, expected " +
                  std::to_string(n * plane));
  }
  if (lab.size() != 8 + n) {
    throw IoError("'" + labels_path + "' holds " +
                  std::to_string(lab.size() - 8) + " label bytes, expected " +
                  std::to_string(n));
  }
  Dataset d;
  d.input_shape = {1, rows, cols};
  std::size_t max_label = 0;
  for (std::size_t i = 0; i < n; ++i) {
    Sample s;
    s.id = i;
    s.label = lab[8 + i];
    max_label = std::max(max_label, s.label);
    std::vector<double> px(plane);
    for (std::size_t p = 0; p < plane; ++p) {
      px[p] = img[16 + i * plane + p] / 255.0;
    }
    s.image = MakeTensorUnchecked(d.input_shape, std::move(px));
    d.samples.push_back(std::move(s));
  }
  d.num_classes = n == 0 ? 0 : max_label + 1;
  return d;
}

Dataset LoadCifarBin(const std::string& path) {
  const std::vector<unsigned char> bytes = ReadAll(path);
  if (bytes.size() % kCifarRecord != 0) {
    throw IoError("'" + path + "' has length " + std::to_string(bytes.size()) +
                  ", not a multiple of " + std::to_string(kCifarRecord));
  }
  Dataset d;
  d.input_shape = {3, 32, 32};
  d.num_classes = 10;
  const std::size_t n = bytes.size() / kCifarRecord;
  for (std::size_t i = 0; i < n; ++i) {
    const unsigned char* rec = bytes.data() + i * kCifarRecord;
    if (rec[0] >= 10) {
      throw IoError("'" + path + "' record " + std::to_string(i) +
                    " has label " + std::to_string(rec[0]) + " >= 10");
    }
    Sample s;
    s.id = i;
    s.label = rec[0];
    std::vector<double> px(3072);
    for (std::size_t p = 0; p < 3072; ++p) px[p] = rec[1 + p] / 255.0;
    s.image = MakeTensorUnchecked(d.input_shape, std::move(px));
    d.samples.push_back(std::move(s));
  }
  return d;
}

Dataset SynthDataset(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.classes < 2) throw ConfigError("synthetic data needs >= 2 classes");
  if (spec.image_size < 2 || spec.channels < 1) {
    throw ConfigError("synthetic image size must be >= 2 with >= 1 channel");
  }
  if (!(spec.atypical_fraction >= 0.0 && spec.atypical_fraction <= 1.0)) {
    throw ConfigError("atypical fraction must lie in [0, 1]");
  }
  if (!(spec.label_noise >= 0.0 && spec.label_noise <= 1.0)) {
    throw ConfigError("label noise must lie in [0, 1]");
  }
  Rng rng = MakeRng(seed, "synthetic");
  const double size = static_cast<double>(spec.image_size);
  std::uniform_real_distribution<double> where(0.2 * size, 0.8 * size);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * M_PI);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<std::pair<double, double>> centers;
  for (std::size_t c = 0; c < spec.classes; ++c) {
    std::pair<double, double> best;
    for (int attempt = 0; attempt < 1000; ++attempt) {
      best = {where(rng), where(rng)};
      bool far = true;
      for (const auto& o : centers) {
        far &= std::hypot(best.first - o.first, best.second - o.second) >=
               spec.min_center_distance;
      }
      if (far) break;
    }
    centers.push_back(best);
  }

  const std::size_t n_atypical = static_cast<std::size_t>(
      std::llround(spec.atypical_fraction * static_cast<double>(spec.n)));
  std::vector<std::size_t> order(spec.n);
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<bool> atypical(spec.n, false);
  for (std::size_t i = 0; i < n_atypical; ++i) atypical[order[i]] = true;

  Dataset d;
  d.input_shape = {spec.channels, spec.image_size, spec.image_size};
  d.num_classes = spec.classes;
  const std::size_t plane = spec.image_size * spec.image_size;
  for (std::size_t i = 0; i < spec.n; ++i) {
    Sample s;
    s.id = i;
    s.label = i % spec.classes;
    s.atypical = atypical[i];
    auto [cx, cy] = centers[s.label];
    cx += spec.jitter * normal(rng);
    cy += spec.jitter * normal(rng);
    double contrast = 1.0;
    if (s.atypical) {
      const double a = angle(rng);
      cx += spec.atypical_shift * std::cos(a);
      cy += spec.atypical_shift * std::sin(a);
      contrast = spec.atypical_contrast;
    }
    std::vector<double> px(spec.channels * plane);
    for (std::size_t c = 0; c < spec.channels; ++c) {
      for (std::size_t y = 0; y < spec.image_size; ++y) {
        for (std::size_t x = 0; x < spec.image_size; ++x) {
          const double dx = x - cx, dy = y - cy;
          const double blob = std::exp(-(dx * dx + dy * dy) /
                                       (2.0 * spec.blob_sigma * spec.blob_sigma));
          const double v = contrast * blob + spec.noise * normal(rng);
          px[c * plane + y * spec.image_size + x] = std::clamp(v, 0.0, 1.0);
        }
      }
    }
    s.image = Tensor(d.input_shape, std::move(px));
    d.samples.push_back(std::move(s));
  }
  const std::size_t n_noisy = static_cast<std::size_t>(
      std::llround(spec.label_noise * static_cast<double>(spec.n)));
  std::shuffle(order.begin(), order.end(), rng);
  std::uniform_int_distribution<std::size_t> shift(1, spec.classes - 1);
  for (std::size_t i = 0; i < n_noisy; ++i) {
    Sample& s = d.samples[order[i]];
    s.label = (s.label + shift(rng)) % spec.classes;
    s.mislabeled = true;
  }
  return d;
}

std::pair<Dataset, Dataset> SplitTrainTest(const Dataset& dataset,
                                           double test_fraction,
                                           std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in [0, 1)");
  }
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = MakeRng(seed, "split");
  std::shuffle(order.begin(), order.end(), rng);
  const std::size_t n_test = static_cast<std::size_t>(
      std::llround(test_fraction * static_cast<double>(dataset.size())));
  std::vector<std::size_t> test(order.begin(), order.begin() + n_test);
  std::vector<std::size_t> train(order.begin() + n_test, order.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {dataset.Select(train), dataset.Select(test)};
}

Dataset SubsetDataset(const Dataset& dataset, std::size_t size,
                      std::uint64_t seed) {
  if (size >= dataset.size()) return dataset;
  std::vector<std::size_t> order(dataset.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng = MakeRng(seed, "subset");
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(size);
  std::sort(order.begin(), order.end());
  return dataset.Select(order);
}

}  // namespace fedval
