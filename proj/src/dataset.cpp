/*
 * Copyright 2026 The rejuv Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#include "rejuv/dataset.hpp"

#include <cmath>
#include <random>

namespace rejuv {

Tensor<float> Dataset::gather(std::span<const Index> rows) const {
  Tensor<float> out(static_cast<Index>(rows.size()), images.dim(1), images.dim(2), images.dim(3));
  const Index stride = images.dim(1) * images.dim(2) * images.dim(3);
  for (std::size_t k = 0; k < rows.size(); ++k) {
    out.data().segment(static_cast<Index>(k) * stride, stride) = images.data().segment(rows[k] * stride, stride);
  }
  return out;
}

std::vector<int> Dataset::gather_labels(std::span<const Index> rows) const {
  std::vector<int> out;
  out.reserve(rows.size());
  for (const Index r : rows) out.push_back(labels[static_cast<std::size_t>(r)]);
  return out;
}

void to_json(nlohmann::json& j, const DatasetSpec& d) {
  j = nlohmann::json{{"kind", d.kind},   {"train_size", d.train_size}, {"test_size", d.test_size},
                     {"noise", d.noise}, {"modes", d.modes},           {"blobs", d.blobs},
                     {"seed", d.seed},   {"path", d.path}};
}

void from_json(const nlohmann::json& j, DatasetSpec& d) {
  d.kind = j.value("kind", d.kind);
  d.train_size = j.value("train_size", d.train_size);
  d.test_size = j.value("test_size", d.test_size);
  d.noise = j.value("noise", d.noise);
  d.modes = j.value("modes", d.modes);
  d.blobs = j.value("blobs", d.blobs);
  d.seed = j.value("seed", d.seed);
  d.path = j.value("path", d.path);
}

namespace {

struct Blob {
  double cy = 0, cx = 0;
  std::vector<double> colour;  ///< norm 2
};

using Prototype = std::vector<Blob>;

Blob random_blob(Index channels, Index height, Index width, std::mt19937_64& rng) {
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  Blob b;
  b.cy = u01(rng) * static_cast<double>(height - 1);
  b.cx = u01(rng) * static_cast<double>(width - 1);
  double norm = 0;
  for (Index c = 0; c < channels; ++c) {
    b.colour.push_back(n01(rng));
    norm += b.colour.back() * b.colour.back();
  }
  norm = std::sqrt(norm) + 1e-12;
  for (auto& v : b.colour) v *= 2.0 / norm;
  return b;
}

// prototypes[class][mode]
std::vector<std::vector<Prototype>> class_prototypes(const DatasetSpec& spec, Index classes, Index channels,
                                                     Index height, Index width, std::mt19937_64& rng) {
  std::vector<std::vector<Prototype>> out(static_cast<std::size_t>(classes));
  for (auto& modes : out) {
    for (Index m = 0; m < spec.modes; ++m) {
      Prototype p;
      for (Index k = 0; k < spec.blobs; ++k) p.push_back(random_blob(channels, height, width, rng));
      modes.push_back(std::move(p));
    }
  }
  return out;
}

void paint_blob(Tensor<float>& img, Index n, const Blob& b, double cy, double cx, double amplitude) {
  constexpr double sigma = 1.2;
  for (Index c = 0; c < img.dim(1); ++c)
    for (Index y = 0; y < img.dim(2); ++y)
      for (Index x = 0; x < img.dim(3); ++x) {
        const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
        img(n, c, y, x) += static_cast<float>(amplitude * b.colour[static_cast<std::size_t>(c)] *
                                              std::exp(-d2 / (2 * sigma * sigma)));
      }
}

Dataset synthesize(Index count, const std::vector<std::vector<Prototype>>& prototypes, Index channels, Index height,
                   Index width, double noise, std::mt19937_64& rng) {
  const Index classes = static_cast<Index>(prototypes.size());
  Dataset d;
  d.num_classes = classes;
  d.images = Tensor<float>(count, channels, height, width);
  d.labels.resize(static_cast<std::size_t>(count));
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_int_distribution<int> jitter(-1, 1);
  for (Index n = 0; n < count; ++n) {
    const int label = static_cast<int>(n % classes);
    d.labels[static_cast<std::size_t>(n)] = label;
    const auto& modes = prototypes[static_cast<std::size_t>(label)];
    const auto& proto = modes[static_cast<std::size_t>(rng() % modes.size())];
    const double dy = jitter(rng), dx = jitter(rng);
    for (const auto& b : proto) paint_blob(d.images, n, b, b.cy + dy, b.cx + dx, 1.0);
    if (noise > 0) {
      const auto& other = prototypes[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(classes))];
      const auto& blob = other[static_cast<std::size_t>(rng() % other.size())].front();
      paint_blob(d.images, n, blob, u01(rng) * static_cast<double>(height - 1),
                 u01(rng) * static_cast<double>(width - 1), 0.5 * std::min(1.0, noise));
      for (Index c = 0; c < channels; ++c)
        for (Index y = 0; y < height; ++y)
          for (Index x = 0; x < width; ++x) d.images(n, c, y, x) += static_cast<float>(noise * n01(rng));
    }
  }
  return d;
}

}  // namespace

DatasetSplit make_dataset(const DatasetSpec& spec, Index channels, Index height, Index width, Index classes) {
  if (spec.kind == "file") {
    auto split = load_dataset(spec.path);
    const auto& s = split.train.images.shape();
    require_shape(s[1] == channels && s[2] == height && s[3] == width,
                  "dataset " + spec.path + " has images " + s.str() + ", architecture expects other dimensions");
    require_shape(split.train.num_classes == classes, "dataset class count does not match architecture");
    return split;
  }
  if (spec.kind != "synthetic") throw std::invalid_argument("unknown dataset kind '" + spec.kind + "'");
  require_shape(spec.train_size >= 1 && spec.test_size >= 1, "dataset sizes must be >= 1");
  require_shape(spec.modes >= 1 && spec.blobs >= 1, "dataset modes and blobs must be >= 1");
  std::mt19937_64 rng(spec.seed);
  const auto prototypes = class_prototypes(spec, classes, channels, height, width, rng);
  DatasetSplit split;
  split.train = synthesize(spec.train_size, prototypes, channels, height, width, spec.noise, rng);
  split.test = synthesize(spec.test_size, prototypes, channels, height, width, spec.noise, rng);
  return split;
}

RawBundle dataset_to_bundle(const DatasetSplit& split) {
  RawBundle b;
  b.meta = {{"format", "rejuv-dataset"}, {"num_classes", split.train.num_classes}};
  auto put = [&b](const std::string& prefix, const Dataset& d) {
    const auto& s = d.images.shape();
    b.add(prefix + ".images", {s[0], s[1], s[2], s[3]},
          std::span<const float>(d.images.data().data(), static_cast<std::size_t>(d.images.size())));
    std::vector<std::int32_t> labels(d.labels.begin(), d.labels.end());
    b.add(prefix + ".labels", {static_cast<std::int64_t>(labels.size())}, std::span<const std::int32_t>(labels));
  };
  put("train", split.train);
  put("test", split.test);
  return b;
}

DatasetSplit dataset_from_bundle(const RawBundle& b) {
  if (b.meta.value("format", std::string()) != "rejuv-dataset") throw FormatError("raw file is not a dataset");
  const Index classes = b.meta.at("num_classes").get<Index>();
  auto get = [&](const std::string& prefix) {
    const auto& img = b.at(prefix + ".images");
    const auto& lab = b.at(prefix + ".labels");
    if (img.is_int || !lab.is_int || img.shape.size() != 4 || lab.count() != img.shape[0]) {
      throw FormatError("dataset split '" + prefix + "' is malformed");
    }
    Dataset d;
    d.num_classes = classes;
    d.images = Tensor<float>(img.shape[0], img.shape[1], img.shape[2], img.shape[3]);
    d.images.data() = Eigen::Map<const Vector<float>>(img.f32.data(), static_cast<Index>(img.f32.size()));
    d.labels.assign(lab.i32.begin(), lab.i32.end());
    for (const int y : d.labels) {
      if (y < 0 || y >= classes) throw FormatError("dataset label out of range");
    }
    return d;
  };
  return {get("train"), get("test")};
}

void export_dataset(const DatasetSplit& split, const std::filesystem::path& path) {
  dataset_to_bundle(split).write_file(path);
}

DatasetSplit load_dataset(const std::filesystem::path& path) { return dataset_from_bundle(RawBundle::read_file(path)); }

}  // namespace rejuv
