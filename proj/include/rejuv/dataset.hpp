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

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "rejuv/rawio.hpp"
#include "rejuv/tensor.hpp"

namespace rejuv {

struct Dataset {
  Tensor<float> images;  ///< (N, C, H, W)
  std::vector<int> labels;
  Index num_classes = 0;

  Index size() const { return images.dim(0); }
  /// Copies the listed samples into one batch.
  Tensor<float> gather(std::span<const Index> rows) const;
  std::vector<int> gather_labels(std::span<const Index> rows) const;
};

struct DatasetSplit {
  Dataset train;
  Dataset test;
};

/// "synthetic": every class owns `modes` prototypes of `blobs` coloured
/// Gaussian blobs; a sample is one prototype shifted by up to one pixel, plus
/// a distractor blob and pixel noise whose strength is `noise`. "file": a raw
/// bundle written by export_dataset.
struct DatasetSpec {
  std::string kind = "synthetic";
  Index train_size = 1024;
  Index test_size = 512;
  double noise = 0.3;
  Index modes = 16;
  Index blobs = 3;
  std::uint64_t seed = 7;
  std::string path;  ///< kind == "file"
};

void to_json(nlohmann::json& j, const DatasetSpec& d);
void from_json(const nlohmann::json& j, DatasetSpec& d);

/// Synthetic data is a function of (spec, channels, extent, classes) only.
DatasetSplit make_dataset(const DatasetSpec& spec, Index channels, Index height, Index width, Index classes);

RawBundle dataset_to_bundle(const DatasetSplit& split);
DatasetSplit dataset_from_bundle(const RawBundle& bundle);

void export_dataset(const DatasetSplit& split, const std::filesystem::path& path);
DatasetSplit load_dataset(const std::filesystem::path& path);

}  // namespace rejuv
