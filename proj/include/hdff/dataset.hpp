// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "hdff/augment.hpp"
#include "hdff/image.hpp"

namespace hdff {

enum class Split { kTrain, kVal, kTest };

std::string to_string(Split s);
Split parse_split(const std::string& s);

inline constexpr int kUnlabeled = -1;

struct ManifestRecord {
  std::string sample_id;
  std::filesystem::path image_path;  // resolved against the manifest directory
  int label = kUnlabeled;
  Split split = Split::kTrain;

  bool operator==(const ManifestRecord&) const = default;
};

// Header `sample_id,image_path,label,split`. Test rows may use the label
// "unlabeled" (or leave it empty). Image paths are not touched here.
std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path, int num_classes = 2);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records);

std::vector<ManifestRecord> select_split(const std::vector<ManifestRecord>& records, Split split);

// Train/val partition. Uses the manifest's val rows when present, otherwise
// holds out ~10% of train rows chosen by hash(sample_id).
struct TrainValSplit {
  std::vector<ManifestRecord> train;
  std::vector<ManifestRecord> val;
  bool derived = false;
};
TrainValSplit train_val_split(const std::vector<ManifestRecord>& records);

struct ImageBatch {
  Tensor pixels;  // B×3×S×S, normalized
  std::vector<std::string> sample_ids;
  std::vector<int> labels;

  std::int64_t size() const { return static_cast<std::int64_t>(sample_ids.size()); }
};

// Thread-safe cache of decoded + resized images keyed by path.
class ImageCache {
 public:
  Image get(const std::filesystem::path& path, int input_size);

 private:
  std::mutex mu_;
  std::map<std::pair<std::string, int>, Image> images_;
};

struct LoaderOptions {
  int batch_size = 32;
  int input_size = 224;
  bool shuffle = true;
  std::uint64_t shuffle_seed = 0;
  bool augment = false;
  std::uint64_t augment_seed = 0;
  AugmentationPolicy policy;
  int workers = 1;
};

// Produces normalized batches. Order is a pure function of
// (shuffle_seed, epoch); each sample's augmentation stream is
// hash(augment_seed, epoch, sample_id), so worker count never changes output.
class DataLoader {
 public:
  DataLoader(std::vector<ManifestRecord> records, LoaderOptions options,
             std::shared_ptr<ImageCache> cache = std::make_shared<ImageCache>());

  std::size_t num_records() const { return records_.size(); }
  std::size_t num_batches() const;
  const std::vector<ManifestRecord>& records() const { return records_; }
  const LoaderOptions& options() const { return options_; }

  std::vector<std::size_t> epoch_order(std::uint64_t epoch) const;
  ImageBatch batch(std::uint64_t epoch, std::size_t index) const;
  // Convenience: every batch of one epoch.
  std::vector<ImageBatch> epoch_batches(std::uint64_t epoch) const;

  // Image for one record after resize and (if enabled) augmentation, before
  // normalization.
  Image sample_image(const ManifestRecord& record, std::uint64_t epoch) const;

 private:
  std::vector<ManifestRecord> records_;
  LoaderOptions options_;
  std::shared_ptr<ImageCache> cache_;
};

}  // namespace hdff
