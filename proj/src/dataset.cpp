// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>
#include <thread>

#include <spdlog/spdlog.h>

#include "hdff/archive.hpp"

namespace hdff {

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "?";
}

Split parse_split(const std::string& s) {
  if (s == "train") return Split::kTrain;
  if (s == "val") return Split::kVal;
  if (s == "test") return Split::kTest;
  throw ConfigError("unknown split '" + s + "'");
}

namespace {

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        cur += '"';
        ++i;
      } else if (c == '"') {
        quoted = false;
      } else {
        cur += c;
      }
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

std::vector<ManifestRecord> load_manifest(const std::filesystem::path& path, int num_classes) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open manifest " + path.string());
  const auto base = path.parent_path();
  std::string line;
  int lineno = 0;
  auto fail = [&](const std::string& what) {
    throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + what);
  };

  bool saw_header = false;
  std::vector<ManifestRecord> records;
  while (std::getline(is, line)) {
    ++lineno;
    if (lineno == 1 && line.size() >= 3 && line.compare(0, 3, "\xEF\xBB\xBF") == 0) line.erase(0, 3);
    if (trim(line).empty()) continue;
    auto cols = split_csv(line);
    for (auto& c : cols) c = trim(c);
    if (!saw_header) {
      if (cols != std::vector<std::string>{"sample_id", "image_path", "label", "split"})
        fail("expected header 'sample_id,image_path,label,split'");
      saw_header = true;
      continue;
    }
    if (cols.size() != 4) fail("expected 4 columns, found " + std::to_string(cols.size()));
    ManifestRecord r;
    r.sample_id = cols[0];
    if (r.sample_id.empty()) fail("empty sample_id");
    if (cols[1].empty()) fail("empty image_path");
    std::filesystem::path p = cols[1];
    r.image_path = p.is_absolute() ? p : base / p;
    try {
      r.split = parse_split(cols[3]);
    } catch (const ConfigError& e) {
      fail(e.what());
    }
    if (cols[2].empty() || cols[2] == "unlabeled") {
      if (r.split != Split::kTest) fail("only test rows may be unlabeled");
      r.label = kUnlabeled;
    } else {
      std::size_t used = 0;
      int v = 0;
      try {
        v = std::stoi(cols[2], &used);
      } catch (const std::exception&) {
        fail("label '" + cols[2] + "' is not an integer");
      }
      if (used != cols[2].size()) fail("label '" + cols[2] + "' is not an integer");
      if (v < 0 || v >= num_classes)
        fail("label " + std::to_string(v) + " outside [0, " + std::to_string(num_classes) + ")");
      r.label = v;
    }
    records.push_back(std::move(r));
  }
  if (!saw_header) fail("missing header");
  if (records.empty()) spdlog::warn("manifest {} has no records", path.string());
  return records;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRecord>& records) {
  std::string out = "sample_id,image_path,label,split\n";
  const auto base = path.parent_path();
  for (const auto& r : records) {
    auto p = r.image_path;
    if (!base.empty()) {
      auto rel = std::filesystem::absolute(p).lexically_relative(std::filesystem::absolute(base));
      if (!rel.empty()) p = rel;
    }
    out += r.sample_id + "," + p.generic_string() + "," +
           (r.label == kUnlabeled ? std::string("unlabeled") : std::to_string(r.label)) + "," +
           to_string(r.split) + "\n";
  }
  write_file_atomic(path, out);
}

std::vector<ManifestRecord> select_split(const std::vector<ManifestRecord>& records, Split split) {
  std::vector<ManifestRecord> out;
  std::copy_if(records.begin(), records.end(), std::back_inserter(out),
               [split](const ManifestRecord& r) { return r.split == split; });
  return out;
}

TrainValSplit train_val_split(const std::vector<ManifestRecord>& records) {
  TrainValSplit s;
  s.train = select_split(records, Split::kTrain);
  s.val = select_split(records, Split::kVal);
  if (!s.val.empty()) return s;
  s.derived = true;
  std::vector<ManifestRecord> keep;
  for (auto& r : s.train) {
    if (mix64(fnv1a64(r.sample_id)) % 10 == 0)
      s.val.push_back(r);
    else
      keep.push_back(r);
  }
  s.train = std::move(keep);
  return s;
}

// ---------------------------------------------------------------- loading

Image ImageCache::get(const std::filesystem::path& path, int input_size) {
  const auto key = std::make_pair(path.string(), input_size);
  {
    std::lock_guard lock(mu_);
    if (auto it = images_.find(key); it != images_.end()) return it->second;
  }
  Image img = preprocess(decode_image(path), input_size);
  std::lock_guard lock(mu_);
  images_.emplace(key, img);
  return img;
}

DataLoader::DataLoader(std::vector<ManifestRecord> records, LoaderOptions options,
                       std::shared_ptr<ImageCache> cache)
    : records_(std::move(records)), options_(std::move(options)), cache_(std::move(cache)) {
  if (options_.batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (options_.workers < 1) throw ConfigError("workers must be >= 1");
  if (!cache_) cache_ = std::make_shared<ImageCache>();
}

std::size_t DataLoader::num_batches() const {
  const auto bs = static_cast<std::size_t>(options_.batch_size);
  return (records_.size() + bs - 1) / bs;
}

std::vector<std::size_t> DataLoader::epoch_order(std::uint64_t epoch) const {
  std::vector<std::size_t> order(records_.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  if (options_.shuffle && order.size() > 1) {
    Rng rng(derive_seed(options_.shuffle_seed, epoch));
    for (std::size_t i = order.size() - 1; i > 0; --i) std::swap(order[i], order[rng.below(i + 1)]);
  }
  return order;
}

Image DataLoader::sample_image(const ManifestRecord& record, std::uint64_t epoch) const {
  Image img;
  try {
    img = cache_->get(record.image_path, options_.input_size);
  } catch (const Error& e) {
    throw Error("sample '" + record.sample_id + "': " + e.what());
  }
  if (options_.augment && !options_.policy.empty()) {
    Rng rng(sample_seed(options_.augment_seed, epoch, record.sample_id));
    img = apply_policy(options_.policy, img, rng);
  }
  return img;
}

ImageBatch DataLoader::batch(std::uint64_t epoch, std::size_t index) const {
  const auto order = epoch_order(epoch);
  const auto bs = static_cast<std::size_t>(options_.batch_size);
  const std::size_t begin = index * bs;
  if (begin >= order.size()) throw Error("batch index out of range");
  const std::size_t end = std::min(order.size(), begin + bs);
  const auto n = static_cast<std::int64_t>(end - begin);
  const auto s = static_cast<std::int64_t>(options_.input_size);

  ImageBatch b;
  b.pixels = Tensor({n, 3, s, s});
  b.sample_ids.resize(static_cast<std::size_t>(n));
  b.labels.resize(static_cast<std::size_t>(n));

  auto fill = [&](std::size_t lo, std::size_t hi) {
    for (std::size_t i = lo; i < hi; ++i) {
      const auto& r = records_[order[begin + i]];
      normalize_into(sample_image(r, epoch), b.pixels, static_cast<std::int64_t>(i));
      b.sample_ids[i] = r.sample_id;
      b.labels[i] = r.label;
    }
  };

  const auto workers = std::min<std::size_t>(static_cast<std::size_t>(options_.workers), end - begin);
  if (workers <= 1) {
    fill(0, end - begin);
  } else {
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(workers);
    const std::size_t chunk = (end - begin + workers - 1) / workers;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        try {
          fill(w * chunk, std::min(end - begin, (w + 1) * chunk));
        } catch (...) {
          errors[w] = std::current_exception();
        }
      });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
      if (e) std::rethrow_exception(e);
  }
  return b;
}

std::vector<ImageBatch> DataLoader::epoch_batches(std::uint64_t epoch) const {
  std::vector<ImageBatch> out;
  for (std::size_t i = 0; i < num_batches(); ++i) out.push_back(batch(epoch, i));
  return out;
}

}  // namespace hdff
