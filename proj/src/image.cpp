// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/image.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace hdff {

Image::Image(int h, int w, float fill)
    : height(h), width(w), pixels(static_cast<std::size_t>(3) * h * w, fill) {}

float quantize_unit(double v) {
  if (!(v > 0.0)) return 0.0f;
  if (v >= 1.0) return 1.0f;
  return static_cast<float>(std::nearbyint(v * kGridScale) / kGridScale);
}

RgbImage decode_image(const std::filesystem::path& path) {
  cv::Mat m = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (m.empty()) throw Error("cannot read image " + path.string());
  if (m.channels() != 3)
    throw Error("image " + path.string() + " has " + std::to_string(m.channels()) +
                " channel(s); RGB input required");
  if (m.depth() != CV_8U) throw Error("image " + path.string() + ": only 8-bit images are supported");
  RgbImage img;
  img.height = m.rows;
  img.width = m.cols;
  img.data.resize(static_cast<std::size_t>(m.rows) * m.cols * 3);
  for (int y = 0; y < m.rows; ++y) {
    const auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < m.cols; ++x) {
      auto* px = &img.data[(static_cast<std::size_t>(y) * m.cols + x) * 3];
      px[0] = row[x * 3 + 2];  // BGR -> RGB
      px[1] = row[x * 3 + 1];
      px[2] = row[x * 3 + 0];
    }
  }
  return img;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  if (image.channels != 3) throw Error("write_png: RGB image required");
  cv::Mat m(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y) {
    auto* row = m.ptr<std::uint8_t>(y);
    for (int x = 0; x < image.width; ++x) {
      const auto* px = &image.data[(static_cast<std::size_t>(y) * image.width + x) * 3];
      row[x * 3 + 0] = px[2];
      row[x * 3 + 1] = px[1];
      row[x * 3 + 2] = px[0];
    }
  }
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  if (!cv::imwrite(path.string(), m)) throw Error("cannot write image " + path.string());
}

namespace {

struct Taps {
  int first = 0;
  std::vector<double> w;
};

std::vector<Taps> resample_taps(int in_size, int out_size) {
  const double scale = static_cast<double>(in_size) / out_size;
  const double filter_scale = std::max(scale, 1.0);
  const double support = filter_scale;  // triangle filter radius 1, widened
  std::vector<Taps> taps(static_cast<std::size_t>(out_size));
  for (int i = 0; i < out_size; ++i) {
    const double center = (i + 0.5) * scale;
    const int lo = std::max(static_cast<int>(center - support + 0.5), 0);
    const int hi = std::min(static_cast<int>(center + support + 0.5), in_size);
    Taps& t = taps[static_cast<std::size_t>(i)];
    t.first = lo;
    double total = 0;
    for (int j = lo; j < hi; ++j) {
      const double d = std::abs((j - center + 0.5) / filter_scale);
      const double wt = d < 1.0 ? 1.0 - d : 0.0;
      t.w.push_back(wt);
      total += wt;
    }
    if (total > 0)
      for (auto& v : t.w) v /= total;
  }
  return taps;
}

}  // namespace

Image resize_bilinear(const Image& src, int out_h, int out_w) {
  if (src.height < 1 || src.width < 1) throw Error("resize: empty image");
  if (out_h < 1 || out_w < 1) throw Error("resize: invalid target size");
  const auto tx = resample_taps(src.width, out_w);
  const auto ty = resample_taps(src.height, out_h);
  std::vector<double> tmp(static_cast<std::size_t>(src.height) * out_w);
  Image out(out_h, out_w);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < src.height; ++y)
      for (int x = 0; x < out_w; ++x) {
        const auto& t = tx[static_cast<std::size_t>(x)];
        double acc = 0;
        for (std::size_t k = 0; k < t.w.size(); ++k) acc += t.w[k] * src.at(c, y, t.first + static_cast<int>(k));
        tmp[static_cast<std::size_t>(y) * out_w + x] = acc;
      }
    for (int y = 0; y < out_h; ++y) {
      const auto& t = ty[static_cast<std::size_t>(y)];
      for (int x = 0; x < out_w; ++x) {
        double acc = 0;
        for (std::size_t k = 0; k < t.w.size(); ++k)
          acc += t.w[k] * tmp[static_cast<std::size_t>(t.first + static_cast<int>(k)) * out_w + x];
        out.at(c, y, x) = quantize_unit(acc);
      }
    }
  }
  return out;
}

Image preprocess(const RgbImage& image, int input_size) {
  if (image.channels != 3) throw Error("preprocess: RGB image required");
  if (image.height < 1 || image.width < 1) throw Error("preprocess: empty image");
  Image unit(image.height, image.width);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      for (int c = 0; c < 3; ++c)
        unit.at(c, y, x) =
            quantize_unit(image.data[(static_cast<std::size_t>(y) * image.width + x) * 3 + c] / 255.0);
  if (image.height == input_size && image.width == input_size) return unit;
  return resize_bilinear(unit, input_size, input_size);
}

void normalize_into(const Image& image, Tensor& dst, std::int64_t slot) {
  const auto plane = static_cast<std::int64_t>(image.plane());
  if (dst.rank() != 4 || dst.dim(1) != 3 || dst.dim(2) * dst.dim(3) != plane)
    throw Error("normalize: destination " + shape_str(dst.shape()) + " does not fit image");
  Real* out = dst.data() + slot * 3 * plane;
  for (int c = 0; c < 3; ++c)
    for (std::int64_t i = 0; i < plane; ++i)
      out[c * plane + i] = (static_cast<double>(image.pixels[c * plane + i]) - kImagenetMean[c]) / kImagenetStd[c];
}

Tensor normalize(const Image& image) {
  Tensor t({1, 3, image.height, image.width});
  normalize_into(image, t, 0);
  t.reshape({3, image.height, image.width});
  return t;
}

}  // namespace hdff
