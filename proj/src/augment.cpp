// Copyright 2026 The HDFF Authors
// SPDX-License-Identifier: Apache-2.0

#include "hdff/augment.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <regex>
#include <sstream>

#include <fmt/format.h>

#include "hdff/archive.hpp"

namespace hdff {

namespace {

struct KindName {
  AugKind kind;
  const char* name;
};

constexpr std::array<KindName, 14> kKindNames = {{
    {AugKind::kInvert, "Invert"},         {AugKind::kRotate, "Rotate"},
    {AugKind::kSharpness, "Sharpness"},   {AugKind::kShearY, "ShearY"},
    {AugKind::kTranslateX, "TranslateX"}, {AugKind::kColor, "Color"},
    {AugKind::kBrightness, "Brightness"}, {AugKind::kShearX, "ShearX"},
    {AugKind::kTranslateY, "TranslateY"}, {AugKind::kContrast, "Contrast"},
    {AugKind::kPosterize, "Posterize"},   {AugKind::kSolarize, "Solarize"},
    {AugKind::kEqualize, "Equalize"},     {AugKind::kAutoContrast, "AutoContrast"},
}};

double gray(const Image& im, int y, int x) {
  return 0.299 * im.at(0, y, x) + 0.587 * im.at(1, y, x) + 0.114 * im.at(2, y, x);
}

// out = degenerate + factor * (image - degenerate)
Image blend(const Image& degenerate, const Image& image, double factor) {
  Image out(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const double d = degenerate.pixels[i];
    out.pixels[i] = quantize_unit(d + factor * (image.pixels[i] - d));
  }
  return out;
}

double sample_bilinear(const Image& im, int c, double sx, double sy) {
  const double fx0 = std::floor(sx), fy0 = std::floor(sy);
  const int x0 = static_cast<int>(fx0), y0 = static_cast<int>(fy0);
  const double fx = sx - fx0, fy = sy - fy0;
  auto px = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= im.width || y >= im.height) return 0.0;
    return im.at(c, y, x);
  };
  return (1 - fx) * (1 - fy) * px(x0, y0) + fx * (1 - fy) * px(x0 + 1, y0) + (1 - fx) * fy * px(x0, y0 + 1) +
         fx * fy * px(x0 + 1, y0 + 1);
}

// Inverse-maps every output pixel through (a b; d e) about the image center,
// plus a translation, and samples bilinearly with zero fill.
Image warp(const Image& im, double a, double b, double d, double e, double tx, double ty) {
  Image out(im.height, im.width);
  const double cx = im.width / 2.0, cy = im.height / 2.0;
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
      const double sx = a * dx + b * dy + cx - 0.5 - tx;
      const double sy = d * dx + e * dy + cy - 0.5 - ty;
      for (int c = 0; c < 3; ++c) out.at(c, y, x) = quantize_unit(sample_bilinear(im, c, sx, sy));
    }
  return out;
}

int to_u8(float v) { return static_cast<int>(std::floor(static_cast<double>(v) * 255.0 + 0.5)); }

Image equalize(const Image& im) {
  Image out = im;
  const std::size_t plane = im.plane();
  for (int c = 0; c < 3; ++c) {
    std::array<long, 256> hist{};
    for (std::size_t i = 0; i < plane; ++i) ++hist[static_cast<std::size_t>(to_u8(im.pixels[c * plane + i]))];
    long last = 0;
    for (int i = 255; i >= 0; --i)
      if (hist[static_cast<std::size_t>(i)]) {
        last = hist[static_cast<std::size_t>(i)];
        break;
      }
    const long step = (static_cast<long>(plane) - last) / 255;
    if (step == 0) continue;
    std::array<int, 256> lut{};
    long n = step / 2;
    for (int i = 0; i < 256; ++i) {
      lut[static_cast<std::size_t>(i)] = static_cast<int>(std::min<long>(n / step, 255));
      n += hist[static_cast<std::size_t>(i)];
    }
    for (std::size_t i = 0; i < plane; ++i) {
      auto& v = out.pixels[c * plane + i];
      v = quantize_unit(lut[static_cast<std::size_t>(to_u8(v))] / 255.0);
    }
  }
  return out;
}

}  // namespace

std::string to_string(AugKind k) {
  for (const auto& kn : kKindNames)
    if (kn.kind == k) return kn.name;
  return "?";
}

AugKind parse_aug_kind(const std::string& s) {
  for (const auto& kn : kKindNames)
    if (s == kn.name) return kn.kind;
  throw ConfigError("unknown augmentation op '" + s + "'");
}

bool is_geometric(AugKind k) {
  return k == AugKind::kRotate || k == AugKind::kShearX || k == AugKind::kShearY || k == AugKind::kTranslateX ||
         k == AugKind::kTranslateY;
}

bool has_magnitude(AugKind k) {
  return k != AugKind::kInvert && k != AugKind::kEqualize && k != AugKind::kAutoContrast;
}

double op_magnitude(AugKind kind, int level, int image_size) {
  if (level < 0 || level > 9) throw ConfigError("augmentation level " + std::to_string(level) + " outside 0..9");
  const double m = level / 9.0;
  switch (kind) {
    case AugKind::kRotate: return 30.0 * m;
    case AugKind::kShearX:
    case AugKind::kShearY: return 0.3 * m;
    case AugKind::kTranslateX:
    case AugKind::kTranslateY: return 0.45 * m * image_size;
    case AugKind::kColor:
    case AugKind::kSharpness:
    case AugKind::kBrightness:
    case AugKind::kContrast: return 0.1 + 1.8 * m;
    case AugKind::kPosterize: return 8.0 - std::round(4.0 * m);
    case AugKind::kSolarize: return 1.0 - m;
    case AugKind::kInvert:
    case AugKind::kEqualize:
    case AugKind::kAutoContrast: return 0.0;
  }
  return 0.0;
}

Image apply_op(const Image& im, AugKind kind, double value) {
  switch (kind) {
    case AugKind::kInvert: {
      Image out = im;
      for (auto& v : out.pixels) v = 1.0f - v;
      return out;
    }
    case AugKind::kRotate: {
      const double t = value * std::numbers::pi / 180.0;
      const double c = std::cos(t), s = std::sin(t);
      return warp(im, c, s, -s, c, 0, 0);
    }
    case AugKind::kShearX: return warp(im, 1, value, 0, 1, 0, 0);
    case AugKind::kShearY: return warp(im, 1, 0, value, 1, 0, 0);
    case AugKind::kTranslateX: return warp(im, 1, 0, 0, 1, value, 0);
    case AugKind::kTranslateY: return warp(im, 1, 0, 0, 1, 0, value);
    case AugKind::kColor: {
      Image g(im.height, im.width);
      for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x) {
          const float l = quantize_unit(gray(im, y, x));
          for (int c = 0; c < 3; ++c) g.at(c, y, x) = l;
        }
      return blend(g, im, value);
    }
    case AugKind::kBrightness: return blend(Image(im.height, im.width, 0.0f), im, value);
    case AugKind::kContrast: {
      double mean = 0;
      for (int y = 0; y < im.height; ++y)
        for (int x = 0; x < im.width; ++x) mean += gray(im, y, x);
      mean /= static_cast<double>(im.plane());
      return blend(Image(im.height, im.width, quantize_unit(mean)), im, value);
    }
    case AugKind::kSharpness: {
      // 3×3 smoothing kernel [1 1 1; 1 5 1; 1 1 1]/13 on the interior.
      Image smooth = im;
      for (int c = 0; c < 3; ++c)
        for (int y = 1; y + 1 < im.height; ++y)
          for (int x = 1; x + 1 < im.width; ++x) {
            double acc = 4.0 * im.at(c, y, x);
            for (int dy = -1; dy <= 1; ++dy)
              for (int dx = -1; dx <= 1; ++dx) acc += im.at(c, y + dy, x + dx);
            smooth.at(c, y, x) = quantize_unit(acc / 13.0);
          }
      return blend(smooth, im, value);
    }
    case AugKind::kPosterize: {
      const int bits = static_cast<int>(value);
      const int mask = (0xFF << (8 - bits)) & 0xFF;
      Image out = im;
      for (auto& v : out.pixels) v = quantize_unit((to_u8(v) & mask) / 255.0);
      return out;
    }
    case AugKind::kSolarize: {
      Image out = im;
      for (auto& v : out.pixels)
        if (v >= value) v = 1.0f - v;
      return out;
    }
    case AugKind::kEqualize: return equalize(im);
    case AugKind::kAutoContrast: {
      Image out = im;
      const std::size_t plane = im.plane();
      for (int c = 0; c < 3; ++c) {
        const auto first = out.pixels.begin() + static_cast<std::ptrdiff_t>(c * plane);
        const auto [lo_it, hi_it] = std::minmax_element(first, first + static_cast<std::ptrdiff_t>(plane));
        const double lo = *lo_it, hi = *hi_it;
        if (!(hi > lo)) continue;
        for (auto it = first; it != first + static_cast<std::ptrdiff_t>(plane); ++it)
          *it = quantize_unit((*it - lo) / (hi - lo));
      }
      return out;
    }
  }
  return im;
}

Image apply_policy(const AugmentationPolicy& policy, const Image& image, Rng& rng) {
  if (policy.empty()) return image;
  const auto& sub = policy.sub_policies[rng.below(policy.sub_policies.size())];
  Image out = image;
  for (const auto& op : sub) {
    if (!rng.coin(op.probability)) continue;
    double value = op_magnitude(op.kind, op.level, image.width);
    if (is_geometric(op.kind) && rng.coin(0.5)) value = -value;
    out = apply_op(out, op.kind, value);
  }
  return out;
}

AugmentationPolicy imagenet_policy() {
  using K = AugKind;
  auto op = [](K k, double p, int l) { return AugmentationOp{k, p, l}; };
  AugmentationPolicy pol;
  pol.sub_policies = {
      {op(K::kPosterize, 0.4, 8), op(K::kRotate, 0.6, 9)},
      {op(K::kSolarize, 0.6, 5), op(K::kAutoContrast, 0.6, 0)},
      {op(K::kEqualize, 0.8, 0), op(K::kEqualize, 0.6, 0)},
      {op(K::kPosterize, 0.6, 7), op(K::kPosterize, 0.6, 6)},
      {op(K::kEqualize, 0.4, 0), op(K::kSolarize, 0.2, 4)},
      {op(K::kEqualize, 0.4, 0), op(K::kRotate, 0.8, 8)},
      {op(K::kSolarize, 0.6, 3), op(K::kEqualize, 0.6, 0)},
      {op(K::kPosterize, 0.8, 5), op(K::kEqualize, 1.0, 0)},
      {op(K::kRotate, 0.2, 3), op(K::kSolarize, 0.6, 8)},
      {op(K::kEqualize, 0.6, 0), op(K::kPosterize, 0.4, 6)},
      {op(K::kRotate, 0.8, 8), op(K::kColor, 0.4, 0)},
      {op(K::kRotate, 0.4, 9), op(K::kEqualize, 0.6, 0)},
      {op(K::kEqualize, 0.0, 0), op(K::kEqualize, 0.8, 0)},
      {op(K::kInvert, 0.6, 0), op(K::kEqualize, 1.0, 0)},
      {op(K::kColor, 0.6, 4), op(K::kContrast, 1.0, 8)},
      {op(K::kRotate, 0.8, 8), op(K::kColor, 1.0, 2)},
      {op(K::kColor, 0.8, 8), op(K::kSolarize, 0.8, 7)},
      {op(K::kSharpness, 0.4, 7), op(K::kInvert, 0.6, 0)},
      {op(K::kShearX, 0.6, 5), op(K::kEqualize, 1.0, 0)},
      {op(K::kColor, 0.4, 0), op(K::kEqualize, 0.6, 0)},
      {op(K::kEqualize, 0.4, 0), op(K::kSolarize, 0.2, 4)},
      {op(K::kSolarize, 0.6, 5), op(K::kAutoContrast, 0.6, 0)},
      {op(K::kInvert, 0.6, 0), op(K::kEqualize, 1.0, 0)},
      {op(K::kColor, 0.6, 4), op(K::kContrast, 1.0, 8)},
      {op(K::kEqualize, 0.8, 0), op(K::kEqualize, 0.6, 0)},
  };
  return pol;
}

AugmentationPolicy parse_policy(const std::string& text, const std::string& origin) {
  static const std::regex line_re(R"(^\s*\[(.*)\]\s*,?\s*$)");
  static const std::regex op_re(
      R"(\(\s*['"]?([A-Za-z]+)['"]?\s*,\s*([0-9]*\.?[0-9]+(?:[eE][-+]?[0-9]+)?)\s*,\s*(None|-|[0-9]+)\s*\))");
  AugmentationPolicy pol;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto where = origin + ":" + std::to_string(lineno) + ": ";
    std::smatch m;
    if (!std::regex_match(line, m, line_re)) throw ConfigError(where + "expected [(kind, probability, level), ...]");
    std::string body = m[1].str();
    std::vector<AugmentationOp> sub;
    auto it = std::sregex_iterator(body.begin(), body.end(), op_re);
    std::string leftover = std::regex_replace(body, op_re, "");
    if (leftover.find_first_not_of(" \t,") != std::string::npos)
      throw ConfigError(where + "unparseable text '" + leftover + "'");
    for (; it != std::sregex_iterator(); ++it) {
      AugmentationOp op;
      try {
        op.kind = parse_aug_kind((*it)[1].str());
      } catch (const ConfigError& e) {
        throw ConfigError(where + e.what());
      }
      op.probability = std::stod((*it)[2].str());
      if (op.probability < 0.0 || op.probability > 1.0) throw ConfigError(where + "probability outside [0,1]");
      const auto lvl = (*it)[3].str();
      if (lvl == "None" || lvl == "-") {
        if (has_magnitude(op.kind))
          throw ConfigError(where + to_string(op.kind) + " requires a magnitude level");
        op.level = 0;
      } else {
        op.level = std::stoi(lvl);
        if (op.level < 0 || op.level > 9) throw ConfigError(where + "level outside 0..9");
      }
      sub.push_back(op);
    }
    if (sub.empty()) throw ConfigError(where + "empty sub-policy");
    pol.sub_policies.push_back(std::move(sub));
  }
  return pol;
}

AugmentationPolicy load_policy(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw ConfigError("policy file not found: " + path.string());
  return parse_policy(read_file(path), path.string());
}

std::string format_policy(const AugmentationPolicy& policy) {
  std::string out;
  for (const auto& sub : policy.sub_policies) {
    out += "[";
    for (std::size_t i = 0; i < sub.size(); ++i) {
      const auto& op = sub[i];
      out += fmt::format("{}({}, {}, {})", i ? ", " : "", to_string(op.kind), op.probability,
                         has_magnitude(op.kind) ? std::to_string(op.level) : std::string("None"));
    }
    out += "]\n";
  }
  return out;
}

}  // namespace hdff
