// Copyright 2026 The TinyBatt Authors. All Rights Reserved.
// SPDX-License-Identifier: Apache-2.0

// Image ingestion: binary PPM decode, reduction to one channel, bilinear
// resize to the model resolution and [0,1] normalization.

#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "tinybatt/error.hpp"
#include "tinybatt/numeric.hpp"

namespace tinybatt {

struct RawImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // interleaved RGB, row-major

  static constexpr int channels = 3;
};

struct Plane {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;  // row-major

  std::uint8_t at(int y, int x) const { return data[static_cast<std::size_t>(y) * width + x]; }
};

enum class ChannelMode { luma, red, green, blue };

inline ChannelMode parse_channel_mode(std::string_view s) {
  if (s == "luma") return ChannelMode::luma;
  if (s == "red") return ChannelMode::red;
  if (s == "green") return ChannelMode::green;
  if (s == "blue") return ChannelMode::blue;
  throw ParameterError("unknown channel mode '" + std::string(s) + "'");
}

inline std::string_view to_string(ChannelMode m) {
  switch (m) {
    case ChannelMode::luma: return "luma";
    case ChannelMode::red: return "red";
    case ChannelMode::green: return "green";
    case ChannelMode::blue: return "blue";
  }
  return "?";
}

namespace detail {

class PpmHeaderReader {
 public:
  explicit PpmHeaderReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  void skip_space_and_comments() {
    while (pos_ < bytes_.size()) {
      if (bytes_[pos_] == '#') {
        while (pos_ < bytes_.size() && bytes_[pos_] != '\n') ++pos_;
      } else if (std::isspace(bytes_[pos_])) {
        ++pos_;
      } else {
        return;
      }
    }
  }

  long number(const char* what) {
    skip_space_and_comments();
    long v = 0;
    std::size_t start = pos_;
    while (pos_ < bytes_.size() && std::isdigit(bytes_[pos_])) {
      v = v * 10 + (bytes_[pos_] - '0');
      if (v > 1'000'000) throw DecodeError(std::string("PPM ") + what + " is out of range");
      ++pos_;
    }
    if (pos_ == start) throw DecodeError(std::string("PPM header is missing the ") + what);
    return v;
  }

  std::size_t pos() const { return pos_; }
  void advance() { ++pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace detail

// Decodes a binary (P6) PPM with maxval 255.
inline RawImage decode_ppm(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6')
    throw DecodeError("not a binary PPM (expected magic 'P6')");
  detail::PpmHeaderReader r(bytes.subspan(2));
  const long width = r.number("width");
  const long height = r.number("height");
  const long maxval = r.number("maxval");
  if (width < 1 || height < 1) throw DecodeError("PPM dimensions must be positive");
  if (maxval != 255) throw DecodeError("PPM maxval must be 255, got " + std::to_string(maxval));
  // Exactly one whitespace byte separates the header from the raster.
  const std::size_t header = 2 + r.pos();
  if (header >= bytes.size() || !std::isspace(bytes[header]))
    throw DecodeError("PPM header is not terminated by whitespace");
  const std::size_t offset = header + 1;
  const std::size_t need = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 3;
  if (bytes.size() - offset < need)
    throw DecodeError("PPM payload truncated: expected " + std::to_string(need) + " bytes, got " +
                      std::to_string(bytes.size() - offset));
  RawImage img;
  img.width = static_cast<int>(width);
  img.height = static_cast<int>(height);
  img.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(offset),
                  bytes.begin() + static_cast<std::ptrdiff_t>(offset + need));
  return img;
}

inline std::vector<std::uint8_t> encode_ppm(const RawImage& img) {
  const std::string header =
      "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

// BT.601 luma, y = round(0.299 R + 0.587 G + 0.114 B), evaluated in exact
// integer arithmetic. The other modes extract one literal channel.
inline Plane to_single_channel(const RawImage& img, ChannelMode mode = ChannelMode::luma) {
  if (img.data.size() != static_cast<std::size_t>(img.width) * img.height * 3)
    throw ParameterError("image data length does not match width*height*3");
  Plane p{img.width, img.height, std::vector<std::uint8_t>(static_cast<std::size_t>(img.width) * img.height)};
  for (std::size_t i = 0; i < p.data.size(); ++i) {
    const unsigned r = img.data[3 * i], g = img.data[3 * i + 1], b = img.data[3 * i + 2];
    unsigned y = 0;
    switch (mode) {
      case ChannelMode::luma: y = (299 * r + 587 * g + 114 * b + 500) / 1000; break;
      case ChannelMode::red: y = r; break;
      case ChannelMode::green: y = g; break;
      case ChannelMode::blue: y = b; break;
    }
    p.data[i] = static_cast<std::uint8_t>(std::min(y, 255u));
  }
  return p;
}

// Half-pixel-centre bilinear resampling with border clamping.
inline Plane resize_bilinear(const Plane& in, int out_h = 32, int out_w = 32) {
  if (in.width < 1 || in.height < 1) throw ParameterError("resize input must be at least 1x1");
  if (out_h < 1 || out_w < 1) throw ParameterError("resize output must be at least 1x1");
  const double sx = static_cast<double>(in.width) / out_w;
  const double sy = static_cast<double>(in.height) / out_h;
  Plane out{out_w, out_h, std::vector<std::uint8_t>(static_cast<std::size_t>(out_w) * out_h)};
  auto source = [](int dst, double scale, int extent, int& i0, int& i1, double& frac) {
    double s = (dst + 0.5) * scale - 0.5;
    s = std::clamp(s, 0.0, static_cast<double>(extent - 1));
    i0 = static_cast<int>(std::floor(s));
    i1 = std::min(i0 + 1, extent - 1);
    frac = s - i0;
  };
  for (int y = 0; y < out_h; ++y) {
    int y0, y1;
    double fy;
    source(y, sy, in.height, y0, y1, fy);
    for (int x = 0; x < out_w; ++x) {
      int x0, x1;
      double fx;
      source(x, sx, in.width, x0, x1, fx);
      const double top = in.at(y0, x0) * (1.0 - fx) + in.at(y0, x1) * fx;
      const double bottom = in.at(y1, x0) * (1.0 - fx) + in.at(y1, x1) * fx;
      const double v = top * (1.0 - fy) + bottom * fy;
      out.data[static_cast<std::size_t>(y) * out_w + x] =
          static_cast<std::uint8_t>(std::clamp(round_half_away(v), 0.0, 255.0));
    }
  }
  return out;
}

inline std::vector<float> normalize(const Plane& p) {
  std::vector<float> out(p.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<float>(p.data[i] / 255.0);
  return out;
}

struct Preprocessed {
  Plane plane;                // 32x32 8-bit
  std::vector<float> tensor;  // 32x32x1 in [0,1]
};

inline Preprocessed preprocess_image(const RawImage& img, ChannelMode mode = ChannelMode::luma,
                                     int size = 32) {
  Plane small = resize_bilinear(to_single_channel(img, mode), size, size);
  auto tensor = normalize(small);
  return {std::move(small), std::move(tensor)};
}

inline Preprocessed preprocess_ppm(std::span<const std::uint8_t> bytes,
                                   ChannelMode mode = ChannelMode::luma, int size = 32) {
  return preprocess_image(decode_ppm(bytes), mode, size);
}

}  // namespace tinybatt
