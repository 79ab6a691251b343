// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "dtof/core.hpp"

namespace dtof {

// Single-channel image, row 0 at the top.
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h, double fill = 0.0) : width(w), height(h), data(size_t(w) * h, fill) {}

  double& operator()(int x, int y) { return data[size_t(y) * width + x]; }
  double operator()(int x, int y) const { return data[size_t(y) * width + x]; }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const { return width == o.width && height == o.height; }
};

// PFM, greyscale ("Pf"), little-endian (negative scale), bottom-to-top rows.
inline void write_pfm(const std::filesystem::path& path, const Image& img) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error("cannot open '" + path.string() + "' for writing");
  os << "Pf\n" << img.width << ' ' << img.height << "\n-1.0\n";
  std::vector<float> row(img.width);
  for (int y = img.height - 1; y >= 0; --y) {
    for (int x = 0; x < img.width; ++x) row[x] = static_cast<float>(img(x, y));
    if constexpr (std::endian::native == std::endian::big) {
      for (float& v : row) {
        uint32_t u;
        std::memcpy(&u, &v, 4);
        u = __builtin_bswap32(u);
        std::memcpy(&v, &u, 4);
      }
    }
    os.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
  }
  if (!os) throw Error("write failed for '" + path.string() + "'");
}

inline Image read_pfm(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error("cannot open '" + path.string() + "'");
  std::string magic;
  int w = 0, h = 0;
  double scale = 0;
  is >> magic >> w >> h >> scale;
  if (magic != "Pf" && magic != "PF") throw Error("'" + path.string() + "' is not a PFM file");
  if (w <= 0 || h <= 0) throw Error("bad PFM dimensions in '" + path.string() + "'");
  is.get();
  const int channels = magic == "PF" ? 3 : 1;
  const bool little = scale < 0;
  const bool swap = little != (std::endian::native == std::endian::little);
  Image img(w, h);
  std::vector<float> row(size_t(w) * channels);
  for (int y = h - 1; y >= 0; --y) {
    is.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size() * sizeof(float)));
    if (!is) throw Error("truncated PFM '" + path.string() + "'");
    for (int x = 0; x < w; ++x) {
      double acc = 0;
      for (int c = 0; c < channels; ++c) {
        float v = row[size_t(x) * channels + c];
        if (swap) {
          uint32_t u;
          std::memcpy(&u, &v, 4);
          u = __builtin_bswap32(u);
          std::memcpy(&v, &u, 4);
        }
        acc += v;
      }
      img(x, y) = acc / channels;
    }
  }
  return img;
}

}  // namespace dtof
