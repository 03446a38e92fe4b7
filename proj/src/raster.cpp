// Copyright 2026 The pyrfocus Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "pyrfocus/raster.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>

#include "pyrfocus/jsonio.hpp"
#include "pyrfocus/threadpool.hpp"

namespace pyrfocus {

RasterImage::RasterImage(int w, int h, int c) : width(w), height(h), channels(c) {
  if (w <= 0 || h <= 0 || (c != 1 && c != 3))
    throw UserError("invalid raster dimensions");
  data.assign(static_cast<std::size_t>(w) * h * c, 0);
}

namespace {

// Read one whitespace-delimited token, skipping '#' comment lines as the
// netpbm header grammar allows.
int read_pnm_int(std::istream& in, const std::string& path) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (std::isspace(c)) {
      c = in.get();
    } else {
      break;
    }
  }
  if (c == EOF || !std::isdigit(c)) throw UserError(path + ": malformed header");
  long v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + (c - '0');
    if (v > 1'000'000'000L) throw UserError(path + ": header value out of range");
    c = in.get();
  }
  return static_cast<int>(v);
}

}  // namespace

RasterImage load_image(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot open " + path);
  char magic[2] = {0, 0};
  in.read(magic, 2);
  int channels = 0;
  if (magic[0] == 'P' && magic[1] == '6') channels = 3;
  else if (magic[0] == 'P' && magic[1] == '5') channels = 1;
  else throw UserError(path + ": not a binary PPM/PGM file");

  int w = read_pnm_int(in, path);
  int h = read_pnm_int(in, path);
  int maxval = read_pnm_int(in, path);
  if (w <= 0 || h <= 0) throw UserError(path + ": bad dimensions");
  if (maxval != 255) throw UserError(path + ": only maxval 255 is supported");

  RasterImage img(w, h, channels);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (static_cast<std::size_t>(in.gcount()) != img.data.size())
    throw UserError(path + ": truncated pixel data");
  return img;
}

void save_image(const std::string& path, const RasterImage& img) {
  if (img.channels != 1 && img.channels != 3)
    throw UserError("save_image: unsupported channel count");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write " + path);
  out << (img.channels == 3 ? "P6" : "P5") << '\n'
      << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) throw UserError("short write to " + path);
}

RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h,
                            unsigned threads) {
  if (out_w <= 0 || out_h <= 0) throw UserError("resize to empty raster");
  if (out_w == img.width && out_h == img.height) return img;

  RasterImage out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  const int c = img.channels;

  parallel_for(static_cast<std::size_t>(out_h), threads, [&](std::size_t row) {
    int y = static_cast<int>(row);
    double fy = (y + 0.5) * sy - 0.5;
    int y0 = static_cast<int>(std::floor(fy));
    double wy = fy - y0;
    int y1 = std::min(y0 + 1, img.height - 1);
    y0 = std::clamp(y0, 0, img.height - 1);
    for (int x = 0; x < out_w; ++x) {
      double fx = (x + 0.5) * sx - 0.5;
      int x0 = static_cast<int>(std::floor(fx));
      double wx = fx - x0;
      int x1 = std::min(x0 + 1, img.width - 1);
      x0 = std::clamp(x0, 0, img.width - 1);
      for (int k = 0; k < c; ++k) {
        double top = (1.0 - wx) * img.at(x0, y0, k) + wx * img.at(x1, y0, k);
        double bot = (1.0 - wx) * img.at(x0, y1, k) + wx * img.at(x1, y1, k);
        double v = (1.0 - wy) * top + wy * bot;
        long r = std::lround(v);
        out.at(x, y, k) = static_cast<std::uint8_t>(std::clamp(r, 0L, 255L));
      }
    }
  });
  return out;
}

RasterImage pad_bottom_right(const RasterImage& img, int pad_right,
                             int pad_bottom) {
  if (pad_right < 0 || pad_bottom < 0) throw UserError("negative padding");
  if (pad_right == 0 && pad_bottom == 0) return img;
  RasterImage out(img.width + pad_right, img.height + pad_bottom, img.channels);
  for (int y = 0; y < img.height; ++y) {
    std::memcpy(&out.data[(static_cast<std::size_t>(y) * out.width) * out.channels],
                &img.data[(static_cast<std::size_t>(y) * img.width) * img.channels],
                static_cast<std::size_t>(img.width) * img.channels);
  }
  return out;
}

RasterImage crop(const RasterImage& img, int x0, int y0, int w, int h) {
  if (x0 < 0 || y0 < 0 || w <= 0 || h <= 0 || x0 + w > img.width ||
      y0 + h > img.height)
    throw UserError("crop window outside image");
  RasterImage out(w, h, img.channels);
  for (int y = 0; y < h; ++y) {
    std::memcpy(&out.data[(static_cast<std::size_t>(y) * w) * img.channels],
                &img.data[((static_cast<std::size_t>(y0) + y) * img.width + x0) *
                          img.channels],
                static_cast<std::size_t>(w) * img.channels);
  }
  return out;
}

}  // namespace pyrfocus
