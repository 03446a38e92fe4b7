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

#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pyrfocus {

/// 8-bit raster, interleaved row-major. channels is 1 (gray) or 3 (RGB).
struct RasterImage {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  RasterImage() = default;
  RasterImage(int w, int h, int c);

  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

/// Load a binary PPM (P6) or PGM (P5) file with maxval 255.
RasterImage load_image(const std::string& path);

/// Write P5 for single-channel images, P6 for three-channel ones.
void save_image(const std::string& path, const RasterImage& img);

/// Bilinear resample with half-pixel-center sampling, double accumulation,
/// round-to-nearest output. Rows are processed independently so the result
/// does not depend on the thread count.
RasterImage resize_bilinear(const RasterImage& img, int out_w, int out_h,
                            unsigned threads = 1);

/// Extend the canvas by zero-valued pixels on the right and bottom edges.
RasterImage pad_bottom_right(const RasterImage& img, int pad_right,
                             int pad_bottom);

/// Copy the w x h window whose top-left corner is (x0, y0). The window must
/// lie fully inside the image.
RasterImage crop(const RasterImage& img, int x0, int y0, int w, int h);

}  // namespace pyrfocus
