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

#include "pyrfocus/pyramid.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>

#include "pyrfocus/threadpool.hpp"

namespace pyrfocus {

double PyramidGeometry::down_factor(int p) const {
  return std::ldexp(1.0, P() - p);
}

double PyramidGeometry::level_to_origin(int p, double v) const {
  return v * down_factor(p) / level(p).r;
}

double PyramidGeometry::origin_to_level(int p, double v) const {
  return v * level(p).r / down_factor(p);
}

const LevelGeometry& PyramidGeometry::level(int p) const {
  if (p < 1 || p > P()) throw UserError("level index out of range");
  return levels[static_cast<std::size_t>(p - 1)];
}

const Tile& PyramidGeometry::tile(const TileId& id) const {
  const LevelGeometry& lv = level(id.level);
  if (id.row < 0 || id.row >= lv.n_h || id.col < 0 || id.col >= lv.n_w)
    throw UserError("tile index out of range");
  return lv.tiles[static_cast<std::size_t>(id.row) * lv.n_w + id.col];
}

GridSpec tile_grid(int H, int W, int B) {
  if (H < 1 || W < 1 || B < 1) throw UserError("tile_grid: non-positive input");
  GridSpec g;
  g.n_h = (H + B - 1) / B;
  g.n_w = (W + B - 1) / B;
  g.r = std::min(static_cast<double>(g.n_h) * B / H,
                 static_cast<double>(g.n_w) * B / W);
  // round-half-up of dim * r
  g.resized_h = static_cast<int>(std::floor(H * g.r + 0.5));
  g.resized_w = static_cast<int>(std::floor(W * g.r + 0.5));
  g.pad_bottom = g.n_h * B - g.resized_h;
  g.pad_right = g.n_w * B - g.resized_w;
  return g;
}

std::vector<std::pair<int, int>> build_downsample_chain(int w, int h,
                                                        const PyramidConfig& cfg) {
  if (w < 1 || h < 1) throw UserError("empty image");
  std::vector<std::pair<int, int>> chain{{w, h}};
  while (std::min(chain.back().first, chain.back().second) > cfg.min_side) {
    int nw = chain.back().first / 2;
    int nh = chain.back().second / 2;
    chain.emplace_back(nw, nh);
  }
  return chain;
}

namespace {

LevelGeometry make_level_geometry(int p, int src_w, int src_h, int B) {
  LevelGeometry lv;
  lv.p = p;
  lv.source_w = src_w;
  lv.source_h = src_h;
  GridSpec g = tile_grid(src_h, src_w, B);
  lv.r = g.r;
  lv.n_h = g.n_h;
  lv.n_w = g.n_w;
  lv.resized_w = g.resized_w;
  lv.resized_h = g.resized_h;
  lv.pad_right = g.pad_right;
  lv.pad_bottom = g.pad_bottom;
  return lv;
}

void fill_tiles(PyramidGeometry& geom) {
  for (auto& lv : geom.levels) {
    lv.tiles.clear();
    lv.tiles.reserve(static_cast<std::size_t>(lv.n_h) * lv.n_w);
    int B = geom.cfg.tile_size;
    for (int r = 0; r < lv.n_h; ++r) {
      for (int c = 0; c < lv.n_w; ++c) {
        Tile t;
        t.row = r;
        t.col = c;
        t.origin_x0 = std::clamp(geom.level_to_origin(lv.p, c * double(B)), 0.0,
                                 double(geom.orig_w));
        t.origin_y0 = std::clamp(geom.level_to_origin(lv.p, r * double(B)), 0.0,
                                 double(geom.orig_h));
        t.origin_x1 = std::clamp(geom.level_to_origin(lv.p, (c + 1) * double(B)),
                                 0.0, double(geom.orig_w));
        t.origin_y1 = std::clamp(geom.level_to_origin(lv.p, (r + 1) * double(B)),
                                 0.0, double(geom.orig_h));
        // A tile is padding-only when it starts at or past the resized
        // extent. Grid arithmetic guarantees this never happens (pads are
        // strictly thinner than one tile); kept as recorded fact.
        t.padding_only = (c * B >= lv.resized_w) || (r * B >= lv.resized_h);
        lv.tiles.push_back(t);
      }
    }
  }
}

}  // namespace

ImagePyramid build_pyramid(const RasterImage& img, const PyramidConfig& cfg,
                           unsigned threads) {
  if (img.width < 1 || img.height < 1 || img.data.empty())
    throw UserError("build_pyramid: empty image");
  if (cfg.tile_size < 1 || cfg.min_side < cfg.tile_size)
    throw UserError("build_pyramid: require tile_size >= 1 and min_side >= tile_size");

  ImagePyramid pyr;
  pyr.geom.cfg = cfg;
  pyr.geom.orig_w = img.width;
  pyr.geom.orig_h = img.height;
  pyr.geom.chain = build_downsample_chain(img.width, img.height, cfg);

  const int P = static_cast<int>(pyr.geom.chain.size());
  pyr.geom.levels.resize(static_cast<std::size_t>(P));
  for (int p = 1; p <= P; ++p) {
    auto [w, h] = pyr.geom.chain[static_cast<std::size_t>(P - p)];
    pyr.geom.levels[static_cast<std::size_t>(p - 1)] =
        make_level_geometry(p, w, h, cfg.tile_size);
  }
  fill_tiles(pyr.geom);

  // Chain images by iterated halving: entry i is entry i-1 downsampled 2x.
  std::vector<RasterImage> chain_imgs;
  chain_imgs.reserve(pyr.geom.chain.size());
  chain_imgs.push_back(img);
  for (std::size_t i = 1; i < pyr.geom.chain.size(); ++i) {
    auto [w, h] = pyr.geom.chain[i];
    chain_imgs.push_back(resize_bilinear(chain_imgs.back(), w, h, threads));
  }

  pyr.level_images.resize(static_cast<std::size_t>(P));
  for (int p = 1; p <= P; ++p) {
    const LevelGeometry& lv = pyr.geom.level(p);
    const RasterImage& src = chain_imgs[static_cast<std::size_t>(P - p)];
    RasterImage resized = resize_bilinear(src, lv.resized_w, lv.resized_h, threads);
    pyr.level_images[static_cast<std::size_t>(p - 1)] =
        pad_bottom_right(resized, lv.pad_right, lv.pad_bottom);
  }

  // Thumbnail: aspect-preserving resize of the original, zero pad to square.
  int T = cfg.thumbnail_size;
  double ts = std::min(static_cast<double>(T) / img.width,
                       static_cast<double>(T) / img.height);
  int tw = std::max(1, static_cast<int>(std::floor(img.width * ts + 0.5)));
  int th = std::max(1, static_cast<int>(std::floor(img.height * ts + 0.5)));
  tw = std::min(tw, T);
  th = std::min(th, T);
  RasterImage thumb = resize_bilinear(img, tw, th, threads);
  pyr.thumbnail = pad_bottom_right(thumb, T - tw, T - th);
  return pyr;
}

RasterImage crop_tile(const ImagePyramid& pyr, const TileId& id) {
  pyr.geom.tile(id);  // validates level, row, col
  int B = pyr.geom.cfg.tile_size;
  const RasterImage& img = pyr.level_images[static_cast<std::size_t>(id.level - 1)];
  return crop(img, id.col * B, id.row * B, B, B);
}

ojson manifest_json(const PyramidGeometry& geom) {
  ojson j;
  j["config"] = {{"tile_size", geom.cfg.tile_size},
                 {"min_side", geom.cfg.min_side},
                 {"thumbnail_size", geom.cfg.thumbnail_size},
                 {"base_gsd", sig9(geom.cfg.base_gsd)}};
  j["original"] = {geom.orig_w, geom.orig_h};
  ojson chain = ojson::array();
  for (auto [w, h] : geom.chain) chain.push_back({w, h});
  j["chain"] = chain;
  ojson levels = ojson::array();
  for (const auto& lv : geom.levels) {
    ojson l;
    l["p"] = lv.p;
    l["source_w"] = lv.source_w;
    l["source_h"] = lv.source_h;
    l["r_p"] = sig9(lv.r);
    l["resized_w"] = lv.resized_w;
    l["resized_h"] = lv.resized_h;
    l["grid"] = {lv.n_h, lv.n_w};
    l["pads"] = {lv.pad_right, lv.pad_bottom};
    l["gsd"] = sig9(geom.cfg.base_gsd * std::ldexp(1.0, geom.P() - lv.p));
    ojson tiles = ojson::array();
    for (const auto& t : lv.tiles) {
      ojson tj;
      tj["id"] = "L" + std::to_string(lv.p) + "/r" + std::to_string(t.row) +
                 "_c" + std::to_string(t.col);
      tj["row"] = t.row;
      tj["col"] = t.col;
      tj["origin_bbox"] = {sig9(t.origin_x0), sig9(t.origin_y0),
                           sig9(t.origin_x1), sig9(t.origin_y1)};
      tiles.push_back(tj);
    }
    l["tiles"] = tiles;
    levels.push_back(l);
  }
  j["levels"] = levels;
  return j;
}

PyramidGeometry manifest_from_json(const ojson& j) {
  PyramidGeometry g;
  try {
    g.cfg.tile_size = j.at("config").at("tile_size").get<int>();
    g.cfg.min_side = j.at("config").at("min_side").get<int>();
    g.cfg.thumbnail_size = j.at("config").at("thumbnail_size").get<int>();
    g.cfg.base_gsd = j.at("config").value("base_gsd", 1.0);
    g.orig_w = j.at("original").at(0).get<int>();
    g.orig_h = j.at("original").at(1).get<int>();
    for (const auto& e : j.at("chain"))
      g.chain.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    for (const auto& l : j.at("levels")) {
      LevelGeometry lv;
      lv.p = l.at("p").get<int>();
      lv.source_w = l.at("source_w").get<int>();
      lv.source_h = l.at("source_h").get<int>();
      lv.r = l.at("r_p").get<double>();
      lv.resized_w = l.at("resized_w").get<int>();
      lv.resized_h = l.at("resized_h").get<int>();
      lv.n_h = l.at("grid").at(0).get<int>();
      lv.n_w = l.at("grid").at(1).get<int>();
      lv.pad_right = l.at("pads").at(0).get<int>();
      lv.pad_bottom = l.at("pads").at(1).get<int>();
      for (const auto& tj : l.at("tiles")) {
        Tile t;
        t.row = tj.at("row").get<int>();
        t.col = tj.at("col").get<int>();
        t.origin_x0 = tj.at("origin_bbox").at(0).get<double>();
        t.origin_y0 = tj.at("origin_bbox").at(1).get<double>();
        t.origin_x1 = tj.at("origin_bbox").at(2).get<double>();
        t.origin_y1 = tj.at("origin_bbox").at(3).get<double>();
        lv.tiles.push_back(t);
      }
      g.levels.push_back(std::move(lv));
    }
  } catch (const ojson::exception& e) {
    throw UserError(std::string("manifest: ") + e.what());
  }
  if (g.levels.empty()) throw UserError("manifest: no levels");
  return g;
}

void dump_tiles(const ImagePyramid& pyr, const std::string& dir,
                unsigned threads) {
  namespace fs = std::filesystem;
  std::vector<TileId> ids;
  for (const auto& lv : pyr.geom.levels) {
    fs::create_directories(fs::path(dir) / ("L" + std::to_string(lv.p)));
    for (const auto& t : lv.tiles) ids.push_back({lv.p, t.row, t.col});
  }
  const char* ext = pyr.thumbnail.channels == 3 ? ".ppm" : ".pgm";
  parallel_for(ids.size(), threads, [&](std::size_t i) {
    const TileId& id = ids[i];
    fs::path path = fs::path(dir) / ("L" + std::to_string(id.level)) /
                    ("r" + std::to_string(id.row) + "_c" +
                     std::to_string(id.col) + ext);
    save_image(path.string(), crop_tile(pyr, id));
  });
}

}  // namespace pyrfocus
