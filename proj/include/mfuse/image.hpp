/*
 * Copyright 2026 The mfuse Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "mfuse/graph.hpp"
#include "mfuse/parameters.hpp"
#include "mfuse/random.hpp"

namespace mfuse {

// RGB image, HWC, values in [0,1].
struct Image {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w * 3, fill) {}

  double& at(std::size_t y, std::size_t x, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  double at(std::size_t y, std::size_t x, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
};

// 8-bit storage form, HWC.
struct Image8 {
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<std::uint8_t> pixels;
};

Image to_unit(const Image8& image);
Image8 quantize(const Image& image);

// Binary PPM (P6, maxval 255).
Image8 read_ppm(const std::filesystem::path& path);
void write_ppm(const Image8& image, const std::filesystem::path& path);

// Bilinear resampling with pixel-center alignment; resizing to the same size
// is the identity.
Image resize_bilinear(const Image& image, std::size_t out_height, std::size_t out_width);
// Scales so that the shorter side equals `shortest`, keeping aspect ratio.
Image resize_shortest(const Image& image, std::size_t shortest);

struct VisionBackboneConfig {
  std::size_t input_side = 56;
  std::size_t resize_shortest = 64;
  std::vector<std::size_t> channels = {16, 32, 48, 64};
  std::size_t kernel = 3;
  std::size_t stride = 2;
  std::size_t pad = 1;

  // 5 stride-2 stages without padding take 299 to 8, ending in 2048 channels.
  static VisionBackboneConfig paper();

  void validate() const;
  std::size_t map_side() const;
  std::size_t map_channels() const { return channels.back(); }
};

// Resize shortest side, then crop input_side x input_side: seeded random
// offset plus a coin-flip horizontal mirror in train mode, centered in eval
// mode. Returns [input_side, input_side, 3].
Tensor preprocess_image(const Image& image, Mode mode, const VisionBackboneConfig& config,
                        std::uint64_t seed);

// `<prefix>.stage<i>.w` plus batch-norm parameters per stage; the convolutions
// carry no bias since batch norm follows each one.
void init_vision_backbone(ParameterStore& store, const std::string& prefix,
                          const VisionBackboneConfig& config, Rng& rng);

struct VisionFeatures {
  Var map;     // [N, map_side, map_side, D_v]
  Var pooled;  // [N, D_v], spatial mean of `map`
};

// Stages of conv -> batch norm -> relu. images: [N, input_side, input_side, 3].
VisionFeatures vision_features(ParamScope& scope, const std::string& prefix, Var images,
                               const VisionBackboneConfig& config);

}  // namespace mfuse
