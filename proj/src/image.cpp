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

#include "mfuse/image.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "layers.hpp"
#include "mfuse/error.hpp"
#include "mfuse/ops.hpp"

namespace mfuse {

namespace {

void require_nonempty(const Image& image, const char* who) {
  if (image.height == 0 || image.width == 0) {
    fail(ErrorKind::kInvalidArgument, std::string(who) + ": image has no pixels");
  }
  if (image.pixels.size() != image.height * image.width * 3) {
    fail(ErrorKind::kInvalidArgument, std::string(who) + ": pixel buffer does not match " +
                                          std::to_string(image.height) + "x" +
                                          std::to_string(image.width) + "x3");
  }
}

// Skips whitespace and '#' comments in a PPM header.
bool read_header_int(std::istream& in, std::size_t& value) {
  int c;
  while ((c = in.peek()) != EOF) {
    if (std::isspace(c)) {
      in.get();
    } else if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else {
      break;
    }
  }
  return static_cast<bool>(in >> value);
}

}  // namespace

Image to_unit(const Image8& image) {
  Image out(image.height, image.width);
  for (std::size_t i = 0; i < image.pixels.size(); ++i) out.pixels[i] = image.pixels[i] / 255.0;
  return out;
}

Image8 quantize(const Image& image) {
  Image8 out{image.height, image.width, std::vector<std::uint8_t>(image.pixels.size())};
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    const double v = std::clamp(image.pixels[i], 0.0, 1.0);
    out.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
  }
  return out;
}

Image8 read_ppm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::kIo, "cannot read image " + path.string());
  std::string magic;
  in >> magic;
  std::size_t w = 0, h = 0, maxval = 0;
  if (magic != "P6" || !read_header_int(in, w) || !read_header_int(in, h) ||
      !read_header_int(in, maxval) || maxval != 255 || w == 0 || h == 0) {
    fail(ErrorKind::kData, path.string() + ": not a binary 8-bit PPM");
  }
  in.get();  // single whitespace before raster
  Image8 out{h, w, std::vector<std::uint8_t>(h * w * 3)};
  in.read(reinterpret_cast<char*>(out.pixels.data()), static_cast<std::streamsize>(out.pixels.size()));
  if (in.gcount() != static_cast<std::streamsize>(out.pixels.size())) {
    fail(ErrorKind::kData, path.string() + ": truncated raster");
  }
  return out;
}

void write_ppm(const Image8& image, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::kIo, "cannot write image " + path.string());
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(image.pixels.data()),
            static_cast<std::streamsize>(image.pixels.size()));
  if (!out) fail(ErrorKind::kIo, "write failed for " + path.string());
}

Image resize_bilinear(const Image& image, std::size_t out_height, std::size_t out_width) {
  require_nonempty(image, "resize_bilinear");
  if (out_height == 0 || out_width == 0) {
    fail(ErrorKind::kInvalidArgument, "resize_bilinear: target size must be positive");
  }
  if (out_height == image.height && out_width == image.width) return image;

  auto axis = [](std::size_t out, std::size_t in, std::size_t i, std::size_t& lo,
                 std::size_t& hi, double& frac) {
    double src = (static_cast<double>(i) + 0.5) * static_cast<double>(in) / static_cast<double>(out) - 0.5;
    src = std::clamp(src, 0.0, static_cast<double>(in - 1));
    lo = static_cast<std::size_t>(std::floor(src));
    hi = std::min(lo + 1, in - 1);
    frac = src - static_cast<double>(lo);
  };

  Image out(out_height, out_width);
  for (std::size_t y = 0; y < out_height; ++y) {
    std::size_t y0, y1;
    double fy;
    axis(out_height, image.height, y, y0, y1, fy);
    for (std::size_t x = 0; x < out_width; ++x) {
      std::size_t x0, x1;
      double fx;
      axis(out_width, image.width, x, x0, x1, fx);
      for (std::size_t c = 0; c < 3; ++c) {
        const double top = image.at(y0, x0, c) * (1 - fx) + image.at(y0, x1, c) * fx;
        const double bottom = image.at(y1, x0, c) * (1 - fx) + image.at(y1, x1, c) * fx;
        out.at(y, x, c) = top * (1 - fy) + bottom * fy;
      }
    }
  }
  return out;
}

Image resize_shortest(const Image& image, std::size_t shortest) {
  require_nonempty(image, "resize_shortest");
  const double scale =
      static_cast<double>(shortest) / static_cast<double>(std::min(image.height, image.width));
  auto scaled = [&](std::size_t n) {
    return std::max<std::size_t>(shortest, static_cast<std::size_t>(std::lround(n * scale)));
  };
  const std::size_t h = image.height <= image.width ? shortest : scaled(image.height);
  const std::size_t w = image.width < image.height ? shortest : scaled(image.width);
  return resize_bilinear(image, h, w);
}

VisionBackboneConfig VisionBackboneConfig::paper() {
  VisionBackboneConfig c;
  c.input_side = 299;
  c.resize_shortest = 500;
  c.channels = {32, 64, 128, 256, 2048};
  c.pad = 0;
  return c;
}

void VisionBackboneConfig::validate() const {
  if (input_side == 0 || channels.empty() || kernel == 0 || stride == 0) {
    fail(ErrorKind::kConfig, "backbone: input side, kernel, stride and channel plan must be positive");
  }
  if (resize_shortest < input_side) {
    fail(ErrorKind::kConfig, "backbone: resize_shortest " + std::to_string(resize_shortest) +
                                 " is smaller than the crop side " + std::to_string(input_side));
  }
  for (std::size_t c : channels) {
    if (c == 0) fail(ErrorKind::kConfig, "backbone: channel counts must be positive");
  }
  (void)map_side();
}

std::size_t VisionBackboneConfig::map_side() const {
  std::size_t side = input_side;
  for (std::size_t i = 0; i < channels.size(); ++i) {
    if (side + 2 * pad < kernel) {
      fail(ErrorKind::kConfig, "backbone: stage " + std::to_string(i) + " receives a " +
                                   std::to_string(side) + "-pixel map, too small for the kernel");
    }
    side = (side + 2 * pad - kernel) / stride + 1;
  }
  return side;
}

Tensor preprocess_image(const Image& image, Mode mode, const VisionBackboneConfig& config,
                        std::uint64_t seed) {
  require_nonempty(image, "preprocess_image");
  const Image resized = resize_shortest(image, config.resize_shortest);
  const std::size_t s = config.input_side;
  std::size_t top = (resized.height - s) / 2, left = (resized.width - s) / 2;
  bool mirror = false;
  if (mode == Mode::kTrain) {
    Rng rng(seed);
    top = rng.below(resized.height - s + 1);
    left = rng.below(resized.width - s + 1);
    mirror = rng.bernoulli(0.5);
  }
  Tensor out({s, s, 3});
  double* dst = out.data();
  for (std::size_t y = 0; y < s; ++y) {
    for (std::size_t x = 0; x < s; ++x) {
      const std::size_t sx = left + (mirror ? s - 1 - x : x);
      for (std::size_t c = 0; c < 3; ++c) *dst++ = resized.at(top + y, sx, c);
    }
  }
  return out;
}

void init_vision_backbone(ParameterStore& store, const std::string& prefix,
                          const VisionBackboneConfig& config, Rng& rng) {
  config.validate();
  std::size_t in = 3;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const std::string stage = prefix + ".stage" + std::to_string(i);
    layers::init_conv(store, stage, config.kernel, in, config.channels[i], rng, false);
    layers::init_batch_norm(store, stage + ".bn", config.channels[i]);
    in = config.channels[i];
  }
}

VisionFeatures vision_features(ParamScope& scope, const std::string& prefix, Var images,
                               const VisionBackboneConfig& config) {
  const Shape& s = images.shape();
  if (s.size() != 4 || s[1] != config.input_side || s[2] != config.input_side || s[3] != 3) {
    fail(ErrorKind::kInvalidArgument, "vision_features: expected [N," +
                                          std::to_string(config.input_side) + "," +
                                          std::to_string(config.input_side) + ",3] input, got " +
                                          shape_str(s));
  }
  const ops::Conv2dAttrs attrs{config.stride, config.pad, ops::Padding::kZero};
  Var x = images;
  for (std::size_t i = 0; i < config.channels.size(); ++i) {
    const std::string stage = prefix + ".stage" + std::to_string(i);
    x = ops::relu(layers::batch_norm(scope, stage + ".bn", layers::conv(scope, stage, x, attrs, false)));
  }
  return {x, ops::avg_pool_spatial(x)};
}

}  // namespace mfuse
