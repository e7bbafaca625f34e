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
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mfuse/graph.hpp"
#include "mfuse/image.hpp"
#include "mfuse/parameters.hpp"
#include "mfuse/text.hpp"

namespace mfuse {

// kLstm is the text-only classifier over tweet text; the other three are the
// multimodal heads.
enum class Variant { kLstm, kFcm, kScm, kTkm };

std::string_view variant_name(Variant v) noexcept;
std::optional<Variant> parse_variant(std::string_view name) noexcept;

struct FusionModelConfig {
  Variant variant = Variant::kTkm;
  VisionBackboneConfig backbone;
  TextEncoderConfig text;
  bool shared_text_encoder = true;
  std::size_t k_t = 4;
  std::size_t k_it = 2;
  // Output widths of the fully connected head, ending in 2.
  std::vector<std::size_t> fc_plan = {128, 64, 2};
  std::size_t fusion_block_count = 2;
  std::size_t fusion_block_channels = 32;
  double dropout_rate = 0.5;

  static FusionModelConfig desk(Variant variant);
  // 8x8x2048 map, 150-d texts, K_t=10, K_it=5, (1024, 512, 2) head.
  static FusionModelConfig paper(Variant variant);

  void validate() const;
  std::size_t map_side() const { return backbone.map_side(); }
  std::size_t map_channels() const { return backbone.map_channels(); }
};

struct InputMask {
  bool tweet_text = true;
  bool image_text = true;
  bool image = true;

  void validate() const;
  friend bool operator==(const InputMask&, const InputMask&) = default;
};

// "TT", "IT", "I" joined by commas, e.g. "TT,IT".
std::string mask_name(const InputMask& mask);
InputMask parse_mask(std::string_view text);

struct ModalInputs {
  Var image;      // [N,S,S,3] or visual features; any shape
  Var tweet;      // [N,H]
  Var image_text; // [N,H]
};

// Replaces each unavailable modality by zeros of the same shape.
ModalInputs apply_input_mask(Graph& graph, const ModalInputs& inputs, const InputMask& mask);

// Intermediate values recorded by a forward pass, for shape and invariance
// checks.
struct FusionTrace {
  Shape fcm_concat;           // FCM: [N, D_v + 2H]
  Shape fused_map;            // SCM/TKM: input to the fusion blocks
  Tensor multimodal_map;      // TKM: dynamic convolution output, before batch norm
  Shape pooled;               // SCM/TKM: pooled block output
  Tensor pooled_value;
};

// Heads over already-encoded modalities; prefixes are "fcm", "scm", "tkm".
Var fcm_forward(ParamScope& scope, const FusionModelConfig& config, Var v_pool, Var t_tweet,
                Var t_imgtext, FusionTrace* trace = nullptr);
Var scm_forward(ParamScope& scope, const FusionModelConfig& config, Var v_map, Var t_tweet,
                Var t_imgtext, FusionTrace* trace = nullptr);
// `<prefix>.k<j>.{w,b}` for j < count; returns [N, count, D_v].
Var make_textual_kernels(ParamScope& scope, const std::string& prefix, Var t_text,
                         std::size_t count);
Var tkm_forward(ParamScope& scope, const FusionModelConfig& config, Var v_map, Var t_tweet,
                Var t_imgtext, FusionTrace* trace = nullptr);

struct ModelBatch {
  Tensor images;  // [N, input_side, input_side, 3]; unused by kLstm
  std::vector<std::vector<std::int64_t>> tweet;
  std::vector<std::vector<std::int64_t>> image_text;

  std::size_t size() const noexcept { return tweet.size(); }
};

class FusionModel {
 public:
  explicit FusionModel(FusionModelConfig config);

  const FusionModelConfig& config() const noexcept { return config_; }

  ParameterStore init_parameters(std::uint64_t seed) const;

  // Logits [N,2]. Masked texts are not encoded at all; their vectors are zero.
  Var forward(ParamScope& scope, const ModelBatch& batch, const InputMask& mask,
              FusionTrace* trace = nullptr) const;

 private:
  std::string tweet_prefix() const { return "text"; }
  std::string image_text_prefix() const { return config_.shared_text_encoder ? "text" : "image_text"; }

  FusionModelConfig config_;
};

}  // namespace mfuse
