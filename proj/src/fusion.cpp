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

#include "mfuse/fusion.hpp"

#include <array>
#include <cmath>
#include <sstream>

#include "layers.hpp"
#include "mfuse/error.hpp"
#include "mfuse/ops.hpp"

namespace mfuse {

namespace {

constexpr std::array<std::string_view, 4> kVariantNames = {"lstm", "fcm", "scm", "tkm"};

void require_vectors(std::string_view who, const FusionModelConfig& c, Var t_tweet,
                     Var t_imgtext) {
  const std::size_t h = c.text.hidden_dim;
  for (Var t : {t_tweet, t_imgtext}) {
    const Shape& s = t.shape();
    if (s.size() != 2 || s[1] != h || s[0] != t_tweet.shape()[0]) {
      fail(ErrorKind::kInvalidArgument, std::string(who) + ": text encodings must be [N," +
                                            std::to_string(h) + "], got " +
                                            shape_str(t_tweet.shape()) + " and " +
                                            shape_str(t_imgtext.shape()));
    }
  }
}

void require_map(std::string_view who, const FusionModelConfig& c, Var v_map, std::size_t n) {
  const Shape& s = v_map.shape();
  const std::size_t side = c.map_side();
  if (s.size() != 4 || s[0] != n || s[1] != side || s[2] != side || s[3] != c.map_channels()) {
    fail(ErrorKind::kInvalidArgument, std::string(who) + ": visual map must be [" +
                                          std::to_string(n) + "," + std::to_string(side) + "," +
                                          std::to_string(side) + "," +
                                          std::to_string(c.map_channels()) + "], got " +
                                          shape_str(s));
  }
}

void init_head(ParameterStore& store, const std::string& prefix, std::size_t in,
               const std::vector<std::size_t>& plan, Rng& rng) {
  for (std::size_t i = 0; i < plan.size(); ++i) {
    const std::string layer = prefix + ".fc" + std::to_string(i);
    const bool last = i + 1 == plan.size();
    layers::init_dense(store, layer, in, plan[i], rng, last);
    // The logit layer starts narrower than He init, like the text classifier
    // head, so a fresh model predicts near-uniform probabilities.
    if (last) layers::init_uniform(store.at(layer + ".w").value, 1.0 / std::sqrt(double(in)), rng);
    if (!last) layers::init_batch_norm(store, layer + ".bn", plan[i]);
    in = plan[i];
  }
}

// dense -> BN -> relu for every layer but the last, which yields the logits.
Var head(ParamScope& scope, const std::string& prefix, Var x, std::size_t layers_count) {
  for (std::size_t i = 0; i < layers_count; ++i) {
    const std::string layer = prefix + ".fc" + std::to_string(i);
    const bool last = i + 1 == layers_count;
    x = layers::dense(scope, layer, x, last);
    if (!last) x = ops::relu(layers::batch_norm(scope, layer + ".bn", x));
  }
  return x;
}

void init_blocks(ParameterStore& store, const std::string& prefix, std::size_t in,
                 const FusionModelConfig& c, Rng& rng) {
  for (std::size_t i = 0; i < c.fusion_block_count; ++i) {
    const std::string block = prefix + ".block" + std::to_string(i);
    layers::init_conv(store, block, 3, in, c.fusion_block_channels, rng, false);
    layers::init_batch_norm(store, block + ".bn", c.fusion_block_channels);
    in = c.fusion_block_channels;
  }
}

std::size_t blocks_out(std::size_t in, const FusionModelConfig& c) {
  return c.fusion_block_count ? c.fusion_block_channels : in;
}

// Shared tail of SCM and TKM: conv blocks -> dropout -> average pool -> head.
// Replicate padding keeps spatially constant maps constant.
Var spatial_tail(ParamScope& scope, const std::string& prefix, const FusionModelConfig& c,
                 Var fused, FusionTrace* trace) {
  if (trace) trace->fused_map = fused.shape();
  const ops::Conv2dAttrs attrs{1, 1, ops::Padding::kReplicate};
  Var x = fused;
  for (std::size_t i = 0; i < c.fusion_block_count; ++i) {
    const std::string block = prefix + ".block" + std::to_string(i);
    x = ops::relu(layers::batch_norm(scope, block + ".bn", layers::conv(scope, block, x, attrs, false)));
  }
  x = ops::avg_pool_spatial(ops::dropout(x, c.dropout_rate));
  if (trace) {
    trace->pooled = x.shape();
    trace->pooled_value = x.value();
  }
  return head(scope, prefix, x, c.fc_plan.size());
}

Var tile_texts(Var map, Var t_tweet, Var t_imgtext) {
  const Shape& s = map.shape();
  const std::array<Var, 3> parts = {map, ops::tile_spatial(t_tweet, s[1], s[2]),
                                    ops::tile_spatial(t_imgtext, s[1], s[2])};
  return ops::concat(parts, 3);
}

Var zeros_like(Graph& g, Var v) { return g.constant(Tensor(v.shape(), 0.0)); }

}  // namespace

std::string_view variant_name(Variant v) noexcept {
  return kVariantNames[static_cast<std::size_t>(v)];
}

std::optional<Variant> parse_variant(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kVariantNames.size(); ++i) {
    if (kVariantNames[i] == name) return static_cast<Variant>(i);
  }
  return std::nullopt;
}

FusionModelConfig FusionModelConfig::desk(Variant variant) {
  FusionModelConfig c;
  c.variant = variant;
  c.text.embedding_dim = 32;
  c.text.hidden_dim = 32;
  return c;
}

FusionModelConfig FusionModelConfig::paper(Variant variant) {
  FusionModelConfig c;
  c.variant = variant;
  c.backbone = VisionBackboneConfig::paper();
  c.text.embedding_dim = 100;
  c.text.hidden_dim = 150;
  c.k_t = 10;
  c.k_it = 5;
  c.fc_plan = {1024, 512, 2};
  c.fusion_block_channels = 2048;
  return c;
}

void FusionModelConfig::validate() const {
  text.validate();
  if (variant == Variant::kLstm) return;
  backbone.validate();
  if (fc_plan.empty() || fc_plan.back() != 2) {
    fail(ErrorKind::kConfig, "fc_plan must end in 2 outputs");
  }
  for (std::size_t w : fc_plan) {
    if (w == 0) fail(ErrorKind::kConfig, "fc_plan widths must be positive");
  }
  if (variant == Variant::kTkm && (k_t == 0 || k_it == 0)) {
    fail(ErrorKind::kConfig, "TKM needs at least one kernel per text input (k_t, k_it >= 1)");
  }
  if (fusion_block_count > 0 && fusion_block_channels == 0) {
    fail(ErrorKind::kConfig, "fusion_block_channels must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    fail(ErrorKind::kConfig, "dropout rate must lie in [0,1)");
  }
}

void InputMask::validate() const {
  if (!tweet_text && !image_text && !image) {
    fail(ErrorKind::kConfig, "input mask must keep at least one modality");
  }
}

std::string mask_name(const InputMask& mask) {
  std::string out;
  auto add = [&](bool on, const char* name) {
    if (!on) return;
    if (!out.empty()) out += ',';
    out += name;
  };
  add(mask.tweet_text, "TT");
  add(mask.image_text, "IT");
  add(mask.image, "I");
  return out;
}

InputMask parse_mask(std::string_view text) {
  InputMask mask{false, false, false};
  std::stringstream in{std::string(text)};
  std::string part;
  while (std::getline(in, part, ',')) {
    const auto b = part.find_first_not_of(" \t");
    const auto e = part.find_last_not_of(" \t");
    part = b == std::string::npos ? "" : part.substr(b, e - b + 1);
    if (part == "TT") {
      mask.tweet_text = true;
    } else if (part == "IT") {
      mask.image_text = true;
    } else if (part == "I") {
      mask.image = true;
    } else {
      fail(ErrorKind::kConfig, "unknown modality '" + part + "' in mask '" + std::string(text) +
                                   "' (expected TT, IT, I)");
    }
  }
  mask.validate();
  return mask;
}

ModalInputs apply_input_mask(Graph& graph, const ModalInputs& inputs, const InputMask& mask) {
  mask.validate();
  return {mask.image ? inputs.image : zeros_like(graph, inputs.image),
          mask.tweet_text ? inputs.tweet : zeros_like(graph, inputs.tweet),
          mask.image_text ? inputs.image_text : zeros_like(graph, inputs.image_text)};
}

Var fcm_forward(ParamScope& scope, const FusionModelConfig& c, Var v_pool, Var t_tweet,
                Var t_imgtext, FusionTrace* trace) {
  require_vectors("fcm_forward", c, t_tweet, t_imgtext);
  const Shape& s = v_pool.shape();
  if (s.size() != 2 || s[0] != t_tweet.shape()[0] || s[1] != c.map_channels()) {
    fail(ErrorKind::kInvalidArgument, "fcm_forward: visual vector must be [N," +
                                          std::to_string(c.map_channels()) + "], got " +
                                          shape_str(s));
  }
  const std::array<Var, 3> parts = {v_pool, t_tweet, t_imgtext};
  Var x = ops::concat(parts, 1);
  if (trace) trace->fcm_concat = x.shape();
  return head(scope, "fcm", x, c.fc_plan.size());
}

Var scm_forward(ParamScope& scope, const FusionModelConfig& c, Var v_map, Var t_tweet,
                Var t_imgtext, FusionTrace* trace) {
  require_vectors("scm_forward", c, t_tweet, t_imgtext);
  require_map("scm_forward", c, v_map, t_tweet.shape()[0]);
  return spatial_tail(scope, "scm", c, tile_texts(v_map, t_tweet, t_imgtext), trace);
}

Var make_textual_kernels(ParamScope& scope, const std::string& prefix, Var t_text,
                         std::size_t count) {
  if (count == 0) fail(ErrorKind::kInvalidArgument, "make_textual_kernels: count must be >= 1");
  std::vector<Var> kernels;
  kernels.reserve(count);
  for (std::size_t j = 0; j < count; ++j) {
    kernels.push_back(layers::dense(scope, prefix + ".k" + std::to_string(j), t_text));
  }
  const std::size_t n = t_text.shape()[0];
  const std::size_t d = kernels.front().shape()[1];
  return ops::reshape(ops::concat(kernels, 1), {n, count, d});
}

Var tkm_forward(ParamScope& scope, const FusionModelConfig& c, Var v_map, Var t_tweet,
                Var t_imgtext, FusionTrace* trace) {
  require_vectors("tkm_forward", c, t_tweet, t_imgtext);
  require_map("tkm_forward", c, v_map, t_tweet.shape()[0]);
  const std::array<Var, 2> banks = {make_textual_kernels(scope, "tkm.kt", t_tweet, c.k_t),
                                    make_textual_kernels(scope, "tkm.kit", t_imgtext, c.k_it)};
  Var multimodal = ops::dynamic_conv1x1(v_map, ops::concat(banks, 1));
  if (trace) trace->multimodal_map = multimodal.value();
  Var normalized = layers::batch_norm(scope, "tkm.mm_bn", multimodal);
  return spatial_tail(scope, "tkm", c, tile_texts(normalized, t_tweet, t_imgtext), trace);
}

FusionModel::FusionModel(FusionModelConfig config) : config_(std::move(config)) {
  config_.validate();
}

ParameterStore FusionModel::init_parameters(std::uint64_t seed) const {
  const FusionModelConfig& c = config_;
  ParameterStore store;
  Rng rng(seed);
  init_text_encoder(store, tweet_prefix(), c.text, rng);
  if (c.variant == Variant::kLstm) {
    init_text_classifier_head(store, tweet_prefix(), c.text.hidden_dim, rng);
    return store;
  }
  if (!c.shared_text_encoder) init_text_encoder(store, image_text_prefix(), c.text, rng);
  init_vision_backbone(store, "backbone", c.backbone, rng);

  const std::size_t h = c.text.hidden_dim, d = c.map_channels();
  switch (c.variant) {
    case Variant::kFcm:
      init_head(store, "fcm", d + 2 * h, c.fc_plan, rng);
      break;
    case Variant::kScm:
      init_blocks(store, "scm", d + 2 * h, c, rng);
      init_head(store, "scm", blocks_out(d + 2 * h, c), c.fc_plan, rng);
      break;
    case Variant::kTkm: {
      for (std::size_t j = 0; j < c.k_t; ++j) {
        layers::init_dense(store, "tkm.kt.k" + std::to_string(j), h, d, rng);
      }
      for (std::size_t j = 0; j < c.k_it; ++j) {
        layers::init_dense(store, "tkm.kit.k" + std::to_string(j), h, d, rng);
      }
      const std::size_t k = c.k_t + c.k_it;
      layers::init_batch_norm(store, "tkm.mm_bn", k);
      init_blocks(store, "tkm", k + 2 * h, c, rng);
      init_head(store, "tkm", blocks_out(k + 2 * h, c), c.fc_plan, rng);
      break;
    }
    case Variant::kLstm:
      break;
  }
  return store;
}

Var FusionModel::forward(ParamScope& scope, const ModelBatch& batch, const InputMask& mask,
                         FusionTrace* trace) const {
  mask.validate();
  const FusionModelConfig& c = config_;
  const std::size_t n = batch.size();
  if (n == 0) fail(ErrorKind::kInvalidArgument, "forward: empty batch");
  if (batch.image_text.size() != n) {
    fail(ErrorKind::kInvalidArgument, "forward: tweet and image-text batches differ in size");
  }
  if (c.variant == Variant::kLstm) {
    if (!mask.tweet_text) {
      fail(ErrorKind::kConfig, "the LSTM classifier needs the tweet text input");
    }
    return lstm_text_classifier_forward(scope, tweet_prefix(), batch.tweet);
  }

  Graph& g = scope.graph();
  const std::size_t h = c.text.hidden_dim;
  const std::size_t side = c.backbone.input_side;
  const Shape image_shape = {n, side, side, 3};
  if (batch.images.shape() != image_shape) {
    fail(ErrorKind::kInvalidArgument, "forward: images must be " + shape_str(image_shape) +
                                          ", got " + shape_str(batch.images.shape()));
  }
  Var zeros_text = g.constant(Tensor({n, h}, 0.0));
  Var image = mask.image ? g.constant(batch.images) : g.constant(Tensor(image_shape, 0.0));
  Var t_tweet = mask.tweet_text ? encode_text(scope, tweet_prefix(), batch.tweet) : zeros_text;
  Var t_imgtext =
      mask.image_text ? encode_text(scope, image_text_prefix(), batch.image_text) : zeros_text;

  const VisionFeatures v = vision_features(scope, "backbone", image, c.backbone);
  switch (c.variant) {
    case Variant::kFcm:
      return fcm_forward(scope, c, v.pooled, t_tweet, t_imgtext, trace);
    case Variant::kScm:
      return scm_forward(scope, c, v.map, t_tweet, t_imgtext, trace);
    case Variant::kTkm:
      return tkm_forward(scope, c, v.map, t_tweet, t_imgtext, trace);
    case Variant::kLstm:
      break;
  }
  fail(ErrorKind::kState, "forward: unhandled variant");
}

}  // namespace mfuse
