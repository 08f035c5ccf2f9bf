/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <optional>
#include <string>
#include <vector>

#include "vlplan/error.hpp"

namespace vlplan {

enum class Axis { H, W, C, Seq, Emb };

const char* axis_name(Axis a) noexcept;

struct Dim {
  Axis axis = Axis::H;
  int size = 0;
};

/// An ordered, axis-labelled shape. Axis labels are unique; sizes >= 1.
struct TensorShape {
  std::vector<Dim> dims;

  static TensorShape grid(int h, int w, int c);    // H x W x C feature map
  static TensorShape tokens(int seq, int emb);     // Seq x Emb token matrix

  bool has(Axis a) const;
  int size(Axis a) const;  // ShapeMismatch if the axis is absent
  std::string str() const;  // "64x64x256 (HxWxC)" style rendering
};

bool operator==(const TensorShape& a, const TensorShape& b);

/// Validates label uniqueness and positive sizes (InvalidArgument).
void check_shape(const TensorShape& shape);

/// Configuration of the high-resolution encoder's neck: an optional spatial
/// resize followed by stride-2 3x3 convolutions (one per listed output
/// channel count), then flattening H*W into tokens.
struct HighResNeckConfig {
  std::optional<int> interpolate_to;  // target spatial size; nullopt = skip
  std::vector<int> conv_channels;     // output channels per stride-2 conv
};

/// The reference configuration: 64x64x256 input resized to 96, two stride-2
/// convs to 48x48x512 and 24x24x1024, flattened to 576x1024. The first conv's
/// channel count (512) is a documented choice (geometric mean of 256 and
/// 1024); the rest of the chain is fixed by the architecture.
HighResNeckConfig reference_neck_config();

/// Full shape chain of the high-resolution branch: input -> (resized) ->
/// conv outputs -> flattened Seq x Emb. Input must be an HxWxC map with
/// H == W, and every conv input must have even spatial size (stride 2 halves
/// it exactly); violations are IndivisibleShape.
std::vector<TensorShape> sam_shape_chain(const TensorShape& input,
                                         const HighResNeckConfig& config);

/// Output feature-map shape of the high-resolution vision encoder backbone
/// for a square input image (patch embedding: H/patch x W/patch x channels).
/// Reference: 1024px input, patch 16, 256 channels -> 64x64x256.
TensorShape highres_encoder_output(int image_size, int patch_size,
                                   int channels);

/// Token shape of the low-resolution encoder (patch grid flattened to
/// tokens). Reference: 384px input, patch 16, width 1024 -> 576x1024.
TensorShape lowres_encoder_output(int image_size, int patch_size, int emb);

enum class ConcatMode { EmbeddingConcat, SequenceConcat };
enum class PoolAxis { W, H };
enum class MlpVariant { Hybrid, Shared, Separate };

const char* concat_mode_name(ConcatMode m) noexcept;
const char* pool_axis_name(PoolAxis a) noexcept;
const char* mlp_variant_name(MlpVariant v) noexcept;

/// Adaptor wiring: how the two encoders' token streams are merged and which
/// MLP arrangement projects them into the language model's width.
struct AdaptorConfig {
  ConcatMode concat_mode = ConcatMode::EmbeddingConcat;
  std::optional<PoolAxis> pool_axis;  // required iff SequenceConcat
  MlpVariant mlp_variant = MlpVariant::Hybrid;
  int hidden_dim = 0;
  int out_dim = 0;  // language model input width
};

/// Range/consistency validation (pool_axis presence, positive dims).
void check_adaptor_config(const AdaptorConfig& config);

/// Shape-level fusion of the two token streams (both Seq x Emb).
///
/// EmbeddingConcat: equal Seq required; concatenates embeddings ->
/// (Seq, Emb_h + Emb_l).
///
/// SequenceConcat: equal Emb required; each stream's tokens must form a
/// square grid (Seq = g*g). Adjacent token pairs along pool_axis are merged
/// by stacking their embeddings — Seq halves, Emb doubles — then the two
/// streams concatenate along Seq. Total token count is unchanged. An odd
/// grid axis cannot pair up (OddGridAxis); a non-square Seq is ShapeMismatch.
TensorShape fuse_tokens(const TensorShape& high, const TensorShape& low,
                        const AdaptorConfig& config);

}  // namespace vlplan
