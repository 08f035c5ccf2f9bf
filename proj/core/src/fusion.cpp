/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/fusion.hpp"

#include <string>

namespace vlplan {

const char* axis_name(Axis a) noexcept {
  switch (a) {
    case Axis::H: return "H";
    case Axis::W: return "W";
    case Axis::C: return "C";
    case Axis::Seq: return "Seq";
    case Axis::Emb: return "Emb";
  }
  return "?";
}

const char* concat_mode_name(ConcatMode m) noexcept {
  return m == ConcatMode::EmbeddingConcat ? "embedding_concat"
                                          : "sequence_concat";
}

const char* pool_axis_name(PoolAxis a) noexcept {
  return a == PoolAxis::W ? "W" : "H";
}

const char* mlp_variant_name(MlpVariant v) noexcept {
  switch (v) {
    case MlpVariant::Hybrid: return "hybrid";
    case MlpVariant::Shared: return "shared";
    case MlpVariant::Separate: return "separate";
  }
  return "?";
}

TensorShape TensorShape::grid(int h, int w, int c) {
  TensorShape s{{{Axis::H, h}, {Axis::W, w}, {Axis::C, c}}};
  check_shape(s);
  return s;
}

TensorShape TensorShape::tokens(int seq, int emb) {
  TensorShape s{{{Axis::Seq, seq}, {Axis::Emb, emb}}};
  check_shape(s);
  return s;
}

bool TensorShape::has(Axis a) const {
  for (const Dim& d : dims)
    if (d.axis == a) return true;
  return false;
}

int TensorShape::size(Axis a) const {
  for (const Dim& d : dims)
    if (d.axis == a) return d.size;
  fail(Errc::ShapeMismatch,
       std::string("shape ") + str() + " has no axis " + axis_name(a));
}

std::string TensorShape::str() const {
  std::string sizes;
  std::string labels;
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (i > 0) {
      sizes += "x";
      labels += "x";
    }
    sizes += std::to_string(dims[i].size);
    labels += axis_name(dims[i].axis);
  }
  return sizes + " (" + labels + ")";
}

bool operator==(const TensorShape& a, const TensorShape& b) {
  if (a.dims.size() != b.dims.size()) return false;
  for (std::size_t i = 0; i < a.dims.size(); ++i)
    if (a.dims[i].axis != b.dims[i].axis || a.dims[i].size != b.dims[i].size)
      return false;
  return true;
}

void check_shape(const TensorShape& shape) {
  if (shape.dims.empty()) fail(Errc::InvalidArgument, "empty shape");
  for (std::size_t i = 0; i < shape.dims.size(); ++i) {
    if (shape.dims[i].size < 1)
      fail(Errc::InvalidArgument, "shape dim must be >= 1");
    for (std::size_t j = i + 1; j < shape.dims.size(); ++j)
      if (shape.dims[i].axis == shape.dims[j].axis)
        fail(Errc::InvalidArgument,
             std::string("duplicate axis label ") +
                 axis_name(shape.dims[i].axis));
  }
}

HighResNeckConfig reference_neck_config() {
  return HighResNeckConfig{96, {512, 1024}};
}

std::vector<TensorShape> sam_shape_chain(const TensorShape& input,
                                         const HighResNeckConfig& config) {
  check_shape(input);
  if (!(input.has(Axis::H) && input.has(Axis::W) && input.has(Axis::C)))
    fail(Errc::ShapeMismatch,
         "high-res chain input must be an HxWxC map, got " + input.str());
  if (input.size(Axis::H) != input.size(Axis::W))
    fail(Errc::IndivisibleShape,
         "high-res chain input must be square, got " + input.str());
  if (config.interpolate_to && *config.interpolate_to < 1)
    fail(Errc::InvalidArgument, "interpolate_to must be >= 1");

  std::vector<TensorShape> chain;
  chain.push_back(input);

  int spatial = input.size(Axis::H);
  int channels = input.size(Axis::C);
  if (config.interpolate_to) {
    spatial = *config.interpolate_to;
    chain.push_back(TensorShape::grid(spatial, spatial, channels));
  }
  for (int out_channels : config.conv_channels) {
    if (out_channels < 1)
      fail(Errc::InvalidArgument, "conv channel count must be >= 1");
    if (spatial % 2 != 0)
      fail(Errc::IndivisibleShape,
           "stride-2 conv needs even spatial size, got " +
               std::to_string(spatial));
    spatial /= 2;
    channels = out_channels;
    chain.push_back(TensorShape::grid(spatial, spatial, channels));
  }
  chain.push_back(TensorShape::tokens(spatial * spatial, channels));
  return chain;
}

TensorShape highres_encoder_output(int image_size, int patch_size,
                                   int channels) {
  if (image_size < 1 || patch_size < 1 || channels < 1)
    fail(Errc::InvalidArgument, "encoder shape parameters must be >= 1");
  if (image_size % patch_size != 0)
    fail(Errc::IndivisibleShape,
         "image size " + std::to_string(image_size) +
             " not divisible by patch size " + std::to_string(patch_size));
  const int grid = image_size / patch_size;
  return TensorShape::grid(grid, grid, channels);
}

TensorShape lowres_encoder_output(int image_size, int patch_size, int emb) {
  const TensorShape map = highres_encoder_output(image_size, patch_size, emb);
  return TensorShape::tokens(map.size(Axis::H) * map.size(Axis::W), emb);
}

void check_adaptor_config(const AdaptorConfig& config) {
  if (config.hidden_dim < 1 || config.out_dim < 1)
    fail(Errc::InvalidArgument, "adaptor hidden_dim/out_dim must be >= 1");
  if ((config.concat_mode == ConcatMode::SequenceConcat) !=
      config.pool_axis.has_value())
    fail(Errc::InvalidArgument,
         "pool_axis must be set exactly when concat_mode is sequence_concat");
}

namespace {

// Pooling pairs up adjacent tokens along one grid axis: Seq halves and the
// two tokens' embeddings stack, doubling Emb. Requires a square token grid
// with an even paired axis.
TensorShape pool_token_pairs(const TensorShape& tokens, PoolAxis axis) {
  const int seq = tokens.size(Axis::Seq);
  int grid = 1;
  while (grid * grid < seq) ++grid;
  if (grid * grid != seq)
    fail(Errc::ShapeMismatch,
         "token pooling needs a square token grid; " + std::to_string(seq) +
             " tokens is not a square");
  if (grid % 2 != 0)
    fail(Errc::OddGridAxis,
         std::string("cannot pair tokens along ") + pool_axis_name(axis) +
             ": grid axis " + std::to_string(grid) + " is odd");
  return TensorShape::tokens(seq / 2, 2 * tokens.size(Axis::Emb));
}

void require_token_shape(const TensorShape& shape, const char* which) {
  check_shape(shape);
  if (!(shape.has(Axis::Seq) && shape.has(Axis::Emb)) || shape.dims.size() != 2)
    fail(Errc::ShapeMismatch, std::string(which) +
                                  " stream must be Seq x Emb, got " +
                                  shape.str());
}

}  // namespace

TensorShape fuse_tokens(const TensorShape& high, const TensorShape& low,
                        const AdaptorConfig& config) {
  check_adaptor_config(config);
  require_token_shape(high, "high-res");
  require_token_shape(low, "low-res");

  if (config.concat_mode == ConcatMode::EmbeddingConcat) {
    if (high.size(Axis::Seq) != low.size(Axis::Seq))
      fail(Errc::ShapeMismatch,
           "embedding concat needs equal token counts, got " + high.str() +
               " vs " + low.str());
    return TensorShape::tokens(high.size(Axis::Seq),
                               high.size(Axis::Emb) + low.size(Axis::Emb));
  }

  if (high.size(Axis::Emb) != low.size(Axis::Emb))
    fail(Errc::ShapeMismatch,
         "sequence concat needs equal embedding widths, got " + high.str() +
             " vs " + low.str());
  const TensorShape pooled_high = pool_token_pairs(high, *config.pool_axis);
  const TensorShape pooled_low = pool_token_pairs(low, *config.pool_axis);
  // Each stream halved its token count, so concatenating along Seq keeps the
  // total token count equal to the original per-stream count.
  return TensorShape::tokens(
      pooled_high.size(Axis::Seq) + pooled_low.size(Axis::Seq),
      pooled_high.size(Axis::Emb));
}

}  // namespace vlplan
