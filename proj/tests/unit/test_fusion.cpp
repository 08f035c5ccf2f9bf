/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/fusion.hpp"

#include <doctest.h>

#include <optional>
#include <vector>

#include "test_support.hpp"

using namespace vlplan;

namespace {

AdaptorConfig fuse_config(ConcatMode mode,
                          std::optional<PoolAxis> axis = std::nullopt) {
  AdaptorConfig config;
  config.concat_mode = mode;
  config.pool_axis = axis;
  config.hidden_dim = 8;
  config.out_dim = 8;
  return config;
}

}  // namespace

TEST_CASE("fusion: encoder output grids") {
  // 1024px image, 16px patches, 256 channels -> 64x64 feature map.
  CHECK(highres_encoder_output(1024, 16, 256) == TensorShape::grid(64, 64, 256));
  // 384px image, 16px patches, width 1024 -> 24x24 grid = 576 tokens.
  CHECK(lowres_encoder_output(384, 16, 1024) == TensorShape::tokens(576, 1024));
  CHECK_ERRC(IndivisibleShape, highres_encoder_output(1000, 16, 256));
  CHECK_ERRC(IndivisibleShape, lowres_encoder_output(100, 16, 1024));
  CHECK_ERRC(InvalidArgument, highres_encoder_output(0, 16, 256));
}

TEST_CASE("fusion: the reference neck chain") {
  const TensorShape input = highres_encoder_output(1024, 16, 256);
  const auto chain = sam_shape_chain(input, reference_neck_config());
  REQUIRE(chain.size() == 5);
  CHECK(chain[0] == TensorShape::grid(64, 64, 256));
  CHECK(chain[1] == TensorShape::grid(96, 96, 256));   // interpolation
  CHECK(chain[2] == TensorShape::grid(48, 48, 512));   // first stride-2 conv
  CHECK(chain[3] == TensorShape::grid(24, 24, 1024));  // second stride-2 conv
  CHECK(chain[4] == TensorShape::tokens(576, 1024));   // flatten to tokens
}

TEST_CASE("fusion: an empty neck config just flattens") {
  const auto chain =
      sam_shape_chain(TensorShape::grid(64, 64, 256), HighResNeckConfig{});
  REQUIRE(chain.size() == 2);
  CHECK(chain[0] == TensorShape::grid(64, 64, 256));
  CHECK(chain[1] == TensorShape::tokens(4096, 256));
}

TEST_CASE("fusion: a toy neck computes every intermediate") {
  HighResNeckConfig config;
  config.interpolate_to = 48;
  config.conv_channels = {32, 64};
  const auto chain = sam_shape_chain(TensorShape::grid(32, 32, 8), config);
  REQUIRE(chain.size() == 5);
  CHECK(chain[1] == TensorShape::grid(48, 48, 8));
  CHECK(chain[2] == TensorShape::grid(24, 24, 32));
  CHECK(chain[3] == TensorShape::grid(12, 12, 64));
  CHECK(chain[4] == TensorShape::tokens(144, 64));
}

TEST_CASE("fusion: neck shape violations") {
  HighResNeckConfig one_conv;
  one_conv.conv_channels = {64};
  // Odd spatial size cannot halve under a stride-2 conv.
  CHECK_ERRC(IndivisibleShape,
             sam_shape_chain(TensorShape::grid(33, 33, 8), one_conv));
  // Non-square input.
  CHECK_ERRC(IndivisibleShape,
             sam_shape_chain(TensorShape::grid(32, 16, 8), one_conv));
  // Token input where a feature map is expected.
  CHECK_ERRC(ShapeMismatch,
             sam_shape_chain(TensorShape::tokens(576, 1024), one_conv));
  HighResNeckConfig bad_channels;
  bad_channels.conv_channels = {0};
  CHECK_ERRC(InvalidArgument,
             sam_shape_chain(TensorShape::grid(32, 32, 8), bad_channels));
}

TEST_CASE("fusion: shape rendering and axis queries") {
  const TensorShape grid = TensorShape::grid(64, 64, 256);
  CHECK(grid.str() == "64x64x256 (HxWxC)");
  CHECK(grid.has(Axis::H));
  CHECK_FALSE(grid.has(Axis::Seq));
  CHECK(grid.size(Axis::C) == 256);
  CHECK_ERRC(ShapeMismatch, grid.size(Axis::Emb));

  const TensorShape tokens = TensorShape::tokens(576, 2048);
  CHECK(tokens.str() == "576x2048 (SeqxEmb)");

  TensorShape dup;
  dup.dims = {{Axis::H, 4}, {Axis::H, 4}};
  CHECK_ERRC(InvalidArgument, check_shape(dup));
  TensorShape zero;
  zero.dims = {{Axis::H, 0}};
  CHECK_ERRC(InvalidArgument, check_shape(zero));
}

TEST_CASE("fusion: embedding concatenation widens tokens") {
  const AdaptorConfig config = fuse_config(ConcatMode::EmbeddingConcat);
  const TensorShape fused = fuse_tokens(TensorShape::tokens(576, 1024),
                                        TensorShape::tokens(576, 1024), config);
  CHECK(fused == TensorShape::tokens(576, 2048));

  // Unequal widths are fine; unequal token counts are not.
  CHECK(fuse_tokens(TensorShape::tokens(64, 32), TensorShape::tokens(64, 96),
                    config) == TensorShape::tokens(64, 128));
  CHECK_ERRC(ShapeMismatch,
             fuse_tokens(TensorShape::tokens(576, 1024),
                         TensorShape::tokens(144, 1024), config));
}

TEST_CASE("fusion: sequence concatenation pools then stacks") {
  for (const PoolAxis axis : {PoolAxis::W, PoolAxis::H}) {
    const AdaptorConfig config = fuse_config(ConcatMode::SequenceConcat, axis);
    // Each 576-token stream pools to 288 tokens of width 2048; stacking the
    // two streams along Seq restores 576 tokens total.
    const TensorShape fused =
        fuse_tokens(TensorShape::tokens(576, 1024),
                    TensorShape::tokens(576, 1024), config);
    CHECK(fused == TensorShape::tokens(576, 2048));
  }

  // Total token count is conserved relative to embedding concat.
  const TensorShape via_emb = fuse_tokens(
      TensorShape::tokens(576, 1024), TensorShape::tokens(576, 1024),
      fuse_config(ConcatMode::EmbeddingConcat));
  CHECK(via_emb.size(Axis::Seq) == 576);
}

TEST_CASE("fusion: sequence concatenation rejects impossible grids") {
  const AdaptorConfig config =
      fuse_config(ConcatMode::SequenceConcat, PoolAxis::W);

  // 9 tokens form a 3x3 grid whose paired axis is odd.
  CHECK_ERRC(OddGridAxis,
             fuse_tokens(TensorShape::tokens(9, 16),
                         TensorShape::tokens(9, 16), config));
  // 12 tokens are not a square grid.
  CHECK_ERRC(ShapeMismatch,
             fuse_tokens(TensorShape::tokens(12, 16),
                         TensorShape::tokens(12, 16), config));
  // Unequal embedding widths cannot stack along Seq.
  CHECK_ERRC(ShapeMismatch,
             fuse_tokens(TensorShape::tokens(16, 8),
                         TensorShape::tokens(16, 12), config));
  // pool_axis is mandatory for sequence concat.
  const AdaptorConfig no_axis = fuse_config(ConcatMode::SequenceConcat);
  CHECK_ERRC(InvalidArgument,
             fuse_tokens(TensorShape::tokens(16, 8),
                         TensorShape::tokens(16, 8), no_axis));
}

TEST_CASE("fusion: adaptor config validation") {
  AdaptorConfig config;
  config.hidden_dim = 8;
  config.out_dim = 8;
  CHECK_NOTHROW(check_adaptor_config(config));
  config.out_dim = 0;
  CHECK_ERRC(InvalidArgument, check_adaptor_config(config));
  config.out_dim = 8;
  config.pool_axis = PoolAxis::W;  // pool axis without sequence concat
  CHECK_ERRC(InvalidArgument, check_adaptor_config(config));
}
