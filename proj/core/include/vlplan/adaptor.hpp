/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "vlplan/fusion.hpp"

namespace vlplan {

/// Minimal row-major dense matrix for the adaptor's desk-scale numerics.
struct Matrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(int r, int c)
      : rows(r), cols(c),
        data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), 0.0) {}

  double& at(int r, int c) {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
  double at(int r, int c) const {
    return data[static_cast<std::size_t>(r) * cols + c];
  }
};

/// GeLU with the tanh approximation:
/// 0.5*x*(1 + tanh(sqrt(2/pi)*(x + 0.044715*x^3))).
double gelu(double x);
double gelu_grad(double x);

/// One affine layer, y = x * weight + bias; weight is (in x out).
struct LinearLayer {
  Matrix weight;
  std::vector<double> bias;
};

/// Adaptor parameters. The layer list layout depends on the MLP variant:
///  - Hybrid:   [high branch in->hidden, low branch in->hidden,
///               shared concat->out]   (concat width is 2*hidden under
///               embedding concat, hidden under sequence concat)
///  - Shared:   [in->hidden, hidden->branch_out], applied (tied) to both
///              branches; branch input widths must match
///  - Separate: [high in->hidden, high hidden->branch_out,
///               low in->hidden, low hidden->branch_out]
/// branch_out is out_dim/2 under embedding concat (out_dim must be even) and
/// out_dim under sequence concat, so the concatenated output width is always
/// exactly out_dim.
///
/// in_high/in_low are the branch widths as the MLP sees them — after token
/// pooling under sequence concat (twice the encoder embedding width).
struct AdaptorParams {
  AdaptorConfig config;
  int in_high = 0;
  int in_low = 0;
  std::vector<LinearLayer> layers;
};

/// Deterministic initialization: every weight and bias is uniform in
/// +-1/sqrt(fan_in), drawn in layer order (weights row-major, then bias)
/// from the given seed. emb_high/emb_low are the encoder embedding widths
/// before any pooling.
AdaptorParams init_adaptor_params(const AdaptorConfig& config, int emb_high,
                                  int emb_low, std::uint64_t seed);

/// Structural validation of params against their config (ShapeMismatch).
void check_adaptor_params(const AdaptorParams& params);

/// Forward pass. Inputs are the raw encoder token matrices (rows = tokens,
/// cols = embedding width, before pooling). Under embedding concat the two
/// streams need equal token counts; under sequence concat each stream's
/// token count must form a square grid with an even paired axis. Output is
/// (fused token count) x out_dim. Non-finite input values are NonFiniteInput.
Matrix adaptor_forward(const Matrix& high, const Matrix& low,
                       const AdaptorParams& params);

/// Gradients of sum(output * upstream) w.r.t. every parameter and both
/// inputs. `layers` matches the params layout; input gradients are reported
/// w.r.t. the raw (pre-pooling) inputs.
struct AdaptorGradients {
  std::vector<LinearLayer> layers;
  Matrix d_high;
  Matrix d_low;
};

AdaptorGradients adaptor_backward(const Matrix& high, const Matrix& low,
                                  const AdaptorParams& params,
                                  const Matrix& upstream);

/// Versioned flat text serialization (hex floats, lossless round-trip).
std::string serialize_adaptor_params(const AdaptorParams& params);
AdaptorParams parse_adaptor_params(const std::string& text);

/// Seeded stand-in for encoder features (standard normal entries); the
/// encoders themselves are shape stubs, not models.
Matrix random_features(int rows, int cols, std::uint64_t seed);

/// Central-finite-difference verification of adaptor_backward against
/// adaptor_forward: perturbs every parameter and input coordinate by
/// +-epsilon and compares the numeric derivative of sum(output * upstream)
/// with the analytic gradient. Returns the worst relative error
/// |a - n| / max(1, |a| + |n|).
struct GradCheckResult {
  double max_rel_error = 0.0;
  long coordinates_checked = 0;
};

GradCheckResult gradient_check(const AdaptorConfig& config, int seq_high,
                               int seq_low, int emb_high, int emb_low,
                               std::uint64_t seed, double epsilon = 1e-5);

}  // namespace vlplan
