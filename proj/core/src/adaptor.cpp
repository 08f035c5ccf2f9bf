/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/adaptor.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vlplan/rng.hpp"

namespace vlplan {

double gelu(double x) {
  const double kSqrt2OverPi = 0.7978845608028653558798921198687;
  const double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
  return 0.5 * x * (1.0 + std::tanh(u));
}

double gelu_grad(double x) {
  const double kSqrt2OverPi = 0.7978845608028653558798921198687;
  const double u = kSqrt2OverPi * (x + 0.044715 * x * x * x);
  const double t = std::tanh(u);
  const double du = kSqrt2OverPi * (1.0 + 3.0 * 0.044715 * x * x);
  return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
}

namespace {

void check_finite(const Matrix& m, const char* which) {
  for (double v : m.data)
    if (!std::isfinite(v))
      fail(Errc::NonFiniteInput,
           std::string(which) + " contains a non-finite value");
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int k = 0; k < a.cols; ++k) {
      const double v = a.at(i, k);
      if (v == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += v * b.at(k, j);
    }
  return out;
}

// A^T * B, used for weight gradients (dW = X^T * dY).
Matrix matmul_at_b(const Matrix& a, const Matrix& b) {
  Matrix out(a.cols, b.cols);
  for (int k = 0; k < a.rows; ++k)
    for (int i = 0; i < a.cols; ++i) {
      const double v = a.at(k, i);
      if (v == 0.0) continue;
      for (int j = 0; j < b.cols; ++j) out.at(i, j) += v * b.at(k, j);
    }
  return out;
}

// A * B^T, used for input gradients (dX = dY * W^T).
Matrix matmul_a_bt(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, b.rows);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < b.rows; ++j) {
      double acc = 0.0;
      for (int k = 0; k < a.cols; ++k) acc += a.at(i, k) * b.at(j, k);
      out.at(i, j) = acc;
    }
  return out;
}

Matrix affine(const Matrix& x, const LinearLayer& layer) {
  Matrix out = matmul(x, layer.weight);
  for (int i = 0; i < out.rows; ++i)
    for (int j = 0; j < out.cols; ++j) out.at(i, j) += layer.bias[j];
  return out;
}

std::vector<double> column_sums(const Matrix& m) {
  std::vector<double> sums(static_cast<std::size_t>(m.cols), 0.0);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < m.cols; ++j) sums[j] += m.at(i, j);
  return sums;
}

Matrix map_gelu(const Matrix& m) {
  Matrix out(m.rows, m.cols);
  for (std::size_t i = 0; i < m.data.size(); ++i) out.data[i] = gelu(m.data[i]);
  return out;
}

// dZ = dA (*) gelu'(Z) elementwise.
Matrix gelu_backward(const Matrix& d_act, const Matrix& pre) {
  Matrix out(pre.rows, pre.cols);
  for (std::size_t i = 0; i < pre.data.size(); ++i)
    out.data[i] = d_act.data[i] * gelu_grad(pre.data[i]);
  return out;
}

int token_grid_side(int seq) {
  int g = 1;
  while (g * g < seq) ++g;
  if (g * g != seq)
    fail(Errc::ShapeMismatch,
         "token pooling needs a square token grid; " + std::to_string(seq) +
             " tokens is not a square");
  if (g % 2 != 0)
    fail(Errc::OddGridAxis,
         "cannot pair tokens: grid axis " + std::to_string(g) + " is odd");
  return g;
}

// Numeric counterpart of the shape-level token pooling: the Seq tokens form
// a g x g grid in row-major order; adjacent pairs along the chosen axis
// merge into one token whose embedding is the pair's embeddings stacked
// (first token's features in the low columns).
Matrix pool_forward(const Matrix& x, PoolAxis axis) {
  const int g = token_grid_side(x.rows);
  const int e = x.cols;
  Matrix out(x.rows / 2, 2 * e);
  if (axis == PoolAxis::W) {
    for (int r = 0; r < g; ++r)
      for (int col = 0; col < g; col += 2) {
        const int dst = r * (g / 2) + col / 2;
        for (int j = 0; j < e; ++j) {
          out.at(dst, j) = x.at(r * g + col, j);
          out.at(dst, e + j) = x.at(r * g + col + 1, j);
        }
      }
  } else {
    for (int r = 0; r < g; r += 2)
      for (int col = 0; col < g; ++col) {
        const int dst = (r / 2) * g + col;
        for (int j = 0; j < e; ++j) {
          out.at(dst, j) = x.at(r * g + col, j);
          out.at(dst, e + j) = x.at((r + 1) * g + col, j);
        }
      }
  }
  return out;
}

// Scatter of pooled-token gradients back to the pre-pooling positions;
// exact inverse index map of pool_forward.
Matrix pool_backward(const Matrix& d_pooled, PoolAxis axis, int orig_rows) {
  const int g = token_grid_side(orig_rows);
  const int e = d_pooled.cols / 2;
  Matrix out(orig_rows, e);
  if (axis == PoolAxis::W) {
    for (int r = 0; r < g; ++r)
      for (int col = 0; col < g; col += 2) {
        const int src = r * (g / 2) + col / 2;
        for (int j = 0; j < e; ++j) {
          out.at(r * g + col, j) = d_pooled.at(src, j);
          out.at(r * g + col + 1, j) = d_pooled.at(src, e + j);
        }
      }
  } else {
    for (int r = 0; r < g; r += 2)
      for (int col = 0; col < g; ++col) {
        const int src = (r / 2) * g + col;
        for (int j = 0; j < e; ++j) {
          out.at(r * g + col, j) = d_pooled.at(src, j);
          out.at((r + 1) * g + col, j) = d_pooled.at(src, e + j);
        }
      }
  }
  return out;
}

// (in, out) width per layer in params layout order; single source of truth
// for init, validation, and the serializer.
std::vector<std::pair<int, int>> layer_dims(const AdaptorConfig& config,
                                            int in_high, int in_low) {
  check_adaptor_config(config);
  const bool emb_concat = config.concat_mode == ConcatMode::EmbeddingConcat;
  int branch_out = config.out_dim;
  if (emb_concat) {
    if (config.out_dim % 2 != 0 && config.mlp_variant != MlpVariant::Hybrid)
      fail(Errc::ShapeMismatch,
           "embedding concat with a per-branch MLP needs an even out_dim");
    if (config.mlp_variant != MlpVariant::Hybrid)
      branch_out = config.out_dim / 2;
  }
  switch (config.mlp_variant) {
    case MlpVariant::Hybrid: {
      const int concat_width =
          emb_concat ? 2 * config.hidden_dim : config.hidden_dim;
      return {{in_high, config.hidden_dim},
              {in_low, config.hidden_dim},
              {concat_width, config.out_dim}};
    }
    case MlpVariant::Shared:
      if (in_high != in_low)
        fail(Errc::ShapeMismatch,
             "shared MLP requires equal branch input widths, got " +
                 std::to_string(in_high) + " vs " + std::to_string(in_low));
      return {{in_high, config.hidden_dim}, {config.hidden_dim, branch_out}};
    case MlpVariant::Separate:
      return {{in_high, config.hidden_dim},
              {config.hidden_dim, branch_out},
              {in_low, config.hidden_dim},
              {config.hidden_dim, branch_out}};
  }
  fail(Errc::InvalidArgument, "unknown mlp variant");
}

struct ForwardCache {
  Matrix pooled_high, pooled_low;
  // Hybrid: pre-activations of both branches plus the concatenated
  // activations feeding the shared layer. Shared/Separate: first-layer
  // pre-activations and activations per branch.
  Matrix pre_high, act_high, pre_low, act_low;
  Matrix concat;  // Hybrid only
};

Matrix concat_cols(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows, a.cols + b.cols);
  for (int i = 0; i < a.rows; ++i) {
    for (int j = 0; j < a.cols; ++j) out.at(i, j) = a.at(i, j);
    for (int j = 0; j < b.cols; ++j) out.at(i, a.cols + j) = b.at(i, j);
  }
  return out;
}

Matrix concat_rows(const Matrix& a, const Matrix& b) {
  Matrix out(a.rows + b.rows, a.cols);
  for (int i = 0; i < a.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(i, j) = a.at(i, j);
  for (int i = 0; i < b.rows; ++i)
    for (int j = 0; j < a.cols; ++j) out.at(a.rows + i, j) = b.at(i, j);
  return out;
}

Matrix slice_cols(const Matrix& m, int from, int count) {
  Matrix out(m.rows, count);
  for (int i = 0; i < m.rows; ++i)
    for (int j = 0; j < count; ++j) out.at(i, j) = m.at(i, from + j);
  return out;
}

Matrix slice_rows(const Matrix& m, int from, int count) {
  Matrix out(count, m.cols);
  for (int i = 0; i < count; ++i)
    for (int j = 0; j < m.cols; ++j) out.at(i, j) = m.at(from + i, j);
  return out;
}

void check_inputs(const Matrix& high, const Matrix& low,
                  const AdaptorParams& params) {
  if (high.rows < 1 || low.rows < 1 || high.cols < 1 || low.cols < 1)
    fail(Errc::ShapeMismatch, "adaptor inputs must be non-empty matrices");
  check_finite(high, "high-res input");
  check_finite(low, "low-res input");
  const bool seq_concat =
      params.config.concat_mode == ConcatMode::SequenceConcat;
  const int expect_high = seq_concat ? params.in_high / 2 : params.in_high;
  const int expect_low = seq_concat ? params.in_low / 2 : params.in_low;
  if (high.cols != expect_high)
    fail(Errc::ShapeMismatch, "high-res input width " +
                                  std::to_string(high.cols) + " != expected " +
                                  std::to_string(expect_high));
  if (low.cols != expect_low)
    fail(Errc::ShapeMismatch, "low-res input width " +
                                  std::to_string(low.cols) + " != expected " +
                                  std::to_string(expect_low));
  if (!seq_concat && high.rows != low.rows)
    fail(Errc::ShapeMismatch,
         "embedding concat needs equal token counts, got " +
             std::to_string(high.rows) + " vs " + std::to_string(low.rows));
}

Matrix forward_impl(const Matrix& high, const Matrix& low,
                    const AdaptorParams& params, ForwardCache* cache) {
  check_adaptor_params(params);
  check_inputs(high, low, params);

  const AdaptorConfig& cfg = params.config;
  const bool seq_concat = cfg.concat_mode == ConcatMode::SequenceConcat;
  ForwardCache local;
  ForwardCache& c = cache ? *cache : local;
  c.pooled_high = seq_concat ? pool_forward(high, *cfg.pool_axis) : high;
  c.pooled_low = seq_concat ? pool_forward(low, *cfg.pool_axis) : low;

  switch (cfg.mlp_variant) {
    case MlpVariant::Hybrid: {
      c.pre_high = affine(c.pooled_high, params.layers[0]);
      c.act_high = map_gelu(c.pre_high);
      c.pre_low = affine(c.pooled_low, params.layers[1]);
      c.act_low = map_gelu(c.pre_low);
      c.concat = seq_concat ? concat_rows(c.act_high, c.act_low)
                            : concat_cols(c.act_high, c.act_low);
      return affine(c.concat, params.layers[2]);
    }
    case MlpVariant::Shared: {
      c.pre_high = affine(c.pooled_high, params.layers[0]);
      c.act_high = map_gelu(c.pre_high);
      const Matrix out_high = affine(c.act_high, params.layers[1]);
      c.pre_low = affine(c.pooled_low, params.layers[0]);
      c.act_low = map_gelu(c.pre_low);
      const Matrix out_low = affine(c.act_low, params.layers[1]);
      return seq_concat ? concat_rows(out_high, out_low)
                        : concat_cols(out_high, out_low);
    }
    case MlpVariant::Separate: {
      c.pre_high = affine(c.pooled_high, params.layers[0]);
      c.act_high = map_gelu(c.pre_high);
      const Matrix out_high = affine(c.act_high, params.layers[1]);
      c.pre_low = affine(c.pooled_low, params.layers[2]);
      c.act_low = map_gelu(c.pre_low);
      const Matrix out_low = affine(c.act_low, params.layers[3]);
      return seq_concat ? concat_rows(out_high, out_low)
                        : concat_cols(out_high, out_low);
    }
  }
  fail(Errc::InvalidArgument, "unknown mlp variant");
}

}  // namespace

void check_adaptor_params(const AdaptorParams& params) {
  const std::vector<std::pair<int, int>> dims =
      layer_dims(params.config, params.in_high, params.in_low);
  if (params.layers.size() != dims.size())
    fail(Errc::ShapeMismatch,
         "adaptor has " + std::to_string(params.layers.size()) +
             " layers, config requires " + std::to_string(dims.size()));
  for (std::size_t i = 0; i < dims.size(); ++i) {
    const LinearLayer& layer = params.layers[i];
    if (layer.weight.rows != dims[i].first ||
        layer.weight.cols != dims[i].second ||
        static_cast<int>(layer.bias.size()) != dims[i].second)
      fail(Errc::ShapeMismatch,
           "layer " + std::to_string(i) + " shaped " +
               std::to_string(layer.weight.rows) + "x" +
               std::to_string(layer.weight.cols) + ", config requires " +
               std::to_string(dims[i].first) + "x" +
               std::to_string(dims[i].second));
  }
  if (params.config.concat_mode == ConcatMode::SequenceConcat &&
      (params.in_high % 2 != 0 || params.in_low % 2 != 0))
    fail(Errc::ShapeMismatch,
         "sequence concat branch widths must be even (pooled pairs)");
}

AdaptorParams init_adaptor_params(const AdaptorConfig& config, int emb_high,
                                  int emb_low, std::uint64_t seed) {
  if (emb_high < 1 || emb_low < 1)
    fail(Errc::InvalidArgument, "embedding widths must be >= 1");
  const bool seq_concat = config.concat_mode == ConcatMode::SequenceConcat;
  AdaptorParams params;
  params.config = config;
  params.in_high = seq_concat ? 2 * emb_high : emb_high;
  params.in_low = seq_concat ? 2 * emb_low : emb_low;

  Rng rng(seed);
  for (const auto& [in, out] : layer_dims(config, params.in_high, params.in_low)) {
    LinearLayer layer;
    layer.weight = Matrix(in, out);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    for (double& w : layer.weight.data) w = rng.uniform(-bound, bound);
    layer.bias.resize(static_cast<std::size_t>(out));
    for (double& b : layer.bias) b = rng.uniform(-bound, bound);
    params.layers.push_back(std::move(layer));
  }
  return params;
}

Matrix adaptor_forward(const Matrix& high, const Matrix& low,
                       const AdaptorParams& params) {
  return forward_impl(high, low, params, nullptr);
}

AdaptorGradients adaptor_backward(const Matrix& high, const Matrix& low,
                                  const AdaptorParams& params,
                                  const Matrix& upstream) {
  ForwardCache cache;
  const Matrix out = forward_impl(high, low, params, &cache);
  check_finite(upstream, "upstream gradient");
  if (upstream.rows != out.rows || upstream.cols != out.cols)
    fail(Errc::ShapeMismatch,
         "upstream gradient shaped " + std::to_string(upstream.rows) + "x" +
             std::to_string(upstream.cols) + ", output is " +
             std::to_string(out.rows) + "x" + std::to_string(out.cols));

  const AdaptorConfig& cfg = params.config;
  const bool seq_concat = cfg.concat_mode == ConcatMode::SequenceConcat;

  AdaptorGradients grads;
  grads.layers.resize(params.layers.size());
  for (std::size_t i = 0; i < params.layers.size(); ++i) {
    grads.layers[i].weight = Matrix(params.layers[i].weight.rows,
                                    params.layers[i].weight.cols);
    grads.layers[i].bias.assign(params.layers[i].bias.size(), 0.0);
  }

  // Backprop through one affine layer: accumulates dW and db in the given
  // gradient slot and returns dX.
  const auto linear_backward = [](const Matrix& input, const LinearLayer& layer,
                                  const Matrix& d_out, LinearLayer& grad) {
    const Matrix dw = matmul_at_b(input, d_out);
    for (std::size_t i = 0; i < dw.data.size(); ++i)
      grad.weight.data[i] += dw.data[i];
    const std::vector<double> db = column_sums(d_out);
    for (std::size_t i = 0; i < db.size(); ++i) grad.bias[i] += db[i];
    return matmul_a_bt(d_out, layer.weight);
  };

  Matrix d_pooled_high, d_pooled_low;
  switch (cfg.mlp_variant) {
    case MlpVariant::Hybrid: {
      const Matrix d_concat =
          linear_backward(cache.concat, params.layers[2], upstream, grads.layers[2]);
      const Matrix d_act_high =
          seq_concat ? slice_rows(d_concat, 0, cache.act_high.rows)
                     : slice_cols(d_concat, 0, cache.act_high.cols);
      const Matrix d_act_low =
          seq_concat
              ? slice_rows(d_concat, cache.act_high.rows, cache.act_low.rows)
              : slice_cols(d_concat, cache.act_high.cols, cache.act_low.cols);
      d_pooled_high =
          linear_backward(cache.pooled_high, params.layers[0],
                          gelu_backward(d_act_high, cache.pre_high),
                          grads.layers[0]);
      d_pooled_low = linear_backward(cache.pooled_low, params.layers[1],
                                     gelu_backward(d_act_low, cache.pre_low),
                                     grads.layers[1]);
      break;
    }
    case MlpVariant::Shared:
    case MlpVariant::Separate: {
      const bool shared = cfg.mlp_variant == MlpVariant::Shared;
      const int out_high_rows = cache.act_high.rows;
      const int branch_out = params.layers[1].weight.cols;
      const Matrix d_out_high =
          seq_concat ? slice_rows(upstream, 0, out_high_rows)
                     : slice_cols(upstream, 0, branch_out);
      const Matrix d_out_low =
          seq_concat ? slice_rows(upstream, out_high_rows,
                                  upstream.rows - out_high_rows)
                     : slice_cols(upstream, branch_out, branch_out);
      // Tied weights accumulate both branches into the same slots; untied
      // branches use their own layer indices.
      const std::size_t low_l1 = shared ? 0 : 2;
      const std::size_t low_l2 = shared ? 1 : 3;
      const Matrix d_act_high = linear_backward(cache.act_high, params.layers[1],
                                                d_out_high, grads.layers[1]);
      d_pooled_high =
          linear_backward(cache.pooled_high, params.layers[0],
                          gelu_backward(d_act_high, cache.pre_high),
                          grads.layers[0]);
      const Matrix d_act_low =
          linear_backward(cache.act_low, params.layers[low_l2], d_out_low,
                          grads.layers[low_l2]);
      d_pooled_low =
          linear_backward(cache.pooled_low, params.layers[low_l1],
                          gelu_backward(d_act_low, cache.pre_low),
                          grads.layers[low_l1]);
      break;
    }
  }

  grads.d_high = seq_concat
                     ? pool_backward(d_pooled_high, *cfg.pool_axis, high.rows)
                     : std::move(d_pooled_high);
  grads.d_low = seq_concat
                    ? pool_backward(d_pooled_low, *cfg.pool_axis, low.rows)
                    : std::move(d_pooled_low);
  return grads;
}

namespace {

const char* concat_token(ConcatMode m) {
  return m == ConcatMode::EmbeddingConcat ? "embedding" : "sequence";
}

std::string hex_double(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

}  // namespace

std::string serialize_adaptor_params(const AdaptorParams& params) {
  check_adaptor_params(params);
  std::ostringstream out;
  out << "vlplan-adaptor-params v1\n";
  out << "concat " << concat_token(params.config.concat_mode) << "\n";
  out << "pool_axis "
      << (params.config.pool_axis ? pool_axis_name(*params.config.pool_axis)
                                  : "-")
      << "\n";
  out << "variant " << mlp_variant_name(params.config.mlp_variant) << "\n";
  out << "hidden " << params.config.hidden_dim << "\n";
  out << "out " << params.config.out_dim << "\n";
  out << "in_high " << params.in_high << "\n";
  out << "in_low " << params.in_low << "\n";
  out << "layers " << params.layers.size() << "\n";
  for (const LinearLayer& layer : params.layers) {
    out << "layer " << layer.weight.rows << " " << layer.weight.cols << "\n";
    out << "w";
    for (double v : layer.weight.data) out << " " << hex_double(v);
    out << "\nb";
    for (double v : layer.bias) out << " " << hex_double(v);
    out << "\n";
  }
  out << "end\n";
  return out.str();
}

AdaptorParams parse_adaptor_params(const std::string& text) {
  std::istringstream in(text);
  const auto next = [&](const char* what) {
    std::string token;
    if (!(in >> token))
      fail(Errc::ConfigError,
           std::string("adaptor params: truncated before ") + what);
    return token;
  };
  const auto expect = [&](const char* literal) {
    const std::string token = next(literal);
    if (token != literal)
      fail(Errc::ConfigError, "adaptor params: expected \"" +
                                  std::string(literal) + "\", got \"" + token +
                                  "\"");
  };
  const auto next_int = [&](const char* what) {
    const std::string token = next(what);
    try {
      return std::stoi(token);
    } catch (const std::exception&) {
      fail(Errc::ConfigError,
           std::string("adaptor params: bad integer for ") + what);
    }
  };
  const auto next_double = [&](const char* what) {
    const std::string token = next(what);
    char* end = nullptr;
    const double v = std::strtod(token.c_str(), &end);
    if (end == token.c_str() || *end != '\0')
      fail(Errc::ConfigError,
           std::string("adaptor params: bad float for ") + what);
    return v;
  };

  expect("vlplan-adaptor-params");
  const std::string version = next("version");
  if (version != "v1")
    fail(Errc::UnsupportedFormat,
         "adaptor params: unsupported version \"" + version + "\"");

  AdaptorParams params;
  expect("concat");
  const std::string concat = next("concat mode");
  if (concat == "embedding")
    params.config.concat_mode = ConcatMode::EmbeddingConcat;
  else if (concat == "sequence")
    params.config.concat_mode = ConcatMode::SequenceConcat;
  else
    fail(Errc::ConfigError, "adaptor params: bad concat mode \"" + concat + "\"");

  expect("pool_axis");
  const std::string pool = next("pool axis");
  if (pool == "W")
    params.config.pool_axis = PoolAxis::W;
  else if (pool == "H")
    params.config.pool_axis = PoolAxis::H;
  else if (pool != "-")
    fail(Errc::ConfigError, "adaptor params: bad pool axis \"" + pool + "\"");

  expect("variant");
  const std::string variant = next("variant");
  if (variant == "hybrid")
    params.config.mlp_variant = MlpVariant::Hybrid;
  else if (variant == "shared")
    params.config.mlp_variant = MlpVariant::Shared;
  else if (variant == "separate")
    params.config.mlp_variant = MlpVariant::Separate;
  else
    fail(Errc::ConfigError, "adaptor params: bad variant \"" + variant + "\"");

  expect("hidden");
  params.config.hidden_dim = next_int("hidden");
  expect("out");
  params.config.out_dim = next_int("out");
  expect("in_high");
  params.in_high = next_int("in_high");
  expect("in_low");
  params.in_low = next_int("in_low");
  expect("layers");
  const int layer_count = next_int("layers");
  if (layer_count < 1 || layer_count > 8)
    fail(Errc::ConfigError, "adaptor params: implausible layer count");

  for (int l = 0; l < layer_count; ++l) {
    expect("layer");
    const int rows = next_int("layer rows");
    const int cols = next_int("layer cols");
    if (rows < 1 || cols < 1)
      fail(Errc::ConfigError, "adaptor params: bad layer dims");
    LinearLayer layer;
    layer.weight = Matrix(rows, cols);
    expect("w");
    for (double& v : layer.weight.data) v = next_double("weight");
    expect("b");
    layer.bias.resize(static_cast<std::size_t>(cols));
    for (double& v : layer.bias) v = next_double("bias");
    params.layers.push_back(std::move(layer));
  }
  expect("end");
  check_adaptor_params(params);  // cross-field consistency
  return params;
}

Matrix random_features(int rows, int cols, std::uint64_t seed) {
  if (rows < 1 || cols < 1)
    fail(Errc::InvalidArgument, "feature matrix dims must be >= 1");
  Matrix m(rows, cols);
  Rng rng(seed);
  for (double& v : m.data) v = rng.normal();
  return m;
}

GradCheckResult gradient_check(const AdaptorConfig& config, int seq_high,
                               int seq_low, int emb_high, int emb_low,
                               std::uint64_t seed, double epsilon) {
  if (!(epsilon > 0.0))
    fail(Errc::InvalidArgument, "epsilon must be > 0");
  AdaptorParams params =
      init_adaptor_params(config, emb_high, emb_low, derive_seed(seed, 0));
  Matrix high = random_features(seq_high, emb_high, derive_seed(seed, 1));
  Matrix low = random_features(seq_low, emb_low, derive_seed(seed, 2));
  const Matrix probe_out = adaptor_forward(high, low, params);
  const Matrix upstream =
      random_features(probe_out.rows, probe_out.cols, derive_seed(seed, 3));

  const AdaptorGradients analytic =
      adaptor_backward(high, low, params, upstream);

  const auto loss = [&]() {
    const Matrix out = adaptor_forward(high, low, params);
    double acc = 0.0;
    for (std::size_t i = 0; i < out.data.size(); ++i)
      acc += out.data[i] * upstream.data[i];
    return acc;
  };

  GradCheckResult result;
  const auto probe = [&](double& coord, double analytic_grad) {
    const double saved = coord;
    coord = saved + epsilon;
    const double up = loss();
    coord = saved - epsilon;
    const double down = loss();
    coord = saved;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double rel = std::abs(analytic_grad - numeric) /
                       std::max(1.0, std::abs(analytic_grad) + std::abs(numeric));
    result.max_rel_error = std::max(result.max_rel_error, rel);
    ++result.coordinates_checked;
  };

  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    LinearLayer& layer = params.layers[l];
    for (std::size_t i = 0; i < layer.weight.data.size(); ++i)
      probe(layer.weight.data[i], analytic.layers[l].weight.data[i]);
    for (std::size_t i = 0; i < layer.bias.size(); ++i)
      probe(layer.bias[i], analytic.layers[l].bias[i]);
  }
  for (std::size_t i = 0; i < high.data.size(); ++i)
    probe(high.data[i], analytic.d_high.data[i]);
  for (std::size_t i = 0; i < low.data.size(); ++i)
    probe(low.data[i], analytic.d_low.data[i]);
  return result;
}

}  // namespace vlplan
