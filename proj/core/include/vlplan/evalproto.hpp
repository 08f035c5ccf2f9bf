/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vlplan/error.hpp"

namespace vlplan {

/// One scored token position: natural-log probability, always <= 0.
struct TokenLogProb {
  int token_id = 0;
  double logprob = 0.0;
};

/// A multiple-choice item: per-option token scores over the answer span.
struct ChoiceInstance {
  std::string prompt_id;
  struct Option {
    std::string label;
    std::vector<TokenLogProb> tokens;
  };
  std::vector<Option> options;
};

/// >= 2 options, each non-empty, all logprobs finite and <= 0.
void check_choice_instance(const ChoiceInstance& instance);

enum class Role { System, User, Answer, Special };
enum class TokenModality { Text, ImagePlaceholder };

const char* role_name(Role r) noexcept;
const char* token_modality_name(TokenModality m) noexcept;

struct RoleToken {
  int token_id = 0;
  Role role = Role::System;
  TokenModality modality = TokenModality::Text;
};

struct RoleTokenStream {
  std::vector<RoleToken> tokens;
};

/// exp(-mean logprob); >= 1 for valid (<= 0) logprobs. EmptySequence if no
/// tokens.
double perplexity(std::span<const TokenLogProb> tokens);

/// How options are scored: mean-normalized (true perplexity) or total NLL.
/// Whether reference protocols length-normalize is unstated, so both are
/// available; MeanPerplexity is the default.
enum class ChoiceScoring { MeanPerplexity, TotalNll };

/// Label of the lowest-scoring option; ties go to the earliest option.
std::string select_choice_ppl(const ChoiceInstance& instance,
                              ChoiceScoring scoring = ChoiceScoring::MeanPerplexity);

/// total_nll (nats) over byte_count bytes, in bits per byte:
/// total_nll / (byte_count * ln 2). byte_count < 1 is ZeroBytes.
double bits_per_byte(double total_nll_nats, long byte_count);

/// Supervision mask for fine-tuning: true iff the token's role is Answer or
/// Special AND its modality is Text. System/user prompt tokens and image
/// placeholder tokens never receive loss.
std::vector<bool> sft_loss_mask(const RoleTokenStream& stream);

/// -sum of logprobs over mask-true positions (0 if none are supervised).
/// logprobs align index-for-index with the stream (LengthMismatch if not).
double masked_nll(const RoleTokenStream& stream,
                  std::span<const double> logprobs);

/// Seeded toy fixtures for protocol tests and demos: a categorical
/// "model" emits plausible per-token logprobs; no neural network involved.
ChoiceInstance random_choice_instance(std::uint64_t seed, int n_options,
                                      int max_tokens_per_option);
RoleTokenStream random_role_stream(std::uint64_t seed, int n_tokens);

}  // namespace vlplan
