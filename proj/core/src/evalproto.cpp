/*
 * Copyright (c) vlplan contributors.
 *
 * This source code is licensed under the Apache 2.0 license found in the
 * LICENSE file in the root directory of this source tree.
 */

#include "vlplan/evalproto.hpp"

#include <cmath>
#include <limits>

#include "vlplan/rng.hpp"

namespace vlplan {

const char* role_name(Role r) noexcept {
  switch (r) {
    case Role::System:
      return "system";
    case Role::User:
      return "user";
    case Role::Answer:
      return "answer";
    case Role::Special:
      return "special";
  }
  return "?";
}

const char* token_modality_name(TokenModality m) noexcept {
  switch (m) {
    case TokenModality::Text:
      return "text";
    case TokenModality::ImagePlaceholder:
      return "image_placeholder";
  }
  return "?";
}

void check_choice_instance(const ChoiceInstance& instance) {
  if (instance.options.size() < 2) {
    fail(Errc::InvalidArgument, "choice instance '" + instance.prompt_id +
                                    "' needs at least 2 options, got " +
                                    std::to_string(instance.options.size()));
  }
  for (const auto& option : instance.options) {
    if (option.tokens.empty()) {
      fail(Errc::EmptySequence, "option '" + option.label + "' of '" +
                                    instance.prompt_id + "' has no tokens");
    }
    for (const auto& tok : option.tokens) {
      if (!std::isfinite(tok.logprob) || tok.logprob > 0.0) {
        fail(Errc::NonFiniteInput,
             "logprob " + std::to_string(tok.logprob) + " in option '" +
                 option.label + "' of '" + instance.prompt_id +
                 "' is not a finite value <= 0");
      }
    }
  }
}

double perplexity(std::span<const TokenLogProb> tokens) {
  if (tokens.empty()) {
    fail(Errc::EmptySequence, "perplexity of an empty token sequence");
  }
  double sum = 0.0;
  for (const auto& tok : tokens) {
    if (!std::isfinite(tok.logprob) || tok.logprob > 0.0) {
      fail(Errc::NonFiniteInput, "logprob " + std::to_string(tok.logprob) +
                                     " is not a finite value <= 0");
    }
    sum += tok.logprob;
  }
  return std::exp(-sum / static_cast<double>(tokens.size()));
}

std::string select_choice_ppl(const ChoiceInstance& instance,
                              ChoiceScoring scoring) {
  check_choice_instance(instance);
  std::size_t best = 0;
  double best_score = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < instance.options.size(); ++i) {
    const auto& option = instance.options[i];
    double score = 0.0;
    if (scoring == ChoiceScoring::MeanPerplexity) {
      score = perplexity(option.tokens);
    } else {
      for (const auto& tok : option.tokens) score -= tok.logprob;
    }
    if (score < best_score) {  // strict: ties keep the earliest option
      best_score = score;
      best = i;
    }
  }
  return instance.options[best].label;
}

double bits_per_byte(double total_nll_nats, long byte_count) {
  if (byte_count < 1) {
    fail(Errc::ZeroBytes,
         "bits_per_byte needs byte_count >= 1, got " + std::to_string(byte_count));
  }
  if (!std::isfinite(total_nll_nats) || total_nll_nats < 0.0) {
    fail(Errc::NonFiniteInput, "total NLL " + std::to_string(total_nll_nats) +
                                   " is not a finite value >= 0");
  }
  return total_nll_nats / (static_cast<double>(byte_count) * std::log(2.0));
}

std::vector<bool> sft_loss_mask(const RoleTokenStream& stream) {
  std::vector<bool> mask;
  mask.reserve(stream.tokens.size());
  for (const auto& tok : stream.tokens) {
    const bool supervised_role =
        tok.role == Role::Answer || tok.role == Role::Special;
    mask.push_back(supervised_role && tok.modality == TokenModality::Text);
  }
  return mask;
}

double masked_nll(const RoleTokenStream& stream,
                  std::span<const double> logprobs) {
  if (logprobs.size() != stream.tokens.size()) {
    fail(Errc::LengthMismatch,
         "stream has " + std::to_string(stream.tokens.size()) +
             " tokens but " + std::to_string(logprobs.size()) +
             " logprobs were given");
  }
  const std::vector<bool> mask = sft_loss_mask(stream);
  double nll = 0.0;
  for (std::size_t i = 0; i < logprobs.size(); ++i) {
    if (!mask[i]) continue;
    if (!std::isfinite(logprobs[i]) || logprobs[i] > 0.0) {
      fail(Errc::NonFiniteInput, "logprob " + std::to_string(logprobs[i]) +
                                     " at position " + std::to_string(i) +
                                     " is not a finite value <= 0");
    }
    nll -= logprobs[i];
  }
  return nll;
}

ChoiceInstance random_choice_instance(std::uint64_t seed, int n_options,
                                      int max_tokens_per_option) {
  if (n_options < 2) {
    fail(Errc::InvalidArgument,
         "need at least 2 options, got " + std::to_string(n_options));
  }
  if (max_tokens_per_option < 1) {
    fail(Errc::InvalidArgument, "need max_tokens_per_option >= 1, got " +
                                    std::to_string(max_tokens_per_option));
  }
  Rng rng(seed);
  ChoiceInstance instance;
  instance.prompt_id = "toy-" + std::to_string(seed);
  for (int i = 0; i < n_options; ++i) {
    ChoiceInstance::Option option;
    option.label.push_back(static_cast<char>('A' + (i % 26)));
    if (i >= 26) option.label += std::to_string(i / 26);
    const int n_tokens = 1 + rng.uniform_int(max_tokens_per_option);
    for (int t = 0; t < n_tokens; ++t) {
      TokenLogProb tok;
      tok.token_id = rng.uniform_int(50000);
      // Mildly peaked toy distribution: mean NLL ~1.5 nats per token.
      tok.logprob = -1.5 * (0.2 + rng.uniform01());
      option.tokens.push_back(tok);
    }
    instance.options.push_back(std::move(option));
  }
  return instance;
}

RoleTokenStream random_role_stream(std::uint64_t seed, int n_tokens) {
  if (n_tokens < 0) {
    fail(Errc::InvalidArgument,
         "need n_tokens >= 0, got " + std::to_string(n_tokens));
  }
  Rng rng(seed);
  RoleTokenStream stream;
  stream.tokens.reserve(static_cast<std::size_t>(n_tokens));
  for (int i = 0; i < n_tokens; ++i) {
    RoleToken tok;
    tok.token_id = rng.uniform_int(50000);
    const double u = rng.uniform01();
    if (u < 0.25) {
      tok.role = Role::System;
    } else if (u < 0.55) {
      tok.role = Role::User;
    } else if (u < 0.95) {
      tok.role = Role::Answer;
    } else {
      tok.role = Role::Special;
    }
    tok.modality = rng.uniform01() < 0.2 ? TokenModality::ImagePlaceholder
                                         : TokenModality::Text;
    stream.tokens.push_back(tok);
  }
  return stream;
}

}  // namespace vlplan
