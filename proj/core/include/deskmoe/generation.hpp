// Copyright 2026 The deskmoe Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "deskmoe/chat_template.hpp"
#include "deskmoe/parameter_store.hpp"
#include "deskmoe/sampling.hpp"

DESKMOE_NUMERIC_BEGIN

struct GenerationLimits {
  std::size_t max_reasoning_tokens = 64;
  std::size_t max_answer_tokens = 64;
};

struct GenerationResult {
  AssistantBody body;
  /// Assistant segment in template form, from the mode lines to the answer.
  std::string text;
  std::vector<std::int32_t> prompt_ids;
  std::vector<std::int32_t> generated_ids;
  /// True when a budget or the context length closed a phase.
  bool truncated = false;
};

/// Template-constrained decoding with a byte tokenizer model. The reasoning
/// phase may only emit bytes or </think>; the answer phase bytes or
/// <|im_end|>. Exhausted budgets close the phase. Generated text that
/// reproduces a reserved string is dropped so the result always parses back
/// to `mode`. Throws ConfigError when the model vocabulary cannot hold the
/// tokenizer.
GenerationResult generate(const ParameterStore& store, const Conversation& conversation, const ReasoningConfig& mode,
                          const SamplingParams& sampling, std::mt19937_64& rng, const GenerationLimits& limits = {});

DESKMOE_NUMERIC_END
