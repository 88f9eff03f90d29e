// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Block decoding: each step runs one forward pass over the newly
// accepted tokens (committed to the KV cache) plus a noise block
// [last token, mask x (D-1)], scores the D proposed tokens with a
// confidence function, and accepts the longest prefix whose cumulative
// confidence clears tau (always at least one token). Speculative mode
// replaces the confidence rule with a second, batched verification pass
// that re-predicts each draft position under its true prefix.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "sdlm/model.hpp"

namespace sdlm {

enum class Confidence { logit, entropy };
enum class DecodeMode { greedy, speculative };

struct DecodeConfig {
    double tau = 0.98;
    Confidence confidence = Confidence::logit;
    DecodeMode mode = DecodeMode::greedy;
    int max_new_tokens = 64;
    int block_size = 4;  // must match the checkpoint
    int eos_id = 2;

    void validate() const;
};

struct StepRecord {
    std::vector<int> proposed;          // all proposed tokens for the step
    std::vector<double> confidences;    // per-position confidence values
    int gamma = 0;                      // accepted length after EOS/limit truncation
    int passes = 1;
};

struct DecodeTrace {
    std::vector<StepRecord> steps;
    long long generated = 0;
    long long passes = 0;
    double wall_seconds = 0.0;

    std::string to_json() const;
};

// Argmax token (ties -> lowest id) and its softmax probability.
std::pair<int, double> conf_logit(std::span<const float> logit_row);

// Argmax token and 1 - H(softmax)/log|V|.
std::pair<int, double> conf_entropy(std::span<const float> logit_row);

// Largest j such that conf_1 * ... * conf_j >= tau, floored at 1.
int gamma_tau(std::span<const double> confidences, double tau);

// One proposal pass: commits `pending` (the previously accepted tokens,
// initially the prompt) to the cache and returns the noise block's D
// logit rows. Exceeding max_positions -> LengthError.
std::vector<float> decode_step(const Model& model, KVCache& cache, std::span<const int> pending,
                               const DecodeConfig& config);

// Offsets of the block rows that carry proposals: 0..D-1 with the shifted
// objective, 1..D-1 without it.
std::vector<int> proposal_offsets(const ModelConfig& config);

struct VerifyResult {
    int gamma = 0;
    std::vector<int> repredicted;  // y-tilde, one per draft position
};

// Batched self-verification of a draft produced by the immediately
// preceding decode_step on the same cache. Row j replays the block with
// the first j-1 draft tokens unmasked; gamma is the longest prefix on
// which draft and re-prediction agree (floored at 1).
VerifyResult verify_block(const Model& model, KVCache& cache, std::span<const int> draft,
                          const DecodeConfig& config);

// Confidence-thresholded generation (mode == greedy).
std::pair<std::vector<int>, DecodeTrace> generate(const Model& model, std::span<const int> prompt,
                                                  const DecodeConfig& config);

// Draft-then-verify generation (mode == speculative); two passes per step.
std::pair<std::vector<int>, DecodeTrace> generate_speculative(const Model& model,
                                                              std::span<const int> prompt,
                                                              const DecodeConfig& config);

// Dispatches on config.mode.
std::pair<std::vector<int>, DecodeTrace> run_generation(const Model& model,
                                                        std::span<const int> prompt,
                                                        const DecodeConfig& config);

// First `gamma` proposals, cut at the first EOS (kept) and at `remaining`.
std::vector<int> truncate_accepted(std::span<const int> proposals, int gamma, int eos_id,
                                   long long remaining);

}  // namespace sdlm
