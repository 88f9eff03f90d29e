// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Block-supervised training: per-block mean cross-entropy over noise
// targets (normalized 1/D_b, then averaged over blocks), an optional
// auxiliary next-token term on clean entries, and a deterministic
// Adam loop with global-norm clipping. Setting block_size = 1 with
// keep_prob = 1 reproduces plain next-token training.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "sdlm/layout.hpp"
#include "sdlm/model.hpp"

namespace sdlm {

struct TrainConfig {
    double learning_rate = 1e-3;
    int batch_size = 16;
    int steps = 1000;
    uint64_t seed = 0;
    int block_size = 4;
    double keep_prob = 1.0;
    bool shift = true;
    bool intra_block_causal = false;
    bool aux_ntp = false;
    int max_layout_len = 128;  // budget for prompt + response + noise entries

    void validate() const;
};

// Mean over blocks of the per-block mean cross-entropy at that block's
// loss targets (Eq-style 1/D_b normalization). Zero-block layouts score 0;
// the auxiliary next-token term is accounted separately by the train loop.
double nsp_loss(std::span<const float> logits, const TrainLayout& layout);

// Mean next-token cross-entropy over a causal sequence; the first
// supervised target is tokens[supervise_from].
double ntp_loss(std::span<const float> logits, std::span<const int> tokens, int supervise_from);

// Clean/prompt entries of a layout paired with the token at the next
// position, restricted to response targets. Used for the aux NTP term.
std::vector<std::pair<int, int>> aux_ntp_targets(const TrainLayout& layout);

struct SampleLoss {
    double nsp = 0.0;
    double aux = 0.0;
};

// Loss (and, when `grads` is non-null, accumulated gradients scaled by
// `grad_scale`) for one sample under a fixed block partition.
SampleLoss sample_loss(const ModelConfig& config, const Parameters& params, const Sample& sample,
                       const std::vector<BlockSpec>& blocks, bool aux_ntp, Parameters* grads,
                       float grad_scale);

struct HistoryRow {
    int step = 0;
    double loss = 0.0;
    double aux_loss = 0.0;
};

// Adam (beta 0.9/0.95, no weight decay, constant LR, global-norm clip at
// 1.0). Deterministic given config.seed. Non-finite loss aborts with the
// offending step index.
std::vector<HistoryRow> train(const TrainConfig& config, Model& model,
                              const std::vector<Sample>& samples);

// CSV rows: step,loss,aux_loss
void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history);

}  // namespace sdlm
