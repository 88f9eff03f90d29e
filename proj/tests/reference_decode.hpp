// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Test-only reference decoder that re-runs the full prefix through the
// uncached forward pass at every step. Serves as the oracle for the
// KV-cache path: token sequences must match exactly and per-step logits
// within float tolerance.

#pragma once

#include <vector>

#include "sdlm/decode.hpp"
#include "sdlm/model.hpp"

namespace sdlm_ref {

// Proposal logits (D x vocab) for one step, computed from scratch over
// committed ++ noise block with an independently constructed mask.
inline std::vector<float> step_logits_uncached(const sdlm::Model& model,
                                               const std::vector<int>& committed) {
    const sdlm::ModelConfig& cfg = model.config;
    const int n = static_cast<int>(committed.size());
    const int D = cfg.block_size;
    const int total = n + D;

    std::vector<int> tokens = committed;
    std::vector<int> positions(static_cast<size_t>(total));
    for (int i = 0; i < n; ++i) positions[static_cast<size_t>(i)] = i;
    tokens.push_back(committed.back());
    for (int o = 1; o < D; ++o) tokens.push_back(0);
    for (int o = 0; o < D; ++o) positions[static_cast<size_t>(n + o)] = n - 1 + o;

    sdlm::AttnMask mask(total, total);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v <= u; ++v) mask.set(u, v);
    for (int r = 0; r < D; ++r) {
        const int u = n + r;
        for (int v = 0; v < n - 1; ++v) mask.set(u, v);
        for (int r2 = 0; r2 < D; ++r2) {
            if (cfg.intra_block_causal && r2 > r) continue;
            mask.set(u, n + r2);
        }
    }

    std::vector<float> logits = sdlm::forward(cfg, model.params, tokens, positions, mask);
    return std::vector<float>(
        logits.begin() + static_cast<long>(static_cast<size_t>(n) * cfg.vocab_size), logits.end());
}

struct RefStep {
    std::vector<int> proposed;
    std::vector<double> confidences;
    std::vector<float> block_logits;  // D x vocab
    int gamma = 0;
};

struct RefGeneration {
    std::vector<int> output;
    std::vector<RefStep> steps;
};

// Greedy confidence-thresholded generation without any cache reuse.
inline RefGeneration generate_greedy_uncached(const sdlm::Model& model,
                                              const std::vector<int>& prompt,
                                              const sdlm::DecodeConfig& config) {
    RefGeneration gen;
    std::vector<int> committed = prompt;
    long long remaining = config.max_new_tokens;
    auto conf_fn =
        config.confidence == sdlm::Confidence::logit ? sdlm::conf_logit : sdlm::conf_entropy;

    while (remaining > 0) {
        RefStep step;
        step.block_logits = step_logits_uncached(model, committed);
        for (int o : sdlm::proposal_offsets(model.config)) {
            auto [tok, cf] = conf_fn({step.block_logits.data() +
                                          static_cast<size_t>(o) * model.config.vocab_size,
                                      static_cast<size_t>(model.config.vocab_size)});
            step.proposed.push_back(tok);
            step.confidences.push_back(cf);
        }
        int gamma = sdlm::gamma_tau(step.confidences, config.tau);
        std::vector<int> accepted =
            sdlm::truncate_accepted(step.proposed, gamma, config.eos_id, remaining);
        step.gamma = static_cast<int>(accepted.size());
        gen.steps.push_back(std::move(step));

        gen.output.insert(gen.output.end(), accepted.begin(), accepted.end());
        committed.insert(committed.end(), accepted.begin(), accepted.end());
        remaining -= static_cast<long long>(accepted.size());
        if (!accepted.empty() && accepted.back() == config.eos_id) break;
    }
    return gen;
}

}  // namespace sdlm_ref
