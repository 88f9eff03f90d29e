// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/decode.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include <json.hpp>

#include "sdlm/common.hpp"

namespace sdlm {

void DecodeConfig::validate() const {
    if (!(tau > 0.0 && tau <= 1.0)) throw ConfigError("decode: tau must be in (0, 1]");
    if (max_new_tokens < 1) throw ConfigError("decode: max_new_tokens must be >= 1");
    if (block_size < 1) throw ConfigError("decode: block_size must be >= 1");
}

std::string DecodeTrace::to_json() const {
    nlohmann::json j;
    j["steps"] = nlohmann::json::array();
    for (const StepRecord& s : steps) {
        j["steps"].push_back({{"proposed", s.proposed},
                              {"confidences", s.confidences},
                              {"gamma", s.gamma},
                              {"passes", s.passes}});
    }
    j["generated"] = generated;
    j["passes"] = passes;
    j["wall_seconds"] = wall_seconds;
    return j.dump();
}

namespace {

int argmax_lowest(std::span<const float> row) {
    int best = 0;
    for (int j = 1; j < static_cast<int>(row.size()); ++j)
        if (row[static_cast<size_t>(j)] > row[static_cast<size_t>(best)]) best = j;
    return best;
}

double clamp01(double x) { return std::min(1.0, std::max(0.0, x)); }

}  // namespace

std::pair<int, double> conf_logit(std::span<const float> logit_row) {
    const int am = argmax_lowest(logit_row);
    const double mx = logit_row[static_cast<size_t>(am)];
    double denom = 0.0;
    for (float l : logit_row) denom += std::exp(static_cast<double>(l) - mx);
    return {am, clamp01(1.0 / denom)};
}

std::pair<int, double> conf_entropy(std::span<const float> logit_row) {
    const int am = argmax_lowest(logit_row);
    const double mx = logit_row[static_cast<size_t>(am)];
    double denom = 0.0;
    for (float l : logit_row) denom += std::exp(static_cast<double>(l) - mx);
    double entropy = 0.0;
    for (float l : logit_row) {
        const double p = std::exp(static_cast<double>(l) - mx) / denom;
        if (p > 0.0) entropy -= p * std::log(p);
    }
    const double conf = 1.0 - entropy / std::log(static_cast<double>(logit_row.size()));
    return {am, clamp01(conf)};
}

int gamma_tau(std::span<const double> confidences, double tau) {
    if (confidences.empty()) throw ContractViolation("gamma_tau: empty confidence vector");
    double prod = 1.0;
    int best = 0;
    for (int j = 1; j <= static_cast<int>(confidences.size()); ++j) {
        prod *= confidences[static_cast<size_t>(j - 1)];
        if (prod >= tau) best = j;
    }
    return std::max(best, 1);
}

std::vector<int> proposal_offsets(const ModelConfig& config) {
    std::vector<int> offs;
    for (int o = config.shift ? 0 : 1; o < config.block_size; ++o) offs.push_back(o);
    return offs;
}

std::vector<float> decode_step(const Model& model, KVCache& cache, std::span<const int> pending,
                               const DecodeConfig& config) {
    const ModelConfig& cfg = model.config;
    const int D = cfg.block_size;
    const int c = cache.committed_len;
    const int q = static_cast<int>(pending.size());
    if (q < 1) throw ContractViolation("decode_step: pending must be non-empty");
    const int n = c + q;
    if (n + D > cfg.max_positions)
        throw LengthError("decode_step: sequence would exceed max_positions");

    const int m = q + D;
    std::vector<int> tokens(static_cast<size_t>(m));
    std::vector<int> positions(static_cast<size_t>(m));
    for (int i = 0; i < q; ++i) {
        tokens[static_cast<size_t>(i)] = pending[static_cast<size_t>(i)];
        positions[static_cast<size_t>(i)] = c + i;
    }
    tokens[static_cast<size_t>(q)] = pending.back();
    positions[static_cast<size_t>(q)] = n - 1;
    for (int o = 1; o < D; ++o) {
        tokens[static_cast<size_t>(q + o)] = 0;  // mask id
        positions[static_cast<size_t>(q + o)] = n - 1 + o;
    }

    AttnMask mask(m, c + m);
    for (int i = 0; i < q; ++i) {
        for (int col = 0; col < c + i + 1; ++col) mask.set(i, col);
    }
    for (int r = 0; r < D; ++r) {
        const int u = q + r;
        // History strictly before the head's position: everything except
        // the last committed token, whose content rides in as the head.
        for (int col = 0; col < c + q - 1; ++col) mask.set(u, col);
        for (int r2 = 0; r2 < D; ++r2) {
            if (cfg.intra_block_causal && r2 > r) continue;
            mask.set(u, c + q + r2);
        }
    }

    std::vector<float> logits =
        forward_cached(cfg, model.params, cache, tokens, positions, mask, /*commit_count=*/q);
    std::vector<float> z(static_cast<size_t>(D) * static_cast<size_t>(cfg.vocab_size));
    std::copy(logits.begin() + static_cast<long>(static_cast<size_t>(q) * cfg.vocab_size),
              logits.end(), z.begin());
    return z;
}

VerifyResult verify_block(const Model& model, KVCache& cache, std::span<const int> draft,
                          const DecodeConfig& config) {
    const ModelConfig& cfg = model.config;
    const int D = cfg.block_size;
    const int d_eff = cfg.shift ? D : D - 1;
    if (static_cast<int>(draft.size()) != d_eff)
        throw ContractViolation("verify_block: draft length must match the proposal horizon");
    const int n = cache.committed_len;
    if (n < 1) throw ContractViolation("verify_block: empty cache");
    if (n + D > cfg.max_positions)
        throw LengthError("verify_block: sequence would exceed max_positions");

    const int head = cache.tokens[static_cast<size_t>(n - 1)];
    const int m = d_eff * D;
    std::vector<int> tokens(static_cast<size_t>(m));
    std::vector<int> positions(static_cast<size_t>(m));
    AttnMask mask(m, n + m);
    for (int j = 1; j <= d_eff; ++j) {
        const int base = (j - 1) * D;
        tokens[static_cast<size_t>(base)] = head;
        for (int o = 1; o < D; ++o)
            tokens[static_cast<size_t>(base + o)] = o <= j - 1 ? draft[static_cast<size_t>(o - 1)] : 0;
        for (int o = 0; o < D; ++o) {
            positions[static_cast<size_t>(base + o)] = n - 1 + o;
            const int u = base + o;
            for (int col = 0; col < n - 1; ++col) mask.set(u, col);
            for (int o2 = 0; o2 < D; ++o2) {
                if (cfg.intra_block_causal && o2 > o) continue;
                mask.set(u, n + base + o2);
            }
        }
    }

    std::vector<float> logits =
        forward_cached(cfg, model.params, cache, tokens, positions, mask, /*commit_count=*/0);

    VerifyResult out;
    out.repredicted.resize(static_cast<size_t>(d_eff));
    for (int j = 1; j <= d_eff; ++j) {
        // The row entry whose prediction lands on draft_j's position:
        // offset j-1 under the shifted objective, offset j without it.
        const int o = cfg.shift ? j - 1 : j;
        const float* row =
            logits.data() + (static_cast<size_t>(j - 1) * D + static_cast<size_t>(o)) * cfg.vocab_size;
        out.repredicted[static_cast<size_t>(j - 1)] =
            argmax_lowest({row, static_cast<size_t>(cfg.vocab_size)});
    }
    int gamma = 0;
    while (gamma < d_eff &&
           draft[static_cast<size_t>(gamma)] == out.repredicted[static_cast<size_t>(gamma)])
        ++gamma;
    out.gamma = std::max(gamma, 1);
    (void)config;
    return out;
}

std::vector<int> truncate_accepted(std::span<const int> proposals, int gamma, int eos_id,
                                   long long remaining) {
    const int take = std::min<long long>(std::min<int>(gamma, static_cast<int>(proposals.size())),
                                         remaining);
    std::vector<int> out;
    out.reserve(static_cast<size_t>(take));
    for (int i = 0; i < take; ++i) {
        out.push_back(proposals[static_cast<size_t>(i)]);
        if (proposals[static_cast<size_t>(i)] == eos_id) break;
    }
    return out;
}

namespace {

std::pair<std::vector<int>, DecodeTrace> generate_impl(const Model& model,
                                                       std::span<const int> prompt,
                                                       const DecodeConfig& config,
                                                       bool speculative) {
    config.validate();
    model.config.validate();
    if (prompt.empty()) throw ContractViolation("generate: prompt must be non-empty");
    if (config.block_size != model.config.block_size)
        throw ConfigError("generate: block_size does not match the checkpoint");

    const auto t0 = std::chrono::steady_clock::now();
    auto conf_fn = config.confidence == Confidence::logit ? conf_logit : conf_entropy;

    KVCache cache = make_cache(model.config);
    std::vector<int> pending(prompt.begin(), prompt.end());
    std::vector<int> output;
    DecodeTrace trace;
    long long remaining = config.max_new_tokens;

    while (remaining > 0) {
        std::vector<float> z = decode_step(model, cache, pending, config);
        const std::vector<int> offs = proposal_offsets(model.config);
        std::vector<int> proposed;
        std::vector<double> confs;
        proposed.reserve(offs.size());
        confs.reserve(offs.size());
        for (int o : offs) {
            auto [tok, cf] = conf_fn(
                {z.data() + static_cast<size_t>(o) * model.config.vocab_size,
                 static_cast<size_t>(model.config.vocab_size)});
            proposed.push_back(tok);
            confs.push_back(cf);
        }

        int gamma;
        int passes;
        if (speculative) {
            VerifyResult vr = verify_block(model, cache, proposed, config);
            gamma = vr.gamma;
            passes = 2;
        } else {
            gamma = gamma_tau(confs, config.tau);
            passes = 1;
        }

        std::vector<int> accepted = truncate_accepted(proposed, gamma, config.eos_id, remaining);
        trace.steps.push_back(
            {proposed, confs, static_cast<int>(accepted.size()), passes});
        trace.generated += static_cast<long long>(accepted.size());
        trace.passes += passes;
        output.insert(output.end(), accepted.begin(), accepted.end());
        remaining -= static_cast<long long>(accepted.size());

        const bool saw_eos = !accepted.empty() && accepted.back() == config.eos_id;
        if (saw_eos) break;
        pending = std::move(accepted);
    }

    trace.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return {std::move(output), std::move(trace)};
}

}  // namespace

std::pair<std::vector<int>, DecodeTrace> generate(const Model& model, std::span<const int> prompt,
                                                  const DecodeConfig& config) {
    if (config.mode != DecodeMode::greedy)
        throw ContractViolation("generate: config.mode must be greedy");
    return generate_impl(model, prompt, config, /*speculative=*/false);
}

std::pair<std::vector<int>, DecodeTrace> generate_speculative(const Model& model,
                                                              std::span<const int> prompt,
                                                              const DecodeConfig& config) {
    if (config.mode != DecodeMode::speculative)
        throw ContractViolation("generate_speculative: config.mode must be speculative");
    return generate_impl(model, prompt, config, /*speculative=*/true);
}

std::pair<std::vector<int>, DecodeTrace> run_generation(const Model& model,
                                                        std::span<const int> prompt,
                                                        const DecodeConfig& config) {
    return config.mode == DecodeMode::greedy ? generate(model, prompt, config)
                                             : generate_speculative(model, prompt, config);
}

}  // namespace sdlm
