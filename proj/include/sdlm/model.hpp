// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Minimal decoder transformer: learned absolute positions, arbitrary
// attention-mask injection, manual reverse-mode gradients, and an
// append-only KV cache for incremental decoding. All math is float32,
// single-threaded, fixed accumulation order.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "sdlm/layout.hpp"
#include "sdlm/tensor.hpp"

namespace sdlm {

enum class PosEncoding { learned_absolute };

struct ModelConfig {
    int vocab_size = 0;
    int dim = 0;
    int n_layers = 0;
    int n_heads = 0;
    int max_positions = 0;
    int block_size = 1;  // decoding horizon D, baked into checkpoints
    PosEncoding pos_encoding = PosEncoding::learned_absolute;
    // Supervision/attention style the checkpoint was trained with; the
    // decode engine must mirror them.
    bool shift = true;
    bool intra_block_causal = false;

    int head_dim() const { return dim / n_heads; }
    void validate() const;
};

struct LayerParams {
    Tensor ln1_g, ln1_b;
    Tensor wq, bq, wk, bk, wv, bv, wo, bo;
    Tensor ln2_g, ln2_b;
    Tensor w1, b1, w2, b2;
};

struct Parameters {
    Tensor tok_emb;  // vocab_size x dim
    Tensor pos_emb;  // max_positions x dim
    std::vector<LayerParams> layers;
    Tensor lnf_g, lnf_b;
    Tensor w_out, b_out;  // dim x vocab_size, 1 x vocab_size
};

// Visits all tensors in a fixed order (the checkpoint manifest order).
void for_each_tensor(Parameters& p, const std::function<void(const std::string&, Tensor&)>& fn);
void for_each_tensor(const Parameters& p,
                     const std::function<void(const std::string&, const Tensor&)>& fn);

Parameters init_params(const ModelConfig& config, uint64_t seed);
Parameters zeros_like(const Parameters& p);
bool all_finite(const Parameters& p);

struct Model {
    ModelConfig config;
    Parameters params;
};

// Committed key/value states, one stream per generation. Entries are only
// ever appended; committed positions are 0..committed_len-1.
struct KVCache {
    int n_layers = 0;
    int dim = 0;
    int committed_len = 0;
    std::vector<int> tokens;              // committed token ids
    std::vector<std::vector<float>> k;    // per layer, committed_len * dim
    std::vector<std::vector<float>> v;
};

KVCache make_cache(const ModelConfig& config);

// Full forward pass. mask must be len x len; logits[u] depends only on
// columns v with mask[u][v] == 1.
std::vector<float> forward(const ModelConfig& config, const Parameters& params,
                           std::span<const int> tokens, std::span<const int> positions,
                           const AttnMask& mask);

// Incremental forward over a chunk against the cache. mask must be
// chunk_len x (committed_len + chunk_len). The leading commit_count chunk
// entries must continue the cache's positions; their K/V are appended,
// the rest (noise entries) are discarded.
std::vector<float> forward_cached(const ModelConfig& config, const Parameters& params,
                                  KVCache& cache, std::span<const int> chunk_tokens,
                                  std::span<const int> chunk_positions, const AttnMask& mask,
                                  int commit_count);

// Saved activations for one forward pass; consumed by backward().
struct TapeLayer {
    std::vector<float> x_in;
    std::vector<float> ln1_xhat, ln1_rstd;
    std::vector<float> a;
    std::vector<float> q, k, v;
    std::vector<float> att_p;  // n_heads * len * len, zero where masked
    std::vector<float> att_out;
    std::vector<float> x_mid;
    std::vector<float> ln2_xhat, ln2_rstd;
    std::vector<float> bh;
    std::vector<float> pre, h1;
};

struct Tape {
    int len = 0;
    std::vector<int> tokens, positions;
    AttnMask mask;
    std::vector<TapeLayer> layers;
    std::vector<float> x_final;
    std::vector<float> lnf_xhat, lnf_rstd;
    std::vector<float> f;
};

std::vector<float> forward_train(const ModelConfig& config, const Parameters& params,
                                 std::span<const int> tokens, std::span<const int> positions,
                                 const AttnMask& mask, Tape& tape);

// Accumulates parameter gradients (+=) for the given loss-gradient, which
// must be len x vocab_size.
void backward(const ModelConfig& config, const Parameters& params, const Tape& tape,
              std::span<const float> dlogits, Parameters& grads);

}  // namespace sdlm
