// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Attention-mask and sequence-layout construction for block training.
//
// A noise block standing at response position i is the input
// [predecessor token, mask, ..., mask] (D entries). Its entries reuse the
// position ids of the tokens they stand in for (the head shares the
// predecessor's position), attend to every prompt/clean entry at a
// strictly smaller position id than the head, and attend bidirectionally
// within the block. With the shifted objective, the entry at block offset
// k is supervised to predict response token i+k.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "sdlm/corpus.hpp"

namespace sdlm {

// Row-major boolean attention matrix; entry (u, v) == row u may attend
// to column v.
struct AttnMask {
    int rows = 0;
    int cols = 0;
    std::vector<uint8_t> bits;

    AttnMask() = default;
    AttnMask(int r, int c) : rows(r), cols(c), bits(static_cast<size_t>(r) * static_cast<size_t>(c), 0) {}

    uint8_t at(int u, int v) const { return bits[static_cast<size_t>(u) * static_cast<size_t>(cols) + static_cast<size_t>(v)]; }
    void set(int u, int v, bool on = true) {
        bits[static_cast<size_t>(u) * static_cast<size_t>(cols) + static_cast<size_t>(v)] = on ? 1 : 0;
    }
};

// One block in response coordinates (1-based): `start` is the index of
// the first predicted token, `size` the block length D. The block head
// reuses the token at start-1 (the last prompt token when start == 1).
struct BlockSpec {
    int start = 1;
    int size = 1;

    bool operator==(const BlockSpec&) const = default;
};

enum class SegmentKind : uint8_t { prompt, clean, noise_head, noise_mask };

struct LossTarget {
    int entry;   // index into the layout's token sequence
    int target;  // token id to predict there
    int block;   // which noise block this target belongs to
};

// Materialized training sequence: interleaved tokens, duplicated position
// ids for noise entries, the structured attention mask, and the per-block
// supervision map.
struct TrainLayout {
    std::vector<int> tokens;
    std::vector<int> position_ids;
    AttnMask mask;
    std::vector<LossTarget> loss_targets;  // grouped by block, ascending entry order
    std::vector<SegmentKind> segment_kinds;
    int n_blocks = 0;
    int prompt_len = 0;

    int size() const { return static_cast<int>(tokens.size()); }
};

// Mask for a causal prefix followed by one bidirectional block occupying
// the tail: (u,v)=1 iff v <= u or both u,v >= block_start.
// Block not ending exactly at total_len -> LayoutError.
AttnMask single_block_mask(int total_len, int block_start, int block_size);

// Interleaves noise blocks with the clean response: for each response
// position in order, the block standing there (if any) is emitted first,
// then the clean token. `shift` selects next-token supervision inside
// blocks; off, the head is unsupervised and masks predict the token at
// their own position. `intra_block_causal` replaces the bidirectional
// intra-block attention with a causal one.
// Blocks must be sorted, non-overlapping, inside the response -> LayoutError.
TrainLayout build_train_layout(const Sample& sample, const std::vector<BlockSpec>& blocks,
                               bool shift, bool intra_block_causal);

// Random block partition of a response: draws a start offset uniformly
// from [1, block_size], tiles candidates every block_size positions
// (final block truncated to fit), keeps each independently with
// probability keep_prob, and stops adding once response_len plus the kept
// noise entries would exceed `budget`.
std::vector<BlockSpec> partition_blocks(int response_len, int block_size, double keep_prob,
                                        uint64_t seed, int budget);

// Human-readable dump (tokens, positions, targets, ASCII mask grid) for
// golden-file tests and debugging.
std::string dump_layout(const TrainLayout& layout, const Vocab& vocab);

}  // namespace sdlm
