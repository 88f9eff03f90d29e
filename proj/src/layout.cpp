// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/layout.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

#include "sdlm/common.hpp"

namespace sdlm {

AttnMask single_block_mask(int total_len, int block_start, int block_size) {
    if (total_len < 1 || block_start < 0 || block_size < 1 || block_start + block_size != total_len)
        throw LayoutError("single_block_mask: block must occupy exactly the tail of the sequence");
    AttnMask m(total_len, total_len);
    for (int u = 0; u < total_len; ++u) {
        for (int v = 0; v < total_len; ++v) {
            bool causal = v <= u;
            bool in_block = u >= block_start && v >= block_start;
            m.set(u, v, causal || in_block);
        }
    }
    return m;
}

TrainLayout build_train_layout(const Sample& sample, const std::vector<BlockSpec>& blocks,
                               bool shift, bool intra_block_causal) {
    const int prompt_len = static_cast<int>(sample.prompt.size());
    const int resp_len = static_cast<int>(sample.response.size());
    if (prompt_len < 1) throw LayoutError("build_train_layout: empty prompt");

    int prev_end = 0;  // last covered response coordinate so far
    for (const BlockSpec& b : blocks) {
        if (b.size < 1 || b.start < 1) throw LayoutError("build_train_layout: bad block spec");
        if (b.start <= prev_end) throw LayoutError("build_train_layout: overlapping or unsorted blocks");
        if (b.start + b.size - 1 > resp_len) throw LayoutError("build_train_layout: block outside response");
        prev_end = b.start + b.size - 1;
    }

    TrainLayout out;
    out.prompt_len = prompt_len;
    out.n_blocks = static_cast<int>(blocks.size());

    // Absolute position of response token r[j] (0-based) is prompt_len + j.
    struct Entry {
        int token;
        int pos;
        SegmentKind kind;
        int block = -1;  // noise entries only
    };
    std::vector<Entry> entries;
    entries.reserve(sample.prompt.size() + sample.response.size() * 2);

    for (int j = 0; j < prompt_len; ++j)
        entries.push_back({sample.prompt[static_cast<size_t>(j)], j, SegmentKind::prompt, -1});

    std::vector<int> head_pos(blocks.size(), 0);
    size_t next_block = 0;
    for (int i = 1; i <= resp_len; ++i) {
        if (next_block < blocks.size() && blocks[next_block].start == i) {
            const BlockSpec& b = blocks[next_block];
            const int block_id = static_cast<int>(next_block);
            const int hp = prompt_len + i - 2;  // predecessor's position
            head_pos[next_block] = hp;
            int head_tok = i == 1 ? sample.prompt.back() : sample.response[static_cast<size_t>(i - 2)];
            entries.push_back({head_tok, hp, SegmentKind::noise_head, block_id});
            for (int m = 1; m < b.size; ++m)
                entries.push_back({/*mask_id=*/0, hp + m, SegmentKind::noise_mask, block_id});
            // Supervision: shifted, offset k predicts r[i-1+k]; unshifted,
            // masks predict the token standing at their own position.
            const int first_entry = static_cast<int>(entries.size()) - b.size;
            for (int k = shift ? 0 : 1; k < b.size; ++k) {
                int target = shift ? sample.response[static_cast<size_t>(i - 1 + k)]
                                   : sample.response[static_cast<size_t>(i - 2 + k)];
                out.loss_targets.push_back({first_entry + k, target, block_id});
            }
            ++next_block;
        }
        entries.push_back({sample.response[static_cast<size_t>(i - 1)], prompt_len + i - 1,
                           SegmentKind::clean, -1});
    }

    const int n = static_cast<int>(entries.size());
    out.tokens.resize(static_cast<size_t>(n));
    out.position_ids.resize(static_cast<size_t>(n));
    out.segment_kinds.resize(static_cast<size_t>(n));
    for (int e = 0; e < n; ++e) {
        out.tokens[static_cast<size_t>(e)] = entries[static_cast<size_t>(e)].token;
        out.position_ids[static_cast<size_t>(e)] = entries[static_cast<size_t>(e)].pos;
        out.segment_kinds[static_cast<size_t>(e)] = entries[static_cast<size_t>(e)].kind;
    }

    out.mask = AttnMask(n, n);
    for (int u = 0; u < n; ++u) {
        const Entry& eu = entries[static_cast<size_t>(u)];
        bool u_noise = eu.block >= 0;
        for (int v = 0; v < n; ++v) {
            const Entry& ev = entries[static_cast<size_t>(v)];
            bool v_noise = ev.block >= 0;
            bool on = false;
            if (!u_noise) {
                // Prompt/clean entries attend causally to prompt/clean only.
                on = !v_noise && ev.pos <= eu.pos;
            } else if (!v_noise) {
                // Noise entries see the history strictly before the head's
                // position; the head itself carries the predecessor token.
                on = ev.pos < head_pos[static_cast<size_t>(eu.block)];
            } else if (ev.block == eu.block) {
                on = intra_block_causal ? v <= u : true;
            }
            if (on) out.mask.set(u, v);
        }
    }
    return out;
}

std::vector<BlockSpec> partition_blocks(int response_len, int block_size, double keep_prob,
                                        uint64_t seed, int budget) {
    if (response_len < 1) throw ConfigError("partition_blocks: response_len must be >= 1");
    if (block_size < 1) throw ConfigError("partition_blocks: block_size must be >= 1");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0))
        throw ConfigError("partition_blocks: keep_prob must be in (0, 1]");
    if (budget < response_len) throw ConfigError("partition_blocks: budget below response length");

    Rng rng(seed);
    int offset = rng.uniform_int(1, block_size);
    std::vector<BlockSpec> out;
    int noise_total = 0;
    for (int start = offset; start <= response_len; start += block_size) {
        int size = std::min(block_size, response_len - start + 1);
        if (!rng.bernoulli(keep_prob)) continue;
        if (response_len + noise_total + size > budget) break;  // drop trailing blocks
        out.push_back({start, size});
        noise_total += size;
    }
    return out;
}

std::string dump_layout(const TrainLayout& layout, const Vocab& vocab) {
    std::ostringstream os;
    auto kind_name = [](SegmentKind k) {
        switch (k) {
            case SegmentKind::prompt: return "prompt";
            case SegmentKind::clean: return "clean";
            case SegmentKind::noise_head: return "head";
            case SegmentKind::noise_mask: return "mask";
        }
        return "?";
    };
    std::vector<std::string> target_of(static_cast<size_t>(layout.size()));
    for (const LossTarget& t : layout.loss_targets)
        target_of[static_cast<size_t>(t.entry)] =
            vocab.tokens[static_cast<size_t>(t.target)] + " (b" + std::to_string(t.block) + ")";

    os << "entry  pos  kind    token  target\n";
    for (int e = 0; e < layout.size(); ++e) {
        char line[64];
        std::snprintf(line, sizeof(line), "%5d  %3d  %-6s  %-5s  %s\n", e,
                      layout.position_ids[static_cast<size_t>(e)],
                      kind_name(layout.segment_kinds[static_cast<size_t>(e)]),
                      vocab.tokens[static_cast<size_t>(layout.tokens[static_cast<size_t>(e)])].c_str(),
                      target_of[static_cast<size_t>(e)].empty() ? "-" : target_of[static_cast<size_t>(e)].c_str());
        os << line;
    }
    os << "mask (row attends column):\n";
    for (int u = 0; u < layout.size(); ++u) {
        for (int v = 0; v < layout.size(); ++v) os << (layout.mask.at(u, v) ? '1' : '.');
        os << '\n';
    }
    return os.str();
}

}  // namespace sdlm
