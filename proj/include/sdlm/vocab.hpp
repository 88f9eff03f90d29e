// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdlm {

// Token table for one task. The four special ids always occupy the first
// four slots; data symbols are single characters after that.
struct Vocab {
    std::vector<std::string> tokens;
    int mask_id = 0;
    int bos_id = 1;
    int eos_id = 2;
    int pad_id = 3;

    int size() const { return static_cast<int>(tokens.size()); }
    bool is_special(int id) const { return id >= 0 && id < 4; }

    // Id of a single-character data symbol, or -1.
    int find(char c) const;

    // Per-character encoding of data symbols. Unknown character -> ConfigError.
    std::vector<int> encode(std::string_view text) const;

    // Concatenates token strings. Specials render as "[m]" etc., so
    // decode(encode(s)) == s holds for any encodable s.
    std::string decode(std::span<const int> ids) const;
};

// Fixed vocabulary for a task. Tasks: copy, reverse, add, chars.
// Unknown name -> ConfigError.
Vocab build_vocab(const std::string& task_name);

// The bundled public-domain snippet backing the "chars" task.
std::string_view chars_task_text();

}  // namespace sdlm
