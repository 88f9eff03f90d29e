// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Deterministic synthetic tasks: copy, reverse, little-endian addition,
// and sliding windows over a bundled text.

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "sdlm/vocab.hpp"

namespace sdlm {

// One supervised example. `prompt` is the prefix fed to the model,
// `response` the target continuation, always terminated by eos_id.
struct Sample {
    std::vector<int> prompt;
    std::vector<int> response;

    bool operator==(const Sample&) const = default;
};

struct LenRange {
    int min = 1;
    int max = 1;
};

// Deterministic given (task_name, count, seed, lens). Each response ends
// with eos_id; neither field contains mask_id or pad_id.
std::vector<Sample> gen_samples(const std::string& task_name, int count, uint64_t seed,
                                LenRange lens);

// JSON-lines serialization: {"prompt": [ids], "response": [ids]} per line.
void write_samples_jsonl(std::ostream& out, const std::vector<Sample>& samples);
std::vector<Sample> read_samples_jsonl(std::istream& in);

}  // namespace sdlm
