// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// JSON run configuration with full defaulting, shared by the CLI and the
// CLI tests. The resolved form is echoed into every output directory.

#pragma once

#include <cstdint>
#include <string>

#include "sdlm/corpus.hpp"
#include "sdlm/model.hpp"
#include "sdlm/trainer.hpp"

namespace sdlm {

struct RunConfig {
    std::string task;  // required
    uint64_t seed = 1;
    std::string out_dir = "run";
    ModelConfig model;
    TrainConfig train;
    int data_count = 2048;
    LenRange data_lens{3, 8};
    uint64_t data_seed = 0;  // 0 -> derived from seed

    static RunConfig from_json_text(const std::string& text);
    std::string to_json_text() const;
};

// Task-conventional prompt encoding: [bos] + symbols (+ trailing [bos]
// for tasks without an explicit separator symbol).
std::vector<int> format_prompt(const Vocab& vocab, const std::string& task,
                               const std::string& text);

}  // namespace sdlm
