// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Checkpoint format "sdlm-ckpt-v1": one JSON header line (config, task,
// tensor manifest with names/shapes/offsets), then the little-endian
// float32 payload in manifest order. Save -> load -> save is byte-exact.

#pragma once

#include <string>

#include "sdlm/model.hpp"

namespace sdlm {

struct Checkpoint {
    ModelConfig config;
    std::string task;
    Parameters params;
};

void save_checkpoint(const std::string& path, const ModelConfig& config, const std::string& task,
                     const Parameters& params);

// Malformed header, version mismatch, or manifest/payload length mismatch
// -> LoadError.
Checkpoint load_checkpoint(const std::string& path);

}  // namespace sdlm
