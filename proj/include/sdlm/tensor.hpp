// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <vector>

namespace sdlm {

// Row-major 2-D float array. Vectors are stored as 1 x n.
struct Tensor {
    int rows = 0;
    int cols = 0;
    std::vector<float> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * static_cast<size_t>(c), 0.0f) {}

    size_t numel() const { return v.size(); }
    float* row(int r) { return v.data() + static_cast<size_t>(r) * static_cast<size_t>(cols); }
    const float* row(int r) const { return v.data() + static_cast<size_t>(r) * static_cast<size_t>(cols); }
    float& at(int r, int c) { return v[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)]; }
    float at(int r, int c) const { return v[static_cast<size_t>(r) * static_cast<size_t>(cols) + static_cast<size_t>(c)]; }
    void zero() { std::fill(v.begin(), v.end(), 0.0f); }
};

}  // namespace sdlm
