// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/vocab.hpp"

#include <algorithm>
#include <set>

#include "sdlm/common.hpp"

namespace sdlm {

namespace {

const char* kSpecials[4] = {"[m]", "[bos]", "[eos]", "[pad]"};

Vocab from_symbols(const std::string& symbols) {
    Vocab v;
    v.tokens.reserve(4 + symbols.size());
    for (const char* s : kSpecials) v.tokens.emplace_back(s);
    for (char c : symbols) v.tokens.emplace_back(1, c);
    return v;
}

}  // namespace

std::string_view chars_task_text() {
    // Opening of "Alice's Adventures in Wonderland" (1865, public domain),
    // lowercased and stripped to letters and spaces.
    return "alice was beginning to get very tired of sitting by her sister "
           "on the bank and of having nothing to do once or twice she had "
           "peeped into the book her sister was reading but it had no "
           "pictures or conversations in it and what is the use of a book "
           "thought alice without pictures or conversations";
}

Vocab build_vocab(const std::string& task_name) {
    if (task_name == "copy" || task_name == "reverse") {
        return from_symbols("abcdefghijklmnop");
    }
    if (task_name == "add") {
        return from_symbols("0123456789+=");
    }
    if (task_name == "chars") {
        std::set<char> seen;
        for (char c : chars_task_text()) seen.insert(c);
        std::string symbols(seen.begin(), seen.end());
        return from_symbols(symbols);
    }
    throw ConfigError("unknown task name: " + task_name);
}

int Vocab::find(char c) const {
    for (int i = 4; i < size(); ++i) {
        if (tokens[i].size() == 1 && tokens[i][0] == c) return i;
    }
    return -1;
}

std::vector<int> Vocab::encode(std::string_view text) const {
    std::vector<int> out;
    out.reserve(text.size());
    for (char c : text) {
        int id = find(c);
        if (id < 0) throw ConfigError(std::string("character not in vocabulary: '") + c + "'");
        out.push_back(id);
    }
    return out;
}

std::string Vocab::decode(std::span<const int> ids) const {
    std::string out;
    for (int id : ids) {
        if (id < 0 || id >= size()) throw ConfigError("token id out of range: " + std::to_string(id));
        out += tokens[static_cast<size_t>(id)];
    }
    return out;
}

}  // namespace sdlm
