// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/corpus.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <string>

#include <json.hpp>

#include "sdlm/common.hpp"

namespace sdlm {

namespace {

std::vector<int> random_payload(const Vocab& vocab, Rng& rng, int len) {
    std::vector<int> out(static_cast<size_t>(len));
    for (int& id : out) id = rng.uniform_int(4, vocab.size() - 1);
    return out;
}

// Digits of a nonnegative number, least significant first. The most
// significant digit (the last one) is nonzero unless the number is 0.
std::vector<int> random_le_number(Rng& rng, int n_digits) {
    std::vector<int> digits(static_cast<size_t>(n_digits));
    for (int i = 0; i < n_digits; ++i) digits[static_cast<size_t>(i)] = rng.uniform_int(0, 9);
    if (n_digits > 1 && digits.back() == 0) digits.back() = rng.uniform_int(1, 9);
    return digits;
}

std::vector<int> le_sum(const std::vector<int>& a, const std::vector<int>& b) {
    std::vector<int> out;
    int carry = 0;
    for (size_t i = 0; i < a.size() || i < b.size() || carry; ++i) {
        int d = carry;
        if (i < a.size()) d += a[i];
        if (i < b.size()) d += b[i];
        out.push_back(d % 10);
        carry = d / 10;
    }
    return out;
}

Sample make_copy_or_reverse(const Vocab& vocab, Rng& rng, LenRange lens, bool reverse) {
    int len = rng.uniform_int(lens.min, lens.max);
    std::vector<int> payload = random_payload(vocab, rng, len);
    Sample s;
    s.prompt.push_back(vocab.bos_id);
    s.prompt.insert(s.prompt.end(), payload.begin(), payload.end());
    s.prompt.push_back(vocab.bos_id);
    s.response = payload;
    if (reverse) std::reverse(s.response.begin(), s.response.end());
    s.response.push_back(vocab.eos_id);
    return s;
}

Sample make_add(const Vocab& vocab, Rng& rng, LenRange lens) {
    int digit0 = vocab.find('0');
    int plus = vocab.find('+');
    int eq = vocab.find('=');
    std::vector<int> a = random_le_number(rng, rng.uniform_int(lens.min, lens.max));
    std::vector<int> b = random_le_number(rng, rng.uniform_int(lens.min, lens.max));
    std::vector<int> sum = le_sum(a, b);
    Sample s;
    s.prompt.push_back(vocab.bos_id);
    for (int d : a) s.prompt.push_back(digit0 + d);
    s.prompt.push_back(plus);
    for (int d : b) s.prompt.push_back(digit0 + d);
    s.prompt.push_back(eq);
    for (int d : sum) s.response.push_back(digit0 + d);
    s.response.push_back(vocab.eos_id);
    return s;
}

Sample make_chars(const Vocab& vocab, Rng& rng, LenRange lens) {
    std::string_view text = chars_task_text();
    int prompt_len = rng.uniform_int(lens.min, lens.max);
    int resp_len = rng.uniform_int(lens.min, lens.max);
    int window = prompt_len + resp_len;
    if (window > static_cast<int>(text.size()))
        throw ConfigError("chars window exceeds bundled text length");
    int start = rng.uniform_int(0, static_cast<int>(text.size()) - window);
    Sample s;
    s.prompt.push_back(vocab.bos_id);
    for (int i = 0; i < prompt_len; ++i) s.prompt.push_back(vocab.find(text[static_cast<size_t>(start + i)]));
    s.prompt.push_back(vocab.bos_id);
    for (int i = 0; i < resp_len; ++i)
        s.response.push_back(vocab.find(text[static_cast<size_t>(start + prompt_len + i)]));
    s.response.push_back(vocab.eos_id);
    return s;
}

}  // namespace

std::vector<Sample> gen_samples(const std::string& task_name, int count, uint64_t seed,
                                LenRange lens) {
    if (count < 1) throw ConfigError("gen_samples: count must be >= 1");
    if (lens.min < 1 || lens.min > lens.max) throw ConfigError("gen_samples: bad length range");
    Vocab vocab = build_vocab(task_name);
    Rng rng(seed);
    std::vector<Sample> out;
    out.reserve(static_cast<size_t>(count));
    for (int i = 0; i < count; ++i) {
        if (task_name == "copy") {
            out.push_back(make_copy_or_reverse(vocab, rng, lens, /*reverse=*/false));
        } else if (task_name == "reverse") {
            out.push_back(make_copy_or_reverse(vocab, rng, lens, /*reverse=*/true));
        } else if (task_name == "add") {
            out.push_back(make_add(vocab, rng, lens));
        } else {
            out.push_back(make_chars(vocab, rng, lens));
        }
    }
    return out;
}

void write_samples_jsonl(std::ostream& out, const std::vector<Sample>& samples) {
    for (const Sample& s : samples) {
        nlohmann::json j;
        j["prompt"] = s.prompt;
        j["response"] = s.response;
        out << j.dump() << '\n';
    }
}

std::vector<Sample> read_samples_jsonl(std::istream& in) {
    std::vector<Sample> out;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line);
        Sample s;
        s.prompt = j.at("prompt").get<std::vector<int>>();
        s.response = j.at("response").get<std::vector<int>>();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace sdlm
