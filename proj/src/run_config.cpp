// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/run_config.hpp"

#include <json.hpp>

#include "sdlm/common.hpp"

namespace sdlm {

namespace {

void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : allowed)
            if (it.key() == k) ok = true;
        if (!ok) throw ConfigError("config: unknown key '" + it.key() + "' in " + where);
    }
}

}  // namespace

RunConfig RunConfig::from_json_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    check_keys(j, {"task", "seed", "out_dir", "model", "train", "data"}, "top level");

    RunConfig rc;
    if (!j.contains("task")) throw ConfigError("config: missing required field 'task'");
    rc.task = j.at("task").get<std::string>();
    build_vocab(rc.task);  // validates the name
    rc.seed = j.value("seed", static_cast<uint64_t>(1));
    rc.out_dir = j.value("out_dir", std::string("run"));

    rc.model.dim = 64;
    rc.model.n_layers = 2;
    rc.model.n_heads = 4;
    rc.model.max_positions = 96;
    rc.model.block_size = 4;
    if (j.contains("model")) {
        const auto& m = j.at("model");
        check_keys(m, {"dim", "n_layers", "n_heads", "max_positions", "block_size", "shift",
                       "intra_block_causal"},
                   "model");
        rc.model.dim = m.value("dim", rc.model.dim);
        rc.model.n_layers = m.value("n_layers", rc.model.n_layers);
        rc.model.n_heads = m.value("n_heads", rc.model.n_heads);
        rc.model.max_positions = m.value("max_positions", rc.model.max_positions);
        rc.model.block_size = m.value("block_size", rc.model.block_size);
        rc.model.shift = m.value("shift", rc.model.shift);
        rc.model.intra_block_causal = m.value("intra_block_causal", rc.model.intra_block_causal);
    }
    rc.model.vocab_size = build_vocab(rc.task).size();

    rc.train.block_size = rc.model.block_size;
    rc.train.shift = rc.model.shift;
    rc.train.intra_block_causal = rc.model.intra_block_causal;
    if (j.contains("train")) {
        const auto& t = j.at("train");
        check_keys(t, {"learning_rate", "batch_size", "steps", "keep_prob", "aux_ntp",
                       "max_layout_len"},
                   "train");
        rc.train.learning_rate = t.value("learning_rate", rc.train.learning_rate);
        rc.train.batch_size = t.value("batch_size", rc.train.batch_size);
        rc.train.steps = t.value("steps", rc.train.steps);
        rc.train.keep_prob = t.value("keep_prob", rc.train.keep_prob);
        rc.train.aux_ntp = t.value("aux_ntp", rc.train.aux_ntp);
        rc.train.max_layout_len = t.value("max_layout_len", rc.train.max_layout_len);
    }

    if (j.contains("data")) {
        const auto& d = j.at("data");
        check_keys(d, {"count", "len_min", "len_max", "seed"}, "data");
        rc.data_count = d.value("count", rc.data_count);
        rc.data_lens.min = d.value("len_min", rc.data_lens.min);
        rc.data_lens.max = d.value("len_max", rc.data_lens.max);
        rc.data_seed = d.value("seed", rc.data_seed);
    }
    if (rc.data_seed == 0) rc.data_seed = rc.seed * 0x9E3779B97F4A7C15ULL + 0x1234567ULL;
    rc.train.seed = rc.seed;
    rc.model.validate();
    rc.train.validate();
    return rc;
}

std::string RunConfig::to_json_text() const {
    nlohmann::json j = {
        {"task", task},
        {"seed", seed},
        {"out_dir", out_dir},
        {"model",
         {{"vocab_size", model.vocab_size},
          {"dim", model.dim},
          {"n_layers", model.n_layers},
          {"n_heads", model.n_heads},
          {"max_positions", model.max_positions},
          {"block_size", model.block_size},
          {"shift", model.shift},
          {"intra_block_causal", model.intra_block_causal}}},
        {"train",
         {{"learning_rate", train.learning_rate},
          {"batch_size", train.batch_size},
          {"steps", train.steps},
          {"keep_prob", train.keep_prob},
          {"aux_ntp", train.aux_ntp},
          {"max_layout_len", train.max_layout_len}}},
        {"data",
         {{"count", data_count},
          {"len_min", data_lens.min},
          {"len_max", data_lens.max},
          {"seed", data_seed}}},
    };
    return j.dump(2);
}

std::vector<int> format_prompt(const Vocab& vocab, const std::string& task,
                               const std::string& text) {
    std::vector<int> ids;
    ids.push_back(vocab.bos_id);
    std::vector<int> body = vocab.encode(text);
    ids.insert(ids.end(), body.begin(), body.end());
    if (task != "add") ids.push_back(vocab.bos_id);
    return ids;
}

}  // namespace sdlm
