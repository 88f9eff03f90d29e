// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "sdlm/common.hpp"

namespace sdlm {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payload assumes a little-endian host");

namespace {

constexpr const char* kVersion = "sdlm-ckpt-v1";

nlohmann::json config_to_json(const ModelConfig& c) {
    return {
        {"vocab_size", c.vocab_size},
        {"dim", c.dim},
        {"n_layers", c.n_layers},
        {"n_heads", c.n_heads},
        {"max_positions", c.max_positions},
        {"block_size", c.block_size},
        {"pos_encoding", "learned-absolute"},
        {"shift", c.shift},
        {"intra_block_causal", c.intra_block_causal},
    };
}

ModelConfig config_from_json(const nlohmann::json& j) {
    ModelConfig c;
    c.vocab_size = j.at("vocab_size").get<int>();
    c.dim = j.at("dim").get<int>();
    c.n_layers = j.at("n_layers").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.max_positions = j.at("max_positions").get<int>();
    c.block_size = j.at("block_size").get<int>();
    if (j.at("pos_encoding").get<std::string>() != "learned-absolute")
        throw LoadError("checkpoint: unknown position encoding");
    c.shift = j.at("shift").get<bool>();
    c.intra_block_causal = j.at("intra_block_causal").get<bool>();
    return c;
}

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config, const std::string& task,
                     const Parameters& params) {
    nlohmann::json manifest = nlohmann::json::array();
    size_t offset = 0;
    for_each_tensor(params, [&](const std::string& name, const Tensor& t) {
        manifest.push_back({{"name", name}, {"shape", {t.rows, t.cols}}, {"offset", offset}});
        offset += t.numel();
    });
    nlohmann::json header = {
        {"version", kVersion},
        {"config", config_to_json(config)},
        {"task", task},
        {"tensors", manifest},
        {"total_floats", offset},
    };

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path);
    out << header.dump() << '\n';
    for_each_tensor(params, [&](const std::string&, const Tensor& t) {
        out.write(reinterpret_cast<const char*>(t.v.data()),
                  static_cast<std::streamsize>(t.numel() * sizeof(float)));
    });
    if (!out) throw std::runtime_error("failed writing checkpoint: " + path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open checkpoint: " + path);
    std::string header_line;
    if (!std::getline(in, header_line) || header_line.empty())
        throw LoadError("checkpoint: missing header line");

    nlohmann::json header;
    try {
        header = nlohmann::json::parse(header_line);
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("checkpoint: bad header: ") + e.what());
    }

    Checkpoint ckpt;
    try {
        if (header.at("version").get<std::string>() != kVersion)
            throw LoadError("checkpoint: version mismatch");
        ckpt.config = config_from_json(header.at("config"));
        ckpt.task = header.at("task").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        throw LoadError(std::string("checkpoint: bad header field: ") + e.what());
    }
    ckpt.config.validate();

    const size_t total_floats = header.at("total_floats").get<size_t>();
    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (payload.size() != total_floats * sizeof(float))
        throw LoadError("checkpoint: manifest/payload length mismatch");

    // Shape the parameter struct from the config, then fill by manifest name.
    ckpt.params = init_params(ckpt.config, 0);
    const nlohmann::json& manifest = header.at("tensors");
    size_t filled = 0;
    for_each_tensor(ckpt.params, [&](const std::string& name, Tensor& t) {
        bool found = false;
        for (const auto& entry : manifest) {
            if (entry.at("name").get<std::string>() != name) continue;
            const auto shape = entry.at("shape").get<std::vector<int>>();
            if (shape.size() != 2 || shape[0] != t.rows || shape[1] != t.cols)
                throw LoadError("checkpoint: tensor shape mismatch for " + name);
            const size_t off = entry.at("offset").get<size_t>();
            if (off + t.numel() > total_floats)
                throw LoadError("checkpoint: tensor offset out of range for " + name);
            std::memcpy(t.v.data(), payload.data() + off * sizeof(float),
                        t.numel() * sizeof(float));
            found = true;
            filled += 1;
            break;
        }
        if (!found) throw LoadError("checkpoint: missing tensor " + name);
    });
    if (filled != manifest.size()) throw LoadError("checkpoint: unexpected extra tensors");
    return ckpt;
}

}  // namespace sdlm
