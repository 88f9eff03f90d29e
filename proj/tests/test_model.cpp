// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <queue>
#include <sstream>

#include "reference_model.hpp"
#include "sdlm/checkpoint.hpp"
#include "sdlm/common.hpp"
#include "sdlm/model.hpp"

using namespace sdlm;

namespace {

ModelConfig tiny_config(int vocab = 20) {
    ModelConfig cfg;
    cfg.vocab_size = vocab;
    cfg.dim = 16;
    cfg.n_layers = 1;
    cfg.n_heads = 2;
    cfg.max_positions = 32;
    cfg.block_size = 3;
    return cfg;
}

AttnMask causal_mask(int n) {
    AttnMask m(n, n);
    for (int u = 0; u < n; ++u)
        for (int v = 0; v <= u; ++v) m.set(u, v);
    return m;
}

std::vector<int> iota_positions(int n, int from = 0) {
    std::vector<int> p(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) p[static_cast<size_t>(i)] = from + i;
    return p;
}

std::vector<int> random_tokens(Rng& rng, int n, int vocab) {
    std::vector<int> t(static_cast<size_t>(n));
    for (int& x : t) x = rng.uniform_int(0, vocab - 1);
    return t;
}

// Columns transitively reachable from row u through the mask.
std::vector<bool> reachable(const AttnMask& m, int u) {
    std::vector<bool> seen(static_cast<size_t>(m.rows), false);
    std::queue<int> q;
    q.push(u);
    seen[static_cast<size_t>(u)] = true;
    while (!q.empty()) {
        int w = q.front();
        q.pop();
        for (int v = 0; v < m.cols; ++v) {
            if (m.at(w, v) && !seen[static_cast<size_t>(v)]) {
                seen[static_cast<size_t>(v)] = true;
                q.push(v);
            }
        }
    }
    return seen;
}

}  // namespace

TEST_CASE("init is deterministic, seed-sensitive, and shape-correct") {
    ModelConfig cfg = tiny_config();
    Parameters a = init_params(cfg, 1);
    Parameters b = init_params(cfg, 1);
    Parameters c = init_params(cfg, 2);
    std::vector<const Tensor*> ta, tb, tc;
    for_each_tensor(a, [&](const std::string&, const Tensor& t) { ta.push_back(&t); });
    for_each_tensor(b, [&](const std::string&, const Tensor& t) { tb.push_back(&t); });
    for_each_tensor(c, [&](const std::string&, const Tensor& t) { tc.push_back(&t); });
    REQUIRE(ta.size() == tb.size());
    bool same = true, diff = false;
    for (size_t i = 0; i < ta.size(); ++i) {
        if (ta[i]->v != tb[i]->v) same = false;
        if (ta[i]->v != tc[i]->v) diff = true;
        CHECK(ta[i]->rows == tb[i]->rows);
    }
    CHECK(same);
    CHECK(diff);
    CHECK(a.tok_emb.rows == cfg.vocab_size);
    CHECK(a.pos_emb.rows == cfg.max_positions);
    CHECK(a.w_out.cols == cfg.vocab_size);
    CHECK(all_finite(a));
}

TEST_CASE("forward returns len x vocab and validates its contract") {
    ModelConfig cfg = tiny_config();
    Parameters p = init_params(cfg, 3);
    std::vector<int> toks{1, 4, 5, 6};
    auto logits = forward(cfg, p, toks, iota_positions(4), causal_mask(4));
    CHECK(logits.size() == 4u * 20u);
    CHECK_THROWS_AS(forward(cfg, p, toks, iota_positions(3), causal_mask(4)), ContractViolation);
    CHECK_THROWS_AS(forward(cfg, p, toks, iota_positions(4), causal_mask(5)), ContractViolation);
    std::vector<int> bad{1, 4, 99, 6};
    CHECK_THROWS_AS(forward(cfg, p, bad, iota_positions(4), causal_mask(4)), ContractViolation);
}

TEST_CASE("float forward agrees with the double reference") {
    ModelConfig cfg = tiny_config();
    cfg.n_layers = 2;
    Parameters p = init_params(cfg, 5);
    Rng rng(7);
    std::vector<int> toks = random_tokens(rng, 12, cfg.vocab_size);
    auto mask = causal_mask(12);
    auto got = forward(cfg, p, toks, iota_positions(12), mask);
    auto want = sdlm_ref::forward_f64(cfg, p, toks, iota_positions(12), mask);
    REQUIRE(got.size() == want.size());
    for (size_t i = 0; i < got.size(); ++i)
        CHECK(std::abs(static_cast<double>(got[i]) - want[i]) <=
              1e-4 * (1.0 + std::abs(want[i])));
}

TEST_CASE("logits depend only on transitively attended entries") {
    ModelConfig cfg = tiny_config();
    cfg.n_layers = 2;
    Parameters p = init_params(cfg, 11);
    Sample s{{4, 5, 6}, {7, 8, 9, 10}};
    TrainLayout L = build_train_layout(s, {{2, 2}}, true, false);
    const int n = L.size();
    auto base = forward(cfg, p, L.tokens, L.position_ids, L.mask);

    Rng rng(13);
    for (int trial = 0; trial < 30; ++trial) {
        int u = rng.uniform_int(0, n - 1);
        int v = rng.uniform_int(0, n - 1);
        auto seen = reachable(L.mask, u);
        if (seen[static_cast<size_t>(v)]) continue;
        std::vector<int> mutated = L.tokens;
        mutated[static_cast<size_t>(v)] = rng.uniform_int(0, cfg.vocab_size - 1);
        auto out = forward(cfg, p, mutated, L.position_ids, L.mask);
        for (int j = 0; j < cfg.vocab_size; ++j)
            REQUIRE(out[static_cast<size_t>(u) * cfg.vocab_size + j] ==
                    base[static_cast<size_t>(u) * cfg.vocab_size + j]);
    }
}

TEST_CASE("causality probe: clean logits before p ignore changes at p") {
    ModelConfig cfg = tiny_config();
    Parameters p = init_params(cfg, 17);
    Rng rng(19);
    std::vector<int> toks = random_tokens(rng, 10, cfg.vocab_size);
    auto mask = causal_mask(10);
    auto base = forward(cfg, p, toks, iota_positions(10), mask);
    for (int pos = 1; pos < 10; ++pos) {
        std::vector<int> mutated = toks;
        mutated[static_cast<size_t>(pos)] = (toks[static_cast<size_t>(pos)] + 1) % cfg.vocab_size;
        auto out = forward(cfg, p, mutated, iota_positions(10), mask);
        for (int u = 0; u < pos; ++u)
            for (int j = 0; j < cfg.vocab_size; ++j)
                REQUIRE(out[static_cast<size_t>(u) * cfg.vocab_size + j] ==
                        base[static_cast<size_t>(u) * cfg.vocab_size + j]);
    }
}

TEST_CASE("permuting entries permutes logit rows") {
    ModelConfig cfg = tiny_config();
    Parameters p = init_params(cfg, 23);
    Sample s{{4, 5}, {6, 7, 8}};
    TrainLayout L = build_train_layout(s, {{1, 3}}, true, false);
    const int n = L.size();
    auto base = forward(cfg, p, L.tokens, L.position_ids, L.mask);

    std::vector<int> perm(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) perm[static_cast<size_t>(i)] = i;
    std::swap(perm[2], perm[4]);
    std::vector<int> toks(static_cast<size_t>(n)), poss(static_cast<size_t>(n));
    AttnMask pm(n, n);
    for (int u = 0; u < n; ++u) {
        toks[static_cast<size_t>(u)] = L.tokens[static_cast<size_t>(perm[static_cast<size_t>(u)])];
        poss[static_cast<size_t>(u)] =
            L.position_ids[static_cast<size_t>(perm[static_cast<size_t>(u)])];
        for (int v = 0; v < n; ++v)
            pm.set(u, v,
                   L.mask.at(perm[static_cast<size_t>(u)], perm[static_cast<size_t>(v)]) != 0);
    }
    auto permuted = forward(cfg, p, toks, poss, pm);
    for (int u = 0; u < n; ++u)
        for (int j = 0; j < cfg.vocab_size; ++j) {
            double want =
                base[static_cast<size_t>(perm[static_cast<size_t>(u)]) * cfg.vocab_size + j];
            double got = permuted[static_cast<size_t>(u) * cfg.vocab_size + j];
            CHECK(std::abs(got - want) <= 1e-5 * (1.0 + std::abs(want)));
        }
}

TEST_CASE("cached decoding reproduces the full forward") {
    ModelConfig cfg = tiny_config();
    cfg.n_layers = 2;
    cfg.max_positions = 64;
    Parameters p = init_params(cfg, 29);
    Rng rng(31);

    for (int trial = 0; trial < 25; ++trial) {
        const int n = rng.uniform_int(3, 20);
        std::vector<int> toks = random_tokens(rng, n, cfg.vocab_size);
        auto full = forward(cfg, p, toks, iota_positions(n), causal_mask(n));

        KVCache cache = make_cache(cfg);
        int done = 0;
        while (done < n) {
            int take = std::min(n - done, rng.uniform_int(1, 4));
            std::vector<int> chunk(toks.begin() + done, toks.begin() + done + take);
            AttnMask m(take, done + take);
            for (int u = 0; u < take; ++u)
                for (int col = 0; col <= done + u; ++col) m.set(u, col);
            auto chunk_logits =
                forward_cached(cfg, p, cache, chunk, iota_positions(take, done), m, take);
            for (int u = 0; u < take; ++u)
                for (int j = 0; j < cfg.vocab_size; ++j) {
                    double want = full[static_cast<size_t>(done + u) * cfg.vocab_size + j];
                    double got = chunk_logits[static_cast<size_t>(u) * cfg.vocab_size + j];
                    REQUIRE(std::abs(got - want) <= 1e-5 * (1.0 + std::abs(want)));
                }
            done += take;
        }
        CHECK(cache.committed_len == n);
        CHECK(cache.tokens == toks);
    }
}

TEST_CASE("empty cache with full commit equals forward bit-for-bit") {
    ModelConfig cfg = tiny_config();
    Parameters p = init_params(cfg, 37);
    std::vector<int> toks{1, 4, 5, 6, 7};
    auto mask = causal_mask(5);
    auto a = forward(cfg, p, toks, iota_positions(5), mask);
    KVCache cache = make_cache(cfg);
    auto b = forward_cached(cfg, p, cache, toks, iota_positions(5), mask, 5);
    CHECK(a == b);
    CHECK(cache.committed_len == 5);
}

TEST_CASE("commit_count 0 leaves the cache untouched") {
    ModelConfig cfg = tiny_config();
    Parameters p = init_params(cfg, 41);
    KVCache cache = make_cache(cfg);
    std::vector<int> warm{1, 4, 5};
    forward_cached(cfg, p, cache, warm, iota_positions(3), causal_mask(3), 3);
    auto k_before = cache.k;
    AttnMask m(2, 5);
    for (int u = 0; u < 2; ++u)
        for (int col = 0; col < 5; ++col) m.set(u, col);
    forward_cached(cfg, p, cache, std::vector<int>{0, 0}, std::vector<int>{2, 3}, m, 0);
    CHECK(cache.committed_len == 3);
    CHECK(cache.k == k_before);
}

TEST_CASE("cached positions must continue the cache") {
    ModelConfig cfg = tiny_config();
    Parameters p = init_params(cfg, 43);
    KVCache cache = make_cache(cfg);
    std::vector<int> toks{1, 4};
    CHECK_THROWS_AS(forward_cached(cfg, p, cache, toks, std::vector<int>{1, 2}, causal_mask(2), 2),
                    ContractViolation);
}

TEST_CASE("gradient check against the double-precision reference") {
    ModelConfig cfg = tiny_config(12);
    cfg.block_size = 2;
    Parameters params = init_params(cfg, 47);
    Sample s{{1, 4, 5}, {6, 7, 8, 9, 2}};
    auto blocks = partition_blocks(5, 2, 1.0, 11, 64);
    TrainLayout L = build_train_layout(s, blocks, true, false);

    Parameters grads = zeros_like(params);
    SampleLoss sl = sample_loss(cfg, params, s, blocks, false, &grads, 1.0f);
    CHECK(sl.nsp > 0.0);

    std::vector<Tensor*> pts, gts;
    for_each_tensor(params, [&](const std::string&, Tensor& t) { pts.push_back(&t); });
    for_each_tensor(grads, [&](const std::string&, Tensor& t) { gts.push_back(&t); });

    Rng rng(53);
    int checked = 0;
    while (checked < 8) {
        size_t ti = static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pts.size()) - 1));
        size_t ei =
            static_cast<size_t>(rng.uniform_int(0, static_cast<int>(pts[ti]->v.size()) - 1));
        float saved = pts[ti]->v[ei];
        const double h = 1e-3 * std::max(1.0, std::abs(static_cast<double>(saved)));
        pts[ti]->v[ei] = static_cast<float>(saved + h);
        double up = sdlm_ref::layout_nsp_loss_f64(cfg, params, L);
        const double theta_up = static_cast<double>(pts[ti]->v[ei]);
        pts[ti]->v[ei] = static_cast<float>(saved - h);
        double dn = sdlm_ref::layout_nsp_loss_f64(cfg, params, L);
        const double theta_dn = static_cast<double>(pts[ti]->v[ei]);
        pts[ti]->v[ei] = saved;
        const double fd = (up - dn) / (theta_up - theta_dn);
        const double an = gts[ti]->v[ei];
        if (std::abs(fd) < 1e-5 && std::abs(an) < 1e-5) {
            CHECK(std::abs(fd - an) < 1e-5);
        } else {
            CHECK(std::abs(fd - an) <= 1e-3 * std::max({1e-2, std::abs(fd), std::abs(an)}));
            ++checked;
        }
    }
}

TEST_CASE("checkpoint round-trip is byte-exact") {
    namespace fs = std::filesystem;
    ModelConfig cfg = tiny_config();
    Parameters p = init_params(cfg, 59);
    fs::path dir = fs::temp_directory_path() / "sdlm_ckpt_test";
    fs::create_directories(dir);
    const std::string path1 = (dir / "a.sdlm").string();
    const std::string path2 = (dir / "b.sdlm").string();
    save_checkpoint(path1, cfg, "copy", p);
    Checkpoint ck = load_checkpoint(path1);
    CHECK(ck.task == "copy");
    CHECK(ck.config.dim == cfg.dim);
    CHECK(ck.config.block_size == cfg.block_size);
    save_checkpoint(path2, ck.config, ck.task, ck.params);
    std::ifstream f1(path1, std::ios::binary), f2(path2, std::ios::binary);
    std::stringstream s1, s2;
    s1 << f1.rdbuf();
    s2 << f2.rdbuf();
    CHECK(s1.str() == s2.str());
}

TEST_CASE("corrupt checkpoints are load errors") {
    namespace fs = std::filesystem;
    ModelConfig cfg = tiny_config();
    Parameters p = init_params(cfg, 61);
    fs::path dir = fs::temp_directory_path() / "sdlm_ckpt_test";
    fs::create_directories(dir);
    const std::string path = (dir / "c.sdlm").string();
    save_checkpoint(path, cfg, "copy", p);

    std::ifstream in(path, std::ios::binary);
    std::stringstream all;
    all << in.rdbuf();
    std::string bytes = all.str();
    {
        std::ofstream out(path + ".trunc", std::ios::binary);
        out << bytes.substr(0, bytes.size() - 17);
    }
    CHECK_THROWS_AS(load_checkpoint(path + ".trunc"), LoadError);

    {
        std::ofstream out(path + ".header", std::ios::binary);
        out << bytes.substr(0, bytes.find('\n') + 1);
    }
    CHECK_THROWS_AS(load_checkpoint(path + ".header"), LoadError);

    {
        std::string hacked = bytes;
        auto at = hacked.find("sdlm-ckpt-v1");
        hacked.replace(at, 12, "sdlm-ckpt-v9");
        std::ofstream out(path + ".ver", std::ios::binary);
        out << hacked;
    }
    CHECK_THROWS_AS(load_checkpoint(path + ".ver"), LoadError);

    CHECK_THROWS_AS(load_checkpoint(path + ".does_not_exist"), LoadError);
}
