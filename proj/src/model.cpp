// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/model.hpp"

#include <cmath>
#include <cstring>
#include <limits>

#include "sdlm/common.hpp"

namespace sdlm {

namespace {

constexpr float kLnEps = 1e-5f;
constexpr float kGeluK = 0.7978845608028654f;  // sqrt(2/pi)
constexpr float kGeluC = 0.044715f;

// y[m x out] = x[m x in] * w[in x out] + b
void linear_fwd(const float* x, int m, int in_dim, const Tensor& w, const Tensor& b, float* y) {
    const int out_dim = w.cols;
    for (int i = 0; i < m; ++i) {
        float* yi = y + static_cast<size_t>(i) * out_dim;
        std::memcpy(yi, b.v.data(), sizeof(float) * static_cast<size_t>(out_dim));
        const float* xi = x + static_cast<size_t>(i) * in_dim;
        for (int kk = 0; kk < in_dim; ++kk) {
            const float a = xi[kk];
            const float* wr = w.row(kk);
            for (int j = 0; j < out_dim; ++j) yi[j] += a * wr[j];
        }
    }
}

// dW += x^T * dy ; db += column sums of dy ; dx += dy * W^T
void linear_bwd(const float* x, int m, int in_dim, const Tensor& w, const float* dy, Tensor& dw,
                Tensor& db, float* dx) {
    const int out_dim = w.cols;
    for (int i = 0; i < m; ++i) {
        const float* xi = x + static_cast<size_t>(i) * in_dim;
        const float* dyi = dy + static_cast<size_t>(i) * out_dim;
        for (int kk = 0; kk < in_dim; ++kk) {
            const float a = xi[kk];
            float* dwr = dw.row(kk);
            for (int j = 0; j < out_dim; ++j) dwr[j] += a * dyi[j];
        }
        float* dbp = db.v.data();
        for (int j = 0; j < out_dim; ++j) dbp[j] += dyi[j];
        if (dx != nullptr) {
            float* dxi = dx + static_cast<size_t>(i) * in_dim;
            for (int kk = 0; kk < in_dim; ++kk) {
                const float* wr = w.row(kk);
                float acc = 0.0f;
                for (int j = 0; j < out_dim; ++j) acc += dyi[j] * wr[j];
                dxi[kk] += acc;
            }
        }
    }
}

void layernorm_fwd(const float* x, int m, int d, const Tensor& g, const Tensor& b, float* y,
                   float* xhat_out, float* rstd_out) {
    for (int i = 0; i < m; ++i) {
        const float* xi = x + static_cast<size_t>(i) * d;
        float mean = 0.0f;
        for (int j = 0; j < d; ++j) mean += xi[j];
        mean /= static_cast<float>(d);
        float var = 0.0f;
        for (int j = 0; j < d; ++j) {
            float c = xi[j] - mean;
            var += c * c;
        }
        var /= static_cast<float>(d);
        float rstd = 1.0f / std::sqrt(var + kLnEps);
        float* yi = y + static_cast<size_t>(i) * d;
        float* xh = xhat_out ? xhat_out + static_cast<size_t>(i) * d : nullptr;
        for (int j = 0; j < d; ++j) {
            float h = (xi[j] - mean) * rstd;
            if (xh) xh[j] = h;
            yi[j] = g.v[static_cast<size_t>(j)] * h + b.v[static_cast<size_t>(j)];
        }
        if (rstd_out) rstd_out[i] = rstd;
    }
}

// dx += backprop of y = g * xhat + b, given dy and saved xhat/rstd.
void layernorm_bwd(const float* dy, const float* xhat, const float* rstd, int m, int d,
                   const Tensor& g, Tensor& dg, Tensor& db, float* dx) {
    for (int i = 0; i < m; ++i) {
        const float* dyi = dy + static_cast<size_t>(i) * d;
        const float* xh = xhat + static_cast<size_t>(i) * d;
        float sum_dxhat = 0.0f;
        float sum_dxhat_xhat = 0.0f;
        for (int j = 0; j < d; ++j) {
            float dxh = dyi[j] * g.v[static_cast<size_t>(j)];
            sum_dxhat += dxh;
            sum_dxhat_xhat += dxh * xh[j];
            dg.v[static_cast<size_t>(j)] += dyi[j] * xh[j];
            db.v[static_cast<size_t>(j)] += dyi[j];
        }
        const float inv_d = 1.0f / static_cast<float>(d);
        float* dxi = dx + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            float dxh = dyi[j] * g.v[static_cast<size_t>(j)];
            dxi[j] += rstd[i] * (dxh - inv_d * sum_dxhat - xh[j] * inv_d * sum_dxhat_xhat);
        }
    }
}

float gelu(float x) {
    float u = kGeluK * (x + kGeluC * x * x * x);
    return 0.5f * x * (1.0f + std::tanh(u));
}

float gelu_grad(float x) {
    float u = kGeluK * (x + kGeluC * x * x * x);
    float t = std::tanh(u);
    float du = kGeluK * (1.0f + 3.0f * kGeluC * x * x);
    return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
}

void check_chunk_inputs(const ModelConfig& cfg, std::span<const int> tokens,
                        std::span<const int> positions, const AttnMask& mask, int cache_len) {
    const int m = static_cast<int>(tokens.size());
    if (m < 1) throw ContractViolation("forward: empty token sequence");
    if (positions.size() != tokens.size()) throw ContractViolation("forward: positions size mismatch");
    if (mask.rows != m || mask.cols != cache_len + m)
        throw ContractViolation("forward: mask shape mismatch");
    for (int t : tokens)
        if (t < 0 || t >= cfg.vocab_size) throw ContractViolation("forward: token id out of range");
    for (int p : positions)
        if (p < 0 || p >= cfg.max_positions)
            throw ContractViolation("forward: position id out of range");
}

// Shared forward over an optional cache prefix. Exactly one code path
// serves full, cached, and training passes, so their float results agree
// bit-for-bit where the attended content agrees.
std::vector<float> forward_core(const ModelConfig& cfg, const Parameters& params,
                                const KVCache* cache, std::span<const int> tokens,
                                std::span<const int> positions, const AttnMask& mask, Tape* tape,
                                std::vector<std::vector<float>>* keep_k,
                                std::vector<std::vector<float>>* keep_v) {
    const int m = static_cast<int>(tokens.size());
    const int c = cache ? cache->committed_len : 0;
    const int d = cfg.dim;
    const int hd = cfg.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    check_chunk_inputs(cfg, tokens, positions, mask, c);

    std::vector<float> x(static_cast<size_t>(m) * d);
    for (int i = 0; i < m; ++i) {
        const float* te = params.tok_emb.row(tokens[static_cast<size_t>(i)]);
        const float* pe = params.pos_emb.row(positions[static_cast<size_t>(i)]);
        float* xi = x.data() + static_cast<size_t>(i) * d;
        for (int j = 0; j < d; ++j) xi[j] = te[j] + pe[j];
    }

    if (tape) {
        tape->len = m;
        tape->tokens.assign(tokens.begin(), tokens.end());
        tape->positions.assign(positions.begin(), positions.end());
        tape->mask = mask;
        tape->layers.resize(static_cast<size_t>(cfg.n_layers));
    }
    if (keep_k) keep_k->assign(static_cast<size_t>(cfg.n_layers), {});
    if (keep_v) keep_v->assign(static_cast<size_t>(cfg.n_layers), {});

    std::vector<float> a(static_cast<size_t>(m) * d), q(a.size()), k(a.size()), v(a.size());
    std::vector<float> att_out(a.size()), proj(a.size());
    std::vector<float> scores(static_cast<size_t>(c) + m);

    for (int l = 0; l < cfg.n_layers; ++l) {
        const LayerParams& lp = params.layers[static_cast<size_t>(l)];
        TapeLayer* tl = tape ? &tape->layers[static_cast<size_t>(l)] : nullptr;
        if (tl) {
            tl->x_in = x;
            tl->ln1_xhat.resize(x.size());
            tl->ln1_rstd.resize(static_cast<size_t>(m));
        }
        layernorm_fwd(x.data(), m, d, lp.ln1_g, lp.ln1_b, a.data(), tl ? tl->ln1_xhat.data() : nullptr,
                      tl ? tl->ln1_rstd.data() : nullptr);
        linear_fwd(a.data(), m, d, lp.wq, lp.bq, q.data());
        linear_fwd(a.data(), m, d, lp.wk, lp.bk, k.data());
        linear_fwd(a.data(), m, d, lp.wv, lp.bv, v.data());
        if (tl) {
            tl->a = a;
            tl->q = q;
            tl->k = k;
            tl->v = v;
            tl->att_p.assign(static_cast<size_t>(cfg.n_heads) * m * m, 0.0f);
        }

        const float* cache_k = c > 0 ? cache->k[static_cast<size_t>(l)].data() : nullptr;
        const float* cache_v = c > 0 ? cache->v[static_cast<size_t>(l)].data() : nullptr;

        for (int u = 0; u < m; ++u) {
            const uint8_t* mrow = mask.bits.data() + static_cast<size_t>(u) * mask.cols;
            for (int h = 0; h < cfg.n_heads; ++h) {
                const float* qu = q.data() + static_cast<size_t>(u) * d + static_cast<size_t>(h) * hd;
                float mx = -std::numeric_limits<float>::infinity();
                for (int col = 0; col < c + m; ++col) {
                    if (!mrow[col]) continue;
                    const float* kc = col < c
                                          ? cache_k + static_cast<size_t>(col) * d + static_cast<size_t>(h) * hd
                                          : k.data() + static_cast<size_t>(col - c) * d + static_cast<size_t>(h) * hd;
                    float s = 0.0f;
                    for (int j = 0; j < hd; ++j) s += qu[j] * kc[j];
                    s *= scale;
                    scores[static_cast<size_t>(col)] = s;
                    if (s > mx) mx = s;
                }
                float denom = 0.0f;
                for (int col = 0; col < c + m; ++col) {
                    if (!mrow[col]) continue;
                    float e = std::exp(scores[static_cast<size_t>(col)] - mx);
                    scores[static_cast<size_t>(col)] = e;
                    denom += e;
                }
                if (denom == 0.0f) throw ContractViolation("forward: attention row fully masked");
                const float inv = 1.0f / denom;
                float* out = att_out.data() + static_cast<size_t>(u) * d + static_cast<size_t>(h) * hd;
                for (int j = 0; j < hd; ++j) out[j] = 0.0f;
                for (int col = 0; col < c + m; ++col) {
                    if (!mrow[col]) continue;
                    const float p = scores[static_cast<size_t>(col)] * inv;
                    const float* vc = col < c
                                          ? cache_v + static_cast<size_t>(col) * d + static_cast<size_t>(h) * hd
                                          : v.data() + static_cast<size_t>(col - c) * d + static_cast<size_t>(h) * hd;
                    for (int j = 0; j < hd; ++j) out[j] += p * vc[j];
                    if (tl)
                        tl->att_p[(static_cast<size_t>(h) * m + u) * m + (col - c)] = p;
                }
            }
        }

        linear_fwd(att_out.data(), m, d, lp.wo, lp.bo, proj.data());
        for (size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
        if (tl) {
            tl->att_out = att_out;
            tl->x_mid = x;
            tl->ln2_xhat.resize(x.size());
            tl->ln2_rstd.resize(static_cast<size_t>(m));
        }

        layernorm_fwd(x.data(), m, d, lp.ln2_g, lp.ln2_b, a.data(), tl ? tl->ln2_xhat.data() : nullptr,
                      tl ? tl->ln2_rstd.data() : nullptr);
        const int hidden = lp.w1.cols;
        std::vector<float> pre(static_cast<size_t>(m) * hidden);
        linear_fwd(a.data(), m, d, lp.w1, lp.b1, pre.data());
        std::vector<float> h1(pre.size());
        for (size_t i = 0; i < pre.size(); ++i) h1[i] = gelu(pre[i]);
        linear_fwd(h1.data(), m, hidden, lp.w2, lp.b2, proj.data());
        for (size_t i = 0; i < x.size(); ++i) x[i] += proj[i];
        if (tl) {
            tl->bh = a;
            tl->pre = std::move(pre);
            tl->h1 = std::move(h1);
        }

        if (keep_k) (*keep_k)[static_cast<size_t>(l)] = k;
        if (keep_v) (*keep_v)[static_cast<size_t>(l)] = v;
    }

    if (tape) {
        tape->x_final = x;
        tape->lnf_xhat.resize(x.size());
        tape->lnf_rstd.resize(static_cast<size_t>(m));
    }
    std::vector<float> f(static_cast<size_t>(m) * d);
    layernorm_fwd(x.data(), m, d, params.lnf_g, params.lnf_b, f.data(),
                  tape ? tape->lnf_xhat.data() : nullptr, tape ? tape->lnf_rstd.data() : nullptr);
    if (tape) tape->f = f;

    std::vector<float> logits(static_cast<size_t>(m) * cfg.vocab_size);
    linear_fwd(f.data(), m, d, params.w_out, params.b_out, logits.data());
    return logits;
}

}  // namespace

void ModelConfig::validate() const {
    if (vocab_size < 5) throw ConfigError("model: vocab_size must cover the four specials");
    if (dim < 1 || n_heads < 1 || dim % n_heads != 0)
        throw ConfigError("model: dim must be a positive multiple of n_heads");
    if (n_layers < 1) throw ConfigError("model: n_layers must be >= 1");
    if (max_positions < 1) throw ConfigError("model: max_positions must be >= 1");
    if (block_size < 1) throw ConfigError("model: block_size must be >= 1");
    if (!shift && block_size < 2)
        throw ConfigError("model: no-shift prediction needs block_size >= 2");
}

void for_each_tensor(Parameters& p, const std::function<void(const std::string&, Tensor&)>& fn) {
    fn("tok_emb", p.tok_emb);
    fn("pos_emb", p.pos_emb);
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const std::string base = "layers." + std::to_string(l) + ".";
        LayerParams& lp = p.layers[l];
        fn(base + "ln1_g", lp.ln1_g);
        fn(base + "ln1_b", lp.ln1_b);
        fn(base + "wq", lp.wq);
        fn(base + "bq", lp.bq);
        fn(base + "wk", lp.wk);
        fn(base + "bk", lp.bk);
        fn(base + "wv", lp.wv);
        fn(base + "bv", lp.bv);
        fn(base + "wo", lp.wo);
        fn(base + "bo", lp.bo);
        fn(base + "ln2_g", lp.ln2_g);
        fn(base + "ln2_b", lp.ln2_b);
        fn(base + "w1", lp.w1);
        fn(base + "b1", lp.b1);
        fn(base + "w2", lp.w2);
        fn(base + "b2", lp.b2);
    }
    fn("lnf_g", p.lnf_g);
    fn("lnf_b", p.lnf_b);
    fn("w_out", p.w_out);
    fn("b_out", p.b_out);
}

void for_each_tensor(const Parameters& p,
                     const std::function<void(const std::string&, const Tensor&)>& fn) {
    for_each_tensor(const_cast<Parameters&>(p),
                    [&fn](const std::string& name, Tensor& t) { fn(name, t); });
}

static Parameters make_shell(const ModelConfig& cfg) {
    Parameters p;
    const int d = cfg.dim;
    const int hidden = 4 * d;
    p.tok_emb = Tensor(cfg.vocab_size, d);
    p.pos_emb = Tensor(cfg.max_positions, d);
    p.layers.resize(static_cast<size_t>(cfg.n_layers));
    for (LayerParams& lp : p.layers) {
        lp.ln1_g = Tensor(1, d);
        lp.ln1_b = Tensor(1, d);
        lp.wq = Tensor(d, d);
        lp.bq = Tensor(1, d);
        lp.wk = Tensor(d, d);
        lp.bk = Tensor(1, d);
        lp.wv = Tensor(d, d);
        lp.bv = Tensor(1, d);
        lp.wo = Tensor(d, d);
        lp.bo = Tensor(1, d);
        lp.ln2_g = Tensor(1, d);
        lp.ln2_b = Tensor(1, d);
        lp.w1 = Tensor(d, hidden);
        lp.b1 = Tensor(1, hidden);
        lp.w2 = Tensor(hidden, d);
        lp.b2 = Tensor(1, d);
    }
    p.lnf_g = Tensor(1, d);
    p.lnf_b = Tensor(1, d);
    p.w_out = Tensor(d, cfg.vocab_size);
    p.b_out = Tensor(1, cfg.vocab_size);
    return p;
}

Parameters init_params(const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    Parameters p = make_shell(cfg);
    Rng rng(seed);
    const float base_sd = 0.02f;
    const float resid_sd = base_sd / std::sqrt(2.0f * static_cast<float>(cfg.n_layers));
    for_each_tensor(p, [&](const std::string& name, Tensor& t) {
        const std::string leaf = name.substr(name.rfind('.') + 1);
        if (leaf == "ln1_g" || leaf == "ln2_g" || leaf == "lnf_g") {
            std::fill(t.v.begin(), t.v.end(), 1.0f);
        } else if (leaf[0] == 'b' || leaf == "ln1_b" || leaf == "ln2_b" || leaf == "lnf_b") {
            std::fill(t.v.begin(), t.v.end(), 0.0f);
        } else {
            const float sd = (leaf == "wo" || leaf == "w2") ? resid_sd : base_sd;
            for (float& x : t.v) x = rng.normal(0.0f, sd);
        }
    });
    return p;
}

Parameters zeros_like(const Parameters& p) {
    Parameters z;
    z.tok_emb = Tensor(p.tok_emb.rows, p.tok_emb.cols);
    z.pos_emb = Tensor(p.pos_emb.rows, p.pos_emb.cols);
    z.layers.resize(p.layers.size());
    for (size_t l = 0; l < p.layers.size(); ++l) {
        const LayerParams& s = p.layers[l];
        LayerParams& d = z.layers[l];
        auto init = [](const Tensor& t) { return Tensor(t.rows, t.cols); };
        d.ln1_g = init(s.ln1_g);
        d.ln1_b = init(s.ln1_b);
        d.wq = init(s.wq);
        d.bq = init(s.bq);
        d.wk = init(s.wk);
        d.bk = init(s.bk);
        d.wv = init(s.wv);
        d.bv = init(s.bv);
        d.wo = init(s.wo);
        d.bo = init(s.bo);
        d.ln2_g = init(s.ln2_g);
        d.ln2_b = init(s.ln2_b);
        d.w1 = init(s.w1);
        d.b1 = init(s.b1);
        d.w2 = init(s.w2);
        d.b2 = init(s.b2);
    }
    z.lnf_g = Tensor(p.lnf_g.rows, p.lnf_g.cols);
    z.lnf_b = Tensor(p.lnf_b.rows, p.lnf_b.cols);
    z.w_out = Tensor(p.w_out.rows, p.w_out.cols);
    z.b_out = Tensor(p.b_out.rows, p.b_out.cols);
    return z;
}

bool all_finite(const Parameters& p) {
    bool ok = true;
    for_each_tensor(p, [&ok](const std::string&, const Tensor& t) {
        for (float x : t.v)
            if (!std::isfinite(x)) ok = false;
    });
    return ok;
}

KVCache make_cache(const ModelConfig& cfg) {
    KVCache c;
    c.n_layers = cfg.n_layers;
    c.dim = cfg.dim;
    c.k.resize(static_cast<size_t>(cfg.n_layers));
    c.v.resize(static_cast<size_t>(cfg.n_layers));
    return c;
}

std::vector<float> forward(const ModelConfig& config, const Parameters& params,
                           std::span<const int> tokens, std::span<const int> positions,
                           const AttnMask& mask) {
    return forward_core(config, params, nullptr, tokens, positions, mask, nullptr, nullptr,
                        nullptr);
}

std::vector<float> forward_cached(const ModelConfig& config, const Parameters& params,
                                  KVCache& cache, std::span<const int> chunk_tokens,
                                  std::span<const int> chunk_positions, const AttnMask& mask,
                                  int commit_count) {
    const int m = static_cast<int>(chunk_tokens.size());
    if (commit_count < 0 || commit_count > m)
        throw ContractViolation("forward_cached: commit_count out of range");
    for (int i = 0; i < commit_count; ++i) {
        if (chunk_positions[static_cast<size_t>(i)] != cache.committed_len + i)
            throw ContractViolation("forward_cached: committed positions must continue the cache");
    }
    std::vector<std::vector<float>> chunk_k, chunk_v;
    std::vector<float> logits = forward_core(config, params, &cache, chunk_tokens, chunk_positions,
                                             mask, nullptr, &chunk_k, &chunk_v);
    if (commit_count > 0) {
        const size_t take = static_cast<size_t>(commit_count) * static_cast<size_t>(config.dim);
        for (int l = 0; l < config.n_layers; ++l) {
            auto& ck = cache.k[static_cast<size_t>(l)];
            auto& cv = cache.v[static_cast<size_t>(l)];
            ck.insert(ck.end(), chunk_k[static_cast<size_t>(l)].begin(),
                      chunk_k[static_cast<size_t>(l)].begin() + static_cast<long>(take));
            cv.insert(cv.end(), chunk_v[static_cast<size_t>(l)].begin(),
                      chunk_v[static_cast<size_t>(l)].begin() + static_cast<long>(take));
        }
        cache.tokens.insert(cache.tokens.end(), chunk_tokens.begin(),
                            chunk_tokens.begin() + commit_count);
        cache.committed_len += commit_count;
    }
    return logits;
}

std::vector<float> forward_train(const ModelConfig& config, const Parameters& params,
                                 std::span<const int> tokens, std::span<const int> positions,
                                 const AttnMask& mask, Tape& tape) {
    return forward_core(config, params, nullptr, tokens, positions, mask, &tape, nullptr, nullptr);
}

void backward(const ModelConfig& config, const Parameters& params, const Tape& tape,
              std::span<const float> dlogits, Parameters& grads) {
    const int m = tape.len;
    const int d = config.dim;
    const int hd = config.head_dim();
    const float scale = 1.0f / std::sqrt(static_cast<float>(hd));
    if (dlogits.size() != static_cast<size_t>(m) * static_cast<size_t>(config.vocab_size))
        throw ContractViolation("backward: dlogits shape mismatch");

    // Head and final layernorm.
    std::vector<float> df(static_cast<size_t>(m) * d, 0.0f);
    linear_bwd(tape.f.data(), m, d, params.w_out, dlogits.data(), grads.w_out, grads.b_out,
               df.data());
    std::vector<float> dx(static_cast<size_t>(m) * d, 0.0f);
    layernorm_bwd(df.data(), tape.lnf_xhat.data(), tape.lnf_rstd.data(), m, d, params.lnf_g,
                  grads.lnf_g, grads.lnf_b, dx.data());

    std::vector<float> dmid(static_cast<size_t>(m) * d);
    std::vector<float> dbh(static_cast<size_t>(m) * d);
    std::vector<float> datt(static_cast<size_t>(m) * d);
    std::vector<float> dq(static_cast<size_t>(m) * d), dk(dq.size()), dv(dq.size());
    std::vector<float> da(static_cast<size_t>(m) * d);

    for (int l = config.n_layers - 1; l >= 0; --l) {
        const LayerParams& lp = params.layers[static_cast<size_t>(l)];
        LayerParams& gl = grads.layers[static_cast<size_t>(l)];
        const TapeLayer& tl = tape.layers[static_cast<size_t>(l)];
        const int hidden = lp.w1.cols;

        // MLP branch: x_out = x_mid + w2(gelu(w1(ln2(x_mid)))).
        std::vector<float> dh1(static_cast<size_t>(m) * hidden, 0.0f);
        linear_bwd(tl.h1.data(), m, hidden, lp.w2, dx.data(), gl.w2, gl.b2, dh1.data());
        std::vector<float> dpre(dh1.size());
        for (size_t i = 0; i < dh1.size(); ++i) dpre[i] = dh1[i] * gelu_grad(tl.pre[i]);
        std::fill(dbh.begin(), dbh.end(), 0.0f);
        linear_bwd(tl.bh.data(), m, d, lp.w1, dpre.data(), gl.w1, gl.b1, dbh.data());
        dmid = dx;  // residual passthrough
        layernorm_bwd(dbh.data(), tl.ln2_xhat.data(), tl.ln2_rstd.data(), m, d, lp.ln2_g, gl.ln2_g,
                      gl.ln2_b, dmid.data());

        // Attention branch: x_mid = x_in + wo(attend(ln1(x_in))).
        std::fill(datt.begin(), datt.end(), 0.0f);
        linear_bwd(tl.att_out.data(), m, d, lp.wo, dmid.data(), gl.wo, gl.bo, datt.data());

        std::fill(dq.begin(), dq.end(), 0.0f);
        std::fill(dk.begin(), dk.end(), 0.0f);
        std::fill(dv.begin(), dv.end(), 0.0f);
        std::vector<float> dp(static_cast<size_t>(m));
        for (int h = 0; h < config.n_heads; ++h) {
            for (int u = 0; u < m; ++u) {
                const float* datt_u = datt.data() + static_cast<size_t>(u) * d + static_cast<size_t>(h) * hd;
                const float* p_row = tl.att_p.data() + (static_cast<size_t>(h) * m + u) * m;
                float pdp = 0.0f;
                for (int col = 0; col < m; ++col) {
                    if (p_row[col] == 0.0f) {
                        dp[static_cast<size_t>(col)] = 0.0f;
                        continue;
                    }
                    const float* vc = tl.v.data() + static_cast<size_t>(col) * d + static_cast<size_t>(h) * hd;
                    float acc = 0.0f;
                    for (int j = 0; j < hd; ++j) acc += datt_u[j] * vc[j];
                    dp[static_cast<size_t>(col)] = acc;
                    pdp += p_row[col] * acc;
                }
                const float* qu = tl.q.data() + static_cast<size_t>(u) * d + static_cast<size_t>(h) * hd;
                float* dqu = dq.data() + static_cast<size_t>(u) * d + static_cast<size_t>(h) * hd;
                for (int col = 0; col < m; ++col) {
                    const float p = p_row[col];
                    if (p == 0.0f) continue;
                    const float ds = p * (dp[static_cast<size_t>(col)] - pdp) * scale;
                    const float* kc = tl.k.data() + static_cast<size_t>(col) * d + static_cast<size_t>(h) * hd;
                    float* dkc = dk.data() + static_cast<size_t>(col) * d + static_cast<size_t>(h) * hd;
                    float* dvc = dv.data() + static_cast<size_t>(col) * d + static_cast<size_t>(h) * hd;
                    for (int j = 0; j < hd; ++j) {
                        dqu[j] += ds * kc[j];
                        dkc[j] += ds * qu[j];
                        dvc[j] += p * datt_u[j];
                    }
                }
            }
        }

        std::fill(da.begin(), da.end(), 0.0f);
        linear_bwd(tl.a.data(), m, d, lp.wq, dq.data(), gl.wq, gl.bq, da.data());
        linear_bwd(tl.a.data(), m, d, lp.wk, dk.data(), gl.wk, gl.bk, da.data());
        linear_bwd(tl.a.data(), m, d, lp.wv, dv.data(), gl.wv, gl.bv, da.data());

        dx = dmid;  // residual passthrough to the layer input
        layernorm_bwd(da.data(), tl.ln1_xhat.data(), tl.ln1_rstd.data(), m, d, lp.ln1_g, gl.ln1_g,
                      gl.ln1_b, dx.data());
    }

    for (int i = 0; i < m; ++i) {
        const float* dxi = dx.data() + static_cast<size_t>(i) * d;
        float* te = grads.tok_emb.row(tape.tokens[static_cast<size_t>(i)]);
        float* pe = grads.pos_emb.row(tape.positions[static_cast<size_t>(i)]);
        for (int j = 0; j < d; ++j) {
            te[j] += dxi[j];
            pe[j] += dxi[j];
        }
    }
}

}  // namespace sdlm
