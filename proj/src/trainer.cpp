// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include "sdlm/common.hpp"

namespace sdlm {

namespace {

// Cross-entropy of one logit row against a target id, accumulated in
// double for stable reductions.
double row_ce(const float* row, int vocab, int target) {
    if (target < 0 || target >= vocab) throw ContractViolation("loss: target out of vocabulary");
    float mx = row[0];
    for (int j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < vocab; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    return std::log(denom) - (static_cast<double>(row[target]) - mx);
}

// dlogits[row] += w * (softmax(row) - onehot(target))
void row_ce_grad(const float* row, int vocab, int target, float w, float* drow) {
    float mx = row[0];
    for (int j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    double denom = 0.0;
    for (int j = 0; j < vocab; ++j) denom += std::exp(static_cast<double>(row[j]) - mx);
    for (int j = 0; j < vocab; ++j) {
        double p = std::exp(static_cast<double>(row[j]) - mx) / denom;
        drow[j] += w * static_cast<float>(p - (j == target ? 1.0 : 0.0));
    }
}

}  // namespace

void TrainConfig::validate() const {
    if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be > 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
    if (steps < 0) throw ConfigError("train: steps must be >= 0");
    if (block_size < 1) throw ConfigError("train: block_size must be >= 1");
    if (!(keep_prob > 0.0 && keep_prob <= 1.0)) throw ConfigError("train: keep_prob in (0,1]");
    if (max_layout_len < 2) throw ConfigError("train: max_layout_len too small");
}

double nsp_loss(std::span<const float> logits, const TrainLayout& layout) {
    const int n = layout.size();
    if (logits.size() % static_cast<size_t>(n) != 0)
        throw ContractViolation("nsp_loss: logits row count mismatch");
    const int vocab = static_cast<int>(logits.size() / static_cast<size_t>(n));
    if (layout.n_blocks == 0) return 0.0;

    std::vector<double> block_sum(static_cast<size_t>(layout.n_blocks), 0.0);
    std::vector<int> block_count(static_cast<size_t>(layout.n_blocks), 0);
    for (const LossTarget& t : layout.loss_targets) {
        block_sum[static_cast<size_t>(t.block)] +=
            row_ce(logits.data() + static_cast<size_t>(t.entry) * vocab, vocab, t.target);
        block_count[static_cast<size_t>(t.block)] += 1;
    }
    double total = 0.0;
    int contributing = 0;
    for (int b = 0; b < layout.n_blocks; ++b) {
        if (block_count[static_cast<size_t>(b)] == 0) continue;  // unshifted size-1 tail block
        total += block_sum[static_cast<size_t>(b)] / block_count[static_cast<size_t>(b)];
        ++contributing;
    }
    return contributing > 0 ? total / contributing : 0.0;
}

double ntp_loss(std::span<const float> logits, std::span<const int> tokens, int supervise_from) {
    const int n = static_cast<int>(tokens.size());
    if (n < 2 || supervise_from < 1 || supervise_from >= n)
        throw ContractViolation("ntp_loss: nothing to supervise");
    if (logits.size() % static_cast<size_t>(n) != 0)
        throw ContractViolation("ntp_loss: logits row count mismatch");
    const int vocab = static_cast<int>(logits.size() / static_cast<size_t>(n));
    double total = 0.0;
    for (int t = supervise_from; t < n; ++t)
        total += row_ce(logits.data() + static_cast<size_t>(t - 1) * vocab, vocab,
                        tokens[static_cast<size_t>(t)]);
    return total / (n - supervise_from);
}

std::vector<std::pair<int, int>> aux_ntp_targets(const TrainLayout& layout) {
    // Position -> clean/prompt entry token, for successor lookup.
    std::vector<int> token_at_pos;
    std::vector<int> entry_at_pos;
    int max_pos = 0;
    for (int e = 0; e < layout.size(); ++e)
        max_pos = std::max(max_pos, layout.position_ids[static_cast<size_t>(e)]);
    token_at_pos.assign(static_cast<size_t>(max_pos) + 1, -1);
    entry_at_pos.assign(static_cast<size_t>(max_pos) + 1, -1);
    for (int e = 0; e < layout.size(); ++e) {
        SegmentKind k = layout.segment_kinds[static_cast<size_t>(e)];
        if (k == SegmentKind::prompt || k == SegmentKind::clean) {
            int p = layout.position_ids[static_cast<size_t>(e)];
            token_at_pos[static_cast<size_t>(p)] = layout.tokens[static_cast<size_t>(e)];
            entry_at_pos[static_cast<size_t>(p)] = e;
        }
    }
    std::vector<std::pair<int, int>> out;
    for (int p = layout.prompt_len - 1; p < max_pos; ++p) {
        int e = entry_at_pos[static_cast<size_t>(p)];
        int next_tok = token_at_pos[static_cast<size_t>(p) + 1];
        if (e >= 0 && next_tok >= 0) out.emplace_back(e, next_tok);
    }
    return out;
}

SampleLoss sample_loss(const ModelConfig& config, const Parameters& params, const Sample& sample,
                       const std::vector<BlockSpec>& blocks, bool aux_ntp, Parameters* grads,
                       float grad_scale) {
    TrainLayout layout = build_train_layout(sample, blocks, config.shift, config.intra_block_causal);
    Tape tape;
    std::vector<float> logits =
        forward_train(config, params, layout.tokens, layout.position_ids, layout.mask, tape);

    SampleLoss out;
    out.nsp = nsp_loss(logits, layout);
    std::vector<std::pair<int, int>> aux;
    if (aux_ntp) {
        aux = aux_ntp_targets(layout);
        if (!aux.empty()) {
            double total = 0.0;
            for (auto [e, tok] : aux)
                total += row_ce(logits.data() + static_cast<size_t>(e) * config.vocab_size,
                                config.vocab_size, tok);
            out.aux = total / static_cast<double>(aux.size());
        }
    }

    if (grads != nullptr) {
        std::vector<float> dlogits(logits.size(), 0.0f);
        if (layout.n_blocks > 0) {
            std::vector<int> block_count(static_cast<size_t>(layout.n_blocks), 0);
            for (const LossTarget& t : layout.loss_targets)
                block_count[static_cast<size_t>(t.block)] += 1;
            int contributing = 0;
            for (int cnt : block_count)
                if (cnt > 0) ++contributing;
            for (const LossTarget& t : layout.loss_targets) {
                float w = grad_scale / (static_cast<float>(contributing) *
                                        static_cast<float>(block_count[static_cast<size_t>(t.block)]));
                row_ce_grad(logits.data() + static_cast<size_t>(t.entry) * config.vocab_size,
                            config.vocab_size, t.target, w,
                            dlogits.data() + static_cast<size_t>(t.entry) * config.vocab_size);
            }
        }
        if (!aux.empty()) {
            float w = grad_scale / static_cast<float>(aux.size());
            for (auto [e, tok] : aux)
                row_ce_grad(logits.data() + static_cast<size_t>(e) * config.vocab_size,
                            config.vocab_size, tok, w,
                            dlogits.data() + static_cast<size_t>(e) * config.vocab_size);
        }
        backward(config, params, tape, dlogits, *grads);
    }
    return out;
}

std::vector<HistoryRow> train(const TrainConfig& config, Model& model,
                              const std::vector<Sample>& samples) {
    config.validate();
    model.config.validate();
    if (samples.empty()) throw ConfigError("train: no samples");
    if (config.block_size != model.config.block_size)
        throw ContractViolation("train: block_size differs from model config");
    if (config.shift != model.config.shift ||
        config.intra_block_causal != model.config.intra_block_causal)
        throw ContractViolation("train: layout flags differ from model config");

    Rng rng(config.seed);
    Parameters grads = zeros_like(model.params);
    Parameters adam_m = zeros_like(model.params);
    Parameters adam_v = zeros_like(model.params);
    const double beta1 = 0.9, beta2 = 0.95, eps = 1e-8;

    std::vector<HistoryRow> history;
    history.reserve(static_cast<size_t>(config.steps));

    for (int step = 1; step <= config.steps; ++step) {
        std::vector<int> batch(static_cast<size_t>(config.batch_size));
        for (int& idx : batch) idx = rng.uniform_int(0, static_cast<int>(samples.size()) - 1);
        std::vector<uint64_t> part_seeds(batch.size());
        for (uint64_t& s : part_seeds) s = rng.next_u64();

        for_each_tensor(grads, [](const std::string&, Tensor& t) { t.zero(); });
        double loss_sum = 0.0, aux_sum = 0.0;
        const float grad_scale = 1.0f / static_cast<float>(config.batch_size);
        for (size_t i = 0; i < batch.size(); ++i) {
            const Sample& s = samples[static_cast<size_t>(batch[i])];
            const int resp_len = static_cast<int>(s.response.size());
            int budget = config.max_layout_len - static_cast<int>(s.prompt.size());
            budget = std::max(budget, resp_len);
            std::vector<BlockSpec> blocks =
                partition_blocks(resp_len, config.block_size, config.keep_prob, part_seeds[i], budget);
            SampleLoss sl =
                sample_loss(model.config, model.params, s, blocks, config.aux_ntp, &grads, grad_scale);
            loss_sum += sl.nsp;
            aux_sum += sl.aux;
        }
        const double loss = loss_sum / config.batch_size;
        const double aux = aux_sum / config.batch_size;
        if (!std::isfinite(loss) || !std::isfinite(aux))
            throw std::runtime_error("training aborted: non-finite loss at step " +
                                     std::to_string(step));

        // Global-norm clip at 1.0.
        double norm_sq = 0.0;
        for_each_tensor(grads, [&](const std::string&, Tensor& t) {
            for (float g : t.v) norm_sq += static_cast<double>(g) * static_cast<double>(g);
        });
        const double norm = std::sqrt(norm_sq);
        const float clip = norm > 1.0 ? static_cast<float>(1.0 / norm) : 1.0f;

        const double bc1 = 1.0 - std::pow(beta1, step);
        const double bc2 = 1.0 - std::pow(beta2, step);
        std::vector<Tensor*> gs, ms, vs, ps;
        for_each_tensor(grads, [&](const std::string&, Tensor& t) { gs.push_back(&t); });
        for_each_tensor(adam_m, [&](const std::string&, Tensor& t) { ms.push_back(&t); });
        for_each_tensor(adam_v, [&](const std::string&, Tensor& t) { vs.push_back(&t); });
        for_each_tensor(model.params, [&](const std::string&, Tensor& t) { ps.push_back(&t); });
        for (size_t i = 0; i < gs.size(); ++i) {
            Tensor& g = *gs[i];
            Tensor& m = *ms[i];
            Tensor& v = *vs[i];
            Tensor& p = *ps[i];
            for (size_t j = 0; j < g.v.size(); ++j) {
                const double gj = static_cast<double>(g.v[j]) * clip;
                const float m_new = static_cast<float>(beta1 * m.v[j] + (1.0 - beta1) * gj);
                const float v_new = static_cast<float>(beta2 * v.v[j] + (1.0 - beta2) * gj * gj);
                m.v[j] = m_new;
                v.v[j] = v_new;
                const double mhat = m_new / bc1;
                const double vhat = v_new / bc2;
                p.v[j] -= static_cast<float>(config.learning_rate * mhat / (std::sqrt(vhat) + eps));
            }
        }

        history.push_back({step, loss, aux});
    }

    if (!all_finite(model.params))
        throw std::runtime_error("training aborted: non-finite parameters after final step");
    return history;
}

void write_history_csv(std::ostream& out, const std::vector<HistoryRow>& history) {
    out << "step,loss,aux_loss\n";
    for (const HistoryRow& h : history) out << h.step << ',' << h.loss << ',' << h.aux_loss << '\n';
}

}  // namespace sdlm
