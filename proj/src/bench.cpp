// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0

#include "sdlm/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>

#include "sdlm/common.hpp"

namespace sdlm {

std::string confidence_name(Confidence c) { return c == Confidence::logit ? "logit" : "entropy"; }

Confidence parse_confidence(const std::string& name) {
    if (name == "logit") return Confidence::logit;
    if (name == "entropy") return Confidence::entropy;
    throw ConfigError("unknown confidence function: " + name);
}

std::string mode_name(DecodeMode m) { return m == DecodeMode::greedy ? "greedy" : "speculative"; }

DecodeMode parse_mode(const std::string& name) {
    if (name == "greedy") return DecodeMode::greedy;
    if (name == "speculative") return DecodeMode::speculative;
    throw ConfigError("unknown decode mode: " + name);
}

namespace {

std::vector<int> eos_trimmed(std::span<const int> ids, int eos_id) {
    std::vector<int> out(ids.begin(), ids.end());
    if (!out.empty() && out.back() == eos_id) out.pop_back();
    return out;
}

}  // namespace

EvalResult eval_task(const Model& model, const std::vector<Sample>& samples,
                     const DecodeConfig& config, int timing_reps) {
    if (samples.empty()) throw ConfigError("eval_task: no samples");
    if (timing_reps < 1) throw ConfigError("eval_task: timing_reps must be >= 1");

    EvalResult res;
    std::vector<std::vector<int>> outputs;
    outputs.reserve(samples.size());

    long long matched = 0;
    long long token_matches = 0, token_total = 0;
    const auto t0 = std::chrono::steady_clock::now();
    for (const Sample& s : samples) {
        auto [out, trace] = run_generation(model, s.prompt, config);
        std::vector<int> got = eos_trimmed(out, config.eos_id);
        std::vector<int> want = eos_trimmed(s.response, config.eos_id);
        if (got == want) ++matched;
        for (size_t i = 0; i < std::min(got.size(), want.size()); ++i)
            if (got[i] == want[i]) ++token_matches;
        token_total += static_cast<long long>(want.size());
        res.generated += trace.generated;
        res.passes += trace.passes;
        res.steps += static_cast<long long>(trace.steps.size());
        res.traces.push_back(std::move(trace));
        outputs.push_back(std::move(out));
    }
    res.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    res.accuracy = static_cast<double>(matched) / static_cast<double>(samples.size());
    res.per_token_accuracy =
        token_total > 0 ? static_cast<double>(token_matches) / static_cast<double>(token_total) : 0.0;
    res.tokens_per_pass =
        res.passes > 0 ? static_cast<double>(res.generated) / static_cast<double>(res.passes) : 0.0;

    std::vector<double> tps;
    tps.push_back(res.wall_seconds > 0 ? static_cast<double>(res.generated) / res.wall_seconds : 0.0);
    for (int rep = 1; rep < timing_reps; ++rep) {
        const auto r0 = std::chrono::steady_clock::now();
        long long generated = 0;
        for (size_t i = 0; i < samples.size(); ++i) {
            auto [out, trace] = run_generation(model, samples[i].prompt, config);
            if (out != outputs[i])
                throw std::runtime_error("eval_task: nondeterministic generation across repetitions");
            generated += trace.generated;
        }
        const double secs =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - r0).count();
        tps.push_back(secs > 0 ? static_cast<double>(generated) / secs : 0.0);
    }
    std::sort(tps.begin(), tps.end());
    res.wall_tps = tps[tps.size() / 2];
    return res;
}

BenchReport sweep_tau(const Model& model, const std::string& task,
                      const std::vector<Sample>& samples, const std::vector<double>& taus,
                      const std::vector<Confidence>& confidences, DecodeMode mode,
                      const DecodeConfig& base, int timing_reps) {
    if (taus.empty()) throw ConfigError("sweep_tau: empty tau list");
    for (size_t i = 1; i < taus.size(); ++i)
        if (taus[i] > taus[i - 1]) throw ConfigError("sweep_tau: taus must be sorted descending");
    if (confidences.empty()) throw ConfigError("sweep_tau: no confidence functions");

    BenchReport report;
    for (Confidence conf : confidences) {
        for (double tau : taus) {
            DecodeConfig cfg = base;
            cfg.tau = tau;
            cfg.confidence = conf;
            cfg.mode = mode;
            EvalResult r = eval_task(model, samples, cfg, timing_reps);
            report.rows.push_back({task, mode_name(mode), confidence_name(conf), tau,
                                   model.config.block_size, r.accuracy, r.tokens_per_pass,
                                   r.wall_tps, r.steps, r.per_token_accuracy});
        }
    }
    return report;
}

void write_report_csv(std::ostream& out, const BenchReport& report) {
    out << "task,mode,confidence,tau,D,accuracy,tokens_per_pass,wall_tps,steps\n";
    for (const BenchRow& r : report.rows) {
        out << r.task << ',' << r.mode << ',' << r.confidence << ',' << r.tau << ','
            << r.block_size << ',' << r.accuracy << ',' << r.tokens_per_pass << ',' << r.wall_tps
            << ',' << r.steps << '\n';
    }
}

std::string report_markdown(const BenchReport& report) {
    std::ostringstream os;
    os << "| task | mode | confidence | tau | D | accuracy | per-token acc | tokens/pass | wall tok/s | steps |\n";
    os << "|---|---|---|---|---|---|---|---|---|---|\n";
    for (const BenchRow& r : report.rows) {
        char buf[256];
        std::snprintf(buf, sizeof(buf), "| %s | %s | %s | %.4g | %d | %.4f | %.4f | %.3f | %.1f | %lld |\n",
                      r.task.c_str(), r.mode.c_str(), r.confidence.c_str(), r.tau, r.block_size,
                      r.accuracy, r.per_token_accuracy, r.tokens_per_pass, r.wall_tps, r.steps);
        os << buf;
    }
    return os.str();
}

}  // namespace sdlm
