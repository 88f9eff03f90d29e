// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Held-out evaluation and the tau sweep: exact-match accuracy against the
// task oracle plus tokens-per-pass, the portable speed metric. Wall-clock
// throughput is the median over repeated runs and never gates anything.

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sdlm/corpus.hpp"
#include "sdlm/decode.hpp"
#include "sdlm/model.hpp"

namespace sdlm {

std::string confidence_name(Confidence c);
Confidence parse_confidence(const std::string& name);
std::string mode_name(DecodeMode m);
DecodeMode parse_mode(const std::string& name);

struct EvalResult {
    double accuracy = 0.0;
    double per_token_accuracy = 0.0;
    long long generated = 0;
    long long passes = 0;
    long long steps = 0;
    double tokens_per_pass = 0.0;
    double wall_tps = 0.0;      // median over timing repetitions
    double wall_seconds = 0.0;  // first repetition
    std::vector<DecodeTrace> traces;
};

// Generates for every sample's prompt and scores exact match against the
// EOS-trimmed oracle response. Timing repeats the whole sweep
// `timing_reps` times (>= 1) and requires identical token output each time.
EvalResult eval_task(const Model& model, const std::vector<Sample>& samples,
                     const DecodeConfig& config, int timing_reps = 3);

struct BenchRow {
    std::string task;
    std::string mode;
    std::string confidence;
    double tau = 0.0;
    int block_size = 0;
    double accuracy = 0.0;
    double tokens_per_pass = 0.0;
    double wall_tps = 0.0;
    long long steps = 0;
    double per_token_accuracy = 0.0;  // diagnostics; not part of the CSV schema
};

struct BenchReport {
    std::vector<BenchRow> rows;
};

// One eval per (confidence, tau) pair. taus must be sorted descending.
BenchReport sweep_tau(const Model& model, const std::string& task,
                      const std::vector<Sample>& samples, const std::vector<double>& taus,
                      const std::vector<Confidence>& confidences, DecodeMode mode,
                      const DecodeConfig& base, int timing_reps = 3);

// Schema: task,mode,confidence,tau,D,accuracy,tokens_per_pass,wall_tps,steps
void write_report_csv(std::ostream& out, const BenchReport& report);
std::string report_markdown(const BenchReport& report);

}  // namespace sdlm
