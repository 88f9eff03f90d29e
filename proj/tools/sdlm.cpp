// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// Command-line entrypoint: train / generate / eval / bench.
// Exit codes: 0 ok, 2 usage or configuration error, 3 runtime failure.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sdlm/bench.hpp"
#include "sdlm/checkpoint.hpp"
#include "sdlm/common.hpp"
#include "sdlm/run_config.hpp"

namespace fs = std::filesystem;
using namespace sdlm;

namespace {

std::optional<uint64_t> env_seed_override() {
    const char* env = std::getenv("SDLM_SEED");
    if (env == nullptr || *env == '\0') return std::nullopt;
    return std::strtoull(env, nullptr, 10);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open file: " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write file: " + path.string());
    out << text;
}

std::vector<double> parse_tau_list(const std::string& csv) {
    std::vector<double> taus;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        taus.push_back(std::stod(item));
    }
    if (taus.empty()) throw ConfigError("empty tau list");
    return taus;
}

std::vector<Confidence> parse_conf_list(const std::string& csv) {
    std::vector<Confidence> confs;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        confs.push_back(parse_confidence(item));
    }
    if (confs.empty()) throw ConfigError("empty confidence list");
    return confs;
}

int cmd_train(const std::string& config_path) {
    RunConfig rc = RunConfig::from_json_text(read_file(config_path));
    if (auto s = env_seed_override()) {
        rc.seed = *s;
        rc.train.seed = *s;
        rc.data_seed = *s * 0x9E3779B97F4A7C15ULL + 0x1234567ULL;
    }

    fs::create_directories(rc.out_dir);
    write_file(fs::path(rc.out_dir) / "config.json", rc.to_json_text() + "\n");

    std::vector<Sample> samples = gen_samples(rc.task, rc.data_count, rc.data_seed, rc.data_lens);
    Model model{rc.model, init_params(rc.model, rc.seed)};
    std::vector<HistoryRow> history = train(rc.train, model, samples);

    {
        std::ofstream csv(fs::path(rc.out_dir) / "loss.csv");
        write_history_csv(csv, history);
    }
    save_checkpoint((fs::path(rc.out_dir) / "checkpoint.sdlm").string(), model.config, rc.task,
                    model.params);
    if (!history.empty())
        std::cout << "final loss " << history.back().loss << " (aux " << history.back().aux_loss
                  << ") after " << history.size() << " steps\n";
    std::cout << "wrote " << (fs::path(rc.out_dir) / "checkpoint.sdlm").string() << "\n";
    return 0;
}

DecodeConfig decode_config_for(const Model& model, double tau, const std::string& conf,
                               const std::string& mode, int max_tokens, int block_size_flag) {
    DecodeConfig dc;
    dc.tau = tau;
    dc.confidence = parse_confidence(conf);
    dc.mode = parse_mode(mode);
    dc.max_new_tokens = max_tokens;
    dc.block_size = block_size_flag > 0 ? block_size_flag : model.config.block_size;
    if (dc.block_size != model.config.block_size)
        throw ConfigError("block size flag does not match the checkpoint");
    dc.validate();
    return dc;
}

int cmd_generate(const std::string& ckpt_path, const std::string& prompt_text, double tau,
                 const std::string& conf, const std::string& mode, int max_tokens,
                 int block_size_flag, bool show_blocks, const std::string& trace_out) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Model model{ckpt.config, std::move(ckpt.params)};
    Vocab vocab = build_vocab(ckpt.task);
    DecodeConfig dc = decode_config_for(model, tau, conf, mode, max_tokens, block_size_flag);

    std::vector<int> prompt = format_prompt(vocab, ckpt.task, prompt_text);
    auto [out, trace] = run_generation(model, prompt, dc);

    std::vector<int> trimmed = out;
    if (!trimmed.empty() && trimmed.back() == dc.eos_id) trimmed.pop_back();
    std::cout << vocab.decode(trimmed) << "\n";

    if (show_blocks) {
        // One bracket per decoding step, mirroring the accepted runs.
        std::string line;
        for (const StepRecord& s : trace.steps) {
            line += '[';
            line += vocab.decode(
                std::span<const int>(s.proposed.data(), static_cast<size_t>(s.gamma)));
            line += ']';
        }
        std::cout << line << "\n";
        std::cout << "steps " << trace.steps.size() << ", tokens " << trace.generated
                  << ", passes " << trace.passes << ", tokens/pass "
                  << (trace.passes ? static_cast<double>(trace.generated) /
                                         static_cast<double>(trace.passes)
                                   : 0.0)
                  << "\n";
    }
    if (!trace_out.empty()) write_file(trace_out, trace.to_json() + "\n");
    return 0;
}

int cmd_eval(const std::string& ckpt_path, int count, uint64_t seed, int len_min, int len_max,
             double tau, const std::string& conf, const std::string& mode, int max_tokens,
             int reps) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Model model{ckpt.config, std::move(ckpt.params)};
    if (auto s = env_seed_override()) seed = *s;
    std::vector<Sample> samples = gen_samples(ckpt.task, count, seed, {len_min, len_max});
    DecodeConfig dc = decode_config_for(model, tau, conf, mode, max_tokens, 0);
    EvalResult r = eval_task(model, samples, dc, reps);
    std::cout << "task " << ckpt.task << " mode " << mode << " conf " << conf << " tau " << tau
              << "\n";
    std::cout << "accuracy " << r.accuracy << " per_token " << r.per_token_accuracy
              << " tokens_per_pass " << r.tokens_per_pass << " wall_tps " << r.wall_tps
              << " steps " << r.steps << "\n";
    return 0;
}

int cmd_bench(const std::string& ckpt_path, const std::string& taus_csv,
              const std::string& conf_csv, const std::string& mode, int count, uint64_t seed,
              int len_min, int len_max, int max_tokens, int reps, const std::string& out_dir) {
    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Model model{ckpt.config, std::move(ckpt.params)};
    if (auto s = env_seed_override()) seed = *s;
    std::vector<Sample> samples = gen_samples(ckpt.task, count, seed, {len_min, len_max});

    DecodeConfig base;
    base.max_new_tokens = max_tokens;
    base.block_size = model.config.block_size;
    BenchReport report = sweep_tau(model, ckpt.task, samples, parse_tau_list(taus_csv),
                                   parse_conf_list(conf_csv), parse_mode(mode), base, reps);

    fs::create_directories(out_dir);
    {
        std::ofstream csv(fs::path(out_dir) / "bench.csv");
        write_report_csv(csv, report);
    }
    write_file(fs::path(out_dir) / "bench.md", report_markdown(report));
    {
        nlohmann::json echo = {{"ckpt", ckpt_path},   {"task", ckpt.task}, {"taus", taus_csv},
                               {"confidences", conf_csv}, {"mode", mode},  {"count", count},
                               {"seed", seed},        {"len_min", len_min}, {"len_max", len_max},
                               {"reps", reps}};
        write_file(fs::path(out_dir) / "config.json", echo.dump(2) + "\n");
    }
    std::cout << report_markdown(report);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"desk-scale block-diffusion style training and decoding"};
    app.require_subcommand(1);

    std::string config_path;
    CLI::App* train_cmd = app.add_subcommand("train", "train a model from a JSON config");
    train_cmd->add_option("--config", config_path, "JSON run configuration")->required();

    std::string ckpt_path, prompt_text, conf = "logit", mode = "greedy", trace_out;
    double tau = 0.98;
    int max_tokens = 64, block_size_flag = 0;
    bool show_blocks = false;
    CLI::App* gen_cmd = app.add_subcommand("generate", "generate from a prompt");
    gen_cmd->add_option("--ckpt", ckpt_path, "checkpoint path")->required();
    gen_cmd->add_option("--prompt", prompt_text, "prompt text (task symbols)")->required();
    gen_cmd->add_option("--tau", tau, "confidence threshold");
    gen_cmd->add_option("--conf", conf, "confidence function: logit|entropy");
    gen_cmd->add_option("--mode", mode, "greedy|speculative");
    gen_cmd->add_option("--max-tokens", max_tokens, "generation cap");
    gen_cmd->add_option("--block-size", block_size_flag, "must match the checkpoint");
    gen_cmd->add_flag("--show-blocks", show_blocks, "print per-step accepted runs");
    gen_cmd->add_option("--trace-out", trace_out, "write the decode trace JSON here");

    std::string eval_ckpt, eval_conf = "logit", eval_mode = "greedy";
    int eval_count = 200, eval_len_min = 3, eval_len_max = 8, eval_max_tokens = 64, eval_reps = 3;
    uint64_t eval_seed = 9999;
    double eval_tau = 0.98;
    CLI::App* eval_cmd = app.add_subcommand("eval", "exact-match evaluation on fresh samples");
    eval_cmd->add_option("--ckpt", eval_ckpt)->required();
    eval_cmd->add_option("--count", eval_count);
    eval_cmd->add_option("--seed", eval_seed);
    eval_cmd->add_option("--len-min", eval_len_min);
    eval_cmd->add_option("--len-max", eval_len_max);
    eval_cmd->add_option("--tau", eval_tau);
    eval_cmd->add_option("--conf", eval_conf);
    eval_cmd->add_option("--mode", eval_mode);
    eval_cmd->add_option("--max-tokens", eval_max_tokens);
    eval_cmd->add_option("--reps", eval_reps);

    std::string bench_ckpt, bench_taus = "0.98,0.9,0.5", bench_confs = "logit,entropy";
    std::string bench_mode = "greedy", bench_out = "bench_out";
    int bench_count = 100, bench_len_min = 3, bench_len_max = 8, bench_max_tokens = 64,
        bench_reps = 3;
    uint64_t bench_seed = 9999;
    CLI::App* bench_cmd = app.add_subcommand("bench", "tau sweep; writes CSV and markdown");
    bench_cmd->add_option("--ckpt", bench_ckpt)->required();
    bench_cmd->add_option("--taus", bench_taus, "descending, comma-separated");
    bench_cmd->add_option("--conf-list", bench_confs);
    bench_cmd->add_option("--mode", bench_mode);
    bench_cmd->add_option("--count", bench_count);
    bench_cmd->add_option("--seed", bench_seed);
    bench_cmd->add_option("--len-min", bench_len_min);
    bench_cmd->add_option("--len-max", bench_len_max);
    bench_cmd->add_option("--max-tokens", bench_max_tokens);
    bench_cmd->add_option("--reps", bench_reps);
    bench_cmd->add_option("--out", bench_out, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train_cmd->parsed()) return cmd_train(config_path);
        if (gen_cmd->parsed())
            return cmd_generate(ckpt_path, prompt_text, tau, conf, mode, max_tokens,
                                block_size_flag, show_blocks, trace_out);
        if (eval_cmd->parsed())
            return cmd_eval(eval_ckpt, eval_count, eval_seed, eval_len_min, eval_len_max, eval_tau,
                            eval_conf, eval_mode, eval_max_tokens, eval_reps);
        if (bench_cmd->parsed())
            return cmd_bench(bench_ckpt, bench_taus, bench_confs, bench_mode, bench_count,
                             bench_seed, bench_len_min, bench_len_max, bench_max_tokens,
                             bench_reps, bench_out);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
