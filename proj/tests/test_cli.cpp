// Copyright (c) 2026 sdlm contributors
// SPDX-License-Identifier: Apache-2.0
//
// End-to-end checks of the installed CLI via subprocesses.

#include <doctest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct RunResult {
    int code = -1;
    std::string output;
};

RunResult run_cli(const std::string& args) {
    const std::string cmd = std::string(SDLM_CLI_PATH) + " " + args + " 2>&1";
    std::array<char, 4096> buf{};
    RunResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    while (fgets(buf.data(), static_cast<int>(buf.size()), pipe) != nullptr) res.output += buf.data();
    int status = pclose(pipe);
    res.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return res;
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path fresh_dir(const std::string& name) {
    fs::path dir = fs::temp_directory_path() / ("sdlm_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

const char* kTinyConfig = R"({
  "task": "copy",
  "seed": 5,
  "out_dir": "%OUT%",
  "model": {"dim": 16, "n_layers": 1, "n_heads": 2, "max_positions": 64, "block_size": 2},
  "train": {"steps": 6, "batch_size": 4, "learning_rate": 0.001, "max_layout_len": 64},
  "data": {"count": 32, "len_min": 2, "len_max": 4}
})";

std::string write_config(const fs::path& dir, const std::string& out_dir) {
    std::string text = kTinyConfig;
    text.replace(text.find("%OUT%"), 5, out_dir);
    fs::path cfg = dir / "config.json";
    std::ofstream(cfg) << text;
    return cfg.string();
}

}  // namespace

TEST_CASE("train runs to completion and is idempotent given the seed") {
    fs::path dir = fresh_dir("train");
    std::string cfg1 = write_config(dir, (dir / "run1").string());
    RunResult r1 = run_cli("train --config " + cfg1);
    CHECK(r1.code == 0);
    CHECK(fs::exists(dir / "run1" / "checkpoint.sdlm"));
    CHECK(fs::exists(dir / "run1" / "loss.csv"));
    CHECK(fs::exists(dir / "run1" / "config.json"));

    std::string loss_csv = slurp(dir / "run1" / "loss.csv");
    CHECK(loss_csv.rfind("step,loss,aux_loss\n", 0) == 0);

    fs::path dir2 = fresh_dir("train_again");
    std::string cfg2 = write_config(dir2, (dir2 / "run2").string());
    RunResult r2 = run_cli("train --config " + cfg2);
    CHECK(r2.code == 0);
    CHECK(slurp(dir / "run1" / "checkpoint.sdlm") == slurp(dir2 / "run2" / "checkpoint.sdlm"));
    CHECK(slurp(dir / "run1" / "loss.csv") == slurp(dir2 / "run2" / "loss.csv"));
}

TEST_CASE("missing required config fields exit with code 2") {
    fs::path dir = fresh_dir("badcfg");
    fs::path cfg = dir / "config.json";
    std::ofstream(cfg) << R"({"seed": 1})";
    RunResult r = run_cli("train --config " + cfg.string());
    CHECK(r.code == 2);

    std::ofstream(cfg) << R"({"task": "frobnicate"})";
    RunResult r2 = run_cli("train --config " + cfg.string());
    CHECK(r2.code == 2);

    std::ofstream(cfg) << R"({"task": "copy", "model": {"unknown_knob": 3}})";
    RunResult r3 = run_cli("train --config " + cfg.string());
    CHECK(r3.code == 2);

    RunResult r4 = run_cli("train --config " + (dir / "no_such.json").string());
    CHECK(r4.code == 2);
}

TEST_CASE("unknown flags and subcommands exit with code 2") {
    CHECK(run_cli("train --nonsense 1").code == 2);
    CHECK(run_cli("explode").code == 2);
    CHECK(run_cli("").code == 2);
}

TEST_CASE("generate decodes, brackets runs, and validates block size") {
    fs::path dir = fresh_dir("gen");
    std::string cfg = write_config(dir, (dir / "run").string());
    REQUIRE(run_cli("train --config " + cfg).code == 0);
    const std::string ckpt = (dir / "run" / "checkpoint.sdlm").string();

    RunResult g = run_cli("generate --ckpt " + ckpt + " --prompt abca --tau 1.0 --show-blocks" +
                          " --max-tokens 6 --trace-out " + (dir / "trace.json").string());
    CHECK(g.code == 0);
    REQUIRE(fs::exists(dir / "trace.json"));
    // tau = 1 with an imperfect model accepts exactly one token per bracket
    auto trace = nlohmann::json::parse(slurp(dir / "trace.json"));
    size_t steps = trace.at("steps").size();
    REQUIRE(steps >= 1);
    for (const auto& s : trace.at("steps")) CHECK(s.at("gamma").get<int>() == 1);
    std::istringstream lines(g.output);
    std::string text_line, bracket_line;
    std::getline(lines, text_line);
    std::getline(lines, bracket_line);
    REQUIRE(!bracket_line.empty());
    CHECK(bracket_line.front() == '[');
    CHECK(bracket_line.back() == ']');
    size_t separators = 0;
    for (size_t at = bracket_line.find("]["); at != std::string::npos;
         at = bracket_line.find("][", at + 1))
        ++separators;
    CHECK(separators == steps - 1);

    RunResult mismatch =
        run_cli("generate --ckpt " + ckpt + " --prompt abc --block-size 3");
    CHECK(mismatch.code == 2);

    RunResult badsym = run_cli("generate --ckpt " + ckpt + " --prompt 123");
    CHECK(badsym.code == 2);

    RunResult spec = run_cli("generate --ckpt " + ckpt + " --prompt ab --mode speculative");
    CHECK(spec.code == 0);
}

TEST_CASE("eval and bench emit reports") {
    fs::path dir = fresh_dir("bench");
    std::string cfg = write_config(dir, (dir / "run").string());
    REQUIRE(run_cli("train --config " + cfg).code == 0);
    const std::string ckpt = (dir / "run" / "checkpoint.sdlm").string();

    RunResult ev = run_cli("eval --ckpt " + ckpt +
                           " --count 6 --seed 42 --len-min 2 --len-max 3 --reps 1 --max-tokens 8");
    CHECK(ev.code == 0);
    CHECK(ev.output.find("accuracy") != std::string::npos);

    RunResult bench = run_cli("bench --ckpt " + ckpt + " --taus 0.98,0.5 --conf-list logit" +
                              " --count 4 --seed 42 --len-min 2 --len-max 3 --reps 1" +
                              " --max-tokens 8 --out " + (dir / "report").string());
    CHECK(bench.code == 0);
    std::string csv = slurp(dir / "report" / "bench.csv");
    CHECK(csv.rfind("task,mode,confidence,tau,D,accuracy,tokens_per_pass,wall_tps,steps\n", 0) ==
          0);
    CHECK(csv.find("copy,greedy,logit,0.98,") != std::string::npos);
    CHECK(csv.find("copy,greedy,logit,0.5,") != std::string::npos);
    CHECK(fs::exists(dir / "report" / "bench.md"));
    CHECK(fs::exists(dir / "report" / "config.json"));

    // ascending taus are rejected
    RunResult bad = run_cli("bench --ckpt " + ckpt + " --taus 0.5,0.98 --count 2 --reps 1 --out " +
                            (dir / "r2").string());
    CHECK(bad.code == 2);
}

TEST_CASE("SDLM_SEED overrides the config seed") {
    fs::path dir = fresh_dir("envseed");
    std::string cfg_a = write_config(dir, (dir / "a").string());

    std::string cmd_env1 = std::string("SDLM_SEED=111 ") + SDLM_CLI_PATH + " train --config " +
                           cfg_a + " >/dev/null 2>&1";
    REQUIRE(std::system(cmd_env1.c_str()) == 0);
    std::string first = slurp(dir / "a" / "checkpoint.sdlm");

    fs::remove_all(dir / "a");
    std::string cmd_env2 = std::string("SDLM_SEED=222 ") + SDLM_CLI_PATH + " train --config " +
                           cfg_a + " >/dev/null 2>&1";
    REQUIRE(std::system(cmd_env2.c_str()) == 0);
    std::string second = slurp(dir / "a" / "checkpoint.sdlm");
    CHECK(first != second);
}
