#include <gtest/gtest.h>

#include <cstdlib>
#include <fstream>
#include <string>

#include <json.hpp>

#include "testutil.hpp"

namespace {

std::string salm_bin() {
    const char* env = std::getenv("SALM_BIN");
    if (env == nullptr) {
        ADD_FAILURE() << "SALM_BIN not set";
        return "";
    }
    return env;
}

int run(const std::string& args) {
    const std::string cmd = salm_bin() + " " + args + " >/dev/null 2>&1";
    const int rc = std::system(cmd.c_str());
    return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST(Cli, FullWorkflow) {
    salm::test::TempDir dir("cli");
    const auto d = dir.path();
    const std::string data = (d / "data").string();

    ASSERT_EQ(run("synth --out " + data +
                  " --count 4 --seed 7 --dims 64 64 48 --landmarks 3 --split 0.75 0 0.25"),
              0);
    ASSERT_TRUE(std::filesystem::exists(d / "data" / "manifest.json"));

    // rerun reproduces the manifest byte for byte
    salm::test::TempDir dir2("cli2");
    const std::string data2 = (dir2.path() / "data").string();
    ASSERT_EQ(run("synth --out " + data2 +
                  " --count 4 --seed 7 --dims 64 64 48 --landmarks 3 --split 0.75 0 0.25"),
              0);
    EXPECT_EQ(slurp(d / "data" / "manifest.json"), slurp(dir2.path() / "data" / "manifest.json"));

    // train with a reduced-width config, epochs overridden by flag
    {
        nlohmann::json cfg{{"k", 4},      {"iterations", 2}, {"patch_sizes", {32, 16}},
                           {"m", 32},     {"d", 8},          {"att_hidden", 16},
                           {"epochs", 50}, {"seed", 3}};
        std::ofstream(d / "cfg.json") << cfg.dump();
    }
    ASSERT_EQ(run("train --config " + (d / "cfg.json").string() + " --data " + data +
                  "/manifest.json --out " + (d / "run").string() + " --epochs 2 --quiet"),
              0);
    ASSERT_TRUE(std::filesystem::exists(d / "run" / "checkpoint.salm"));
    ASSERT_TRUE(std::filesystem::exists(d / "run" / "loss.csv"));
    {
        std::ifstream log(d / "run" / "loss.csv");
        std::string line;
        int rows = 0;
        while (std::getline(log, line)) ++rows;
        EXPECT_EQ(rows, 4);  // header + epoch 0 + 2 epochs: flag overrode config
    }

    ASSERT_EQ(run("infer --checkpoint " + (d / "run" / "checkpoint.salm").string() +
                  " --volume " + data + "/phantom_3.vol.json --out " + (d / "preds").string() +
                  " --trace"),
              0);
    ASSERT_TRUE(std::filesystem::exists(d / "preds" / "phantom_3.lmk.json"));
    ASSERT_TRUE(std::filesystem::exists(d / "preds" / "phantom_3.trace.json"));
    {
        const auto trace = nlohmann::json::parse(std::ifstream(d / "preds" / "phantom_3.trace.json"));
        EXPECT_EQ(trace.at("iterations").size(), 2u);
        EXPECT_TRUE(trace.at("iterations")[1].contains("gate_f"));
    }

    ASSERT_EQ(run("eval --pred " + (d / "preds").string() + " --gt " + data + " --out " +
                  (d / "report").string() + " --csv"),
              0);
    ASSERT_TRUE(std::filesystem::exists(d / "report" / "report.txt"));
    ASSERT_TRUE(std::filesystem::exists(d / "report" / "report.json"));
    ASSERT_TRUE(std::filesystem::exists(d / "report" / "report.csv"));

    ASSERT_EQ(run("bench --checkpoint " + (d / "run" / "checkpoint.salm").string() +
                  " --volume " + data + "/phantom_0.vol.json --repeats 2 --single-thread"),
              0);
}

TEST(Cli, ExitCodes) {
    salm::test::TempDir dir("cli3");
    // usage error: missing required --out
    EXPECT_EQ(run("synth --count 4"), 2);
    // unknown flag
    EXPECT_EQ(run("synth --out x --no-such-flag"), 2);
    // unknown subcommand
    EXPECT_EQ(run("frobnicate"), 2);
    // runtime failure: nonexistent volume
    const auto d = dir.path();
    ASSERT_EQ(run("synth --out " + (d / "data").string() +
                  " --count 3 --dims 48 48 48 --landmarks 2 --split 0.67 0 0.33"),
              0);
    {
        nlohmann::json cfg{{"k", 4},  {"iterations", 1}, {"patch_sizes", {16}}, {"m", 16},
                           {"d", 8},  {"att_hidden", 8}, {"epochs", 1},         {"seed", 1}};
        std::ofstream(d / "cfg.json") << cfg.dump();
    }
    ASSERT_EQ(run("train --config " + (d / "cfg.json").string() + " --data " +
                  (d / "data" / "manifest.json").string() + " --out " + (d / "run").string() +
                  " --quiet"),
              0);
    EXPECT_EQ(run("infer --checkpoint " + (d / "run" / "checkpoint.salm").string() +
                  " --volume /nonexistent.vol.json --out " + (d / "p").string()),
              1);
    // validation error: config with inconsistent patch sizes
    {
        nlohmann::json cfg{{"iterations", 2}, {"patch_sizes", {16}}};
        std::ofstream(d / "bad.json") << cfg.dump();
    }
    EXPECT_EQ(run("train --config " + (d / "bad.json").string() + " --data " +
                  (d / "data" / "manifest.json").string() + " --out " + (d / "r2").string()),
              2);
}
