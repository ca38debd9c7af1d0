// End-to-end checks of the command-line tool: each case shells out to the
// real binary (path injected by the build) and inspects exit codes and the
// files left behind.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "darkfield/data.hpp"
#include "darkfield/metrics.hpp"
#include "darkfield/util.hpp"
#include "test_support.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using testsup::TempDir;

namespace {

int run_cmd(const std::string& cmd) {
    const int ret = std::system((cmd + " >/dev/null 2>&1").c_str());
    if (ret == -1) return -1;
    return WEXITSTATUS(ret);
}

std::string binary() { return DARKFIELD_BIN; }

void write_file(const std::string& path, const std::string& text) {
    std::ofstream f(path);
    f << text;
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string(std::istreambuf_iterator<char>(f), {});
}

// One shared micro work area: dataset -> training run -> downstream commands.
struct Pipeline {
    TempDir dir{"cli"};
    std::string data, run;

    Pipeline() {
        data = dir.sub("data");
        run = dir.sub("run");
        write_file(dir.sub("phantom.json"),
                   R"({"height": 32, "width": 32, "count": 6, "seed": 3,
                       "texture_cells": 4,
                       "splits": {"train": 4, "val": 1, "test": 1}})");
        write_file(dir.sub("run.json"),
                   R"({"net": {"stages": 2, "levels": 3, "base_width": 4,
                               "disc_base_width": 4, "disc_downsamples": 2,
                               "init_seed": 9},
                       "train": {"epochs": 1, "learning_rate": 1e-4,
                                 "batch_size": 2, "seed": 4},
                       "inference": {"passes": 2, "seed": 21}})");
        REQUIRE(run_cmd(binary() + " generate-phantoms " + dir.sub("phantom.json") + " " + data) ==
                0);
        REQUIRE(run_cmd(binary() + " train " + dir.sub("run.json") + " " + data + " " + run) == 0);
    }
};

Pipeline& pipeline() {
    static Pipeline p;
    return p;
}

}  // namespace

TEST_CASE("generate-phantoms leaves a complete dataset with one manifest") {
    auto& p = pipeline();
    CHECK(fs::exists(fs::path(p.data) / "manifest.json"));
    CHECK(fs::exists(fs::path(p.data) / "meta" / "manifest.json"));
    int n = 0;
    for (auto& e : fs::directory_iterator(fs::path(p.data) / "attenuation")) {
        n += e.path().extension() == ".pgm";
    }
    CHECK(n == 6);
    const json manifest = json::parse(slurp((fs::path(p.data) / "manifest.json").string()));
    CHECK(manifest.at("command") == "generate-phantoms");
    CHECK(manifest.at("resolved_config").at("count") == 6);
}

TEST_CASE("train produces checkpoints, logs, previews, and a manifest") {
    auto& p = pipeline();
    CHECK(fs::exists(fs::path(p.run) / "checkpoints" / "stage1_best.ckpt"));
    CHECK(fs::exists(fs::path(p.run) / "checkpoints" / "stage2_best.ckpt"));
    CHECK(fs::exists(fs::path(p.run) / "logs" / "stage1_steps.jsonl"));
    CHECK(fs::exists(fs::path(p.run) / "logs" / "stage2_epochs.jsonl"));
    CHECK(fs::exists(fs::path(p.run) / "config_echo.json"));
    CHECK(fs::exists(fs::path(p.run) / "previews" / "stage1_val.ppm"));
    CHECK(fs::exists(fs::path(p.run) / "manifest.json"));

    // each step log line is one JSON object with the loss components
    std::ifstream steps((fs::path(p.run) / "logs" / "stage1_steps.jsonl").string());
    std::string line;
    REQUIRE(std::getline(steps, line));
    const json rec = json::parse(line);
    CHECK(rec.contains("lr"));
    CHECK(rec.contains("L_total"));
    CHECK(rec.contains("L_disc"));
}

TEST_CASE("infer writes one bundle directory and panel per input") {
    auto& p = pipeline();
    const std::string out = p.dir.sub("infer_out");
    const std::string ckpt = p.run + "/checkpoints/stage2_best.ckpt";
    REQUIRE(run_cmd(binary() + " infer " + ckpt + " " + p.data + "/attenuation " + out +
                    " --passes 2 --seed 5") == 0);
    CHECK(fs::exists(fs::path(out) / "manifest.json"));
    CHECK(fs::exists(fs::path(out) / "p00000" / "prediction.pgm"));
    CHECK(fs::exists(fs::path(out) / "p00000" / "meta.json"));
    CHECK(fs::exists(fs::path(out) / "p00000_panel.ppm"));
    CHECK(fs::exists(fs::path(out) / "p00005" / "epistemic_var.pgm"));

    // byte-identical on a rerun with the same seed
    const std::string out2 = p.dir.sub("infer_out2");
    REQUIRE(run_cmd(binary() + " infer " + ckpt + " " + p.data + "/attenuation " + out2 +
                    " --passes 2 --seed 5") == 0);
    CHECK(slurp((fs::path(out) / "p00000" / "prediction.pgm").string()) ==
          slurp((fs::path(out2) / "p00000" / "prediction.pgm").string()));
    CHECK(slurp((fs::path(out) / "p00000" / "epistemic_var.pgm").string()) ==
          slurp((fs::path(out2) / "p00000" / "epistemic_var.pgm").string()));

    // a different seed changes the maps
    const std::string out3 = p.dir.sub("infer_out3");
    REQUIRE(run_cmd(binary() + " infer " + ckpt + " " + p.data + "/attenuation " + out3 +
                    " --passes 2 --seed 6") == 0);
    CHECK(slurp((fs::path(out) / "p00000" / "prediction.pgm").string()) !=
          slurp((fs::path(out3) / "p00000" / "prediction.pgm").string()));
}

TEST_CASE("evaluate emits a per-stage metric table over the test split") {
    auto& p = pipeline();
    const std::string out = p.dir.sub("eval_out");
    const std::string ckpt = p.run + "/checkpoints/stage2_best.ckpt";
    REQUIRE(run_cmd(binary() + " evaluate " + p.data + " " + out + " --checkpoint " + ckpt +
                    " --passes 2") == 0);
    const std::string table = slurp((fs::path(out) / "report.txt").string());
    CHECK(table.find("MSE") != std::string::npos);

    const auto rows = darkfield::parse_reports(slurp((fs::path(out) / "report.jsonl").string()));
    REQUIRE(rows.size() == 2);  // one row per stage of the single checkpoint
    CHECK(rows[0].stage == 1);
    CHECK(rows[1].stage == 2);
    CHECK(rows[0].sample_count == 1);  // the test split of the micro dataset

    // two explicit checkpoints: one row each, ordered by trained stage
    const std::string out2 = p.dir.sub("eval_out2");
    REQUIRE(run_cmd(binary() + " evaluate " + p.data + " " + out2 + " --checkpoint " + p.run +
                    "/checkpoints/stage2_best.ckpt --checkpoint " + p.run +
                    "/checkpoints/stage1_best.ckpt --passes 1") == 0);
    const auto rows2 = darkfield::parse_reports(slurp((fs::path(out2) / "report.jsonl").string()));
    REQUIRE(rows2.size() == 2);
    CHECK(rows2[0].stage == 1);
    CHECK(rows2[1].stage == 2);
}

TEST_CASE("usage and environment errors exit with code 2") {
    auto& p = pipeline();
    CHECK(run_cmd(binary()) == 2);                       // missing subcommand
    CHECK(run_cmd(binary() + " bogus") == 2);            // unknown subcommand
    CHECK(run_cmd(binary() + " train missing.json " + p.data + " " + p.dir.sub("x")) == 2);
    CHECK(run_cmd(binary() + " infer missing.ckpt " + p.data + " " + p.dir.sub("y")) == 2);
    CHECK(run_cmd("DARKFIELD_DEVICE=cuda " + binary() + " --help") == 2);
    CHECK(run_cmd("DARKFIELD_DEVICE=cpu " + binary() + " --help") == 0);
    CHECK(run_cmd(binary() + " --help") == 0);

    // stage out of range
    const std::string ckpt = p.run + "/checkpoints/stage1_best.ckpt";
    CHECK(run_cmd(binary() + " infer " + ckpt + " " + p.data + "/attenuation " +
                  p.dir.sub("z") + " --stage 9 --passes 1") == 2);
}
