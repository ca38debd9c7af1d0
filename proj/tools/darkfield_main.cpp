// Command-line front end: dataset generation, staged training, Monte-Carlo
// inference, and metric evaluation. Every subcommand writes a manifest.json
// into its output directory recording the resolved settings and artifacts.
//
// Exit codes: 0 success, 2 usage/config/data error, 3 numeric abort during
// training or inference (non-finite loss or output).

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "darkfield/checkpoint.hpp"
#include "darkfield/config.hpp"
#include "darkfield/data.hpp"
#include "darkfield/inference.hpp"
#include "darkfield/losses.hpp"
#include "darkfield/metrics.hpp"
#include "darkfield/network.hpp"
#include "darkfield/render.hpp"
#include "darkfield/rng.hpp"
#include "darkfield/trainer.hpp"
#include "darkfield/util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

uint64_t sample_seed(uint64_t base, const std::string& id) {
    return darkfield::mix_seed(base, darkfield::fnv1a64(id.data(), id.size()));
}

// Target-free ingestion at native resolution: accepts a flat directory or
// one with an attenuation/ subdirectory, reads .pgm/.npy files, and min-max
// normalizes any image whose values fall outside [0,1]. Unreadable files are
// skipped with a warning; an empty result is an error.
std::vector<darkfield::PairedSample> load_infer_inputs(const std::string& dir) {
    fs::path root(dir);
    if (fs::exists(root / "attenuation")) root /= "attenuation";
    if (!fs::is_directory(root)) {
        throw std::runtime_error("input directory not found: " + dir);
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(root)) {
        if (!entry.is_regular_file()) continue;
        const std::string ext = entry.path().extension().string();
        if (ext == ".pgm" || ext == ".npy") files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::vector<darkfield::PairedSample> out;
    int skipped = 0;
    for (const auto& f : files) {
        darkfield::PairedSample s;
        s.id = f.stem().string();
        s.split = darkfield::Split::kOod;
        try {
            s.attenuation = darkfield::read_image_file(f.string());
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping " << f.string() << ": " << e.what() << "\n";
            ++skipped;
            continue;
        }
        if (!darkfield::image_finite(s.attenuation)) {
            std::cerr << "warning: skipping " << f.string() << ": non-finite values\n";
            ++skipped;
            continue;
        }
        const double lo = darkfield::image_min(s.attenuation);
        const double hi = darkfield::image_max(s.attenuation);
        if (lo < 0.0 || hi > 1.0) {
            const double range = hi > lo ? hi - lo : 1.0;
            for (double& v : s.attenuation.data) v = (v - lo) / range;
        }
        out.push_back(std::move(s));
    }
    if (out.empty()) {
        throw std::runtime_error("no readable inputs under " + dir +
                                 (skipped ? " (" + std::to_string(skipped) + " skipped)" : ""));
    }
    return out;
}

int cmd_generate(const std::string& config_path, const std::string& out_dir) {
    const json j = json::parse(darkfield::read_text_file(config_path));
    const darkfield::PhantomConfig cfg = darkfield::phantom_config_from_json(j);
    const std::optional<darkfield::SplitCounts> splits = darkfield::split_override_from_json(j);
    darkfield::write_phantom_dataset(out_dir, cfg, splits);

    json resolved{{"height", cfg.height},       {"width", cfg.width},
                  {"count", cfg.count},         {"sigma_lo", cfg.sigma_lo},
                  {"sigma_hi", cfg.sigma_hi},   {"confounder_prob", cfg.confounder_prob},
                  {"stripes", cfg.stripes},     {"texture_cells", cfg.texture_cells},
                  {"seed", cfg.seed}};
    if (splits) {
        resolved["splits"] = {{"train", splits->train}, {"val", splits->val}, {"test", splits->test}};
    }
    darkfield::write_run_manifest(out_dir, "generate-phantoms", resolved, {{"seed", cfg.seed}},
                                  {"attenuation/", "darkfield/", "noise_sigma/", "meta/manifest.json"});
    std::cout << "wrote " << cfg.count << " pairs under " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_dir, int stage, const std::string& resume) {
    const darkfield::RunConfig rc = darkfield::load_run_config(config_path);
    const std::vector<darkfield::PairedSample> data = darkfield::load_dataset(data_dir, rc.split_seed);

    darkfield::ProgressiveGenerator gen = [&] {
        if (resume.empty()) return darkfield::ProgressiveGenerator(rc.net);
        darkfield::CheckpointMeta meta;
        darkfield::ProgressiveGenerator g = darkfield::load_checkpoint(resume, &meta);
        if (darkfield::net_config_to_json(meta.net) != darkfield::net_config_to_json(rc.net)) {
            std::cerr << "warning: architecture from " << resume
                      << " overrides the config's network section\n";
        }
        return g;
    }();

    const json echo = darkfield::run_config_to_json(rc);
    std::vector<darkfield::StageTrainConfig> cfgs = darkfield::stage_configs(rc);
    // Single-stage runs reuse the per-stage schedule but need the stage count
    // from the loaded architecture, not the config file.
    const int n_stages = gen.config().stages;

    std::vector<darkfield::TrainReport> reports;
    if (stage == 0) {
        reports = darkfield::train_progressive(gen, data, cfgs, out_dir, echo);
    } else {
        if (stage < 1 || stage > n_stages) {
            throw std::runtime_error("--stage must be in 1.." + std::to_string(n_stages));
        }
        if (stage > static_cast<int>(cfgs.size())) {
            throw std::runtime_error("config describes fewer stages than the model");
        }
        darkfield::StageTrainConfig sc = cfgs[static_cast<size_t>(stage - 1)];
        darkfield::PatchDiscriminator disc(gen.config(), sc.seed + static_cast<uint64_t>(stage - 1));
        darkfield::write_text_file((fs::path(out_dir) / "config_echo.json").string(),
                                   echo.dump(2) + "\n");
        reports.push_back(darkfield::train_stage(gen, disc, data, sc, out_dir, echo));
        const darkfield::TrainReport& r = reports.back();
        json summary{{"stage", r.stage_index},
                     {"best_epoch", r.best_epoch},
                     {"best_val_nll", r.best_val_nll},
                     {"checkpoint", r.checkpoint_path},
                     {"wall_seconds", r.wall_seconds}};
        darkfield::write_text_file(
            (fs::path(out_dir) / ("stage" + std::to_string(r.stage_index) + "_summary.json")).string(),
            summary.dump(2) + "\n");
    }

    // One comparison panel per trained stage on the first validation pair.
    std::vector<std::string> artifacts{"config_echo.json"};
    const darkfield::PairedSample* val = nullptr;
    for (const auto& s : data) {
        if (s.split == darkfield::Split::kVal) {
            val = &s;
            break;
        }
    }
    fs::create_directories(fs::path(out_dir) / "previews");
    for (const auto& r : reports) {
        const std::string tag = "stage" + std::to_string(r.stage_index);
        artifacts.push_back("checkpoints/" + tag + "_best.ckpt");
        artifacts.push_back("logs/" + tag + "_steps.jsonl");
        artifacts.push_back("logs/" + tag + "_epochs.jsonl");
        artifacts.push_back(tag + "_summary.json");
        if (val != nullptr) {
            darkfield::UncertaintyBundle b = darkfield::stage_infer(
                gen, val->attenuation, r.stage_index, 4, sample_seed(rc.infer_seed, val->id));
            const std::string panel = "previews/" + tag + "_val.ppm";
            darkfield::render_panel((fs::path(out_dir) / panel).string(), val->attenuation, b);
            artifacts.push_back(panel);
        }
    }

    darkfield::write_run_manifest(out_dir, "train", echo,
                                  {{"train_seed", rc.train_seed},
                                   {"split_seed", rc.split_seed},
                                   {"init_seed", rc.net.init_seed},
                                   {"infer_seed", rc.infer_seed}},
                                  artifacts);
    for (const auto& r : reports) {
        std::cout << "stage " << r.stage_index << ": best epoch " << r.best_epoch
                  << ", val nll " << r.best_val_nll << ", " << r.wall_seconds << "s\n";
    }
    return 0;
}

int cmd_infer(const std::string& ckpt_path, const std::string& input_dir,
              const std::string& out_dir, int passes, uint64_t seed, int stage) {
    darkfield::CheckpointMeta meta;
    darkfield::ProgressiveGenerator gen = darkfield::load_checkpoint(ckpt_path, &meta);
    const int n_stages = gen.config().stages;
    const int k = stage == 0 ? n_stages : stage;
    if (k < 1 || k > n_stages) {
        throw std::runtime_error("--stage must be in 1.." + std::to_string(n_stages));
    }
    if (passes < 1) throw std::runtime_error("--passes must be >= 1");

    const std::vector<darkfield::PairedSample> inputs = load_infer_inputs(input_dir);
    fs::create_directories(out_dir);
    std::vector<std::string> artifacts;
    for (const auto& s : inputs) {
        const uint64_t s_seed = sample_seed(seed, s.id);
        darkfield::UncertaintyBundle b = darkfield::stage_infer(gen, s.attenuation, k, passes, s_seed);
        darkfield::BundleMeta bm;
        bm.passes = passes;
        bm.seed = s_seed;
        bm.stage = k;
        bm.model_checksum = darkfield::hex64(gen.checksum());
        darkfield::save_bundle((fs::path(out_dir) / s.id).string(), b, bm);
        darkfield::render_panel((fs::path(out_dir) / (s.id + "_panel.ppm")).string(),
                                s.attenuation, b);
        artifacts.push_back(s.id + "/");
        artifacts.push_back(s.id + "_panel.ppm");
        std::cout << s.id << ": " << s.attenuation.height << "x" << s.attenuation.width
                  << ", stage " << k << ", " << passes << " passes\n";
    }

    darkfield::write_run_manifest(out_dir, "infer",
                                  {{"checkpoint", ckpt_path},
                                   {"stage", k},
                                   {"passes", passes},
                                   {"model_checksum", darkfield::hex64(gen.checksum())}},
                                  {{"seed", seed}, {"per_image", "mixed with the input id"}},
                                  artifacts);
    return 0;
}

int cmd_evaluate(const std::vector<std::string>& ckpts, const std::string& data_dir,
                 const std::string& out_dir, int passes, uint64_t seed, uint64_t split_seed,
                 const std::string& split_sel) {
    if (passes < 1) throw std::runtime_error("--passes must be >= 1");
    const std::vector<darkfield::PairedSample> data = darkfield::load_dataset(data_dir, split_seed);
    std::vector<const darkfield::PairedSample*> eval_set;
    for (const auto& s : data) {
        if (split_sel != "all" && darkfield::split_name(s.split) != split_sel) continue;
        if (!s.darkfield) continue;
        eval_set.push_back(&s);
    }
    if (eval_set.empty()) {
        throw std::runtime_error("no pairs in split '" + split_sel + "' under " + data_dir);
    }

    // One table row per (checkpoint, stage): a single checkpoint is scored at
    // every stage of its cascade; multiple checkpoints are scored once each
    // at the stage they were trained through.
    struct Row {
        int stage;
        std::string ckpt;
    };
    std::vector<Row> plan;
    std::vector<darkfield::MetricsReport> rows;
    json row_meta = json::array();
    for (const auto& path : ckpts) {
        darkfield::CheckpointMeta meta;
        darkfield::ProgressiveGenerator gen = darkfield::load_checkpoint(path, &meta);
        std::vector<int> stages;
        if (ckpts.size() == 1) {
            for (int k = 1; k <= gen.config().stages; ++k) stages.push_back(k);
        } else {
            stages.push_back(meta.config_echo.value("trained_through_stage", gen.config().stages));
        }
        for (int k : stages) {
            std::vector<std::pair<darkfield::Image2D, darkfield::Image2D>> pairs;
            for (const auto* s : eval_set) {
                darkfield::UncertaintyBundle b = darkfield::stage_infer(
                    gen, s->attenuation, k, passes, sample_seed(seed, s->id));
                pairs.emplace_back(std::move(b.prediction), *s->darkfield);
            }
            rows.push_back(darkfield::stage_report(pairs, k));
            row_meta.push_back({{"stage", k},
                                {"checkpoint", path},
                                {"model_checksum", darkfield::hex64(gen.checksum())}});
        }
    }
    // Keep the table ordered by stage regardless of argument order.
    std::vector<size_t> order(rows.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return rows[a].stage < rows[b].stage; });
    std::vector<darkfield::MetricsReport> sorted;
    json sorted_meta = json::array();
    for (size_t i : order) {
        sorted.push_back(std::move(rows[i]));
        sorted_meta.push_back(row_meta[i]);
    }

    fs::create_directories(out_dir);
    const std::string table = darkfield::report_table(sorted);
    darkfield::write_text_file((fs::path(out_dir) / "report.txt").string(), table);
    darkfield::write_text_file((fs::path(out_dir) / "report.jsonl").string(),
                               darkfield::emit_reports(sorted));
    darkfield::write_run_manifest(out_dir, "evaluate",
                                  {{"checkpoints", ckpts},
                                   {"split", split_sel},
                                   {"passes", passes},
                                   {"pairs", eval_set.size()},
                                   {"rows", sorted_meta}},
                                  {{"seed", seed}, {"split_seed", split_seed}},
                                  {"report.txt", "report.jsonl"});
    std::cout << table;
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    if (const char* dev = std::getenv("DARKFIELD_DEVICE")) {
        if (std::string(dev) != "cpu" && std::string(dev)[0] != '\0') {
            std::cerr << "error: DARKFIELD_DEVICE=" << dev
                      << " is not available; only \"cpu\" is supported\n";
            return 2;
        }
    }

    CLI::App app{"paired attenuation -> dark-field translation with uncertainty maps"};
    app.require_subcommand(1);

    std::string gen_config, gen_out;
    CLI::App* c_gen = app.add_subcommand("generate-phantoms", "write a synthetic paired dataset");
    c_gen->add_option("config", gen_config, "generator settings (json)")->required();
    c_gen->add_option("out", gen_out, "output dataset directory")->required();

    std::string tr_config, tr_data, tr_out, tr_resume;
    int tr_stage = 0;
    CLI::App* c_tr = app.add_subcommand("train", "train the stage cascade");
    c_tr->add_option("config", tr_config, "run settings (json)")->required();
    c_tr->add_option("data", tr_data, "paired dataset directory")->required();
    c_tr->add_option("out", tr_out, "run directory")->required();
    c_tr->add_option("--stage", tr_stage, "train only this stage (default: all in order)");
    c_tr->add_option("--resume", tr_resume, "initialize weights from a checkpoint");

    std::string in_ckpt, in_dir, in_out;
    int in_passes = 20, in_stage = 0;
    uint64_t in_seed = 1234;
    CLI::App* c_in = app.add_subcommand("infer", "run stochastic inference on a directory of images");
    c_in->add_option("checkpoint", in_ckpt, "model file")->required();
    c_in->add_option("input", in_dir, "directory of .pgm/.npy images")->required();
    c_in->add_option("out", in_out, "output directory")->required();
    c_in->add_option("--passes", in_passes, "stochastic passes per image (default 20)");
    c_in->add_option("--seed", in_seed, "base seed for the pass noise");
    c_in->add_option("--stage", in_stage, "run through this stage (default: final)");

    std::vector<std::string> ev_ckpts;
    std::string ev_data, ev_out, ev_split = "test";
    int ev_passes = 20;
    uint64_t ev_seed = 1234, ev_split_seed = 20;
    CLI::App* c_ev = app.add_subcommand("evaluate", "score checkpoints against paired data");
    c_ev->add_option("data", ev_data, "paired dataset directory")->required();
    c_ev->add_option("out", ev_out, "output directory")->required();
    c_ev->add_option("--checkpoint", ev_ckpts, "model file (repeatable)")->required();
    c_ev->add_option("--passes", ev_passes, "stochastic passes per image (default 20)");
    c_ev->add_option("--seed", ev_seed, "base seed for the pass noise");
    c_ev->add_option("--split-seed", ev_split_seed, "split shuffle seed for manifest-less datasets");
    c_ev->add_option("--split", ev_split, "train|val|test|all (default test)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (app.got_subcommand(c_gen)) return cmd_generate(gen_config, gen_out);
        if (app.got_subcommand(c_tr)) return cmd_train(tr_config, tr_data, tr_out, tr_stage, tr_resume);
        if (app.got_subcommand(c_in))
            return cmd_infer(in_ckpt, in_dir, in_out, in_passes, in_seed, in_stage);
        if (app.got_subcommand(c_ev))
            return cmd_evaluate(ev_ckpts, ev_data, ev_out, ev_passes, ev_seed, ev_split_seed,
                                ev_split);
    } catch (const darkfield::TrainingAbort& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 2;  // unreachable with require_subcommand(1)
}
