// Command-line front end: train, infer, eval, sweep-points, synth.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "sama/harness.hpp"
#include "sama/prompt_json.hpp"
#include "sama/synth.hpp"
#include "sama/train.hpp"

namespace fs = std::filesystem;
using namespace sama;

namespace {

void write_text(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
}

Task parse_task(const std::string& s) { return s == "seg" ? Task::seg : Task::matte; }

int cmd_train(const std::string& config_path) {
    const TrainConfig cfg = TrainConfig::load(config_path);
    const auto t0 = std::chrono::steady_clock::now();
    Trainer trainer(cfg);
    std::ofstream log;
    if (!cfg.log_path.empty()) {
        const fs::path lp(cfg.log_path);
        if (lp.has_parent_path()) fs::create_directories(lp.parent_path());
        log.open(lp, std::ios::binary | std::ios::trunc);
        if (!log) throw std::runtime_error("cannot write " + cfg.log_path);
    }
    while (trainer.steps_done() < cfg.max_steps) {
        const auto rec = trainer.step();
        if (log.is_open()) log << rec.json_line() << '\n';
        if ((rec.step + 1) % 50 == 0 || rec.step + 1 == cfg.max_steps)
            std::cerr << "step " << rec.step + 1 << "/" << cfg.max_steps << " " << task_name(rec.task)
                      << " loss " << rec.loss.total << '\n';
    }
    save_checkpoint(cfg.checkpoint_path, trainer.checkpoint());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "trained " << cfg.max_steps << " steps in " << secs << " s; checkpoint " << cfg.checkpoint_path << '\n';
    return kExitOk;
}

int cmd_infer(const std::string& image_path, const std::string& prompts_path, const std::string& ckpt,
              const std::string& out_dir, bool baseline) {
    PromptSet prompts;
    try {
        prompts = load_prompts(prompts_path);
    } catch (const PromptFormatError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitBadPrompts;
    }
    const auto loaded = load_model(ckpt);
    const RgbImage image = read_rgb_png(image_path);
    InferOutput out;
    try {
        out = infer(*loaded.model, image, prompts, baseline);
    } catch (const DimensionError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitBadDims;
    } catch (const ValidationError& e) {
        std::cerr << "error: invalid prompts: " << e.what() << '\n';
        return kExitBadPrompts;
    }
    fs::create_directories(out_dir);
    write_png(fs::path(out_dir) / "seg.png", out.seg);
    write_png(fs::path(out_dir) / "matte.png", out.matte);
    std::cout << "wrote " << (fs::path(out_dir) / "seg.png").string() << " and "
              << (fs::path(out_dir) / "matte.png").string() << '\n';
    return kExitOk;
}

int cmd_eval(const std::string& pred, const std::string& gt, const std::string& task, const std::string& json_path,
             const std::string& csv_path) {
    std::vector<std::string> warnings;
    metrics::MetricReport report;
    try {
        report = evaluate_dirs(pred, gt, parse_task(task), &warnings);
    } catch (const EmptyIntersection& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitNoPairs;
    }
    for (const auto& w : warnings) std::cerr << "warning: " << w << '\n';
    if (!json_path.empty()) write_text(json_path, report.to_json());
    if (!csv_path.empty()) write_text(csv_path, report.to_csv());
    std::cout << report.per_image.size() << " images scored, " << report.warnings << " warnings\n";
    for (std::size_t c = 0; c < report.columns.size(); ++c)
        std::cout << "  " << report.columns[c] << " = " << report.aggregate[c] << '\n';
    return kExitOk;
}

int cmd_sweep(const std::string& ckpt, const std::vector<std::size_t>& ks, std::optional<std::uint64_t> seed,
              std::optional<std::size_t> count, const std::string& out) {
    const auto loaded = load_model(ckpt);
    const auto rows = sweep_points(*loaded.model, ks, seed.value_or(loaded.config.seed),
                                   count.value_or(loaded.config.dataset_size));
    const std::string csv = sweep_csv(rows);
    if (out.empty()) std::cout << csv;
    else write_text(out, csv);
    return kExitOk;
}

int cmd_synth(const std::string& out_dir, std::size_t count, std::uint64_t seed, std::size_t size,
              const std::string& mode) {
    const fs::path dir(out_dir);
    for (const char* sub : {"images", "alpha", "mask", "prompts"}) fs::create_directories(dir / sub);
    for (std::size_t i = 0; i < count; ++i) {
        const auto s = synth::generate_sample(sample_seed(seed, i), size);
        const auto prompts = synth::sample_prompts(s.mask, s.seed ^ 0x5A5A5A5A5A5A5A5Aull, prompt_mode_for(mode, i));
        char name[32];
        std::snprintf(name, sizeof name, "%04zu", i);
        const std::string png = std::string(name) + ".png";
        write_png(dir / "images" / png, rgb_from_tensor(s.image));
        write_png(dir / "alpha" / png, gray_from_tensor(s.alpha));
        write_png(dir / "mask" / png, gray_from_tensor(s.mask));
        std::string mask_ref;
        if (prompts.coarse_mask) {
            mask_ref = std::string(name) + "_coarse.png";
            write_png(dir / "prompts" / mask_ref, gray_from_tensor(*prompts.coarse_mask));
        }
        write_text(dir / "prompts" / (std::string(name) + ".json"), prompts_to_json(prompts, mask_ref));
    }
    std::cout << "wrote " << count << " samples to " << out_dir << '\n';
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Promptable segmentation and matting toolkit"};
    app.require_subcommand(1);

    std::string config;
    auto* train = app.add_subcommand("train", "Train the adapter modules on synthetic data");
    train->add_option("--config", config, "JSON training configuration")->required()->check(CLI::ExistingFile);

    std::string image, prompts, ckpt, out_dir;
    bool baseline = false;
    auto* infer_cmd = app.add_subcommand("infer", "Predict segmentation and matte for one image");
    infer_cmd->add_option("--image", image, "RGB PNG")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--prompts", prompts, "prompt JSON")->required();
    infer_cmd->add_option("--ckpt", ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    infer_cmd->add_option("--out-dir", out_dir, "output directory")->required();
    infer_cmd->add_flag("--baseline", baseline, "decode without the localization modules");

    std::string pred_dir, gt_dir, task = "seg", json_out, csv_out;
    auto* eval = app.add_subcommand("eval", "Score predicted PNGs against ground truth");
    eval->add_option("--pred", pred_dir, "prediction directory")->required();
    eval->add_option("--gt", gt_dir, "ground-truth directory")->required();
    eval->add_option("--task", task, "seg or matte")->check(CLI::IsMember({"seg", "matte"}));
    eval->add_option("--json", json_out, "JSON report path");
    eval->add_option("--csv", csv_out, "CSV table path");

    std::string sweep_ckpt, sweep_out;
    std::vector<std::size_t> ks{1, 3, 5, 10};
    std::optional<std::uint64_t> sweep_seed;
    std::optional<std::size_t> sweep_count;
    auto* sweep = app.add_subcommand("sweep-points", "mIoU against the number of point prompts");
    sweep->add_option("--ckpt", sweep_ckpt, "checkpoint")->required()->check(CLI::ExistingFile);
    sweep->add_option("--ks", ks, "point counts")->delimiter(',')->check(CLI::PositiveNumber);
    sweep->add_option("--seed", sweep_seed, "test-set seed (default: training seed)");
    sweep->add_option("--count", sweep_count, "test-set size (default: training dataset size)");
    sweep->add_option("--out", sweep_out, "CSV path (default: stdout)");

    std::string synth_dir, synth_mode = "box";
    std::size_t synth_count = 8, synth_size = 64;
    std::uint64_t synth_seed = 0;
    auto* synth_cmd = app.add_subcommand("synth", "Write synthetic samples and prompts");
    synth_cmd->add_option("--out-dir", synth_dir, "output directory")->required();
    synth_cmd->add_option("--count", synth_count, "number of samples");
    synth_cmd->add_option("--seed", synth_seed, "base seed");
    synth_cmd->add_option("--size", synth_size, "image side, a multiple of 32");
    synth_cmd->add_option("--prompt-mode", synth_mode, "box, noisy_box, coarse_mask, points:<k> or mixed");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) return cmd_train(config);
        if (*infer_cmd) return cmd_infer(image, prompts, ckpt, out_dir, baseline);
        if (*eval) return cmd_eval(pred_dir, gt_dir, task, json_out, csv_out);
        if (*sweep) return cmd_sweep(sweep_ckpt, ks, sweep_seed, sweep_count, sweep_out);
        if (*synth_cmd) return cmd_synth(synth_dir, synth_count, synth_seed, synth_size, synth_mode);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitFailure;
}
