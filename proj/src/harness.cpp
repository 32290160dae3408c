#include "sama/harness.hpp"

#include <algorithm>
#include <cstdio>
#include <set>

#include "sama/ops.hpp"
#include "sama/synth.hpp"
#include "sama/train.hpp"

namespace sama {

InferOutput infer(const SamaModel& model, const RgbImage& image, const PromptSet& prompts, bool baseline) {
    const std::size_t s = model.config().image_size;
    if (image.h % 32 || image.w % 32)
        throw DimensionError("image is " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                             "; both sides must be divisible by 32");
    if (image.h != s || image.w != s)
        throw DimensionError("image is " + std::to_string(image.h) + "x" + std::to_string(image.w) +
                             " but the checkpoint was built for " + std::to_string(s) + "x" + std::to_string(s));
    prompts.validate(image.h, image.w);
    NoGradGuard guard;
    const EncodedImage enc = model.encode(to_tensor(image));
    ForwardOptions fo;
    fo.baseline = baseline;
    const auto pred = model.forward({&enc}, {&prompts}, fo);
    return {gray_from_tensor(pred.seg), gray_from_tensor(pred.matte)};
}

namespace {

std::set<std::string> png_names(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw std::runtime_error(dir.string() + " is not a directory");
    std::set<std::string> names;
    for (const auto& e : std::filesystem::directory_iterator(dir))
        if (e.is_regular_file() && e.path().extension() == ".png") names.insert(e.path().filename().string());
    return names;
}

}  // namespace

metrics::MetricReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                    Task task, std::vector<std::string>* warnings) {
    const auto pred = png_names(pred_dir);
    const auto gt = png_names(gt_dir);
    std::vector<std::string> skipped, notes;
    for (const auto& n : pred)
        if (!gt.count(n)) skipped.push_back(n), notes.push_back(n + " has no ground truth; skipped");
    for (const auto& n : gt)
        if (!pred.count(n)) skipped.push_back(n), notes.push_back(n + " has no prediction; skipped");
    std::vector<metrics::MaskPair> pairs;
    for (const auto& n : pred)
        if (gt.count(n)) pairs.push_back({read_gray_png(pred_dir / n), read_gray_png(gt_dir / n), n});
    if (pairs.empty()) throw EmptyIntersection("no equally named PNGs in " + pred_dir.string() + " and " + gt_dir.string());
    auto report = metrics::evaluate(std::move(pairs), task);
    std::sort(skipped.begin(), skipped.end());
    report.skipped = skipped;
    report.warnings = notes.size();
    if (warnings) *warnings = notes;
    return report;
}

std::vector<SweepRow> sweep_points(const SamaModel& model, const std::vector<std::size_t>& ks, std::uint64_t seed,
                                   std::size_t count) {
    NoGradGuard guard;
    const std::size_t size = model.config().image_size;
    std::vector<synth::SynthSample> samples;
    std::vector<EncodedImage> encoded;
    for (std::size_t i = 0; i < count; ++i) {
        samples.push_back(synth::generate_sample(sample_seed(seed, i), size));
        encoded.push_back(model.encode(samples.back().image));
    }
    std::vector<SweepRow> rows;
    for (std::size_t k : ks) {
        double total = 0.0;
        for (std::size_t i = 0; i < count; ++i) {
            const PromptSet prompts = synth::sample_prompts(samples[i].mask, samples[i].seed ^ (0xC0FFEEull + k),
                                                            {synth::PromptMode::Kind::points, k});
            const auto pred = model.forward({&encoded[i]}, {&prompts}, {.want_matte = false});
            const GrayImage gt = gray_from_tensor(samples[i].mask);
            total += metrics::miou(resize_bilinear(gray_from_tensor(pred.seg), gt.h, gt.w), gt);
        }
        rows.push_back({k, count ? total / static_cast<double>(count) : 0.0});
    }
    return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
    std::string out = "k,miou\n";
    char buf[64];
    for (const auto& row : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%.10g\n", row.k, row.miou);
        out += buf;
    }
    return out;
}

}  // namespace sama
