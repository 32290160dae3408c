#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "sama/image.hpp"
#include "sama/metrics.hpp"
#include "sama/model.hpp"

namespace sama {

// Process exit codes of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitBadPrompts = 2;
inline constexpr int kExitBadDims = 3;
inline constexpr int kExitNoPairs = 4;

struct DimensionError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};
struct EmptyIntersection : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InferOutput {
    GrayImage seg, matte;
};

// One forward pass producing both maps. Throws DimensionError unless the image
// is image_size x image_size (which is a multiple of 32).
InferOutput infer(const SamaModel& model, const RgbImage& image, const PromptSet& prompts, bool baseline = false);

// Pairs equally named PNGs of two directories and scores them. Names present in
// only one directory are skipped and counted as warnings.
metrics::MetricReport evaluate_dirs(const std::filesystem::path& pred_dir, const std::filesystem::path& gt_dir,
                                    Task task, std::vector<std::string>* warnings = nullptr);

struct SweepRow {
    std::size_t k;
    double miou;
};

// Mean mIoU of the seg output over `count` synthetic samples (seeds derived as
// in training from `seed`) prompted with k foreground points.
std::vector<SweepRow> sweep_points(const SamaModel& model, const std::vector<std::size_t>& ks, std::uint64_t seed,
                                   std::size_t count);
std::string sweep_csv(const std::vector<SweepRow>& rows);

}  // namespace sama
