#pragma once

#include <array>
#include <string>
#include <vector>

#include "sama/heads.hpp"
#include "sama/image.hpp"

namespace sama::metrics {

inline constexpr std::size_t kThresholds = 256;
inline constexpr double kFBeta2 = 0.3;
inline constexpr double kEps = 2.220446049250313e-16;

struct FMeasure {
    double f_max = 0.0;
    std::array<double, kThresholds> curve{};  // F at t = k / 255
};

// gt is binarized at 0.5 by every segmentation metric.
// pred is binarized with pred > k/255, so threshold 255 predicts nothing.
FMeasure f_measure_max(const GrayImage& pred, const GrayImage& gt);

// Weighted F-measure: errors spread by a 7x7 Gaussian (sigma 5), background
// errors weighted by distance to the object, beta^2 = 1. All-background gt -> 0.
double f_measure_weighted(const GrayImage& pred, const GrayImage& gt);

double mae(const GrayImage& pred, const GrayImage& gt);

// Structure measure, alpha * object + (1 - alpha) * region.
double s_measure(const GrayImage& pred, const GrayImage& gt, double alpha = 0.5);

// Enhanced alignment averaged over 256 binarizations of pred at t = (k + 0.5) / 256.
double e_measure(const GrayImage& pred, const GrayImage& gt);

struct MattingErrors {
    double sad_k = 0, mse_k = 0, sad_raw = 0, mse_raw = 0;
};
MattingErrors matting_errors(const GrayImage& pred, const GrayImage& gt);

// Intersection over union of pred >= threshold and gt >= 0.5; both empty -> 1.
double miou(const GrayImage& pred, const GrayImage& gt, double threshold = 0.5);

struct MaskPair {
    GrayImage pred, gt;
    std::string name;
};

struct ImageScores {
    std::string name;
    std::vector<double> values;  // parallel to MetricReport::columns
};

struct MetricReport {
    Task task = Task::seg;
    std::vector<std::string> columns;
    std::vector<ImageScores> per_image;  // sorted by name
    std::vector<double> aggregate;
    std::size_t warnings = 0;
    std::vector<std::string> skipped;

    std::string to_json() const;
    std::string to_csv() const;
};

std::vector<std::string> metric_columns(Task task);

// Scores every pair (pred resized to gt size first), in parallel, and
// aggregates by arithmetic mean in name order.
MetricReport evaluate(std::vector<MaskPair> pairs, Task task);

}  // namespace sama::metrics
