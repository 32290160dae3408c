#include "sama/metrics.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <cstdio>
#include <limits>

#include <json.hpp>

namespace sama::metrics {

namespace {

void require_same(const GrayImage& p, const GrayImage& g, const char* name) {
    if (p.h != g.h || p.w != g.w)
        throw ShapeError(std::string(name) + ": prediction " + std::to_string(p.h) + "x" + std::to_string(p.w) +
                         " vs ground truth " + std::to_string(g.h) + "x" + std::to_string(g.w));
}

std::vector<unsigned char> binarize(const GrayImage& g) {
    std::vector<unsigned char> b(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) b[i] = g.v[i] >= 0.5;
    return b;
}

double safe_div(double num, double den) { return den == 0.0 ? 0.0 : num / den; }

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

}  // namespace

FMeasure f_measure_max(const GrayImage& pred, const GrayImage& gt) {
    require_same(pred, gt, "f_measure_max");
    const auto g = binarize(gt);
    FMeasure out;
    for (std::size_t k = 0; k < kThresholds; ++k) {
        const double t = static_cast<double>(k) / 255.0;
        double tp = 0, fp = 0, fn = 0;
        for (std::size_t i = 0; i < g.size(); ++i) {
            const bool p = pred.v[i] > t;
            tp += p && g[i];
            fp += p && !g[i];
            fn += !p && g[i];
        }
        const double precision = safe_div(tp, tp + fp);
        const double recall = safe_div(tp, tp + fn);
        out.curve[k] = safe_div((1.0 + kFBeta2) * precision * recall, kFBeta2 * precision + recall);
        out.f_max = std::max(out.f_max, out.curve[k]);
    }
    return out;
}

namespace {

struct DistanceField {
    std::vector<double> dist;          // Euclidean distance to the nearest foreground pixel
    std::vector<std::size_t> nearest;  // flat index of that pixel
};

// Exact Euclidean distance transform; ties broken by (row, column).
DistanceField nearest_foreground(const std::vector<unsigned char>& fg, std::size_t h, std::size_t w) {
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::vector<std::size_t> col_row(h * w, none);
    for (std::size_t x = 0; x < w; ++x) {
        std::size_t last = none;
        for (std::size_t y = 0; y < h; ++y) {
            if (fg[y * w + x]) last = y;
            col_row[y * w + x] = last;
        }
        last = none;
        for (std::size_t y = h; y-- > 0;) {
            if (fg[y * w + x]) last = y;
            const std::size_t up = col_row[y * w + x];
            if (last != none && (up == none || last - y < y - up)) col_row[y * w + x] = last;
        }
    }
    DistanceField f{std::vector<double>(h * w), std::vector<std::size_t>(h * w)};
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            std::size_t best_d2 = none, best_r = 0, best_c = 0;
            for (std::size_t c = 0; c < w; ++c) {
                const std::size_t r = col_row[y * w + c];
                if (r == none) continue;
                const std::size_t dy = r > y ? r - y : y - r;
                const std::size_t dx = c > x ? c - x : x - c;
                const std::size_t d2 = dy * dy + dx * dx;
                if (d2 < best_d2 || (d2 == best_d2 && r < best_r)) best_d2 = d2, best_r = r, best_c = c;
            }
            f.dist[y * w + x] = std::sqrt(static_cast<double>(best_d2));
            f.nearest[y * w + x] = best_r * w + best_c;
        }
    }
    return f;
}

}  // namespace

double f_measure_weighted(const GrayImage& pred, const GrayImage& gt) {
    require_same(pred, gt, "f_measure_weighted");
    const std::size_t h = gt.h, w = gt.w, n = gt.size();
    const auto g = binarize(gt);
    if (std::none_of(g.begin(), g.end(), [](unsigned char b) { return b; })) return 0.0;

    std::vector<double> err(n);
    for (std::size_t i = 0; i < n; ++i) err[i] = std::abs(pred.v[i] - g[i]);
    const auto field = nearest_foreground(g, h, w);
    std::vector<double> spread(n);
    for (std::size_t i = 0; i < n; ++i) spread[i] = g[i] ? err[i] : err[field.nearest[i]];

    constexpr int r = 3;
    constexpr double sigma = 5.0;
    double kernel[2 * r + 1][2 * r + 1];
    double ksum = 0.0;
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) ksum += kernel[dy + r][dx + r] = std::exp(-(dx * dx + dy * dy) / (2 * sigma * sigma));
    for (auto& row : kernel)
        for (double& k : row) k /= ksum;

    double fp_w = 0.0, fg_err = 0.0, fg_count = 0.0;
    for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
            const std::size_t i = y * w + x;
            double ea = 0.0;
            for (int dy = -r; dy <= r; ++dy) {
                const long yy = static_cast<long>(y) + dy;
                if (yy < 0 || yy >= static_cast<long>(h)) continue;
                for (int dx = -r; dx <= r; ++dx) {
                    const long xx = static_cast<long>(x) + dx;
                    if (xx < 0 || xx >= static_cast<long>(w)) continue;
                    ea += kernel[dy + r][dx + r] * spread[yy * w + xx];
                }
            }
            const double e = (g[i] && ea < err[i]) ? ea : err[i];
            if (g[i]) {
                fg_err += e;
                fg_count += 1.0;
            } else {
                fp_w += e * (2.0 - std::exp(std::log(0.5) / 5.0 * field.dist[i]));
            }
        }
    }
    const double tp_w = fg_count - fg_err;
    const double recall = 1.0 - fg_err / fg_count;
    const double precision = tp_w / (tp_w + fp_w + kEps);
    return 2.0 * recall * precision / (recall + precision + kEps);
}

double mae(const GrayImage& pred, const GrayImage& gt) {
    require_same(pred, gt, "mae");
    double s = 0.0;
    for (std::size_t i = 0; i < gt.size(); ++i) s += std::abs(pred.v[i] - gt.v[i]);
    return s / static_cast<double>(gt.size());
}

namespace {

// 2m / (m^2 + 1 + sd) with m, sd the mean and sample deviation; a single value has sd = 0.
double object_similarity(const std::vector<double>& vals) {
    if (vals.empty()) return 0.0;
    const double n = static_cast<double>(vals.size());
    const double m = mean_of(vals);
    double ss = 0.0;
    for (double v : vals) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / std::max(n - 1.0, 1.0));
    return 2.0 * m / (m * m + 1.0 + sd + kEps);
}

struct Region {
    std::size_t y0, y1, x0, x1;
};

double region_ssim(const GrayImage& pred, const std::vector<unsigned char>& g, std::size_t w, const Region& r) {
    const std::size_t n = (r.y1 - r.y0) * (r.x1 - r.x0);
    if (n == 0) return 0.0;
    double mx = 0, my = 0;
    for (std::size_t y = r.y0; y < r.y1; ++y)
        for (std::size_t x = r.x0; x < r.x1; ++x) mx += pred.v[y * w + x], my += g[y * w + x];
    mx /= static_cast<double>(n);
    my /= static_cast<double>(n);
    double vx = 0, vy = 0, cxy = 0;
    for (std::size_t y = r.y0; y < r.y1; ++y) {
        for (std::size_t x = r.x0; x < r.x1; ++x) {
            const double dx = pred.v[y * w + x] - mx, dy = g[y * w + x] - my;
            vx += dx * dx;
            vy += dy * dy;
            cxy += dx * dy;
        }
    }
    const double denom = std::max(static_cast<double>(n) - 1.0, 1.0);
    vx /= denom;
    vy /= denom;
    cxy /= denom;
    const double a = 4.0 * mx * my * cxy;
    const double b = (mx * mx + my * my) * (vx + vy);
    if (a != 0.0) return a / (b + kEps);
    return b == 0.0 ? 1.0 : 0.0;
}

double round_half_even(double v) {
    const int mode = std::fegetround();
    std::fesetround(FE_TONEAREST);
    const double r = std::nearbyint(v);
    std::fesetround(mode);
    return r;
}

}  // namespace

double s_measure(const GrayImage& pred, const GrayImage& gt, double alpha) {
    require_same(pred, gt, "s_measure");
    const std::size_t h = gt.h, w = gt.w, n = gt.size();
    const auto g = binarize(gt);
    std::size_t fg_count = 0;
    double sx = 0, sy = 0;
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            if (g[y * w + x]) ++fg_count, sx += static_cast<double>(x), sy += static_cast<double>(y);
    if (fg_count == 0) return 1.0 - mean_of(pred.v);
    if (fg_count == n) return mean_of(pred.v);

    std::vector<double> fg_vals, bg_vals;
    for (std::size_t i = 0; i < n; ++i) (g[i] ? fg_vals : bg_vals).push_back(g[i] ? pred.v[i] : 1.0 - pred.v[i]);
    const double u = static_cast<double>(fg_count) / static_cast<double>(n);
    const double object = u * object_similarity(fg_vals) + (1.0 - u) * object_similarity(bg_vals);

    const auto cx = static_cast<std::size_t>(round_half_even(sx / static_cast<double>(fg_count))) + 1;
    const auto cy = static_cast<std::size_t>(round_half_even(sy / static_cast<double>(fg_count))) + 1;
    const double area = static_cast<double>(n);
    const double w1 = static_cast<double>(cx * cy) / area;
    const double w2 = static_cast<double>(cy * (w - cx)) / area;
    const double w3 = static_cast<double>((h - cy) * cx) / area;
    const double w4 = 1.0 - w1 - w2 - w3;
    const double region = w1 * region_ssim(pred, g, w, {0, cy, 0, cx}) + w2 * region_ssim(pred, g, w, {0, cy, cx, w}) +
                          w3 * region_ssim(pred, g, w, {cy, h, 0, cx}) + w4 * region_ssim(pred, g, w, {cy, h, cx, w});
    return std::max(alpha * object + (1.0 - alpha) * region, 0.0);
}

double e_measure(const GrayImage& pred, const GrayImage& gt) {
    require_same(pred, gt, "e_measure");
    const std::size_t n = gt.size();
    const auto g = binarize(gt);
    const auto fg_count = static_cast<std::size_t>(std::count(g.begin(), g.end(), 1));
    const double nd = static_cast<double>(n);
    const double g_mean = static_cast<double>(fg_count) / nd;
    double total = 0.0;
    for (std::size_t k = 0; k < kThresholds; ++k) {
        const double t = (static_cast<double>(k) + 0.5) / static_cast<double>(kThresholds);
        std::size_t on = 0;
        for (std::size_t i = 0; i < n; ++i) on += pred.v[i] >= t;
        double score = 0.0;
        if (fg_count == 0) {
            score = static_cast<double>(n - on);
        } else if (fg_count == n) {
            score = static_cast<double>(on);
        } else {
            const double p_mean = static_cast<double>(on) / nd;
            for (std::size_t i = 0; i < n; ++i) {
                const double fm = (pred.v[i] >= t ? 1.0 : 0.0) - p_mean;
                const double gm = g[i] - g_mean;
                const double align = 2.0 * fm * gm / (fm * fm + gm * gm + kEps);
                score += (align + 1.0) * (align + 1.0) / 4.0;
            }
        }
        total += score / nd;
    }
    return total / static_cast<double>(kThresholds);
}

MattingErrors matting_errors(const GrayImage& pred, const GrayImage& gt) {
    require_same(pred, gt, "matting_errors");
    MattingErrors e;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const double d = pred.v[i] - gt.v[i];
        e.sad_raw += std::abs(d);
        e.mse_raw += d * d;
    }
    e.mse_raw /= static_cast<double>(gt.size());
    e.sad_k = e.sad_raw / 1000.0;
    e.mse_k = e.mse_raw * 1000.0;
    return e;
}

double miou(const GrayImage& pred, const GrayImage& gt, double threshold) {
    require_same(pred, gt, "miou");
    std::size_t inter = 0, uni = 0;
    for (std::size_t i = 0; i < gt.size(); ++i) {
        const bool p = pred.v[i] >= threshold, g = gt.v[i] >= 0.5;
        inter += p && g;
        uni += p || g;
    }
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::string> metric_columns(Task task) {
    if (task == Task::seg) return {"f_max", "f_weighted", "mae", "s_measure", "e_measure", "miou"};
    return {"sad_raw", "mse_raw", "sad_k", "mse_k"};
}

namespace {

std::vector<double> score(const MaskPair& p, Task task) {
    const GrayImage pred = resize_bilinear(p.pred, p.gt.h, p.gt.w);
    if (task == Task::seg)
        return {f_measure_max(pred, p.gt).f_max, f_measure_weighted(pred, p.gt), mae(pred, p.gt),
                s_measure(pred, p.gt),           e_measure(pred, p.gt),          miou(pred, p.gt)};
    const auto e = matting_errors(pred, p.gt);
    return {e.sad_raw, e.mse_raw, e.sad_k, e.mse_k};
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

}  // namespace

MetricReport evaluate(std::vector<MaskPair> pairs, Task task) {
    std::stable_sort(pairs.begin(), pairs.end(), [](const MaskPair& a, const MaskPair& b) { return a.name < b.name; });
    MetricReport r;
    r.task = task;
    r.columns = metric_columns(task);
    r.per_image.resize(pairs.size());
    const auto count = static_cast<long>(pairs.size());
#pragma omp parallel for schedule(dynamic)
    for (long i = 0; i < count; ++i) r.per_image[i] = {pairs[i].name, score(pairs[i], task)};

    r.aggregate.assign(r.columns.size(), 0.0);
    for (const auto& img : r.per_image)
        for (std::size_t c = 0; c < r.columns.size(); ++c) r.aggregate[c] += img.values[c];
    for (double& a : r.aggregate) a = r.per_image.empty() ? 0.0 : a / static_cast<double>(r.per_image.size());
    return r;
}

std::string MetricReport::to_json() const {
    nlohmann::ordered_json j;
    j["task"] = task_name(task);
    auto& images = j["images"] = nlohmann::ordered_json::array();
    for (const auto& img : per_image) {
        nlohmann::ordered_json row;
        row["name"] = img.name;
        for (std::size_t c = 0; c < columns.size(); ++c) row[columns[c]] = img.values[c];
        images.push_back(std::move(row));
    }
    auto& agg = j["aggregate"];
    for (std::size_t c = 0; c < columns.size(); ++c) agg[columns[c]] = aggregate[c];
    j["counts"] = {{"images", per_image.size()}, {"skipped", skipped.size()}, {"warnings", warnings}};
    j["skipped"] = skipped;
    return j.dump(2) + "\n";
}

std::string MetricReport::to_csv() const {
    std::string out = "name";
    for (const auto& c : columns) out += "," + c;
    out += "\n";
    for (const auto& img : per_image) {
        out += img.name;
        for (double v : img.values) out += "," + fmt(v);
        out += "\n";
    }
    out += "aggregate";
    for (double v : aggregate) out += "," + fmt(v);
    out += "\n";
    return out;
}

}  // namespace sama::metrics
