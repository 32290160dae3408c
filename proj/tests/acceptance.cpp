// Acceptance suite: one PASS/FAIL line per criterion, with the measured margin.
// Usage: acceptance [criterion numbers...]   (default: all)

#include <omp.h>
#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>

#include "grad_cases.hpp"
#include "metric_oracles.hpp"
#include "sama/checkpoint.hpp"
#include "sama/model.hpp"
#include "sama/synth.hpp"
#include "sama/train.hpp"

using namespace sama;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os << std::setprecision(prec) << v;
    return os.str();
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

int run_cli(const std::string& args) {
    const std::string cmd = std::string(SAMA_CLI_PATH) + " " + args + " >/dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

const std::vector<std::string> kFrozen(kFrozenPrefixes.begin(), kFrozenPrefixes.end());

ModelConfig small_model(std::uint64_t seed) {
    TrainConfig t;
    t.seed = seed;
    return t.model_config();
}

// ---------------------------------------------------------------------------

Outcome gradient_suite() {
    const auto t0 = Clock::now();
    double worst = 0;
    std::string worst_case;
    std::size_t runs = 0, failures = 0;
    for (const auto& cases : {test::op_grad_cases(), test::loss_grad_cases()})
        for (const auto& c : cases)
            for (int seed = 0; seed < test::kGradSeeds; ++seed) {
                const auto res = test::run_grad_case(c, seed);
                ++runs;
                failures += !res.ok();
                if (res.max_rel_error >= worst) {
                    worst = res.max_rel_error;
                    worst_case = c.name;
                }
            }
    const double secs = seconds_since(t0);
    return {failures == 0 && secs < 60.0, std::to_string(runs) + " checks, " + std::to_string(failures) +
                                              " failed, worst rel err " + fmt(worst) + " (" + worst_case + ", tol 1e-4), " +
                                              fmt(secs, 3) + " s (limit 60 s)"};
}

Outcome compositing_law() {
    double worst = 0;
    std::size_t samples = 0, hard_pixels = 0, hard_mismatch = 0;
    for (std::size_t size : {64u, 96u, 128u})
        for (std::uint64_t seed = 0; seed < (size == 64 ? 200u : 20u); ++seed) {
            const auto s = synth::generate_sample(seed, size);
            const std::size_t n = size * size;
            for (std::size_t c = 0; c < 3; ++c)
                for (std::size_t i = 0; i < n; ++i) {
                    const double a = s.alpha.data()[i], f = s.fg.data()[c * n + i], b = s.bg.data()[c * n + i];
                    const double img = s.image.data()[c * n + i];
                    worst = std::max(worst, std::abs(img - (a * f + (1 - a) * b)));
                    if (a == 0.0 || a == 1.0) {
                        ++hard_pixels;
                        hard_mismatch += img != (a == 1.0 ? f : b);
                    }
                }
            ++samples;
        }
    Rng rng(3);
    const Tensor fg = test::random_tensor(rng, {3, 8, 8}, 0, 1), bg = test::random_tensor(rng, {3, 8, 8}, 0, 1);
    const bool ones = test::bit_equal(synth::composite(fg, bg, Tensor({1, 8, 8}, 1.0)).data(), fg.data());
    const bool zeros = test::bit_equal(synth::composite(fg, bg, Tensor({1, 8, 8}, 0.0)).data(), bg.data());
    return {worst <= 1e-12 && hard_mismatch == 0 && ones && zeros,
            std::to_string(samples) + " samples, max error " + fmt(worst) + " (limit 1e-12), " +
                std::to_string(hard_mismatch) + "/" + std::to_string(hard_pixels) + " hard-alpha pixels inexact"};
}

Outcome metric_oracles() {
    using namespace metrics;
    double worst_counts = 0;
    for (unsigned pb = 0; pb < 16; ++pb)
        for (unsigned gb = 0; gb < 16; ++gb) {
            const GrayImage p = test::from_bits(pb), g = test::from_bits(gb);
            const double tp = std::popcount(pb & gb), fp = std::popcount(pb & ~gb & 15u),
                         fn = std::popcount(~pb & gb & 15u), diff = std::popcount(pb ^ gb),
                         uni = std::popcount(pb | gb);
            const auto me = matting_errors(p, g);
            for (double e : {f_measure_max(p, g).f_max - test::f_from_counts(tp, fp, fn, 0.3), mae(p, g) - diff / 4,
                             miou(p, g) - (uni == 0 ? 1.0 : tp / uni), me.sad_raw - diff, me.mse_raw - diff / 4,
                             me.sad_k - diff / 1000, me.mse_k - diff / 4 * 1000})
                worst_counts = std::max(worst_counts, std::abs(e));
        }
    Rng rng(42);
    double worst_def = 0;
    for (int i = 0; i < 20; ++i) {
        const GrayImage gt = test::nondegenerate_binary(rng, 8, 8);
        const GrayImage pred = test::random_gray(rng, 8, 8);
        for (double e : {f_measure_weighted(pred, gt) - test::weighted_f_oracle(pred, gt),
                         s_measure(pred, gt) - test::s_measure_oracle(pred, gt),
                         e_measure(pred, gt) - test::e_measure_oracle(pred, gt)})
            worst_def = std::max(worst_def, std::abs(e));
    }
    return {worst_counts <= 1e-9 && worst_def < 1e-6, "256 pairs max dev " + fmt(worst_counts) +
                                                          " (limit 1e-9); 20 pairs max dev " + fmt(worst_def) +
                                                          " (limit 1e-6)"};
}

Outcome freeze_policy() {
    TrainConfig cfg;
    cfg.seed = 11;
    cfg.dataset_size = 2;
    cfg.batch_size = 1;
    cfg.max_steps = 10;
    Trainer t(cfg);
    const auto& store = t.model().params();
    const std::string frozen0 = serialize_params(store, kFrozen);
    std::size_t violations = 0, seg_steps = 0, matte_steps = 0;
    for (std::size_t i = 0; i < cfg.max_steps; ++i) {
        const Task next = scheduled_task(cfg.task_schedule, i);
        const std::string idle_prefix = next == Task::seg ? "head.matte." : "head.seg.";
        const std::string idle0 = serialize_params(store, {idle_prefix});
        t.step();
        violations += serialize_params(store, {idle_prefix}) != idle0;
        (next == Task::seg ? seg_steps : matte_steps)++;
    }
    const bool frozen_ok = serialize_params(store, kFrozen) == frozen0;
    return {frozen_ok && violations == 0 && seg_steps > 0 && matte_steps > 0,
            std::string("frozen stand-in ") + (frozen_ok ? "byte-identical" : "CHANGED") + " after 10 steps (" +
                std::to_string(frozen0.size()) + " bytes); idle head changed on " + std::to_string(violations) +
                " of " + std::to_string(cfg.max_steps) + " steps"};
}

Outcome shape_laws() {
    std::vector<std::string> bad;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) bad.push_back(what);
    };
    SamaModel model(small_model(1));
    const std::size_t c = model.config().encoder.embed_dim;
    for (std::size_t s : {64u, 96u, 128u}) {
        const Tensor img({2, 3, s, s}, 0.25);
        const ViewSet v = crop_views(img);
        for (const auto& l : v.locals) expect(l.shape() == Shape{2, 3, s / 2, s / 2}, "crop " + std::to_string(s));
        if (s == 64) {
            const auto f = encode_views(v, model.encoder());
            expect(f.stacked.shape() == Shape{2, 4, c, s / 16, s / 16}, "F^L shape");
        }
    }
    const auto sample = synth::generate_sample(4, 64);
    const auto enc = model.encode(sample.image);
    std::size_t checked = 0;
    for (const char* mode : {"coarse_mask", "points:1", "box", "points:3", "points:10"}) {
        PromptSet p = synth::sample_prompts(sample.mask, 4, synth::PromptMode::parse(mode));
        if (std::string(mode) == "points:3") p.box = synth::tight_box(sample.mask);
        const std::size_t n = p.token_count();
        const auto pe = model.prompt_encoder().encode(p, 64, 64);
        expect((n == 0 ? !pe.tokens.defined() : pe.tokens.dim(0) == n), std::string("prompt tokens ") + mode);
        ForwardOptions opt;
        opt.keep_decode = true;
        const auto out = model.forward({&enc}, {&p}, opt);
        expect(out.decode[0].tokens.dim(0) == 7 + n, std::string("token length ") + mode);
        expect(out.seg.shape() == Shape{1, 1, 64, 64}, "seg head resolution");
        expect(out.matte.shape() == Shape{1, 1, 64, 64}, "matte head resolution");
        ++checked;
    }
    ParamStore store;
    Rng rng(2);
    const PredictionHead full_scale(store, Task::seg, 8, HeadConfig{64, 1024}, rng);
    const Tensor feats = test::random_tensor(rng, {1, 8, 64, 64});
    const Tensor out = full_scale.predict(feats, {test::random_tensor(rng, {1, 8})});
    expect(out.shape() == Shape{1, 1, 1024, 1024}, "1024 head");
    std::string detail = "crop at 64/96/128, F^L [2,4," + std::to_string(c) + ",4,4], tokens 7+N for N in {0,1,2,5,10}, " +
                         "heads 64x64 and 64->1024";
    for (const auto& b : bad) detail += "; FAILED " + b;
    return {bad.empty() && checked == 5, detail};
}

Outcome zero_adapter_equivalence() {
    TrainConfig cfg;
    cfg.seed = 5;
    cfg.dataset_size = 4;
    cfg.batch_size = 2;
    cfg.max_steps = 4;
    cfg.prompt_mode = "mixed";
    Trainer t(cfg);
    t.run();
    t.model().zero_adapters();
    std::size_t compared = 0, mismatched = 0;
    for (const auto& s : t.dataset()) {
        const auto full = t.model().forward({&s.encoded}, {&s.prompts});
        ForwardOptions base;
        base.baseline = true;
        const auto ref = t.model().forward({&s.encoded}, {&s.prompts}, base);
        mismatched += !test::bit_equal(full.seg.data(), ref.seg.data());
        mismatched += !test::bit_equal(full.matte.data(), ref.matte.data());
        compared += 2;
    }
    return {mismatched == 0, std::to_string(mismatched) + " of " + std::to_string(compared) +
                                 " outputs differ from the plain decode (trained model, mixed prompts)"};
}

Outcome overfit_smoke() {
    // Frozen after one calibration run; not to be retuned.
    constexpr double kMaxSegMae = 0.05, kMaxSadPerPixel = 0.05, kMaxLossRatio = 0.25, kMaxSeconds = 300;
    omp_set_num_threads(1);
    const auto t0 = Clock::now();
    TrainConfig cfg;
    cfg.seed = 7;
    cfg.dataset_size = 1;
    cfg.batch_size = 1;
    cfg.max_steps = 500;
    Trainer t(cfg);
    const auto records = t.run();
    const double secs = seconds_since(t0);

    const auto& s = t.dataset()[0];
    const auto pred = t.model().forward({&s.encoded}, {&s.prompts});
    const GrayImage seg = gray_from_tensor(select(pred.seg, 0)), matte = gray_from_tensor(select(pred.matte, 0));
    const double seg_mae = metrics::mae(seg, gray_from_tensor(s.seg_target));
    const double sad_n =
        metrics::matting_errors(matte, gray_from_tensor(s.matte_target)).sad_raw / static_cast<double>(matte.size());

    double worst_ratio = 0;
    std::string ratios;
    for (Task task : {Task::seg, Task::matte}) {
        double first = -1, last = -1;
        for (const auto& r : records)
            if (r.task == task) {
                if (first < 0) first = r.loss.total;
                last = r.loss.total;
            }
        const double ratio = last / first;
        worst_ratio = std::max(worst_ratio, ratio);
        ratios += std::string(task_name(task)) + " " + fmt(first) + "->" + fmt(last) + " ";
    }
    const bool ok = seg_mae < kMaxSegMae && sad_n < kMaxSadPerPixel && worst_ratio < kMaxLossRatio &&
                    secs < kMaxSeconds && records.size() <= 500;
    return {ok, "seg MAE " + fmt(seg_mae) + " (<0.05), SAD/N " + fmt(sad_n) + " (<0.05), loss " + ratios +
                    "worst final/initial " + fmt(worst_ratio) + " (<0.25), " + fmt(secs, 3) + " s on 1 thread (<300)"};
}

Outcome determinism() {
    const fs::path dir = fs::temp_directory_path() / "sama_acceptance_det";
    fs::remove_all(dir);
    fs::create_directories(dir);
    const std::string d = dir.string();
    if (run_cli("synth --out-dir " + d + "/data --count 4 --seed 9") != 0) return {false, "synth failed"};
    std::ofstream(dir / "cfg.json") << R"({"seed": 9, "dataset_size": 2, "batch_size": 1, "max_steps": 6, )"
                                    << R"("checkpoint_path": ")" << d << R"(/m.ckpt", "log_path": ")" << d
                                    << R"(/log.jsonl"})";
    std::vector<std::string> logs, ckpts, json, csv;
    for (int run = 0; run < 2; ++run) {
        if (run_cli("train --config " + d + "/cfg.json") != 0) return {false, "train failed"};
        logs.push_back(slurp(dir / "log.jsonl"));
        ckpts.push_back(slurp(dir / "m.ckpt"));
        if (run_cli("eval --pred " + d + "/data/alpha --gt " + d + "/data/mask --task seg --json " + d +
                    "/r.json --csv " + d + "/r.csv") != 0)
            return {false, "eval failed"};
        json.push_back(slurp(dir / "r.json"));
        csv.push_back(slurp(dir / "r.csv"));
    }
    const bool ok = !logs[0].empty() && !json[0].empty() && logs[0] == logs[1] && json[0] == json[1] &&
                    csv[0] == csv[1] && ckpts[0] == ckpts[1];
    return {ok, std::string("train log ") + (logs[0] == logs[1] ? "identical" : "DIFFERS") + " (" +
                    std::to_string(logs[0].size()) + " bytes), checkpoint " + (ckpts[0] == ckpts[1] ? "identical" : "DIFFERS") +
                    ", eval JSON " + (json[0] == json[1] ? "identical" : "DIFFERS") + " (" +
                    std::to_string(json[0].size()) + " bytes), CSV " + (csv[0] == csv[1] ? "identical" : "DIFFERS")};
}

double worst_row_sum_error(const AttentionProbe& p) {
    double worst = 0;
    for (const auto& w : p.weights)
        for (std::size_t r = 0; r < w.dim(0); ++r) {
            double s = 0;
            for (std::size_t c = 0; c < w.dim(1); ++c) s += w.at({r, c});
            worst = std::max(worst, std::abs(s - 1.0));
        }
    return worst;
}

Outcome residual_attention_invariants() {
    TrainConfig cfg;
    cfg.seed = 13;
    cfg.dataset_size = 4;
    cfg.batch_size = 2;
    cfg.max_steps = 2;
    cfg.prompt_mode = "mixed";
    Trainer t(cfg);
    t.run();
    const SamaModel& model = t.model();
    std::size_t passes = 0, residual_violations = 0;
    double worst_rows = 0, worst_uniform = 0;
    for (const auto& s : t.dataset()) {
        std::vector<std::vector<AdapterProbe>> probes;
        ForwardOptions opt;
        opt.keep_decode = true;
        opt.probes = &probes;
        const auto out = model.forward({&s.encoded}, {&s.prompts}, opt);
        const auto& dec = out.decode[0];
        for (std::size_t r = 0; r < dec.rounds.size(); ++r) {
            const auto& f = dec.decoder_features[r].data();
            const auto& round = dec.rounds[r];
            for (std::size_t i = 0; i < f.size(); ++i) {
                const double o = round.out.data()[i], c = round.confidence.data()[i];
                residual_violations += std::bit_cast<std::uint64_t>(o) != std::bit_cast<std::uint64_t>(f[i] + c);
                residual_violations += std::abs((o - f[i]) - c) > std::abs(o) * 0x1p-52;
            }
            ++passes;
        }
        for (const auto& p : probes[0]) worst_rows = std::max({worst_rows, worst_row_sum_error(p.stage1),
                                                               worst_row_sum_error(p.stage2)});
        for (std::size_t m = 0; m < kViews; ++m) {
            AttentionProbe probe;
            const auto pooled = pool_multiscale(reshape(s.encoded.global, {1, s.encoded.global.dim(0), 4, 4}),
                                                model.mvle().receptive_fields());
            model.mvle().localize_view(m, s.encoded.locals[m], select(pooled.region(m), 0), &probe);
            worst_rows = std::max(worst_rows, worst_row_sum_error(probe));
        }
    }
    // Uniform values: every key/value row is the same vector v.
    Rng rng(17);
    const std::size_t dim = model.config().encoder.embed_dim;
    std::vector<const Attention*> attns;
    for (std::size_t r = 0; r < kDecodeRounds; ++r) {
        attns.push_back(&model.adapter(r).stage1());
        attns.push_back(&model.adapter(r).stage2());
    }
    for (std::size_t m = 0; m < kViews; ++m) attns.push_back(&model.mvle().attention(m));
    for (const Attention* a : attns) {
            const auto v = test::random_values(rng, dim);
            std::vector<double> rows;
            for (int i = 0; i < 6; ++i) rows.insert(rows.end(), v.begin(), v.end());
            const Tensor kv({6, dim}, rows);
            AttentionProbe probe;
            attend(*a, test::random_tensor(rng, {5, dim}), kv, kv, &probe);
            const Tensor want = matmul(Tensor({1, dim}, v), a->wv);
            for (std::size_t q = 0; q < 5; ++q)
                for (std::size_t c = 0; c < dim; ++c)
                    worst_uniform = std::max(worst_uniform, std::abs(probe.pre_projection.at({q, c}) - want.at({0, c})));
    }
    const bool ok = passes > 0 && residual_violations == 0 && worst_rows <= 1e-9 && worst_uniform <= 1e-12;
    return {ok, std::to_string(passes) + " adapter passes, " + std::to_string(residual_violations) +
                    " residual-law violations; worst softmax row error " + fmt(worst_rows) +
                    " (limit 1e-9); uniform-value deviation " + fmt(worst_uniform)};
}

}  // namespace

int main(int argc, char** argv) {
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria{
        {"gradient suite", gradient_suite},
        {"compositing law", compositing_law},
        {"metric oracle equivalence", metric_oracles},
        {"freeze policy", freeze_policy},
        {"shape laws", shape_laws},
        {"zero-adapter equivalence", zero_adapter_equivalence},
        {"overfit smoke test", overfit_smoke},
        {"determinism", determinism},
        {"residual and attention invariants", residual_attention_invariants},
    };
    std::set<std::size_t> only;
    for (int i = 1; i < argc; ++i) only.insert(std::strtoul(argv[i], nullptr, 10));

    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (!only.empty() && !only.count(i + 1)) continue;
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::cout << "AC" << i + 1 << " " << criteria[i].first << ": " << (o.pass ? "PASS" : "FAIL") << " | "
                  << o.detail << std::endl;
    }
    std::cout << (failed ? std::to_string(failed) + " criteria failed" : std::string("all criteria passed"))
              << std::endl;
    return failed ? 1 : 0;
}
