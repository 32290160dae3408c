#include "sama/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "sama/ops.hpp"

namespace sama {

using nlohmann::json;

namespace {

template <typename T>
T field(const json& j, const char* key, const char* expected) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config field '") + key + "': expected " + expected);
    }
}

std::size_t size_field(const json& j, const char* key) {
    const auto& v = j.at(key);
    if (!v.is_number_unsigned()) throw ConfigError(std::string("config field '") + key + "': expected a non-negative integer");
    return v.get<std::size_t>();
}

Schedule parse_schedule(const std::string& s) {
    if (s == "alternate") return Schedule::alternate;
    if (s == "seg") return Schedule::seg;
    if (s == "matte") return Schedule::matte;
    throw ConfigError("config field 'task_schedule': expected alternate, seg or matte, got '" + s + "'");
}

void parse_weights(const json& j, LossWeights& w) {
    if (!j.is_object()) throw ConfigError("config field 'loss_weights': expected an object");
    const std::pair<const char*, double*> keys[] = {{"bce", &w.bce}, {"iou", &w.iou},           {"ssim_seg", &w.ssim_seg},
                                                   {"l1", &w.l1},   {"ssim_mat", &w.ssim_mat}, {"grad", &w.grad},
                                                   {"laplacian", &w.laplacian}};
    for (const auto& [k, v] : j.items()) {
        auto it = std::find_if(std::begin(keys), std::end(keys), [&](const auto& p) { return k == p.first; });
        if (it == std::end(keys)) throw ConfigError("config field 'loss_weights." + k + "': unknown key");
        if (!v.is_number() || v.get<double>() < 0.0)
            throw ConfigError("config field 'loss_weights." + k + "': expected a non-negative number");
        *it->second = v.get<double>();
    }
}

}  // namespace

TrainConfig TrainConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    TrainConfig c;
    for (const auto& [key, value] : j.items()) {
        const char* k = key.c_str();
        if (key == "seed") c.seed = field<std::uint64_t>(j, k, "an unsigned integer");
        else if (key == "image_size") c.image_size = size_field(j, k);
        else if (key == "embed_dim") c.embed_dim = size_field(j, k);
        else if (key == "heads") c.heads = size_field(j, k);
        else if (key == "encoder_depth") c.encoder_depth = size_field(j, k);
        else if (key == "early_block") c.early_block = size_field(j, k);
        else if (key == "lr") {
            if (!value.is_number()) throw ConfigError("config field 'lr': expected a number");
            c.lr = value.get<double>();
        } else if (key == "batch_size") c.batch_size = size_field(j, k);
        else if (key == "max_steps") c.max_steps = size_field(j, k);
        else if (key == "task_schedule") c.task_schedule = parse_schedule(field<std::string>(j, k, "a string"));
        else if (key == "output_resolution") c.output_resolution = size_field(j, k);
        else if (key == "checkpoint_path") c.checkpoint_path = field<std::string>(j, k, "a string");
        else if (key == "log_path") c.log_path = field<std::string>(j, k, "a string");
        else if (key == "dataset_size") c.dataset_size = size_field(j, k);
        else if (key == "prompt_mode") c.prompt_mode = field<std::string>(j, k, "a string");
        else if (key == "pool_receptive_fields") {
            if (!value.is_array()) throw ConfigError("config field 'pool_receptive_fields': expected an array");
            c.pool_receptive_fields.clear();
            for (const auto& v : value) {
                if (!v.is_number_unsigned())
                    throw ConfigError("config field 'pool_receptive_fields': expected positive integers");
                c.pool_receptive_fields.push_back(v.get<std::size_t>());
            }
        } else if (key == "laplacian_levels") c.laplacian_levels = size_field(j, k);
        else if (key == "loss_weights") parse_weights(value, c.loss_weights);
        else if (key == "zero_adapters") c.zero_adapters = field<bool>(j, k, "a boolean");
        else throw ConfigError("config field '" + key + "': unknown key");
    }
    c.validate();
    return c;
}

TrainConfig TrainConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json(ss.str());
}

std::string TrainConfig::to_json() const {
    nlohmann::ordered_json j;
    j["seed"] = seed;
    j["image_size"] = image_size;
    j["embed_dim"] = embed_dim;
    j["heads"] = heads;
    j["encoder_depth"] = encoder_depth;
    j["early_block"] = early_block;
    j["lr"] = lr;
    j["batch_size"] = batch_size;
    j["max_steps"] = max_steps;
    j["task_schedule"] = schedule_name(task_schedule);
    j["output_resolution"] = output_resolution;
    j["checkpoint_path"] = checkpoint_path;
    j["log_path"] = log_path;
    j["dataset_size"] = dataset_size;
    j["prompt_mode"] = prompt_mode;
    j["pool_receptive_fields"] = pool_receptive_fields;
    j["laplacian_levels"] = laplacian_levels;
    j["loss_weights"] = {{"bce", loss_weights.bce},       {"iou", loss_weights.iou},   {"ssim_seg", loss_weights.ssim_seg},
                         {"l1", loss_weights.l1},         {"ssim_mat", loss_weights.ssim_mat},
                         {"grad", loss_weights.grad},     {"laplacian", loss_weights.laplacian}};
    j["zero_adapters"] = zero_adapters;
    return j.dump();
}

void TrainConfig::validate() const {
    if (!(lr > 0.0) || !std::isfinite(lr)) throw ConfigError("config field 'lr': must be a finite value > 0");
    if (image_size == 0 || image_size % 32 != 0)
        throw ConfigError("config field 'image_size': must be a positive multiple of 32");
    if (batch_size == 0) throw ConfigError("config field 'batch_size': must be >= 1");
    if (dataset_size == 0) throw ConfigError("config field 'dataset_size': must be >= 1");
    if (laplacian_levels == 0) throw ConfigError("config field 'laplacian_levels': must be >= 1");
    if (output_resolution % (std::size_t{1} << laplacian_levels) != 0)
        throw ConfigError("config field 'laplacian_levels': output_resolution must be divisible by 2^levels");
    if (embed_dim == 0 || heads == 0 || embed_dim % heads != 0 || embed_dim % 2 != 0)
        throw ConfigError("config field 'embed_dim': must be even and divisible by heads");
    if (encoder_depth == 0) throw ConfigError("config field 'encoder_depth': must be >= 1");
    if (early_block == 0 || early_block > encoder_depth)
        throw ConfigError("config field 'early_block': must lie in [1, encoder_depth]");
    if (pool_receptive_fields.empty() ||
        std::any_of(pool_receptive_fields.begin(), pool_receptive_fields.end(), [](std::size_t r) { return r == 0; }))
        throw ConfigError("config field 'pool_receptive_fields': must be a non-empty list of positive sizes");
    try {
        HeadConfig{image_size / kPatchStride, output_resolution}.up_stages();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config field 'output_resolution': ") + e.what());
    }
    try {
        prompt_mode_for(prompt_mode, 0);
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("config field 'prompt_mode': ") + e.what());
    }
}

ModelConfig TrainConfig::model_config() const {
    ModelConfig m;
    m.seed = seed;
    m.image_size = image_size;
    m.output_resolution = output_resolution;
    m.encoder.embed_dim = embed_dim;
    m.encoder.heads = heads;
    m.encoder.depth = encoder_depth;
    m.encoder.early_block = early_block;
    m.receptive_fields = pool_receptive_fields;
    return m;
}

LossOptions TrainConfig::loss_options() const {
    LossOptions o;
    o.weights = loss_weights;
    o.laplacian_levels = laplacian_levels;
    return o;
}

const char* schedule_name(Schedule s) {
    switch (s) {
        case Schedule::alternate: return "alternate";
        case Schedule::seg: return "seg";
        case Schedule::matte: return "matte";
    }
    return "";
}

Task scheduled_task(Schedule s, std::size_t step) {
    if (s == Schedule::seg) return Task::seg;
    if (s == Schedule::matte) return Task::matte;
    return step % 2 == 0 ? Task::seg : Task::matte;
}

// ---------------------------------------------------------------------------

Adam::Adam(ParamStore& store, const AdamConfig& cfg) : cfg_(cfg) {
    for (const auto& e : store.entries()) {
        if (!e.trainable) continue;
        names_.push_back(e.name);
        slots_.push_back({e.value, std::vector<double>(e.value.numel(), 0.0), std::vector<double>(e.value.numel(), 0.0), 0});
    }
}

void Adam::step(const std::vector<std::string>& skip_prefixes) {
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        auto& s = slots_[i];
        const bool skipped = std::any_of(skip_prefixes.begin(), skip_prefixes.end(),
                                         [&](const std::string& p) { return names_[i].rfind(p, 0) == 0; });
        if (skipped || !s.param.has_grad()) continue;
        ++s.updates;
        const double c1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(s.updates));
        const double c2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(s.updates));
        const auto g = s.param.grad();
        auto p = s.param.mutable_data();
        for (std::size_t k = 0; k < p.size(); ++k) {
            s.m[k] = cfg_.beta1 * s.m[k] + (1.0 - cfg_.beta1) * g[k];
            s.v[k] = cfg_.beta2 * s.v[k] + (1.0 - cfg_.beta2) * g[k] * g[k];
            p[k] -= cfg_.lr * (s.m[k] / c1) / (std::sqrt(s.v[k] / c2) + cfg_.eps);
        }
    }
}

std::vector<AdamMoments> Adam::state() const {
    std::vector<AdamMoments> out;
    for (std::size_t i = 0; i < slots_.size(); ++i) out.push_back({names_[i], slots_[i].updates, slots_[i].m, slots_[i].v});
    return out;
}

void Adam::load_state(const std::vector<AdamMoments>& moments) {
    if (moments.size() != slots_.size()) throw CheckpointError("optimizer state does not match the parameter set");
    for (std::size_t i = 0; i < slots_.size(); ++i) {
        if (moments[i].name != names_[i] || moments[i].m.size() != slots_[i].m.size())
            throw CheckpointError("optimizer state mismatch at " + names_[i]);
        slots_[i].m = moments[i].m;
        slots_[i].v = moments[i].v;
        slots_[i].updates = moments[i].updates;
    }
}

void assert_optimizer_covers_trainable(const ParamStore& store, const Adam& opt) {
    const auto trainable = store.trainable_names();
    const std::set<std::string> want(trainable.begin(), trainable.end());
    const std::set<std::string> have(opt.names().begin(), opt.names().end());
    if (want != have || have.size() != opt.names().size())
        throw ContractError("optimizer parameter set differs from the trainable parameter set");
    for (const auto& n : have)
        for (const char* prefix : kFrozenPrefixes)
            if (n.rfind(prefix, 0) == 0) throw ContractError("frozen parameter " + n + " is registered for updates");
}

// ---------------------------------------------------------------------------

std::uint64_t sample_seed(std::uint64_t base, std::size_t index) {
    std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (static_cast<std::uint64_t>(index) + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

synth::PromptMode prompt_mode_for(const std::string& mode, std::size_t index) {
    if (mode != "mixed") return synth::PromptMode::parse(mode);
    static const char* cycle[] = {"box", "points:3", "noisy_box", "coarse_mask"};
    return synth::PromptMode::parse(cycle[index % 4]);
}

std::vector<TrainSample> build_dataset(const SamaModel& model, const TrainConfig& cfg) {
    std::vector<TrainSample> out;
    const std::size_t r = cfg.output_resolution;
    NoGradGuard guard;
    for (std::size_t i = 0; i < cfg.dataset_size; ++i) {
        TrainSample s;
        const std::uint64_t seed = sample_seed(cfg.seed, i);
        s.data = synth::generate_sample(seed, cfg.image_size);
        s.prompts = synth::sample_prompts(s.data.mask, seed ^ 0x5A5A5A5A5A5A5A5Aull, prompt_mode_for(cfg.prompt_mode, i));
        s.encoded = model.encode(s.data.image);
        s.seg_target = r == cfg.image_size ? s.data.mask : bilinear_resize(s.data.mask, r, r).detach();
        s.matte_target = r == cfg.image_size ? s.data.alpha : bilinear_resize(s.data.alpha, r, r).detach();
        out.push_back(std::move(s));
    }
    return out;
}

std::string StepRecord::json_line() const {
    nlohmann::ordered_json j;
    j["step"] = step;
    j["task"] = task_name(task);
    j["bce"] = loss.bce;
    j["iou"] = loss.iou;
    j["ssim_seg"] = loss.ssim_seg;
    j["l1"] = loss.l1;
    j["ssim_mat"] = loss.ssim_mat;
    j["grad"] = loss.grad;
    j["laplacian"] = loss.laplacian;
    j["seg_total"] = loss.seg_total;
    j["matting_total"] = loss.matting_total;
    j["total"] = loss.total;
    return j.dump();
}

Trainer::Trainer(const TrainConfig& cfg) : cfg_(cfg), model_((cfg.validate(), cfg.model_config())), adam_(model_.params(), {cfg.lr}) {
    if (cfg_.zero_adapters) model_.zero_adapters();
    assert_optimizer_covers_trainable(model_.params(), adam_);
    data_ = build_dataset(model_, cfg_);
}

StepRecord Trainer::step() {
    const Task task = scheduled_task(cfg_.task_schedule, step_);
    std::vector<const EncodedImage*> images;
    std::vector<const PromptSet*> prompts;
    std::vector<Tensor> targets;
    for (std::size_t j = 0; j < cfg_.batch_size; ++j) {
        const auto& s = data_[(step_ * cfg_.batch_size + j) % data_.size()];
        images.push_back(&s.encoded);
        prompts.push_back(&s.prompts);
        targets.push_back(task == Task::seg ? s.seg_target : s.matte_target);
    }
    ForwardOptions fo;
    fo.want_seg = task == Task::seg;
    fo.want_matte = task == Task::matte;
    const auto pred = model_.forward(images, prompts, fo);
    const auto loss = composite_loss(task, task == Task::seg ? pred.seg : pred.matte, stack(targets), cfg_.loss_options());

    model_.params().zero_grad();
    loss.total.backward();
    adam_.step({task == Task::seg ? "head.matte." : "head.seg."});
    return {step_++, task, loss.parts};
}

std::vector<StepRecord> Trainer::run(std::ostream* log) {
    std::vector<StepRecord> records;
    while (step_ < cfg_.max_steps) {
        records.push_back(step());
        if (log) *log << records.back().json_line() << '\n';
    }
    if (log) log->flush();
    return records;
}

Checkpoint Trainer::checkpoint() const {
    Checkpoint c = snapshot(model_.params(), cfg_.to_json(), step_);
    c.optimizer = adam_.state();
    return c;
}

LoadedModel load_model(const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    LoadedModel out;
    out.config = TrainConfig::from_json(ckpt.config_json);
    out.model = std::make_unique<SamaModel>(out.config.model_config());
    restore(out.model->params(), ckpt);
    out.step = ckpt.step;
    return out;
}

}  // namespace sama
