#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

#include "sama/checkpoint.hpp"
#include "sama/model.hpp"
#include "sama/objectives.hpp"
#include "sama/synth.hpp"

namespace sama {

enum class Schedule { alternate, seg, matte };

struct TrainConfig {
    std::uint64_t seed = 0;
    std::size_t image_size = 64;
    std::size_t embed_dim = 32;
    std::size_t heads = 4;
    std::size_t encoder_depth = 2;
    std::size_t early_block = 1;
    double lr = 5e-4;
    std::size_t batch_size = 2;
    std::size_t max_steps = 500;
    Schedule task_schedule = Schedule::alternate;
    std::size_t output_resolution = 64;
    std::string checkpoint_path = "sama.ckpt";
    std::string log_path = "train_log.jsonl";
    std::size_t dataset_size = 8;
    std::string prompt_mode = "box";  // a PromptMode string, or "mixed"
    std::vector<std::size_t> pool_receptive_fields{4, 8, 16};
    std::size_t laplacian_levels = 3;
    LossWeights loss_weights;
    bool zero_adapters = false;

    // Unknown keys and ill-typed or out-of-range values raise ConfigError
    // naming the offending field.
    static TrainConfig from_json(const std::string& text);
    static TrainConfig load(const std::filesystem::path& path);
    std::string to_json() const;
    void validate() const;

    ModelConfig model_config() const;
    LossOptions loss_options() const;
};

const char* schedule_name(Schedule s);
Task scheduled_task(Schedule s, std::size_t step);

struct AdamConfig {
    double lr = 5e-4, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
};

/// Adam over the trainable parameters of a store. Each parameter keeps its own
/// update count, so groups that sit out a step resume with correct bias
/// correction.
class Adam {
public:
    Adam(ParamStore& store, const AdamConfig& cfg);

    const std::vector<std::string>& names() const { return names_; }
    // Updates every parameter that has a gradient and is not under a skipped prefix.
    void step(const std::vector<std::string>& skip_prefixes = {});

    std::vector<AdamMoments> state() const;
    void load_state(const std::vector<AdamMoments>& moments);

private:
    struct Slot {
        Tensor param;
        std::vector<double> m, v;
        std::uint64_t updates = 0;
    };
    AdamConfig cfg_;
    std::vector<std::string> names_;
    std::vector<Slot> slots_;
};

// Throws ContractError unless the optimizer covers exactly the trainable set
// and nothing under a frozen prefix.
void assert_optimizer_covers_trainable(const ParamStore& store, const Adam& opt);

struct TrainSample {
    synth::SynthSample data;
    PromptSet prompts;
    EncodedImage encoded;
    Tensor seg_target;    // [1, R, R]
    Tensor matte_target;  // [1, R, R]
};

std::uint64_t sample_seed(std::uint64_t base, std::size_t index);
synth::PromptMode prompt_mode_for(const std::string& mode, std::size_t index);
std::vector<TrainSample> build_dataset(const SamaModel& model, const TrainConfig& cfg);

struct StepRecord {
    std::size_t step = 0;
    Task task = Task::seg;
    LossBreakdown loss;

    std::string json_line() const;
};

class Trainer {
public:
    explicit Trainer(const TrainConfig& cfg);

    StepRecord step();
    // Runs the remaining steps, writing one JSON line per step to `log` when given.
    std::vector<StepRecord> run(std::ostream* log = nullptr);

    std::size_t steps_done() const { return step_; }
    const TrainConfig& config() const { return cfg_; }
    SamaModel& model() { return model_; }
    const std::vector<TrainSample>& dataset() const { return data_; }
    Checkpoint checkpoint() const;

private:
    TrainConfig cfg_;
    SamaModel model_;
    Adam adam_;
    std::vector<TrainSample> data_;
    std::size_t step_ = 0;
};

// Restores a model from a checkpoint written by the trainer.
struct LoadedModel {
    TrainConfig config;
    std::unique_ptr<SamaModel> model;
    std::uint64_t step = 0;
};
LoadedModel load_model(const std::filesystem::path& path);

}  // namespace sama
