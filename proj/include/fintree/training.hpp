#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "fintree/backbone.hpp"
#include "fintree/data.hpp"
#include "fintree/modeling.hpp"
#include "fintree/schema.hpp"

namespace fintree {

struct TrainConfig {
    double learning_rate = 1e-5;
    std::size_t batch_size = 8;
    std::size_t epochs = 5;
    std::size_t max_len = 1536;
    double warmup_fraction = 0.06;
    std::size_t awp_start_epoch = 3; // 1-based; epochs + 1 disables AWP
    double awp_lr = 1e-4;
    double awp_eps = 1e-2;
    std::uint64_t seed = 42;
    double weight_decay = 0.01;
    double max_grad_norm = 1.0; // 0 disables clipping
    double head_dropout = 0.1;
    bool use_pi = true;
    bool use_mcpp_eval = true;
    std::optional<std::filesystem::path> use_fp_checkpoint;

    // Throws ConfigError naming the first offending field.
    void validate() const;
    bool awp_enabled() const noexcept { return awp_start_epoch <= epochs; }

    nlohmann::json to_json() const;
    static TrainConfig from_json(const nlohmann::json& j);
};

// Linear warm-up from 0 to peak over [0, warmup_steps], then half-cosine decay to 0 at total_steps.
double lr_at_step(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double peak);

// One independent, seeded stream per source of randomness.
struct RandomSources {
    std::uint64_t seed = 0;
    std::mt19937_64 shuffle;
    std::mt19937_64 init;
    std::mt19937_64 dropout;
    std::mt19937_64 masking;
};

RandomSources set_seed(std::uint64_t seed);

struct AWPState {
    std::vector<std::pair<std::string, Matrix>> saved_params;
    bool perturbed = false;
};

// Moves each weight matrix p by awp_lr * |p| * g / |g| (skipped when g == 0),
// clipped to an awp_eps * |p| ball around its original value.
void awp_perturb(const ParameterList& params, double awp_lr, double awp_eps, AWPState& state);
// Puts back the snapshots bit-for-bit and clears the state.
void awp_restore(const ParameterList& params, AWPState& state);

// Full adversarial step: perturb, run loss_and_backward (which accumulates
// gradients at the perturbed weights), restore. Returns the adversarial loss.
double awp_step(const ParameterList& params, const std::function<double()>& loss_and_backward, double awp_lr,
                double awp_eps, AWPState& state);

struct StepEvent {
    std::size_t step = 0;
    std::size_t epoch = 0;
    double loss = 0.0;
    double lr = 0.0;
    std::optional<double> adversarial_loss;
};

struct EpochEvent {
    std::size_t epoch = 0;
    double mean_loss = 0.0;
    std::size_t awp_steps = 0;
    std::optional<double> micro_f1;
    std::optional<double> macro_f1;
    std::optional<double> weighted_f1;
};

struct TrainingLog {
    std::uint64_t seed = 0;
    std::vector<StepEvent> steps;
    std::vector<EpochEvent> epochs;
    std::optional<std::size_t> best_epoch;

    std::size_t total_awp_steps() const;
    std::string to_jsonl() const;
};

struct FinetuneOptions {
    // When set, the best-dev checkpoint and train_log.jsonl are written here.
    std::optional<std::filesystem::path> out_dir;
    std::function<void(const StepEvent&)> on_step;
    std::function<void(const EpochEvent&)> on_epoch;
};

// Cross-entropy fine-tuning with AdamW, warm-up + cosine schedule, and AWP from
// cfg.awp_start_epoch on. The model ends at its best dev-micro-F1 epoch (ties
// go to the later epoch), or at the last epoch when dev is empty.
TrainingLog finetune(const Dataset& train, const Dataset& dev, RelationModel& model, const CompatibilityTable& table,
                     const TrainConfig& cfg, const FinetuneOptions& options = {});

} // namespace fintree
