#include "fintree/training.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>

#include "fintree/errors.hpp"
#include "fintree/evaluation.hpp"
#include "fintree/optim.hpp"
#include "fintree/strings.hpp"

namespace fintree {

void TrainConfig::validate() const {
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("learning_rate", "must be a positive finite number");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size", "must be at least 1");
    }
    if (max_len < 2) {
        throw ConfigError("max_len", "must be at least 2");
    }
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
        throw ConfigError("warmup_fraction", "must lie in [0, 1]");
    }
    if (awp_start_epoch < 1 || awp_start_epoch > epochs + 1) {
        throw ConfigError("awp_start_epoch", "must lie in [1, epochs + 1] (epochs + 1 disables AWP)");
    }
    if (!(awp_lr >= 0.0)) {
        throw ConfigError("awp_lr", "must be non-negative");
    }
    if (!(awp_eps >= 0.0)) {
        throw ConfigError("awp_eps", "must be non-negative");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("weight_decay", "must be non-negative");
    }
    if (!(max_grad_norm >= 0.0)) {
        throw ConfigError("max_grad_norm", "must be non-negative");
    }
    if (!(head_dropout >= 0.0 && head_dropout < 1.0)) {
        throw ConfigError("head_dropout", "must lie in [0, 1)");
    }
}

nlohmann::json TrainConfig::to_json() const {
    nlohmann::json j{{"learning_rate", learning_rate},
                     {"batch_size", batch_size},
                     {"epochs", epochs},
                     {"max_len", max_len},
                     {"warmup_fraction", warmup_fraction},
                     {"awp_start_epoch", awp_start_epoch},
                     {"awp_lr", awp_lr},
                     {"awp_eps", awp_eps},
                     {"seed", seed},
                     {"weight_decay", weight_decay},
                     {"max_grad_norm", max_grad_norm},
                     {"head_dropout", head_dropout},
                     {"use_pi", use_pi},
                     {"use_mcpp_eval", use_mcpp_eval}};
    j["use_fp_checkpoint"] = use_fp_checkpoint ? nlohmann::json(use_fp_checkpoint->string()) : nlohmann::json(nullptr);
    return j;
}

TrainConfig TrainConfig::from_json(const nlohmann::json& j) {
    TrainConfig c;
    const auto get = [&j](const char* key, auto& field) {
        if (!j.contains(key) || j.at(key).is_null()) {
            return;
        }
        try {
            field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(key, e.what());
        }
    };
    get("learning_rate", c.learning_rate);
    get("batch_size", c.batch_size);
    get("epochs", c.epochs);
    get("max_len", c.max_len);
    get("warmup_fraction", c.warmup_fraction);
    get("awp_start_epoch", c.awp_start_epoch);
    get("awp_lr", c.awp_lr);
    get("awp_eps", c.awp_eps);
    get("seed", c.seed);
    get("weight_decay", c.weight_decay);
    get("max_grad_norm", c.max_grad_norm);
    get("head_dropout", c.head_dropout);
    get("use_pi", c.use_pi);
    get("use_mcpp_eval", c.use_mcpp_eval);
    if (j.contains("use_fp_checkpoint") && !j.at("use_fp_checkpoint").is_null()) {
        c.use_fp_checkpoint = j.at("use_fp_checkpoint").get<std::string>();
    }
    return c;
}

double lr_at_step(std::size_t step, std::size_t total_steps, std::size_t warmup_steps, double peak) {
    if (!(peak > 0.0)) {
        throw std::domain_error("lr_at_step: peak must be positive");
    }
    if (step > total_steps) {
        throw std::domain_error("lr_at_step: step beyond total_steps");
    }
    if (warmup_steps > total_steps) {
        throw std::domain_error("lr_at_step: warmup_steps beyond total_steps");
    }
    if (step <= warmup_steps && warmup_steps > 0) {
        return peak * static_cast<double>(step) / static_cast<double>(warmup_steps);
    }
    if (total_steps == warmup_steps) {
        return peak;
    }
    const double progress =
        static_cast<double>(step - warmup_steps) / static_cast<double>(total_steps - warmup_steps);
    return peak * 0.5 * (1.0 + std::cos(std::numbers::pi * progress));
}

RandomSources set_seed(std::uint64_t seed) {
    const auto stream = [seed](std::uint32_t id) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U), id};
        return std::mt19937_64(seq);
    };
    return {seed, stream(1), stream(2), stream(3), stream(4)};
}

void awp_perturb(const ParameterList& params, double awp_lr, double awp_eps, AWPState& state) {
    if (state.perturbed) {
        throw StateError("awp_perturb called while weights are already perturbed");
    }
    state.saved_params.clear();
    for (Parameter* p : params) {
        if (!p->is_weight()) {
            continue;
        }
        state.saved_params.emplace_back(p->name, p->value);
        const double g_norm = p->grad.norm();
        if (g_norm == 0.0 || !std::isfinite(g_norm)) {
            continue;
        }
        const double p_norm = p->value.norm();
        Matrix delta = (awp_lr * p_norm) * (p->grad / g_norm);
        const double radius = awp_eps * p_norm;
        const double d_norm = delta.norm();
        if (d_norm > radius) {
            delta *= radius / d_norm;
        }
        p->value += delta;
    }
    state.perturbed = true;
}

void awp_restore(const ParameterList& params, AWPState& state) {
    if (!state.perturbed) {
        return;
    }
    std::size_t next = 0;
    for (Parameter* p : params) {
        if (next < state.saved_params.size() && state.saved_params[next].first == p->name) {
            p->value = state.saved_params[next].second;
            ++next;
        }
    }
    if (next != state.saved_params.size()) {
        throw StateError("awp_restore: parameter list differs from the one that was perturbed");
    }
    state.saved_params.clear();
    state.perturbed = false;
}

double awp_step(const ParameterList& params, const std::function<double()>& loss_and_backward, double awp_lr,
                double awp_eps, AWPState& state) {
    awp_perturb(params, awp_lr, awp_eps, state);
    double adversarial_loss = 0.0;
    try {
        adversarial_loss = loss_and_backward();
    } catch (...) {
        awp_restore(params, state);
        throw;
    }
    awp_restore(params, state);
    return adversarial_loss;
}

std::size_t TrainingLog::total_awp_steps() const {
    std::size_t total = 0;
    for (const auto& e : epochs) {
        total += e.awp_steps;
    }
    return total;
}

std::string TrainingLog::to_jsonl() const {
    std::string out;
    for (const auto& s : steps) {
        nlohmann::json j{{"step", s.step}, {"epoch", s.epoch}, {"loss", s.loss}, {"lr", s.lr}};
        if (s.adversarial_loss) {
            j["adv_loss"] = *s.adversarial_loss;
        }
        out += j.dump() + "\n";
    }
    for (const auto& e : epochs) {
        nlohmann::json j{{"epoch", e.epoch}, {"mean_loss", e.mean_loss}, {"awp_steps", e.awp_steps}};
        if (e.micro_f1) {
            j["micro_f1"] = *e.micro_f1;
            j["macro_f1"] = *e.macro_f1;
            j["weighted_f1"] = *e.weighted_f1;
        }
        out += j.dump() + "\n";
    }
    nlohmann::json summary{{"seed", seed}};
    summary["best_epoch"] = best_epoch ? nlohmann::json(*best_epoch) : nlohmann::json(nullptr);
    out += summary.dump() + "\n";
    return out;
}

namespace {

struct EncodedExample {
    PromptEncoding encoding;
    std::size_t gold = 0;
};

std::vector<EncodedExample> encode_labeled(const Dataset& ds, const RelationModel& model) {
    std::vector<EncodedExample> out;
    out.reserve(ds.size());
    for (const auto& inst : ds.instances) {
        if (!inst.relation) {
            throw MissingGold(inst.id);
        }
        const auto gold = model.registry.find(*inst.relation);
        if (!gold) {
            throw UnknownLabel(inst.id, *inst.relation);
        }
        out.push_back({model.encode(inst), *gold});
    }
    return out;
}

} // namespace

TrainingLog finetune(const Dataset& train, const Dataset& dev, RelationModel& model, const CompatibilityTable& table,
                     const TrainConfig& cfg, const FinetuneOptions& options) {
    cfg.validate();
    TrainingLog log;
    log.seed = cfg.seed;
    if (cfg.epochs == 0 || train.empty()) {
        return log;
    }

    model.prompt.max_len = cfg.max_len;
    model.prompt.use_markers = cfg.use_pi;
    model.head_dropout = cfg.head_dropout;

    RandomSources rng = set_seed(cfg.seed);
    const auto examples = encode_labeled(train, model);

    const std::size_t batches_per_epoch = (examples.size() + cfg.batch_size - 1) / cfg.batch_size;
    const std::size_t total_steps = batches_per_epoch * cfg.epochs;
    const auto warmup_steps = static_cast<std::size_t>(
        std::llround(cfg.warmup_fraction * static_cast<double>(total_steps)));

    AdamW optimizer(AdamWOptions{.weight_decay = cfg.weight_decay});
    AWPState awp_state;
    const ParameterList params = model.parameters();

    std::optional<RelationModel> best;
    double best_micro = -1.0;
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::size_t step = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng.shuffle);
        const bool awp_active = epoch >= cfg.awp_start_epoch;
        EpochEvent epoch_event;
        epoch_event.epoch = epoch;
        double loss_sum = 0.0;

        for (std::size_t b = 0; b < batches_per_epoch; ++b) {
            const std::size_t begin = b * cfg.batch_size;
            const std::size_t end = std::min(begin + cfg.batch_size, order.size());
            const double scale = 1.0 / static_cast<double>(end - begin);

            const auto run_batch = [&]() {
                double batch_loss = 0.0;
                for (std::size_t i = begin; i < end; ++i) {
                    const auto& ex = examples[order[i]];
                    batch_loss += relation_loss_backward(ex.encoding, ex.gold, *model.backbone, model.head,
                                                         model.head_dropout, &rng.dropout, scale);
                }
                return batch_loss * scale;
            };

            zero_grad(params);
            const double loss = run_batch();
            if (!std::isfinite(loss)) {
                throw NonFiniteLoss(step, loss);
            }
            StepEvent event;
            if (awp_active) {
                event.adversarial_loss = awp_step(params, run_batch, cfg.awp_lr, cfg.awp_eps, awp_state);
                ++epoch_event.awp_steps;
            }
            clip_grad_norm(params, cfg.max_grad_norm);
            const double lr = lr_at_step(step, total_steps, warmup_steps, cfg.learning_rate);
            optimizer.step(params, lr);

            event.step = step;
            event.epoch = epoch;
            event.loss = loss;
            event.lr = lr;
            log.steps.push_back(event);
            if (options.on_step) {
                options.on_step(event);
            }
            loss_sum += loss;
            ++step;
        }
        epoch_event.mean_loss = loss_sum / static_cast<double>(batches_per_epoch);

        if (!dev.empty()) {
            const PredictionSet preds = predict_dataset(model, dev, table, cfg.use_mcpp_eval, cfg.seed);
            const EvalReport report = f1_scores(preds, dev, model.registry);
            epoch_event.micro_f1 = report.micro_f1;
            epoch_event.macro_f1 = report.macro_f1;
            epoch_event.weighted_f1 = report.weighted_f1;
            if (report.micro_f1 >= best_micro) {
                best_micro = report.micro_f1;
                best = model.clone();
                log.best_epoch = epoch;
            }
        }
        log.epochs.push_back(epoch_event);
        if (options.on_epoch) {
            options.on_epoch(epoch_event);
        }
    }

    if (best) {
        model = std::move(*best);
    } else {
        log.best_epoch = cfg.epochs;
    }

    if (options.out_dir) {
        nlohmann::json extra{{"seed", cfg.seed}, {"train_config", cfg.to_json()}};
        save_checkpoint(model, *options.out_dir / "checkpoint", extra);
        write_file(*options.out_dir / "train_log.jsonl", log.to_jsonl());
    }
    return log;
}

} // namespace fintree
