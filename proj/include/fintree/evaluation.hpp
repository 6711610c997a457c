#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fintree/data.hpp"
#include "fintree/modeling.hpp"
#include "fintree/schema.hpp"
#include "fintree/training.hpp"

namespace fintree {

struct ClassScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct EvalReport {
    std::map<std::string, ClassScore> per_class;
    double micro_f1 = 0.0;
    double macro_f1 = 0.0;
    double weighted_f1 = 0.0;
    std::size_t n = 0;
    nlohmann::json run_meta = nlohmann::json::object();

    nlohmann::json to_json() const;
};

struct PredictionSet {
    std::vector<std::string> ids;
    std::vector<std::size_t> labels;
    std::optional<std::vector<std::vector<double>>> probs;
    std::optional<std::uint64_t> seed; // nullopt for ensembles
    // Number of predictions that went through the MCPP constraint mask.
    std::size_t constrained = 0;

    std::size_t size() const noexcept { return ids.size(); }
};

// Per-class precision/recall/F1 from confusion counts, plus micro (global
// counts, equal to accuracy), macro (mean over classes with gold support) and
// support-weighted F1. Prediction order may differ from gold order.
EvalReport f1_scores(const PredictionSet& preds, const Dataset& gold, const LabelRegistry& registry);

// Majority vote per instance. Ties: highest summed probability among the tied
// labels (when every run carries probabilities), then lowest class index.
PredictionSet hard_vote(const std::vector<PredictionSet>& runs);

PredictionSet predict_dataset(const RelationModel& model, const Dataset& ds, const CompatibilityTable& table,
                              bool use_mcpp, std::optional<std::uint64_t> seed = std::nullopt);

// JSONL {id, label, probs?}; labels are raw label strings.
std::string to_jsonl(const PredictionSet& preds, const LabelRegistry& registry);
PredictionSet parse_predictions(std::string_view jsonl, const LabelRegistry& registry);
PredictionSet load_predictions(const std::filesystem::path& path, const LabelRegistry& registry);
// Registry of the labels seen in prediction files, in order of first appearance.
LabelRegistry infer_registry(const std::vector<std::filesystem::path>& paths);

enum class AblationToggle { mcpp, fp, pi, awp };

std::string_view to_string(AblationToggle toggle) noexcept;
// Comma-separated, case-insensitive; result is deduplicated in MCPP, FP, PI, AWP order.
std::vector<AblationToggle> parse_toggles(std::string_view text);
// Base config with one strategy switched off.
TrainConfig ablate(const TrainConfig& base, AblationToggle toggle);

struct AblationRow {
    std::string name;
    TrainConfig config;
    EvalReport report;
    double delta_micro = 0.0;
    double delta_macro = 0.0;
    double delta_weighted = 0.0;
    std::size_t constraint_mask_calls = 0;
};

struct AblationTable {
    std::vector<AblationRow> rows;
    nlohmann::json to_json() const;
};

using ModelFactory = std::function<RelationModel(const TrainConfig&)>;

// Row 0 is the full model; one row per toggle follows with deltas against row 0.
AblationTable run_ablation(const TrainConfig& base, const std::vector<AblationToggle>& toggles, const Dataset& train,
                           const Dataset& dev, const CompatibilityTable& table, const ModelFactory& factory);

} // namespace fintree
