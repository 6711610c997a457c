#include <algorithm>
#include <array>
#include <cctype>

#include "fintree/errors.hpp"
#include "fintree/evaluation.hpp"
#include "fintree/strings.hpp"

namespace fintree {

std::string_view to_string(AblationToggle toggle) noexcept {
    switch (toggle) {
    case AblationToggle::mcpp:
        return "mcpp";
    case AblationToggle::fp:
        return "fp";
    case AblationToggle::pi:
        return "pi";
    case AblationToggle::awp:
        return "awp";
    }
    return "unknown";
}

std::vector<AblationToggle> parse_toggles(std::string_view text) {
    constexpr std::array<AblationToggle, 4> order{AblationToggle::mcpp, AblationToggle::fp, AblationToggle::pi,
                                                  AblationToggle::awp};
    std::array<bool, 4> wanted{};
    std::string_view rest = text;
    while (!rest.empty()) {
        const auto comma = rest.find(',');
        const std::string item = to_lower(trim(rest.substr(0, comma)));
        rest = comma == std::string_view::npos ? std::string_view{} : rest.substr(comma + 1);
        if (item.empty()) {
            continue;
        }
        bool matched = false;
        for (std::size_t i = 0; i < order.size(); ++i) {
            if (item == to_string(order[i])) {
                wanted[i] = true;
                matched = true;
            }
        }
        if (!matched) {
            throw ConfigError("toggles", "unknown ablation toggle '" + item + "' (expected mcpp, fp, pi, awp)");
        }
    }
    std::vector<AblationToggle> out;
    for (std::size_t i = 0; i < order.size(); ++i) {
        if (wanted[i]) {
            out.push_back(order[i]);
        }
    }
    return out;
}

TrainConfig ablate(const TrainConfig& base, AblationToggle toggle) {
    TrainConfig cfg = base;
    switch (toggle) {
    case AblationToggle::mcpp:
        cfg.use_mcpp_eval = false;
        break;
    case AblationToggle::fp:
        cfg.use_fp_checkpoint.reset();
        break;
    case AblationToggle::pi:
        cfg.use_pi = false;
        break;
    case AblationToggle::awp:
        cfg.awp_start_epoch = cfg.epochs + 1;
        break;
    }
    return cfg;
}

nlohmann::json AblationTable::to_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& row : rows) {
        out.push_back({{"name", row.name},
                       {"micro_f1", row.report.micro_f1},
                       {"macro_f1", row.report.macro_f1},
                       {"weighted_f1", row.report.weighted_f1},
                       {"delta_micro", row.delta_micro},
                       {"delta_macro", row.delta_macro},
                       {"delta_weighted", row.delta_weighted},
                       {"constraint_mask_calls", row.constraint_mask_calls},
                       {"config", row.config.to_json()}});
    }
    return out;
}

namespace {

std::string row_name(AblationToggle toggle) {
    std::string name(to_string(toggle));
    std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
    return "-" + name;
}

AblationRow run_one(std::string name, const TrainConfig& cfg, const Dataset& train, const Dataset& dev,
                    const CompatibilityTable& table, const ModelFactory& factory) {
    cfg.validate();
    RelationModel model = factory(cfg);
    finetune(train, dev, model, table, cfg);
    const PredictionSet preds = predict_dataset(model, dev, table, cfg.use_mcpp_eval, cfg.seed);
    AblationRow row;
    row.name = std::move(name);
    row.config = cfg;
    row.report = f1_scores(preds, dev, model.registry);
    row.constraint_mask_calls = preds.constrained;
    return row;
}

} // namespace

AblationTable run_ablation(const TrainConfig& base, const std::vector<AblationToggle>& toggles, const Dataset& train,
                           const Dataset& dev, const CompatibilityTable& table, const ModelFactory& factory) {
    AblationTable table_out;
    table_out.rows.push_back(run_one("full", base, train, dev, table, factory));
    for (const auto toggle : toggles) {
        AblationRow row = run_one(row_name(toggle), ablate(base, toggle), train, dev, table, factory);
        const auto& full = table_out.rows.front().report;
        row.delta_micro = row.report.micro_f1 - full.micro_f1;
        row.delta_macro = row.report.macro_f1 - full.macro_f1;
        row.delta_weighted = row.report.weighted_f1 - full.weighted_f1;
        table_out.rows.push_back(std::move(row));
    }
    return table_out;
}

} // namespace fintree
