#include "fintree/evaluation.hpp"

#include <algorithm>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "fintree/errors.hpp"
#include "fintree/strings.hpp"

namespace fintree {

nlohmann::json EvalReport::to_json() const {
    nlohmann::json classes = nlohmann::json::object();
    for (const auto& [label, s] : per_class) {
        classes[label] = {{"precision", s.precision}, {"recall", s.recall}, {"f1", s.f1}, {"support", s.support}};
    }
    return {{"per_class", classes},
            {"micro_f1", micro_f1},
            {"macro_f1", macro_f1},
            {"weighted_f1", weighted_f1},
            {"n", n},
            {"run_meta", run_meta}};
}

EvalReport f1_scores(const PredictionSet& preds, const Dataset& gold, const LabelRegistry& registry) {
    if (preds.labels.size() != preds.ids.size()) {
        throw IdMismatch("prediction set has " + std::to_string(preds.ids.size()) + " ids but " +
                         std::to_string(preds.labels.size()) + " labels");
    }
    std::unordered_map<std::string, std::size_t> gold_label;
    for (const auto& inst : gold.instances) {
        if (!inst.relation) {
            throw MissingGold(inst.id);
        }
        const auto idx = registry.find(*inst.relation);
        if (!idx) {
            throw UnknownLabel(inst.id, *inst.relation);
        }
        gold_label.emplace(inst.id, *idx);
    }
    if (preds.ids.size() != gold_label.size()) {
        throw IdMismatch("prediction set has " + std::to_string(preds.ids.size()) + " ids, gold has " +
                         std::to_string(gold_label.size()));
    }

    const std::size_t k = registry.size();
    std::vector<std::size_t> tp(k, 0), fp(k, 0), fn(k, 0), support(k, 0);
    std::unordered_set<std::string> seen;
    for (std::size_t i = 0; i < preds.ids.size(); ++i) {
        const auto it = gold_label.find(preds.ids[i]);
        if (it == gold_label.end()) {
            throw IdMismatch("prediction id '" + preds.ids[i] + "' is not in the gold set");
        }
        if (!seen.insert(preds.ids[i]).second) {
            throw IdMismatch("prediction id '" + preds.ids[i] + "' appears twice");
        }
        const std::size_t g = it->second;
        const std::size_t p = preds.labels[i];
        if (p >= k) {
            throw IdMismatch("prediction for '" + preds.ids[i] + "' has class index outside the registry");
        }
        ++support[g];
        if (p == g) {
            ++tp[g];
        } else {
            ++fp[p];
            ++fn[g];
        }
    }

    EvalReport report;
    report.n = preds.ids.size();
    std::size_t tp_total = 0, fp_total = 0, fn_total = 0, supported = 0;
    double macro_sum = 0.0, weighted_sum = 0.0;
    for (std::size_t c = 0; c < k; ++c) {
        tp_total += tp[c];
        fp_total += fp[c];
        fn_total += fn[c];
        if (support[c] == 0 && fp[c] == 0) {
            continue;
        }
        ClassScore s;
        s.support = support[c];
        const auto tpd = static_cast<double>(tp[c]);
        s.precision = tp[c] + fp[c] > 0 ? tpd / static_cast<double>(tp[c] + fp[c]) : 0.0;
        s.recall = support[c] > 0 ? tpd / static_cast<double>(support[c]) : 0.0;
        const std::size_t denom = 2 * tp[c] + fp[c] + fn[c];
        s.f1 = denom > 0 ? 2.0 * tpd / static_cast<double>(denom) : 0.0;
        report.per_class[registry.at(c).raw] = s;
        if (support[c] > 0) {
            ++supported;
            macro_sum += s.f1;
            weighted_sum += static_cast<double>(support[c]) * s.f1;
        }
    }
    const std::size_t micro_denom = 2 * tp_total + fp_total + fn_total;
    report.micro_f1 = micro_denom > 0 ? static_cast<double>(2 * tp_total) / static_cast<double>(micro_denom) : 0.0;
    report.macro_f1 = supported > 0 ? macro_sum / static_cast<double>(supported) : 0.0;
    report.weighted_f1 = report.n > 0 ? weighted_sum / static_cast<double>(report.n) : 0.0;
    if (preds.seed) {
        report.run_meta["seed"] = *preds.seed;
    }
    return report;
}

namespace {

// Order-independent sum: ascending values, so permuting runs cannot change the result.
double canonical_sum(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    double sum = 0.0;
    for (const double v : values) {
        sum += v;
    }
    return sum;
}

} // namespace

PredictionSet hard_vote(const std::vector<PredictionSet>& runs) {
    if (runs.empty()) {
        throw Error("hard_vote needs at least one run");
    }
    const auto& ids = runs.front().ids;
    bool use_probs = true;
    std::size_t num_classes = 0;
    for (const auto& run : runs) {
        if (run.ids != ids) {
            throw IdOrderMismatch("prediction runs do not share the same id order");
        }
        if (run.labels.size() != ids.size()) {
            throw IdOrderMismatch("prediction run has a label count different from its id count");
        }
        for (const auto label : run.labels) {
            num_classes = std::max(num_classes, label + 1);
        }
        if (!run.probs || run.probs->size() != ids.size()) {
            use_probs = false;
        } else {
            for (const auto& row : *run.probs) {
                num_classes = std::max(num_classes, row.size());
            }
        }
    }

    PredictionSet out;
    out.ids = ids;
    out.labels.resize(ids.size());
    if (use_probs) {
        out.probs.emplace(ids.size(), std::vector<double>(num_classes, 0.0));
    }

    std::vector<std::size_t> votes(num_classes);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        std::fill(votes.begin(), votes.end(), 0);
        for (const auto& run : runs) {
            ++votes[run.labels[i]];
        }
        const std::size_t top = *std::max_element(votes.begin(), votes.end());

        const auto summed_prob = [&](std::size_t c) {
            std::vector<double> values;
            values.reserve(runs.size());
            for (const auto& run : runs) {
                const auto& row = (*run.probs)[i];
                values.push_back(c < row.size() ? row[c] : 0.0);
            }
            return canonical_sum(std::move(values));
        };

        std::size_t winner = num_classes;
        double winner_prob = 0.0;
        for (std::size_t c = 0; c < num_classes; ++c) {
            if (votes[c] != top) {
                continue;
            }
            if (winner == num_classes) {
                winner = c;
                winner_prob = use_probs ? summed_prob(c) : 0.0;
                continue;
            }
            if (use_probs) {
                const double p = summed_prob(c);
                if (p > winner_prob) {
                    winner = c;
                    winner_prob = p;
                }
            }
        }
        out.labels[i] = winner;
        if (use_probs) {
            for (std::size_t c = 0; c < num_classes; ++c) {
                (*out.probs)[i][c] = summed_prob(c) / static_cast<double>(runs.size());
            }
        }
    }
    return out;
}

PredictionSet predict_dataset(const RelationModel& model, const Dataset& ds, const CompatibilityTable& table,
                              bool use_mcpp, std::optional<std::uint64_t> seed) {
    PredictionSet out;
    out.seed = seed;
    out.probs.emplace();
    out.ids.reserve(ds.size());
    out.labels.reserve(ds.size());
    for (const auto& inst : ds.instances) {
        const Prediction p = predict(inst, model, table, use_mcpp);
        out.ids.push_back(inst.id);
        out.labels.push_back(p.label);
        out.probs->push_back(p.probs);
        if (p.constrained) {
            ++out.constrained;
        }
    }
    return out;
}

std::string to_jsonl(const PredictionSet& preds, const LabelRegistry& registry) {
    std::string out;
    for (std::size_t i = 0; i < preds.ids.size(); ++i) {
        nlohmann::json j{{"id", preds.ids[i]}, {"label", registry.at(preds.labels[i]).raw}};
        if (preds.probs) {
            j["probs"] = (*preds.probs)[i];
        }
        out += j.dump() + "\n";
    }
    return out;
}

PredictionSet parse_predictions(std::string_view jsonl, const LabelRegistry& registry) {
    PredictionSet out;
    std::vector<std::vector<double>> probs;
    std::size_t with_probs = 0;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
            const auto& id = j.at("id");
            out.ids.push_back(id.is_string() ? id.get<std::string>() : id.dump());
            const auto raw = j.at("label").get<std::string>();
            const auto idx = registry.find(raw);
            if (!idx) {
                throw UnknownLabel(out.ids.back(), raw);
            }
            out.labels.push_back(*idx);
            if (j.contains("probs") && !j.at("probs").is_null()) {
                probs.push_back(j.at("probs").get<std::vector<double>>());
                ++with_probs;
            } else {
                probs.emplace_back();
            }
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(line_no, e.what());
        }
    }
    if (with_probs > 0 && with_probs != out.ids.size()) {
        throw ParseError(line_no, "'probs' must be present on every line or on none");
    }
    if (with_probs > 0) {
        out.probs = std::move(probs);
    }
    return out;
}

PredictionSet load_predictions(const std::filesystem::path& path, const LabelRegistry& registry) {
    return parse_predictions(read_file(path), registry);
}

LabelRegistry infer_registry(const std::vector<std::filesystem::path>& paths) {
    std::vector<std::string> labels;
    std::unordered_set<std::string> seen;
    for (const auto& path : paths) {
        std::istringstream in{read_file(path)};
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) {
                continue;
            }
            try {
                auto raw = nlohmann::json::parse(line).at("label").get<std::string>();
                if (seen.insert(raw).second) {
                    labels.push_back(std::move(raw));
                }
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(line_no, e.what());
            }
        }
    }
    return LabelRegistry::from_raw(labels);
}

} // namespace fintree
