#include "fintree/synthetic.hpp"

#include <array>
#include <random>
#include <string_view>

namespace fintree {

namespace {

struct PairRule {
    std::string_view head;
    std::string_view tail;
    std::string_view label;
};

constexpr std::array<PairRule, 4> kRules{{
    {"org", "date", "org:date:formed_on"},
    {"org", "gpe", "org:gpe:headquartered_in"},
    {"pers", "org", "pers:org:employee_of"},
    {"pers", "date", "no_relation"},
}};

constexpr std::array<std::string_view, 6> kOrgs{"Acme", "Globex", "Initech", "Umbrella", "Hooli", "Vandelay"};
constexpr std::array<std::string_view, 6> kPeople{"Alice", "Bob", "Carol", "Dave", "Erin", "Frank"};
constexpr std::array<std::string_view, 6> kDates{"1976", "1998", "2004", "2011", "2019", "2021"};
constexpr std::array<std::string_view, 6> kPlaces{"Ohio", "Texas", "Delaware", "London", "Tokyo", "Berlin"};
constexpr std::array<std::string_view, 12> kFiller{"the", "company", "reported", "that", "in", "its",
                                                   "annual", "filing", "with", "quarterly", "results", "noted"};

std::string_view pick_entity(std::string_view type, std::mt19937_64& rng) {
    std::uniform_int_distribution<std::size_t> idx(0, 5);
    if (type == "org") {
        return kOrgs[idx(rng)];
    }
    if (type == "pers") {
        return kPeople[idx(rng)];
    }
    if (type == "date") {
        return kDates[idx(rng)];
    }
    return kPlaces[idx(rng)];
}

} // namespace

LabelRegistry synthetic_registry() {
    std::vector<std::string> raw;
    for (const auto& rule : kRules) {
        raw.emplace_back(rule.label);
    }
    return LabelRegistry::from_raw(raw);
}

Dataset make_synthetic(std::size_t count, std::uint64_t seed, Split split, const SyntheticOptions& options) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U), 0x5e7u};
    std::mt19937_64 rng(seq);
    std::uniform_int_distribution<std::size_t> rule_dist(0, kRules.size() - 1);
    std::uniform_int_distribution<std::size_t> filler_len(options.min_filler, options.max_filler);
    std::uniform_int_distribution<std::size_t> filler_word(0, kFiller.size() - 1);
    std::bernoulli_distribution swap_order(0.5);

    Dataset ds;
    ds.split = split;
    ds.instances.reserve(count);
    for (std::size_t n = 0; n < count; ++n) {
        const PairRule& rule = kRules[rule_dist(rng)];
        std::vector<std::string> tokens;
        const auto add_filler = [&]() {
            const std::size_t len = filler_len(rng);
            for (std::size_t i = 0; i < len; ++i) {
                tokens.emplace_back(kFiller[filler_word(rng)]);
            }
        };
        const bool tail_first = swap_order(rng);
        REInstance inst;
        inst.id = options.id_prefix + "-" + std::to_string(n);
        inst.e1_type = rule.head;
        inst.e2_type = rule.tail;
        inst.relation = std::string(rule.label);

        add_filler();
        Span first{tokens.size(), tokens.size() + 1};
        tokens.emplace_back(pick_entity(tail_first ? rule.tail : rule.head, rng));
        add_filler();
        Span second{tokens.size(), tokens.size() + 1};
        tokens.emplace_back(pick_entity(tail_first ? rule.head : rule.tail, rng));
        add_filler();

        inst.e1 = tail_first ? second : first;
        inst.e2 = tail_first ? first : second;
        inst.tokens = std::move(tokens);
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

std::vector<std::string> synthetic_texts(const Dataset& ds) {
    std::vector<std::string> texts;
    texts.reserve(ds.size() + 1);
    for (const auto& inst : ds.instances) {
        texts.push_back(inst.sentence() + " " + inst.e1_type + " " + inst.e2_type);
    }
    texts.emplace_back("The relation is between and . The entity of is");
    return texts;
}

} // namespace fintree
