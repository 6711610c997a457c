#include <catch2/catch_amalgamated.hpp>

#include <random>

#include "fintree/errors.hpp"
#include "fintree/schema.hpp"
#include "test_support.hpp"

using namespace fintree;
namespace oracle = fintree::testing::oracle;

namespace {

std::vector<std::size_t> bits(const LabelSet& set) {
    std::vector<std::size_t> out;
    for (auto i = set.find_first(); i != LabelSet::npos; i = set.find_next(i)) {
        out.push_back(i);
    }
    return out;
}

const std::vector<std::string> kThree{"org:date:formed_on", "pers:univ:employee_of", "no_relation"};

} // namespace

TEST_CASE("parse_label splits typed labels and keeps untyped ones whole", "[schema]") {
    const auto formed = parse_label("org:date:formed_on");
    CHECK(formed.head_type == "org");
    CHECK(formed.tail_type == "date");
    CHECK(formed.name == "formed_on");
    CHECK(formed.typed());

    const auto employee = parse_label("pers:univ:employee_of");
    CHECK(employee.head_type == "pers");
    CHECK(employee.tail_type == "univ");
    CHECK(employee.name == "employee_of");

    const auto none = parse_label("no_relation");
    CHECK_FALSE(none.typed());
    CHECK_FALSE(none.tail_type.has_value());
    CHECK(none.name == "no_relation");
}

TEST_CASE("parse_label trims and rejects malformed input", "[schema]") {
    CHECK(parse_label("  org:date:formed_on \n").raw == "org:date:formed_on");
    CHECK_THROWS_AS(parse_label(""), EmptyLabel);
    CHECK_THROWS_AS(parse_label("   "), EmptyLabel);
    CHECK_THROWS_AS(parse_label("org:date"), MalformedLabel);
    CHECK_THROWS_AS(parse_label("org::formed_on"), MalformedLabel);
    CHECK_THROWS_AS(parse_label("a:b:c:d"), MalformedLabel);
    CHECK_THROWS_AS(parse_label(":date:x"), MalformedLabel);
    CHECK_THROWS_AS(parse_label("org:date:"), MalformedLabel);
}

TEST_CASE("typed labels round-trip through head:tail:name", "[schema]") {
    const auto registry = LabelRegistry::load(testing::fixture("refind_labels.txt"));
    for (const auto& label : registry.labels()) {
        if (label.typed()) {
            CHECK(*label.head_type + ":" + *label.tail_type + ":" + label.name == label.raw);
        }
    }
}

TEST_CASE("registry keeps file order, dense indices, and rejects duplicates", "[schema]") {
    const auto registry = LabelRegistry::load(testing::fixture("refind_labels.txt"));
    REQUIRE(registry.size() == 22);
    CHECK(registry.at(0).raw == "no_relation");
    CHECK(registry.at(21).raw == "pers:univ:member_of");
    for (std::size_t i = 0; i < registry.size(); ++i) {
        CHECK(registry.at(i).index == i);
        CHECK(registry.find(registry.at(i).raw) == i);
    }
    CHECK_FALSE(registry.find("org:date:acquired_by").has_value());
    CHECK_THROWS_AS(LabelRegistry::from_raw({"a", "b", "a"}), DuplicateLabel);
    CHECK_THROWS_AS(LabelRegistry::from_raw({}), SchemaError);
    CHECK(LabelRegistry::parse_text(registry.to_text()) == registry);
}

TEST_CASE("REFinD schema has eight entity-type pairs", "[schema]") {
    const auto table = build_compatibility(LabelRegistry::load(testing::fixture("refind_labels.txt")));
    CHECK(table.pairs().size() == 8);
}

TEST_CASE("compatibility of the three-label registry", "[schema]") {
    const auto registry = LabelRegistry::from_raw(kThree);
    const auto table = build_compatibility(registry);
    CHECK(bits(allowed_labels(table, "org", "date")) == std::vector<std::size_t>{0, 2});
    CHECK(bits(allowed_labels(table, "pers", "univ")) == std::vector<std::size_t>{1, 2});
    CHECK(bits(allowed_labels(table, "univ", "org")) == std::vector<std::size_t>{2});
    CHECK(bits(allowed_labels(table, "ORG", "Date")) == std::vector<std::size_t>{0, 2});
    CHECK(table.pairs().size() == 2);
}

TEST_CASE("untyped-only registry has no pairs and falls back everywhere", "[schema]") {
    const auto table = build_compatibility(LabelRegistry::from_raw({"no_relation"}));
    CHECK(table.pairs().empty());
    CHECK(bits(allowed_labels(table, "org", "date")) == std::vector<std::size_t>{0});
}

TEST_CASE("schema without untyped labels fails on unseen pairs", "[schema]") {
    const auto table = build_compatibility(LabelRegistry::from_raw({"org:date:formed_on"}));
    CHECK(bits(allowed_labels(table, "org", "date")) == std::vector<std::size_t>{0});
    CHECK_THROWS_AS(allowed_labels(table, "pers", "univ"), NoFallbackLabel);
}

TEST_CASE("REFinD compatibility matches the string-prefix oracle for every pair", "[schema]") {
    const auto raw = testing::fixture_lines("refind_labels.txt");
    std::vector<std::string> labels;
    for (const auto& line : raw) {
        if (line.front() != '#') {
            labels.push_back(line);
        }
    }
    const auto registry = LabelRegistry::from_raw(labels);
    const auto table = build_compatibility(registry);
    const std::vector<std::string> types{"org", "pers", "date", "gpe", "money", "univ", "title", "gov_agy"};
    for (const auto& h : types) {
        for (const auto& t : types) {
            CHECK(bits(table.allowed(h, t)) == oracle::allowed_by_prefix(labels, h, t));
        }
    }
}

TEST_CASE("soundness, completeness and determinism over random registries", "[schema]") {
    std::mt19937_64 rng(11);
    const std::vector<std::string> types{"org", "pers", "date", "gpe", "Money"};
    std::uniform_int_distribution<std::size_t> type_dist(0, types.size() - 1);
    for (int trial = 0; trial < 200; ++trial) {
        std::vector<std::string> labels{"no_relation"};
        const std::size_t n = 1 + rng() % 12;
        for (std::size_t i = 0; i < n; ++i) {
            labels.push_back(types[type_dist(rng)] + ":" + types[type_dist(rng)] + ":rel" + std::to_string(i));
        }
        std::shuffle(labels.begin(), labels.end(), rng);
        const auto registry = LabelRegistry::from_raw(labels);
        const auto table = build_compatibility(registry);
        const auto again = build_compatibility(registry);
        for (const auto& h : types) {
            for (const auto& t : types) {
                const auto allowed = table.allowed(h, t);
                CHECK(allowed == again.allowed(h, t));
                for (std::size_t i = 0; i < registry.size(); ++i) {
                    const auto& label = registry.at(i);
                    const bool compatible = !label.typed() || (normalize_type(*label.head_type) == normalize_type(h) &&
                                                               normalize_type(*label.tail_type) == normalize_type(t));
                    CHECK(allowed.test(i) == compatible);
                }
            }
        }
        for (const auto& label : registry.labels()) {
            if (label.typed()) {
                CHECK(table.allowed(*label.head_type, *label.tail_type).test(label.index));
            }
        }
    }
}
