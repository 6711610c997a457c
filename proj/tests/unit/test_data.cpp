#include <catch2/catch_amalgamated.hpp>

#include "fintree/data.hpp"
#include "fintree/errors.hpp"
#include "fintree/strings.hpp"
#include "fintree/synthetic.hpp"
#include "test_support.hpp"

using namespace fintree;

namespace {

LabelRegistry small_registry() {
    return LabelRegistry::from_raw({"org:date:formed_on", "pers:org:employee_of", "no_relation"});
}

const std::string kApple =
    R"({"id":"a1","token":["Apple","was","formed","in","1976"],"e1_start":0,"e1_end":1,"e1_type":"org",)"
    R"("e2_start":4,"e2_end":5,"e2_type":"date","relation":"org:date:formed_on"})";

} // namespace

TEST_CASE("a well-formed record loads as one valid instance", "[data]") {
    const auto ds = parse_instances(kApple + "\n", small_registry(), Split::train);
    REQUIRE(ds.size() == 1);
    const auto& inst = ds.instances[0];
    CHECK(inst.id == "a1");
    CHECK(inst.tokens.size() == 5);
    CHECK(inst.e1 == Span{0, 1});
    CHECK(inst.e2 == Span{4, 5});
    CHECK(inst.e1_text() == "Apple");
    CHECK(inst.e2_text() == "1976");
    CHECK(inst.relation == "org:date:formed_on");
    CHECK_NOTHROW(validate_instance(inst, small_registry()));
}

TEST_CASE("empty, reversed, out-of-range and overlapping spans are rejected", "[data]") {
    const auto with = [](const std::string& from, const std::string& to) {
        std::string s = kApple;
        s.replace(s.find(from), from.size(), to);
        return s;
    };
    CHECK_THROWS_AS(parse_instances(with(R"("e1_start":0,"e1_end":1)", R"("e1_start":4,"e1_end":4)"),
                                    small_registry(), Split::train),
                    SpanError);
    CHECK_THROWS_AS(parse_instances(with(R"("e2_start":4,"e2_end":5)", R"("e2_start":4,"e2_end":6)"),
                                    small_registry(), Split::train),
                    SpanError);
    CHECK_THROWS_AS(parse_instances(with(R"("e2_start":4,"e2_end":5)", R"("e2_start":0,"e2_end":2)"),
                                    small_registry(), Split::train),
                    SpanError);
    CHECK_THROWS_AS(parse_instances(with(R"("e1_type":"org")", R"("e1_type":"")"), small_registry(), Split::train),
                    SpanError);
}

TEST_CASE("a gold label outside the registry raises UnknownLabel", "[data]") {
    std::string s = kApple;
    s.replace(s.find("org:date:formed_on"), 18, "org:date:acquired_by");
    try {
        parse_instances(s, small_registry(), Split::train);
        FAIL("expected UnknownLabel");
    } catch (const UnknownLabel& e) {
        CHECK(e.id() == "a1");
        CHECK(e.raw() == "org:date:acquired_by");
    }
}

TEST_CASE("malformed records report their line number", "[data]") {
    const std::string text = kApple + "\n\n{not json}\n";
    try {
        parse_instances(text, small_registry(), Split::train);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(e.line_no() == 3);
    }
    CHECK_THROWS_AS(parse_instances(R"({"id":"x","token":["a"]})", small_registry(), Split::train), ParseError);
    CHECK_THROWS_AS(parse_instances(kApple + "\n" + kApple, small_registry(), Split::train), ParseError);
}

TEST_CASE("blank lines are skipped and count equals non-blank lines", "[data]") {
    const auto ds = make_synthetic(20, 3, Split::dev);
    const std::string jsonl = to_jsonl(ds);
    std::string spaced;
    for (char c : jsonl) {
        spaced += c;
        if (c == '\n') {
            spaced += "   \n";
        }
    }
    const auto loaded = parse_instances(spaced, synthetic_registry(), Split::dev);
    CHECK(loaded.size() == 20);
}

TEST_CASE("loading is deterministic and serialization is byte-stable", "[data]") {
    testing::TempDir tmp("data");
    const auto ds = make_synthetic(50, 9, Split::train);
    write_file(tmp.path() / "train.jsonl", to_jsonl(ds));
    const auto a = load_instances(tmp.path() / "train.jsonl", synthetic_registry(), Split::train);
    const auto b = load_instances(tmp.path() / "train.jsonl", synthetic_registry(), Split::train);
    CHECK(to_jsonl(a) == to_jsonl(b));
    CHECK(to_jsonl(a) == to_jsonl(ds));
    for (const auto& inst : a.instances) {
        CHECK_NOTHROW(validate_instance(inst, synthetic_registry()));
    }
}

TEST_CASE("field names can be remapped", "[data]") {
    FieldNames fields;
    fields.tokens = "tokens";
    fields.relation = "label";
    std::string s = kApple;
    s.replace(s.find("\"token\""), 7, "\"tokens\"");
    s.replace(s.find("\"relation\""), 10, "\"label\"");
    const auto ds = parse_instances(s, small_registry(), Split::train, fields);
    CHECK(ds.instances.at(0).relation == "org:date:formed_on");
}

TEST_CASE("unlabeled records and integer ids are accepted", "[data]") {
    const std::string rec = R"({"id":7,"token":["A","B"],"e1_start":0,"e1_end":1,"e1_type":"org",)"
                            R"("e2_start":1,"e2_end":2,"e2_type":"org"})";
    const auto ds = parse_instances(rec, small_registry(), Split::test);
    CHECK(ds.instances.at(0).id == "7");
    CHECK_FALSE(ds.instances.at(0).relation.has_value());
}

TEST_CASE("split_stats counts labeled instances", "[data]") {
    const auto registry = LabelRegistry::from_raw({"A", "B"});
    CHECK(split_stats(Dataset{}, registry).empty());
    Dataset ds;
    for (const char* label : {"A", "A", "B"}) {
        ds.instances.push_back(testing::make_instance(std::to_string(ds.size()), {"x", "y"}, {0, 1}, {1, 2}, "t", "t", label));
    }
    const auto stats = split_stats(ds, registry);
    CHECK(stats == std::map<std::string, std::size_t>{{"A", 2}, {"B", 1}});
}

TEST_CASE("synthetic labels are a function of the entity-type pair", "[data]") {
    const auto ds = make_synthetic(200, 1);
    std::map<std::pair<std::string, std::string>, std::string> seen;
    for (const auto& inst : ds.instances) {
        const auto [it, inserted] = seen.emplace(std::make_pair(inst.e1_type, inst.e2_type), *inst.relation);
        CHECK(it->second == *inst.relation);
        CHECK_NOTHROW(validate_instance(inst, synthetic_registry()));
    }
    CHECK(seen.size() == 4);
    std::size_t total = 0;
    for (const auto& [label, count] : split_stats(ds, synthetic_registry())) {
        total += count;
    }
    CHECK(total == 200);
}
