#include "fintree/data.hpp"

#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "fintree/errors.hpp"
#include "fintree/strings.hpp"

namespace fintree {

using nlohmann::json;

namespace {

std::string join_span(const std::vector<std::string>& tokens, const Span& span) {
    std::string out;
    for (std::size_t i = span.start; i < span.end && i < tokens.size(); ++i) {
        if (i > span.start) {
            out += ' ';
        }
        out += tokens[i];
    }
    return out;
}

const json& require(const json& record, const std::string& key, std::size_t line_no) {
    const auto it = record.find(key);
    if (it == record.end()) {
        throw ParseError(line_no, "missing field '" + key + "'");
    }
    return *it;
}

std::size_t require_index(const json& record, const std::string& key, std::size_t line_no) {
    const json& v = require(record, key, line_no);
    if (!v.is_number_integer()) {
        throw ParseError(line_no, "field '" + key + "' must be an integer");
    }
    const auto value = v.get<long long>();
    if (value < 0) {
        throw ParseError(line_no, "field '" + key + "' must be non-negative");
    }
    return static_cast<std::size_t>(value);
}

std::string require_string(const json& record, const std::string& key, std::size_t line_no) {
    const json& v = require(record, key, line_no);
    if (!v.is_string()) {
        throw ParseError(line_no, "field '" + key + "' must be a string");
    }
    return v.get<std::string>();
}

} // namespace

std::string REInstance::e1_text() const {
    return join_span(tokens, e1);
}

std::string REInstance::e2_text() const {
    return join_span(tokens, e2);
}

std::string REInstance::sentence() const {
    return join(tokens, " ");
}

std::string_view to_string(Split split) noexcept {
    switch (split) {
    case Split::train:
        return "train";
    case Split::dev:
        return "dev";
    case Split::test:
        return "test";
    }
    return "train";
}

Split parse_split(std::string_view name) {
    if (name == "train") {
        return Split::train;
    }
    if (name == "dev") {
        return Split::dev;
    }
    if (name == "test") {
        return Split::test;
    }
    throw Error("unknown split '" + std::string(name) + "'");
}

void validate_instance(const REInstance& inst, const LabelRegistry& registry) {
    const auto check_span = [&](const Span& span, const char* which) {
        if (!(span.start < span.end)) {
            throw SpanError(inst.id, std::string(which) + " span is empty or reversed");
        }
        if (span.end > inst.tokens.size()) {
            throw SpanError(inst.id, std::string(which) + " span ends past the sentence");
        }
    };
    check_span(inst.e1, "e1");
    check_span(inst.e2, "e2");
    if (inst.e1.overlaps(inst.e2)) {
        throw SpanError(inst.id, "entity spans overlap");
    }
    if (trim(inst.e1_type).empty() || trim(inst.e2_type).empty()) {
        throw SpanError(inst.id, "entity types must be non-empty");
    }
    if (inst.relation && !registry.contains(*inst.relation)) {
        throw UnknownLabel(inst.id, *inst.relation);
    }
}

REInstance parse_instance(std::string_view json_line, std::size_t line_no, const FieldNames& fields) {
    json record;
    try {
        record = json::parse(json_line);
    } catch (const json::parse_error& e) {
        throw ParseError(line_no, std::string("invalid JSON: ") + e.what());
    }
    if (!record.is_object()) {
        throw ParseError(line_no, "record is not a JSON object");
    }

    REInstance inst;
    const json& id = require(record, fields.id, line_no);
    if (id.is_string()) {
        inst.id = id.get<std::string>();
    } else if (id.is_number_integer()) {
        inst.id = std::to_string(id.get<long long>());
    } else {
        throw ParseError(line_no, "field '" + fields.id + "' must be a string or integer");
    }

    const json& tokens = require(record, fields.tokens, line_no);
    if (!tokens.is_array()) {
        throw ParseError(line_no, "field '" + fields.tokens + "' must be an array of strings");
    }
    for (const auto& t : tokens) {
        if (!t.is_string()) {
            throw ParseError(line_no, "field '" + fields.tokens + "' must be an array of strings");
        }
        inst.tokens.push_back(t.get<std::string>());
    }

    inst.e1 = {require_index(record, fields.e1_start, line_no), require_index(record, fields.e1_end, line_no)};
    inst.e2 = {require_index(record, fields.e2_start, line_no), require_index(record, fields.e2_end, line_no)};
    inst.e1_type = require_string(record, fields.e1_type, line_no);
    inst.e2_type = require_string(record, fields.e2_type, line_no);

    const auto rel = record.find(fields.relation);
    if (rel != record.end() && !rel->is_null()) {
        if (!rel->is_string()) {
            throw ParseError(line_no, "field '" + fields.relation + "' must be a string or null");
        }
        inst.relation = std::string(trim(rel->get<std::string>()));
    }
    return inst;
}

Dataset parse_instances(std::string_view jsonl, const LabelRegistry& registry, Split split,
                        const FieldNames& fields) {
    Dataset ds;
    ds.split = split;
    std::unordered_set<std::string> seen;
    std::istringstream in{std::string(jsonl)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) {
            continue;
        }
        REInstance inst = parse_instance(line, line_no, fields);
        validate_instance(inst, registry);
        if (!seen.insert(inst.id).second) {
            throw ParseError(line_no, "duplicate id '" + inst.id + "'");
        }
        ds.instances.push_back(std::move(inst));
    }
    return ds;
}

Dataset load_instances(const std::filesystem::path& path, const LabelRegistry& registry, Split split,
                       const FieldNames& fields) {
    return parse_instances(read_file(path), registry, split, fields);
}

std::string to_jsonl(const Dataset& ds) {
    std::string out;
    for (const auto& inst : ds.instances) {
        json record = json::object();
        record["id"] = inst.id;
        record["token"] = inst.tokens;
        record["e1_start"] = inst.e1.start;
        record["e1_end"] = inst.e1.end;
        record["e1_type"] = inst.e1_type;
        record["e2_start"] = inst.e2.start;
        record["e2_end"] = inst.e2.end;
        record["e2_type"] = inst.e2_type;
        record["relation"] = inst.relation ? json(*inst.relation) : json(nullptr);
        out += record.dump();
        out += '\n';
    }
    return out;
}

std::map<std::string, std::size_t> split_stats(const Dataset& ds, const LabelRegistry& registry) {
    std::map<std::string, std::size_t> counts;
    for (const auto& inst : ds.instances) {
        if (!inst.relation) {
            continue;
        }
        const auto idx = registry.find(*inst.relation);
        if (!idx) {
            throw UnknownLabel(inst.id, *inst.relation);
        }
        ++counts[registry.at(*idx).raw];
    }
    return counts;
}

} // namespace fintree
