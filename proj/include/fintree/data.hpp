#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "fintree/schema.hpp"

namespace fintree {

// Half-open token range [start, end).
struct Span {
    std::size_t start = 0;
    std::size_t end = 0;

    std::size_t size() const noexcept { return end - start; }
    bool overlaps(const Span& other) const noexcept { return start < other.end && other.start < end; }
    bool operator==(const Span&) const = default;
};

struct REInstance {
    std::string id;
    std::vector<std::string> tokens;
    Span e1;
    Span e2;
    std::string e1_type;
    std::string e2_type;
    std::optional<std::string> relation;

    std::string e1_text() const;
    std::string e2_text() const;
    std::string sentence() const;

    bool operator==(const REInstance&) const = default;
};

enum class Split { train, dev, test };

std::string_view to_string(Split split) noexcept;
Split parse_split(std::string_view name);

struct Dataset {
    Split split = Split::train;
    std::vector<REInstance> instances;

    std::size_t size() const noexcept { return instances.size(); }
    bool empty() const noexcept { return instances.empty(); }
};

// JSON field names of the on-disk record; defaults mirror the public REFinD release.
struct FieldNames {
    std::string id = "id";
    std::string tokens = "token";
    std::string e1_start = "e1_start";
    std::string e1_end = "e1_end";
    std::string e1_type = "e1_type";
    std::string e2_start = "e2_start";
    std::string e2_end = "e2_end";
    std::string e2_type = "e2_type";
    std::string relation = "relation";
};

// Checks every REInstance invariant; throws SpanError / UnknownLabel.
void validate_instance(const REInstance& inst, const LabelRegistry& registry);

// Parses one JSON record; line_no is only used for diagnostics.
REInstance parse_instance(std::string_view json_line, std::size_t line_no, const FieldNames& fields = {});

Dataset load_instances(const std::filesystem::path& path, const LabelRegistry& registry, Split split,
                       const FieldNames& fields = {});
Dataset parse_instances(std::string_view jsonl, const LabelRegistry& registry, Split split,
                        const FieldNames& fields = {});

// Canonical JSONL serialization (default field names, fixed key order).
std::string to_jsonl(const Dataset& ds);

// Gold-label histogram over labeled instances.
std::map<std::string, std::size_t> split_stats(const Dataset& ds, const LabelRegistry& registry);

} // namespace fintree
