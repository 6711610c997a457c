#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <boost/dynamic_bitset.hpp>

namespace fintree {

// Bit i set <=> class index i is admissible.
using LabelSet = boost::dynamic_bitset<>;

struct RelationLabel {
    std::string raw;
    std::optional<std::string> head_type;
    std::optional<std::string> tail_type;
    std::string name;
    std::size_t index = 0;

    bool typed() const noexcept { return head_type.has_value(); }
};

// Parses "head:tail:name" into a typed label, or a plain token into an untyped one.
// The returned index is 0; registries assign the dense index.
RelationLabel parse_label(std::string_view raw);

// Lowercased entity type, the form used for every type comparison.
std::string normalize_type(std::string_view type);

class LabelRegistry {
public:
    LabelRegistry() = default;

    // Labels keep the order given; duplicates and an empty list are rejected.
    static LabelRegistry from_raw(const std::vector<std::string>& raw_labels);
    // One label per line, '#' comments and blank lines skipped.
    static LabelRegistry parse_text(std::string_view text);
    static LabelRegistry load(const std::filesystem::path& path);

    std::size_t size() const noexcept { return labels_.size(); }
    const RelationLabel& at(std::size_t index) const { return labels_.at(index); }
    const std::vector<RelationLabel>& labels() const noexcept { return labels_; }

    std::optional<std::size_t> find(std::string_view raw) const;
    bool contains(std::string_view raw) const { return find(raw).has_value(); }

    // Labels without entity types (e.g. "no_relation").
    LabelSet untyped() const;

    std::string to_text() const;
    void save(const std::filesystem::path& path) const;

    bool operator==(const LabelRegistry& other) const;

private:
    std::vector<RelationLabel> labels_;
    std::unordered_map<std::string, std::size_t> by_raw_;
};

using TypePair = std::pair<std::string, std::string>;

class CompatibilityTable {
public:
    static CompatibilityTable build(const LabelRegistry& registry);

    // Pairs in order of first appearance in the registry, normalized to lowercase.
    const std::vector<TypePair>& pairs() const noexcept { return pairs_; }
    bool has_pair(std::string_view head_type, std::string_view tail_type) const;

    // Admissible labels for an entity-type pair; unseen pairs get the untyped labels.
    LabelSet allowed(std::string_view head_type, std::string_view tail_type) const;

    std::size_t num_labels() const noexcept { return untyped_.size(); }

private:
    std::vector<TypePair> pairs_;
    std::map<TypePair, LabelSet> allowed_;
    LabelSet untyped_;
};

// Free-function spellings of the table operations.
inline CompatibilityTable build_compatibility(const LabelRegistry& registry) {
    return CompatibilityTable::build(registry);
}

inline LabelSet allowed_labels(const CompatibilityTable& table, std::string_view head_type,
                               std::string_view tail_type) {
    return table.allowed(head_type, tail_type);
}

} // namespace fintree
