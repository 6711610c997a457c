#include "fintree/schema.hpp"

#include <algorithm>
#include <sstream>

#include "fintree/errors.hpp"
#include "fintree/strings.hpp"

namespace fintree {

RelationLabel parse_label(std::string_view raw_in) {
    const std::string_view raw = trim(raw_in);
    if (raw.empty()) {
        throw EmptyLabel();
    }

    RelationLabel label;
    label.raw = std::string(raw);

    if (raw.find(':') == std::string_view::npos) {
        label.name = label.raw;
        return label;
    }

    std::vector<std::string_view> segments;
    std::size_t start = 0;
    while (true) {
        const std::size_t colon = raw.find(':', start);
        segments.push_back(raw.substr(start, colon == std::string_view::npos ? colon : colon - start));
        if (colon == std::string_view::npos) {
            break;
        }
        start = colon + 1;
    }
    const bool well_formed =
        segments.size() == 3 && std::none_of(segments.begin(), segments.end(), [](std::string_view s) {
            return s.empty() || trim(s).size() != s.size();
        });
    if (!well_formed) {
        throw MalformedLabel(label.raw);
    }
    label.head_type = std::string(segments[0]);
    label.tail_type = std::string(segments[1]);
    label.name = std::string(segments[2]);
    return label;
}

std::string normalize_type(std::string_view type) {
    return to_lower(trim(type));
}

LabelRegistry LabelRegistry::from_raw(const std::vector<std::string>& raw_labels) {
    if (raw_labels.empty()) {
        throw SchemaError("label registry must contain at least one label");
    }
    LabelRegistry registry;
    registry.labels_.reserve(raw_labels.size());
    for (const auto& raw : raw_labels) {
        RelationLabel label = parse_label(raw);
        label.index = registry.labels_.size();
        if (!registry.by_raw_.emplace(label.raw, label.index).second) {
            throw DuplicateLabel(label.raw);
        }
        registry.labels_.push_back(std::move(label));
    }
    return registry;
}

LabelRegistry LabelRegistry::parse_text(std::string_view text) {
    std::vector<std::string> raw;
    std::istringstream in{std::string(text)};
    std::string line;
    while (std::getline(in, line)) {
        const std::string_view t = trim(line);
        if (t.empty() || t.front() == '#') {
            continue;
        }
        raw.emplace_back(t);
    }
    return from_raw(raw);
}

LabelRegistry LabelRegistry::load(const std::filesystem::path& path) {
    return parse_text(read_file(path));
}

std::optional<std::size_t> LabelRegistry::find(std::string_view raw) const {
    const auto it = by_raw_.find(std::string(trim(raw)));
    if (it == by_raw_.end()) {
        return std::nullopt;
    }
    return it->second;
}

LabelSet LabelRegistry::untyped() const {
    LabelSet set(labels_.size());
    for (const auto& label : labels_) {
        if (!label.typed()) {
            set.set(label.index);
        }
    }
    return set;
}

std::string LabelRegistry::to_text() const {
    std::string out;
    for (const auto& label : labels_) {
        out += label.raw;
        out += '\n';
    }
    return out;
}

void LabelRegistry::save(const std::filesystem::path& path) const {
    write_file(path, to_text());
}

bool LabelRegistry::operator==(const LabelRegistry& other) const {
    if (labels_.size() != other.labels_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < labels_.size(); ++i) {
        if (labels_[i].raw != other.labels_[i].raw) {
            return false;
        }
    }
    return true;
}

CompatibilityTable CompatibilityTable::build(const LabelRegistry& registry) {
    CompatibilityTable table;
    table.untyped_ = registry.untyped();

    for (const auto& label : registry.labels()) {
        if (!label.typed()) {
            continue;
        }
        TypePair key{normalize_type(*label.head_type), normalize_type(*label.tail_type)};
        auto [it, inserted] = table.allowed_.try_emplace(key, table.untyped_);
        if (inserted) {
            table.pairs_.push_back(key);
        }
        it->second.set(label.index);
    }

    for (const auto& pair : table.pairs_) {
        if (table.allowed_.at(pair).none()) {
            throw NoFallbackLabel(pair.first, pair.second);
        }
    }
    return table;
}

bool CompatibilityTable::has_pair(std::string_view head_type, std::string_view tail_type) const {
    return allowed_.count(TypePair{normalize_type(head_type), normalize_type(tail_type)}) > 0;
}

LabelSet CompatibilityTable::allowed(std::string_view head_type, std::string_view tail_type) const {
    const TypePair key{normalize_type(head_type), normalize_type(tail_type)};
    const auto it = allowed_.find(key);
    LabelSet result = it == allowed_.end() ? untyped_ : it->second;
    if (result.none()) {
        throw NoFallbackLabel(key.first, key.second);
    }
    return result;
}

} // namespace fintree
