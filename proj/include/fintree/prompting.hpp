#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fintree/data.hpp"
#include "fintree/tokenizer.hpp"

namespace fintree {

// Placeholders: [MASK], {E1}, {E2}, {T1}, {T2}.
inline constexpr std::string_view kDefaultQueryTemplate =
    "The relation is [MASK] between {E1} and {E2}. The entity of {E1} is {T1} and {E2} is {T2}.";
inline constexpr std::string_view kMaskPlaceholder = "[MASK]";
inline constexpr std::size_t kDefaultMaxLen = 1536;

struct MarkerNames {
    std::string e1_open = "[E1]";
    std::string e1_close = "[/E1]";
    std::string e2_open = "[E2]";
    std::string e2_close = "[/E2]";

    bool operator==(const MarkerNames&) const = default;
};

enum class PromptOrder { query_first, sentence_first };

std::string_view to_string(PromptOrder order) noexcept;
PromptOrder parse_prompt_order(std::string_view name);

struct PromptOptions {
    std::string query_template = std::string(kDefaultQueryTemplate);
    MarkerNames markers;
    std::size_t max_len = kDefaultMaxLen;
    bool use_markers = true;
    PromptOrder order = PromptOrder::query_first;
};

// Ready-to-encode sequence. Marker spans are [open, close + 1) into input_ids,
// or nullopt when markers are disabled or a closing marker was truncated away.
struct PromptEncoding {
    std::vector<TokenId> input_ids;
    std::vector<std::uint8_t> attention_mask;
    std::size_t mask_index = 0;
    std::optional<std::pair<std::size_t, std::size_t>> e1_marker_span;
    std::optional<std::pair<std::size_t, std::size_t>> e2_marker_span;
    std::pair<std::string, std::string> pair;

    std::size_t size() const noexcept { return input_ids.size(); }
};

// Fills the template; "[MASK]" stays literal.
std::string build_query(const REInstance& inst, std::string_view query_template = kDefaultQueryTemplate);

std::string insert_entity_markers(const REInstance& inst, const MarkerNames& markers = {});

// Adds the mask and marker tokens to the tokenizer if missing.
void register_prompt_tokens(Tokenizer& tok, const MarkerNames& markers = {});

PromptEncoding encode_example(const REInstance& inst, const Tokenizer& tok, const PromptOptions& options = {});

// Right-pads with the tokenizer's pad id; padded positions get attention 0.
void pad_encoding(PromptEncoding& enc, std::size_t length, TokenId pad_id);

} // namespace fintree
