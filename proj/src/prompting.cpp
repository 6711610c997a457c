#include "fintree/prompting.hpp"

#include "fintree/errors.hpp"

namespace fintree {

namespace {

// Substituted values are never rescanned, so entity text containing "{E2}" stays literal.
std::string fill_slots(std::string_view fragment, const REInstance& inst) {
    std::string result;
    result.reserve(fragment.size() + 64);
    std::size_t i = 0;
    while (i < fragment.size()) {
        if (fragment[i] == '{') {
            const std::size_t close = fragment.find('}', i);
            if (close != std::string_view::npos) {
                const std::string_view slot = fragment.substr(i, close - i + 1);
                if (slot == "{E1}") {
                    result += inst.e1_text();
                } else if (slot == "{E2}") {
                    result += inst.e2_text();
                } else if (slot == "{T1}") {
                    result += inst.e1_type;
                } else if (slot == "{T2}") {
                    result += inst.e2_type;
                } else {
                    result += slot;
                }
                i = close + 1;
                continue;
            }
        }
        result += fragment[i];
        ++i;
    }
    return result;
}

std::pair<std::string_view, std::string_view> split_at_mask(std::string_view query_template) {
    const std::size_t pos = query_template.find(kMaskPlaceholder);
    if (pos == std::string_view::npos ||
        query_template.find(kMaskPlaceholder, pos + kMaskPlaceholder.size()) != std::string_view::npos) {
        throw Error("query template must contain exactly one " + std::string(kMaskPlaceholder) + " placeholder");
    }
    return {query_template.substr(0, pos), query_template.substr(pos + kMaskPlaceholder.size())};
}

TokenId require_special(const Tokenizer& tok, const std::string& name) {
    const auto id = tok.special_id(name);
    if (!id) {
        throw Error("marker token '" + name + "' is not registered with the tokenizer");
    }
    return *id;
}

struct MarkedSentence {
    std::vector<TokenId> ids;
    std::size_t e1_open = 0, e1_close = 0, e2_open = 0, e2_close = 0;
};

MarkedSentence encode_sentence(const REInstance& inst, const Tokenizer& tok, const PromptOptions& options) {
    MarkedSentence out;
    TokenId e1_open = 0, e1_close = 0, e2_open = 0, e2_close = 0;
    if (options.use_markers) {
        e1_open = require_special(tok, options.markers.e1_open);
        e1_close = require_special(tok, options.markers.e1_close);
        e2_open = require_special(tok, options.markers.e2_open);
        e2_close = require_special(tok, options.markers.e2_close);
    }
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
        if (options.use_markers) {
            if (i == inst.e1.start) {
                out.e1_open = out.ids.size();
                out.ids.push_back(e1_open);
            }
            if (i == inst.e2.start) {
                out.e2_open = out.ids.size();
                out.ids.push_back(e2_open);
            }
        }
        const auto piece = tok.encode(inst.tokens[i]);
        out.ids.insert(out.ids.end(), piece.begin(), piece.end());
        if (options.use_markers) {
            if (i + 1 == inst.e1.end) {
                out.e1_close = out.ids.size();
                out.ids.push_back(e1_close);
            }
            if (i + 1 == inst.e2.end) {
                out.e2_close = out.ids.size();
                out.ids.push_back(e2_close);
            }
        }
    }
    return out;
}

} // namespace

std::string_view to_string(PromptOrder order) noexcept {
    return order == PromptOrder::query_first ? "query_first" : "sentence_first";
}

PromptOrder parse_prompt_order(std::string_view name) {
    if (name == "query_first") {
        return PromptOrder::query_first;
    }
    if (name == "sentence_first") {
        return PromptOrder::sentence_first;
    }
    throw Error("unknown prompt order '" + std::string(name) + "'");
}

std::string build_query(const REInstance& inst, std::string_view query_template) {
    const auto [before, after] = split_at_mask(query_template);
    return fill_slots(before, inst) + std::string(kMaskPlaceholder) + fill_slots(after, inst);
}

std::string insert_entity_markers(const REInstance& inst, const MarkerNames& markers) {
    std::string out;
    const auto emit = [&out](std::string_view piece) {
        if (!out.empty()) {
            out += ' ';
        }
        out += piece;
    };
    for (std::size_t i = 0; i < inst.tokens.size(); ++i) {
        if (i == inst.e1.start) {
            emit(markers.e1_open);
        }
        if (i == inst.e2.start) {
            emit(markers.e2_open);
        }
        emit(inst.tokens[i]);
        if (i + 1 == inst.e1.end) {
            emit(markers.e1_close);
        }
        if (i + 1 == inst.e2.end) {
            emit(markers.e2_close);
        }
    }
    return out;
}

void register_prompt_tokens(Tokenizer& tok, const MarkerNames& markers) {
    tok.add_special_token(tok.mask_token());
    for (const auto* name : {&markers.e1_open, &markers.e1_close, &markers.e2_open, &markers.e2_close}) {
        tok.add_special_token(*name);
    }
}

PromptEncoding encode_example(const REInstance& inst, const Tokenizer& tok, const PromptOptions& options) {
    const auto [before, after] = split_at_mask(options.query_template);

    std::vector<TokenId> query = tok.encode(fill_slots(before, inst));
    const std::size_t mask_in_query = query.size();
    query.push_back(tok.mask_id());
    const auto tail = tok.encode(fill_slots(after, inst));
    query.insert(query.end(), tail.begin(), tail.end());

    const std::size_t fixed = query.size() + 1;
    if (fixed > options.max_len) {
        throw QueryTooLong(fixed, options.max_len);
    }

    MarkedSentence sentence = encode_sentence(inst, tok, options);
    const std::size_t budget = options.max_len - fixed;
    if (sentence.ids.size() > budget) {
        sentence.ids.resize(budget);
    }

    PromptEncoding enc;
    enc.pair = {inst.e1_type, inst.e2_type};
    std::size_t sentence_offset = 0;
    if (options.order == PromptOrder::query_first) {
        enc.input_ids = std::move(query);
        enc.input_ids.push_back(tok.sep_id());
        sentence_offset = enc.input_ids.size();
        enc.input_ids.insert(enc.input_ids.end(), sentence.ids.begin(), sentence.ids.end());
        enc.mask_index = mask_in_query;
    } else {
        enc.input_ids = sentence.ids;
        enc.input_ids.push_back(tok.sep_id());
        enc.mask_index = enc.input_ids.size() + mask_in_query;
        enc.input_ids.insert(enc.input_ids.end(), query.begin(), query.end());
    }
    enc.attention_mask.assign(enc.input_ids.size(), 1);

    if (options.use_markers) {
        const std::size_t kept = sentence.ids.size();
        if (sentence.e1_close < kept) {
            enc.e1_marker_span = std::pair{sentence_offset + sentence.e1_open, sentence_offset + sentence.e1_close + 1};
        }
        if (sentence.e2_close < kept) {
            enc.e2_marker_span = std::pair{sentence_offset + sentence.e2_open, sentence_offset + sentence.e2_close + 1};
        }
    }
    return enc;
}

void pad_encoding(PromptEncoding& enc, std::size_t length, TokenId pad_id) {
    if (enc.input_ids.size() >= length) {
        return;
    }
    enc.input_ids.resize(length, pad_id);
    enc.attention_mask.resize(length, 0);
}

} // namespace fintree
