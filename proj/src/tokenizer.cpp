#include "fintree/tokenizer.hpp"

#include <algorithm>
#include <cctype>
#include <map>

#include <nlohmann/json.hpp>

#include "fintree/errors.hpp"
#include "fintree/strings.hpp"

namespace fintree {

namespace {

bool is_word_char(unsigned char c) noexcept {
    return c >= 0x80 || std::isalnum(c) != 0 || c == '_';
}

} // namespace

WordTokenizer::WordTokenizer(WordTokenizerOptions options) : options_(options) {
    for (const auto tok : {kPad, kUnk, kCls, kSep, kMask}) {
        add_special_token(tok);
    }
}

std::vector<std::string> WordTokenizer::pre_tokenize(std::string_view text, bool lowercase) {
    std::vector<std::string> out;
    for (const auto& chunk : split_whitespace(text)) {
        std::size_t i = 0;
        while (i < chunk.size()) {
            const auto c = static_cast<unsigned char>(chunk[i]);
            std::size_t j = i + 1;
            if (is_word_char(c)) {
                while (j < chunk.size() && is_word_char(static_cast<unsigned char>(chunk[j]))) {
                    ++j;
                }
            }
            std::string piece = chunk.substr(i, j - i);
            out.push_back(lowercase ? to_lower(piece) : std::move(piece));
            i = j;
        }
    }
    return out;
}

WordTokenizer WordTokenizer::train(const std::vector<std::string>& texts, WordTokenizerOptions options) {
    std::map<std::string, std::size_t> counts;
    for (const auto& text : texts) {
        for (auto& piece : pre_tokenize(text, options.lowercase)) {
            ++counts[std::move(piece)];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(), counts.end());
    std::stable_sort(ranked.begin(), ranked.end(),
                     [](const auto& a, const auto& b) { return a.second > b.second; });

    WordTokenizer tok(options);
    for (const auto& [word, count] : ranked) {
        if (count < options.min_frequency || tok.vocab_size() >= options.max_vocab) {
            break;
        }
        tok.add_word(word);
    }
    return tok;
}

std::vector<TokenId> WordTokenizer::encode(std::string_view text) const {
    std::vector<TokenId> ids;
    for (const auto& piece : pre_tokenize(text, options_.lowercase)) {
        const auto it = words_.find(piece);
        ids.push_back(it == words_.end() ? unk_id() : it->second);
    }
    return ids;
}

std::size_t WordTokenizer::count_tokens(std::string_view text) const {
    return pre_tokenize(text, false).size();
}

TokenId WordTokenizer::add_special_token(std::string_view token) {
    if (const auto existing = special_id(token)) {
        return *existing;
    }
    const auto id = static_cast<TokenId>(id_to_token_.size());
    id_to_token_.emplace_back(token);
    special_.push_back(true);
    specials_.emplace(std::string(token), id);
    return id;
}

std::optional<TokenId> WordTokenizer::special_id(std::string_view token) const {
    const auto it = specials_.find(std::string(token));
    if (it == specials_.end()) {
        return std::nullopt;
    }
    return it->second;
}

bool WordTokenizer::is_special(TokenId id) const {
    return id >= 0 && static_cast<std::size_t>(id) < special_.size() && special_[static_cast<std::size_t>(id)];
}

std::string WordTokenizer::token(TokenId id) const {
    if (id < 0 || static_cast<std::size_t>(id) >= id_to_token_.size()) {
        throw Error("token id " + std::to_string(id) + " out of range");
    }
    return id_to_token_[static_cast<std::size_t>(id)];
}

TokenId WordTokenizer::add_word(std::string_view word) {
    std::string key = options_.lowercase ? to_lower(word) : std::string(word);
    if (const auto it = words_.find(key); it != words_.end()) {
        return it->second;
    }
    const auto id = static_cast<TokenId>(id_to_token_.size());
    id_to_token_.push_back(key);
    special_.push_back(false);
    words_.emplace(std::move(key), id);
    return id;
}

std::optional<TokenId> WordTokenizer::word_id(std::string_view word) const {
    const auto it = words_.find(options_.lowercase ? to_lower(word) : std::string(word));
    if (it == words_.end()) {
        return std::nullopt;
    }
    return it->second;
}

void WordTokenizer::save(const std::filesystem::path& path) const {
    nlohmann::json j;
    j["type"] = "word";
    j["lowercase"] = options_.lowercase;
    j["min_frequency"] = options_.min_frequency;
    j["max_vocab"] = options_.max_vocab;
    auto& entries = j["vocab"] = nlohmann::json::array();
    for (std::size_t i = 0; i < id_to_token_.size(); ++i) {
        entries.push_back({{"token", id_to_token_[i]}, {"special", static_cast<bool>(special_[i])}});
    }
    write_file(path, j.dump(1) + "\n");
}

WordTokenizer WordTokenizer::load(const std::filesystem::path& path) {
    const auto j = nlohmann::json::parse(read_file(path));
    if (j.value("type", "") != "word") {
        throw Error("'" + path.string() + "' is not a word tokenizer file");
    }
    WordTokenizerOptions options;
    options.lowercase = j.at("lowercase").get<bool>();
    options.min_frequency = j.value("min_frequency", std::size_t{1});
    options.max_vocab = j.value("max_vocab", std::size_t{50000});

    WordTokenizer tok(options);
    const auto& entries = j.at("vocab");
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto text = entries[i].at("token").get<std::string>();
        const bool special = entries[i].at("special").get<bool>();
        const TokenId id = special ? tok.add_special_token(text) : tok.add_word(text);
        if (static_cast<std::size_t>(id) != i) {
            throw Error("tokenizer file '" + path.string() + "' has inconsistent ids at entry " + std::to_string(i));
        }
    }
    return tok;
}

std::unique_ptr<Tokenizer> WordTokenizer::clone() const {
    return std::make_unique<WordTokenizer>(*this);
}

} // namespace fintree
