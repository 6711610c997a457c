#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace fintree {

using TokenId = std::int32_t;

// What the prompt builder and the pretraining pipeline need from a tokenizer.
// encode() handles ordinary text only: apart from the unknown-word id it never
// yields a special-token id, so special tokens (mask, separators, entity
// markers) are always placed by id.
// Implementations must be safe for concurrent const calls.
class Tokenizer {
public:
    virtual ~Tokenizer() = default;

    virtual std::vector<TokenId> encode(std::string_view text) const = 0;
    virtual std::size_t count_tokens(std::string_view text) const { return encode(text).size(); }

    // Registers a special token (idempotent) and returns its single id.
    virtual TokenId add_special_token(std::string_view token) = 0;
    virtual std::optional<TokenId> special_id(std::string_view token) const = 0;
    virtual bool is_special(TokenId id) const = 0;

    virtual TokenId pad_id() const = 0;
    virtual TokenId unk_id() const = 0;
    virtual TokenId cls_id() const = 0;
    virtual TokenId sep_id() const = 0;
    virtual TokenId mask_id() const = 0;
    virtual std::string mask_token() const = 0;

    virtual std::size_t vocab_size() const = 0;
    virtual std::string token(TokenId id) const = 0;

    virtual void save(const std::filesystem::path& path) const = 0;
    virtual std::unique_ptr<Tokenizer> clone() const = 0;
};

struct WordTokenizerOptions {
    bool lowercase = true;
    std::size_t min_frequency = 1;
    std::size_t max_vocab = 50000;
};

// Word-level tokenizer: whitespace split, then runs of word characters
// (ASCII alphanumerics, '_', and any non-ASCII byte) are kept together and
// every other printable character is its own token. Out-of-vocabulary words
// map to [UNK]. Token counts therefore do not depend on the vocabulary.
class WordTokenizer final : public Tokenizer {
public:
    static constexpr std::string_view kPad = "[PAD]";
    static constexpr std::string_view kUnk = "[UNK]";
    static constexpr std::string_view kCls = "[CLS]";
    static constexpr std::string_view kSep = "[SEP]";
    static constexpr std::string_view kMask = "[MASK]";

    explicit WordTokenizer(WordTokenizerOptions options = {});

    // Builds the word vocabulary from texts, most frequent first (ties alphabetical).
    static WordTokenizer train(const std::vector<std::string>& texts, WordTokenizerOptions options = {});
    static WordTokenizer load(const std::filesystem::path& path);

    static std::vector<std::string> pre_tokenize(std::string_view text, bool lowercase);

    std::vector<TokenId> encode(std::string_view text) const override;
    std::size_t count_tokens(std::string_view text) const override;

    TokenId add_special_token(std::string_view token) override;
    std::optional<TokenId> special_id(std::string_view token) const override;
    bool is_special(TokenId id) const override;

    TokenId pad_id() const override { return 0; }
    TokenId unk_id() const override { return 1; }
    TokenId cls_id() const override { return 2; }
    TokenId sep_id() const override { return 3; }
    TokenId mask_id() const override { return 4; }
    std::string mask_token() const override { return std::string(kMask); }

    std::size_t vocab_size() const override { return id_to_token_.size(); }
    std::string token(TokenId id) const override;

    TokenId add_word(std::string_view word);
    std::optional<TokenId> word_id(std::string_view word) const;

    void save(const std::filesystem::path& path) const override;
    std::unique_ptr<Tokenizer> clone() const override;

    const WordTokenizerOptions& options() const noexcept { return options_; }

private:
    WordTokenizerOptions options_;
    std::vector<std::string> id_to_token_;
    std::vector<bool> special_;
    std::unordered_map<std::string, TokenId> words_;
    std::unordered_map<std::string, TokenId> specials_;
};

} // namespace fintree
