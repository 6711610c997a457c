#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "fintree/backbone.hpp"
#include "fintree/tokenizer.hpp"

namespace fintree {

inline constexpr std::size_t kDefaultMinDocLength = 64;
inline constexpr std::size_t kDefaultMaxDocLength = 2048;
inline constexpr std::int32_t kIgnoreIndex = -100;

// How document length is measured for filtering.
enum class LengthUnit { tokens, words };

std::string_view to_string(LengthUnit unit) noexcept;
LengthUnit parse_length_unit(std::string_view text);

struct CorpusDocument {
    std::string text;
    std::size_t token_count = 0;
    std::string source_tag;
};

std::size_t document_length(std::string_view text, const Tokenizer& tokenizer, LengthUnit unit);
CorpusDocument make_document(std::string text, std::string source_tag, const Tokenizer& tokenizer,
                             LengthUnit unit = LengthUnit::tokens);

struct FilterSummary {
    std::size_t kept = 0;
    std::size_t dropped = 0;
    // Length histogram over all input documents, power-of-two buckets keyed by lower bound.
    std::map<std::size_t, std::size_t> histogram;

    nlohmann::json to_json() const;
};

// Keeps documents with min_len <= token_count <= max_len, in input order.
std::vector<CorpusDocument> filter_corpus(const std::vector<CorpusDocument>& docs,
                                          std::size_t min_len = kDefaultMinDocLength,
                                          std::size_t max_len = kDefaultMaxDocLength,
                                          FilterSummary* summary = nullptr);

// Reads every *.txt (one document per file) and *.jsonl (one {"text": ...} per
// line) under dir, recursively and in sorted path order. The source tag is the
// name of the directory holding the file.
std::vector<CorpusDocument> load_corpus(const std::filesystem::path& dir, const Tokenizer& tokenizer,
                                        LengthUnit unit = LengthUnit::tokens);
std::vector<std::string> read_corpus_texts(const std::filesystem::path& dir);

// JSONL {"text", "source_tag", "token_count"}.
void save_corpus(const std::vector<CorpusDocument>& docs, const std::filesystem::path& path);

// Non-overlapping windows of at most seq_len ids, each wrapped as [CLS] ... [SEP].
std::vector<std::vector<TokenId>> make_windows(const std::vector<CorpusDocument>& docs, const Tokenizer& tokenizer,
                                               std::size_t seq_len);

struct MLMExample {
    std::vector<TokenId> input_ids;
    std::vector<std::int32_t> labels; // original id where selected, else kIgnoreIndex

    std::size_t num_selected() const;
};

struct MaskingOptions {
    double mask_prob = 0.15;
    double mask_fraction = 0.8;   // of selected: replace with the mask id
    double random_fraction = 0.1; // of selected: replace with a uniform vocabulary id
};

// Token-level BERT masking. Special-token positions are never selected.
MLMExample make_mlm_example(std::span<const TokenId> token_ids, const Tokenizer& tokenizer, std::mt19937_64& rng,
                            const MaskingOptions& options = {});

// Defaults are sized for a single CPU.
struct PretrainConfig {
    std::size_t steps = 1000;
    std::size_t batch_size = 8;
    std::size_t seq_len = 128;
    double learning_rate = 1e-4;
    double warmup_fraction = 0.06;
    double weight_decay = 0.01;
    double max_grad_norm = 1.0;
    double mask_prob = 0.15;
    std::uint64_t seed = 42;
    std::size_t checkpoint_every = 0; // 0: only at the end

    void validate() const;
    nlohmann::json to_json() const;
    static PretrainConfig from_json(const nlohmann::json& j);
};

struct PretrainStep {
    std::size_t step = 0;
    double loss = 0.0;
    double lr = 0.0;
};

struct PretrainLog {
    std::vector<PretrainStep> steps;
    std::string to_jsonl() const;
};

struct PretrainOptions {
    // Checkpoints (backbone.bin, optimizer.bin, state.json) and pretrain_log.jsonl go here.
    std::optional<std::filesystem::path> out_dir;
    // A directory previously written as a checkpoint; training continues after its step.
    std::optional<std::filesystem::path> resume_from;
    std::function<void(const PretrainStep&)> on_step;
};

// MLM further pretraining. Batch contents and masking are pure functions of
// (seed, step), so a resumed run replays the uninterrupted trajectory.
PretrainLog further_pretrain(const std::vector<std::vector<TokenId>>& windows, const Tokenizer& tokenizer,
                             EncoderBackbone& backbone, const PretrainConfig& cfg,
                             const PretrainOptions& options = {});

// Copies parameter values by name from source into target; shapes must match.
void copy_parameters(EncoderBackbone& source, EncoderBackbone& target);

} // namespace fintree
