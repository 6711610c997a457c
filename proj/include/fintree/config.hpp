#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "fintree/data.hpp"
#include "fintree/pretraining.hpp"
#include "fintree/prompting.hpp"
#include "fintree/tokenizer.hpp"
#include "fintree/training.hpp"

namespace fintree {

struct RunPaths {
    std::optional<std::filesystem::path> train;
    std::optional<std::filesystem::path> dev;
    std::optional<std::filesystem::path> test;
    std::optional<std::filesystem::path> labels;
    std::optional<std::filesystem::path> corpus;
    std::optional<std::filesystem::path> checkpoint;
    std::optional<std::filesystem::path> out;
};

struct CorpusFilterConfig {
    std::size_t min_len = kDefaultMinDocLength;
    std::size_t max_len = kDefaultMaxDocLength;
    LengthUnit unit = LengthUnit::tokens;
};

// Everything a command needs, serializable as one nested JSON document.
// prompt.max_len and prompt.use_markers are taken from train.max_len / train.use_pi.
struct RunConfig {
    TrainConfig train;
    PretrainConfig pretrain;
    PromptOptions prompt;
    nlohmann::json backbone;
    WordTokenizerOptions tokenizer;
    FieldNames fields;
    CorpusFilterConfig corpus;
    RunPaths paths;

    RunConfig();

    // Throws ConfigError naming the offending field. Input paths that are set must exist.
    void validate() const;
    PromptOptions resolved_prompt() const;

    nlohmann::json to_json() const;
    // Unknown keys are rejected so typos cannot silently fall back to defaults.
    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::filesystem::path& path);

    // SHA-256 of the canonical serialization; independent of key order in the source file.
    std::string hash() const;
};

// Writes <prefix>run_config.json (resolved) and <prefix>config_hash.txt into dir.
void persist_run_config(const RunConfig& cfg, const std::filesystem::path& dir, std::string_view prefix = "");

std::string sha256_hex(std::string_view data);

} // namespace fintree
