#include "fintree/config.hpp"

#include <array>
#include <cstdio>

#include <openssl/evp.h>

#include "fintree/errors.hpp"
#include "fintree/modeling.hpp"
#include "fintree/strings.hpp"
#include "fintree/tiny_encoder.hpp"

namespace fintree {

namespace {

void reject_unknown_keys(const nlohmann::json& j, const nlohmann::json& known, const std::string& section) {
    if (!j.is_object()) {
        throw ConfigError(section.empty() ? "<root>" : section, "expected an object");
    }
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw ConfigError(section.empty() ? key : section + "." + key, "unknown key");
        }
    }
}

nlohmann::json fields_to_json(const FieldNames& f) {
    return {{"id", f.id},           {"token", f.tokens},     {"e1_start", f.e1_start},
            {"e1_end", f.e1_end},   {"e1_type", f.e1_type},  {"e2_start", f.e2_start},
            {"e2_end", f.e2_end},   {"e2_type", f.e2_type},  {"relation", f.relation}};
}

FieldNames fields_from_json(const nlohmann::json& j) {
    FieldNames f;
    f.id = j.value("id", f.id);
    f.tokens = j.value("token", f.tokens);
    f.e1_start = j.value("e1_start", f.e1_start);
    f.e1_end = j.value("e1_end", f.e1_end);
    f.e1_type = j.value("e1_type", f.e1_type);
    f.e2_start = j.value("e2_start", f.e2_start);
    f.e2_end = j.value("e2_end", f.e2_end);
    f.e2_type = j.value("e2_type", f.e2_type);
    f.relation = j.value("relation", f.relation);
    return f;
}

nlohmann::json optional_path(const std::optional<std::filesystem::path>& p) {
    return p ? nlohmann::json(p->string()) : nlohmann::json(nullptr);
}

struct PathField {
    const char* name;
    std::optional<std::filesystem::path> RunPaths::*member;
    bool input;
};

constexpr std::array<PathField, 7> kPathFields{{
    {"train", &RunPaths::train, true},
    {"dev", &RunPaths::dev, true},
    {"test", &RunPaths::test, true},
    {"labels", &RunPaths::labels, true},
    {"corpus", &RunPaths::corpus, true},
    {"checkpoint", &RunPaths::checkpoint, true},
    {"out", &RunPaths::out, false},
}};

} // namespace

RunConfig::RunConfig() : backbone(TinyEncoderConfig{}.to_json()) {}

PromptOptions RunConfig::resolved_prompt() const {
    PromptOptions p = prompt;
    p.max_len = train.max_len;
    p.use_markers = train.use_pi;
    return p;
}

void RunConfig::validate() const {
    train.validate();
    pretrain.validate();
    if (corpus.min_len > corpus.max_len) {
        throw ConfigError("corpus.min_len", "must not exceed corpus.max_len");
    }
    if (prompt.query_template.find(kMaskPlaceholder) == std::string::npos) {
        throw ConfigError("prompt.template", "must contain the [MASK] placeholder");
    }
    for (const auto& field : kPathFields) {
        const auto& value = paths.*(field.member);
        if (field.input && value && !std::filesystem::exists(*value)) {
            throw ConfigError(std::string("paths.") + field.name, "'" + value->string() + "' does not exist");
        }
    }
    if (train.use_fp_checkpoint && !std::filesystem::exists(*train.use_fp_checkpoint)) {
        throw ConfigError("train.use_fp_checkpoint", "'" + train.use_fp_checkpoint->string() + "' does not exist");
    }
}

nlohmann::json RunConfig::to_json() const {
    nlohmann::json prompt_json = prompt_to_json(prompt);
    prompt_json.erase("max_len");
    prompt_json.erase("use_markers");
    nlohmann::json path_json = nlohmann::json::object();
    for (const auto& field : kPathFields) {
        path_json[field.name] = optional_path(paths.*(field.member));
    }
    return {{"train", train.to_json()},
            {"pretrain", pretrain.to_json()},
            {"prompt", prompt_json},
            {"backbone", backbone},
            {"tokenizer",
             {{"lowercase", tokenizer.lowercase},
              {"min_frequency", tokenizer.min_frequency},
              {"max_vocab", tokenizer.max_vocab}}},
            {"fields", fields_to_json(fields)},
            {"corpus",
             {{"min_len", corpus.min_len},
              {"max_len", corpus.max_len},
              {"length_unit", std::string(to_string(corpus.unit))}}},
            {"paths", path_json}};
}

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    RunConfig c;
    const nlohmann::json defaults = c.to_json();
    reject_unknown_keys(j, defaults, "");
    try {
        if (j.contains("train")) {
            reject_unknown_keys(j.at("train"), defaults.at("train"), "train");
            c.train = TrainConfig::from_json(j.at("train"));
        }
        if (j.contains("pretrain")) {
            reject_unknown_keys(j.at("pretrain"), defaults.at("pretrain"), "pretrain");
            c.pretrain = PretrainConfig::from_json(j.at("pretrain"));
        }
        if (j.contains("prompt")) {
            reject_unknown_keys(j.at("prompt"), defaults.at("prompt"), "prompt");
            c.prompt = prompt_from_json(j.at("prompt"));
        }
        if (j.contains("backbone")) {
            if (!j.at("backbone").is_object()) {
                throw ConfigError("backbone", "expected an object");
            }
            c.backbone = j.at("backbone");
        }
        if (j.contains("tokenizer")) {
            const auto& t = j.at("tokenizer");
            reject_unknown_keys(t, defaults.at("tokenizer"), "tokenizer");
            c.tokenizer.lowercase = t.value("lowercase", c.tokenizer.lowercase);
            c.tokenizer.min_frequency = t.value("min_frequency", c.tokenizer.min_frequency);
            c.tokenizer.max_vocab = t.value("max_vocab", c.tokenizer.max_vocab);
        }
        if (j.contains("fields")) {
            reject_unknown_keys(j.at("fields"), defaults.at("fields"), "fields");
            c.fields = fields_from_json(j.at("fields"));
        }
        if (j.contains("corpus")) {
            const auto& k = j.at("corpus");
            reject_unknown_keys(k, defaults.at("corpus"), "corpus");
            c.corpus.min_len = k.value("min_len", c.corpus.min_len);
            c.corpus.max_len = k.value("max_len", c.corpus.max_len);
            if (k.contains("length_unit")) {
                c.corpus.unit = parse_length_unit(k.at("length_unit").get<std::string>());
            }
        }
        if (j.contains("paths")) {
            const auto& p = j.at("paths");
            reject_unknown_keys(p, defaults.at("paths"), "paths");
            for (const auto& field : kPathFields) {
                if (p.contains(field.name) && !p.at(field.name).is_null()) {
                    c.paths.*(field.member) = p.at(field.name).get<std::string>();
                }
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("<config>", e.what());
    }
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("<file>", path.string() + ": " + e.what());
    }
    return from_json(j);
}

std::string sha256_hex(std::string_view data) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 digest failed");
    }
    std::string hex;
    hex.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        char buf[3];
        std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string RunConfig::hash() const {
    // nlohmann::json objects keep keys sorted, so dump() is canonical.
    return sha256_hex(to_json().dump());
}

void persist_run_config(const RunConfig& cfg, const std::filesystem::path& dir, std::string_view prefix) {
    const std::string p(prefix);
    write_file(dir / (p + "run_config.json"), cfg.to_json().dump(2) + "\n");
    write_file(dir / (p + "config_hash.txt"), cfg.hash() + "\n");
}

} // namespace fintree
