#include "fintree/pretraining.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <sstream>

#include "fintree/errors.hpp"
#include "fintree/optim.hpp"
#include "fintree/strings.hpp"
#include "fintree/training.hpp"

namespace fintree {

std::string_view to_string(LengthUnit unit) noexcept {
    return unit == LengthUnit::tokens ? "tokens" : "words";
}

LengthUnit parse_length_unit(std::string_view text) {
    const std::string lowered = to_lower(trim(text));
    if (lowered == "tokens") {
        return LengthUnit::tokens;
    }
    if (lowered == "words") {
        return LengthUnit::words;
    }
    throw ConfigError("length_unit", "expected 'tokens' or 'words', got '" + std::string(text) + "'");
}

std::size_t document_length(std::string_view text, const Tokenizer& tokenizer, LengthUnit unit) {
    return unit == LengthUnit::tokens ? tokenizer.count_tokens(text) : split_whitespace(text).size();
}

CorpusDocument make_document(std::string text, std::string source_tag, const Tokenizer& tokenizer, LengthUnit unit) {
    CorpusDocument doc;
    doc.token_count = document_length(text, tokenizer, unit);
    doc.text = std::move(text);
    doc.source_tag = std::move(source_tag);
    return doc;
}

nlohmann::json FilterSummary::to_json() const {
    nlohmann::json hist = nlohmann::json::array();
    for (const auto& [lower, count] : histogram) {
        const std::size_t upper = lower == 0 ? 0 : 2 * lower - 1;
        hist.push_back({{"min", lower}, {"max", upper}, {"count", count}});
    }
    return {{"kept", kept}, {"dropped", dropped}, {"token_histogram", hist}};
}

namespace {

std::size_t bucket_of(std::size_t n) {
    return n == 0 ? 0 : std::bit_floor(n);
}

} // namespace

std::vector<CorpusDocument> filter_corpus(const std::vector<CorpusDocument>& docs, std::size_t min_len,
                                          std::size_t max_len, FilterSummary* summary) {
    std::vector<CorpusDocument> kept;
    FilterSummary local;
    for (const auto& doc : docs) {
        ++local.histogram[bucket_of(doc.token_count)];
        if (doc.token_count >= min_len && doc.token_count <= max_len) {
            kept.push_back(doc);
            ++local.kept;
        } else {
            ++local.dropped;
        }
    }
    if (summary != nullptr) {
        *summary = std::move(local);
    }
    return kept;
}

namespace {

struct RawDocument {
    std::string text;
    std::string source_tag;
};

std::vector<RawDocument> read_raw_corpus(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw Error("corpus directory '" + dir.string() + "' does not exist");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(dir)) {
        const auto ext = entry.path().extension();
        if (entry.is_regular_file() && (ext == ".txt" || ext == ".jsonl")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());

    std::vector<RawDocument> docs;
    for (const auto& file : files) {
        const std::string tag = file.parent_path().filename().string();
        if (file.extension() == ".txt") {
            docs.push_back({read_file(file), tag});
            continue;
        }
        std::istringstream in{read_file(file)};
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) {
                continue;
            }
            try {
                docs.push_back({nlohmann::json::parse(line).at("text").get<std::string>(), tag});
            } catch (const nlohmann::json::exception& e) {
                throw ParseError(line_no, file.string() + ": " + e.what());
            }
        }
    }
    return docs;
}

} // namespace

std::vector<CorpusDocument> load_corpus(const std::filesystem::path& dir, const Tokenizer& tokenizer,
                                        LengthUnit unit) {
    std::vector<CorpusDocument> docs;
    for (auto& raw : read_raw_corpus(dir)) {
        docs.push_back(make_document(std::move(raw.text), std::move(raw.source_tag), tokenizer, unit));
    }
    return docs;
}

std::vector<std::string> read_corpus_texts(const std::filesystem::path& dir) {
    std::vector<std::string> texts;
    for (auto& raw : read_raw_corpus(dir)) {
        texts.push_back(std::move(raw.text));
    }
    return texts;
}

void save_corpus(const std::vector<CorpusDocument>& docs, const std::filesystem::path& path) {
    std::string out;
    for (const auto& doc : docs) {
        out += nlohmann::json{{"text", doc.text}, {"source_tag", doc.source_tag}, {"token_count", doc.token_count}}
                   .dump() +
               "\n";
    }
    write_file(path, out);
}

std::vector<std::vector<TokenId>> make_windows(const std::vector<CorpusDocument>& docs, const Tokenizer& tokenizer,
                                               std::size_t seq_len) {
    if (seq_len < 3) {
        throw ConfigError("seq_len", "must be at least 3");
    }
    const std::size_t body = seq_len - 2;
    std::vector<std::vector<TokenId>> windows;
    for (const auto& doc : docs) {
        const auto ids = tokenizer.encode(doc.text);
        for (std::size_t start = 0; start < ids.size(); start += body) {
            const std::size_t end = std::min(ids.size(), start + body);
            std::vector<TokenId> w;
            w.reserve(end - start + 2);
            w.push_back(tokenizer.cls_id());
            w.insert(w.end(), ids.begin() + static_cast<std::ptrdiff_t>(start),
                     ids.begin() + static_cast<std::ptrdiff_t>(end));
            w.push_back(tokenizer.sep_id());
            windows.push_back(std::move(w));
        }
    }
    return windows;
}

std::size_t MLMExample::num_selected() const {
    return static_cast<std::size_t>(
        std::count_if(labels.begin(), labels.end(), [](std::int32_t l) { return l != kIgnoreIndex; }));
}

MLMExample make_mlm_example(std::span<const TokenId> token_ids, const Tokenizer& tokenizer, std::mt19937_64& rng,
                            const MaskingOptions& options) {
    MLMExample ex;
    ex.input_ids.assign(token_ids.begin(), token_ids.end());
    ex.labels.assign(token_ids.size(), kIgnoreIndex);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<TokenId> any_id(0, static_cast<TokenId>(tokenizer.vocab_size()) - 1);
    for (std::size_t i = 0; i < token_ids.size(); ++i) {
        if (tokenizer.is_special(token_ids[i])) {
            continue;
        }
        if (!(unit(rng) < options.mask_prob)) {
            continue;
        }
        ex.labels[i] = token_ids[i];
        const double branch = unit(rng);
        if (branch < options.mask_fraction) {
            ex.input_ids[i] = tokenizer.mask_id();
        } else if (branch < options.mask_fraction + options.random_fraction) {
            ex.input_ids[i] = any_id(rng);
        }
    }
    return ex;
}

void PretrainConfig::validate() const {
    if (batch_size < 1) {
        throw ConfigError("pretrain.batch_size", "must be at least 1");
    }
    if (seq_len < 3) {
        throw ConfigError("pretrain.seq_len", "must be at least 3");
    }
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw ConfigError("pretrain.learning_rate", "must be a positive finite number");
    }
    if (!(warmup_fraction >= 0.0 && warmup_fraction <= 1.0)) {
        throw ConfigError("pretrain.warmup_fraction", "must lie in [0, 1]");
    }
    if (!(weight_decay >= 0.0)) {
        throw ConfigError("pretrain.weight_decay", "must be non-negative");
    }
    if (!(max_grad_norm >= 0.0)) {
        throw ConfigError("pretrain.max_grad_norm", "must be non-negative");
    }
    if (!(mask_prob > 0.0 && mask_prob <= 1.0)) {
        throw ConfigError("pretrain.mask_prob", "must lie in (0, 1]");
    }
}

nlohmann::json PretrainConfig::to_json() const {
    return {{"steps", steps},
            {"batch_size", batch_size},
            {"seq_len", seq_len},
            {"learning_rate", learning_rate},
            {"warmup_fraction", warmup_fraction},
            {"weight_decay", weight_decay},
            {"max_grad_norm", max_grad_norm},
            {"mask_prob", mask_prob},
            {"seed", seed},
            {"checkpoint_every", checkpoint_every}};
}

PretrainConfig PretrainConfig::from_json(const nlohmann::json& j) {
    PretrainConfig c;
    const auto get = [&j](const char* key, auto& field) {
        if (!j.contains(key) || j.at(key).is_null()) {
            return;
        }
        try {
            field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(std::string("pretrain.") + key, e.what());
        }
    };
    get("steps", c.steps);
    get("batch_size", c.batch_size);
    get("seq_len", c.seq_len);
    get("learning_rate", c.learning_rate);
    get("warmup_fraction", c.warmup_fraction);
    get("weight_decay", c.weight_decay);
    get("max_grad_norm", c.max_grad_norm);
    get("mask_prob", c.mask_prob);
    get("seed", c.seed);
    get("checkpoint_every", c.checkpoint_every);
    return c;
}

std::string PretrainLog::to_jsonl() const {
    std::string out;
    for (const auto& s : steps) {
        out += nlohmann::json{{"step", s.step}, {"loss", s.loss}, {"lr", s.lr}}.dump() + "\n";
    }
    return out;
}

void copy_parameters(EncoderBackbone& source, EncoderBackbone& target) {
    const ParameterList from = source.parameters();
    const ParameterList to = target.parameters();
    if (from.size() != to.size()) {
        throw CheckpointError("parameter count differs between backbones");
    }
    for (std::size_t i = 0; i < from.size(); ++i) {
        if (from[i]->name != to[i]->name || from[i]->value.rows() != to[i]->value.rows() ||
            from[i]->value.cols() != to[i]->value.cols()) {
            throw CheckpointError("parameter '" + to[i]->name + "' does not match the checkpoint");
        }
        to[i]->value = from[i]->value;
    }
}

namespace {

// 0: shuffle, 1: masking; a separate stream per (purpose, index).
std::mt19937_64 derived_rng(std::uint64_t seed, std::uint32_t purpose, std::uint64_t index) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32U), purpose,
                      static_cast<std::uint32_t>(index), static_cast<std::uint32_t>(index >> 32U)};
    return std::mt19937_64(seq);
}

class WindowSampler {
public:
    WindowSampler(std::size_t count, std::uint64_t seed) : count_(count), seed_(seed) {}

    // Sample k of the stream: epoch k / count over a fresh permutation per epoch.
    std::size_t at(std::size_t k) {
        const std::size_t epoch = k / count_;
        if (epoch != epoch_ || order_.empty()) {
            order_.resize(count_);
            for (std::size_t i = 0; i < count_; ++i) {
                order_[i] = i;
            }
            auto rng = derived_rng(seed_, 0, epoch);
            std::shuffle(order_.begin(), order_.end(), rng);
            epoch_ = epoch;
        }
        return order_[k % count_];
    }

private:
    std::size_t count_;
    std::uint64_t seed_;
    std::size_t epoch_ = 0;
    std::vector<std::size_t> order_;
};

void save_pretrain_checkpoint(const EncoderBackbone& backbone, const AdamW& optimizer, std::size_t step,
                              const PretrainConfig& cfg, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    save_backbone(backbone, dir / "backbone.bin");
    optimizer.save(dir / "optimizer.bin");
    write_file(dir / "state.json", nlohmann::json{{"step", step}, {"config", cfg.to_json()}}.dump(2) + "\n");
}

} // namespace

PretrainLog further_pretrain(const std::vector<std::vector<TokenId>>& windows, const Tokenizer& tokenizer,
                             EncoderBackbone& backbone, const PretrainConfig& cfg, const PretrainOptions& options) {
    cfg.validate();
    PretrainLog log;
    if (cfg.steps == 0) {
        return log;
    }
    if (!backbone.has_mlm_head()) {
        throw StateError("backbone '" + backbone.kind() + "' has no MLM head");
    }
    if (windows.empty()) {
        throw Error("pretraining corpus produced no windows");
    }
    if (backbone.vocab_size() < tokenizer.vocab_size()) {
        throw DimensionMismatch("backbone vocabulary is smaller than the tokenizer's");
    }

    const ParameterList params = backbone.parameters();
    AdamW optimizer(AdamWOptions{.weight_decay = cfg.weight_decay});
    std::size_t start_step = 0;
    if (options.resume_from) {
        const auto& dir = *options.resume_from;
        try {
            auto saved = load_backbone(dir / "backbone.bin");
            copy_parameters(*saved, backbone);
            optimizer.load(dir / "optimizer.bin");
            start_step = nlohmann::json::parse(read_file(dir / "state.json")).at("step").get<std::size_t>();
        } catch (const nlohmann::json::exception& e) {
            throw CheckpointError("cannot resume from '" + dir.string() + "': " + e.what());
        }
    }

    const auto warmup_steps =
        static_cast<std::size_t>(std::llround(cfg.warmup_fraction * static_cast<double>(cfg.steps)));
    const MaskingOptions masking{.mask_prob = cfg.mask_prob};
    WindowSampler sampler(windows.size(), cfg.seed);

    for (std::size_t step = start_step; step < cfg.steps; ++step) {
        auto mask_rng = derived_rng(cfg.seed, 1, step);
        std::vector<MLMExample> batch;
        std::size_t selected = 0;
        for (std::size_t b = 0; b < cfg.batch_size; ++b) {
            const auto& window = windows[sampler.at(step * cfg.batch_size + b)];
            MLMExample ex = make_mlm_example(window, tokenizer, mask_rng, masking);
            // Every window carries at least one ordinary token, so this terminates.
            while (ex.num_selected() == 0) {
                ex = make_mlm_example(window, tokenizer, mask_rng, masking);
            }
            selected += ex.num_selected();
            batch.push_back(std::move(ex));
        }

        zero_grad(params);
        const double scale = 1.0 / static_cast<double>(selected);
        double loss = 0.0;
        for (const auto& ex : batch) {
            const std::vector<std::uint8_t> attention(ex.input_ids.size(), 1);
            std::unique_ptr<ForwardTrace> trace;
            const Matrix hidden = backbone.forward(ex.input_ids, attention, &trace);

            std::vector<Eigen::Index> rows;
            for (std::size_t i = 0; i < ex.labels.size(); ++i) {
                if (ex.labels[i] != kIgnoreIndex) {
                    rows.push_back(static_cast<Eigen::Index>(i));
                }
            }
            Matrix picked(static_cast<Eigen::Index>(rows.size()), hidden.cols());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                picked.row(static_cast<Eigen::Index>(r)) = hidden.row(rows[r]);
            }
            Matrix logits = backbone.mlm_logits(picked);
            Matrix d_logits(logits.rows(), logits.cols());
            for (Eigen::Index r = 0; r < logits.rows(); ++r) {
                const double mx = logits.row(r).maxCoeff();
                const RowVector e = (logits.row(r).array() - mx).exp().matrix();
                const double z = e.sum();
                const auto gold = static_cast<Eigen::Index>(ex.labels[static_cast<std::size_t>(rows[static_cast<std::size_t>(r)])]);
                loss -= (logits(r, gold) - mx - std::log(z)) * scale;
                d_logits.row(r) = e / z * scale;
                d_logits(r, gold) -= scale;
            }
            const Matrix d_picked = backbone.mlm_backward(picked, d_logits);
            Matrix d_hidden = Matrix::Zero(hidden.rows(), hidden.cols());
            for (std::size_t r = 0; r < rows.size(); ++r) {
                d_hidden.row(rows[r]) = d_picked.row(static_cast<Eigen::Index>(r));
            }
            backbone.backward(*trace, d_hidden);
        }
        if (!std::isfinite(loss)) {
            throw NonFiniteLoss(step, loss);
        }
        if (cfg.max_grad_norm > 0.0) {
            clip_grad_norm(params, cfg.max_grad_norm);
        }
        const double lr = lr_at_step(step, cfg.steps, warmup_steps, cfg.learning_rate);
        optimizer.step(params, lr);

        const PretrainStep event{step, loss, lr};
        log.steps.push_back(event);
        if (options.on_step) {
            options.on_step(event);
        }
        const std::size_t done = step + 1;
        if (options.out_dir && cfg.checkpoint_every > 0 && done % cfg.checkpoint_every == 0 && done < cfg.steps) {
            save_pretrain_checkpoint(backbone, optimizer, done, cfg,
                                     *options.out_dir / ("checkpoint-" + std::to_string(done)));
        }
    }

    if (options.out_dir) {
        save_pretrain_checkpoint(backbone, optimizer, cfg.steps, cfg, *options.out_dir);
        std::ofstream out(*options.out_dir / "pretrain_log.jsonl", std::ios::app);
        out << log.to_jsonl();
    }
    return log;
}

} // namespace fintree
