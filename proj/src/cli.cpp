#include "fintree/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>

#include "CLI11.hpp"

#include "fintree/errors.hpp"
#include "fintree/evaluation.hpp"
#include "fintree/pretraining.hpp"
#include "fintree/strings.hpp"
#include "fintree/training.hpp"

namespace fintree {

namespace fs = std::filesystem;

std::string usage() {
    return "usage: fintree <command> [options]\n"
           "\n"
           "commands:\n"
           "  pretrain-corpus  --in DIR --out DIR [--min 64] [--max 2048] [--unit tokens|words]\n"
           "  pretrain         --corpus DIR --out DIR [--backbone NAME] [--steps N] [--seed S] [--resume DIR]\n"
           "  finetune         --train F --dev F --labels F --out DIR [--config F] [--seed S] [--fp DIR]\n"
           "  predict          --checkpoint DIR --test F --out F [--no-mcpp]\n"
           "  evaluate         --pred F --gold F --labels F\n"
           "  ensemble         --pred F1 F2 ... --out F [--labels F]\n"
           "  ablate           --config F --toggles mcpp,fp,pi,awp --train F --dev F --labels F --out DIR\n"
           "\n"
           "Every command accepts --config F (JSON run config); flags override file values.\n"
           "FINTREE_CACHE names a directory of pretrained backbones (<cache>/<name>/backbone.bin).\n";
}

namespace {

// Flags shared by the commands that resolve a RunConfig.
struct CommonFlags {
    std::optional<std::string> config;
    std::optional<std::uint64_t> seed;
};

RunConfig resolve_config(const CommonFlags& common) {
    RunConfig cfg = common.config ? RunConfig::load(*common.config) : RunConfig{};
    if (common.seed) {
        cfg.train.seed = *common.seed;
        cfg.pretrain.seed = *common.seed;
    }
    return cfg;
}

template <typename T>
void override_with(std::optional<T>& target, const std::optional<T>& flag) {
    if (flag) {
        target = flag;
    }
}

template <typename T>
const T& require(const std::optional<T>& value, const std::string& field) {
    if (!value) {
        throw ConfigError(field, "is required (pass --" + field + " or set paths." + field + " in the config)");
    }
    return *value;
}

void copy_source_config(const CommonFlags& common, const fs::path& dir) {
    if (common.config) {
        fs::create_directories(dir);
        fs::copy_file(*common.config, dir / "config_input.json", fs::copy_options::overwrite_existing);
    }
}

std::optional<fs::path> cache_dir() {
    if (const char* env = std::getenv("FINTREE_CACHE"); env != nullptr && *env != '\0') {
        return fs::path(env);
    }
    return std::nullopt;
}

std::vector<std::string> vocabulary_texts(const Dataset& train, const PromptOptions& prompt) {
    std::vector<std::string> texts;
    texts.reserve(train.size() + 1);
    for (const auto& inst : train.instances) {
        texts.push_back(build_query(inst, prompt.query_template) + " " + inst.sentence());
    }
    return texts;
}

LabelRegistry load_registry(const RunConfig& cfg) {
    return LabelRegistry::load(require(cfg.paths.labels, "labels"));
}

// ---- pretrain-corpus ----

int run_pretrain_corpus(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Filter a raw text corpus by document length", "fintree pretrain-corpus"};
    CommonFlags common;
    std::optional<std::string> in_dir, out_dir, unit, tokenizer_path;
    std::optional<std::size_t> min_len, max_len;
    app.add_option("--config", common.config);
    app.add_option("--in", in_dir, "Directory of *.txt / *.jsonl documents");
    app.add_option("--out", out_dir);
    app.add_option("--min", min_len);
    app.add_option("--max", max_len);
    app.add_option("--unit", unit, "tokens or words");
    app.add_option("--tokenizer", tokenizer_path, "tokenizer.json used for token counts");
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);

    RunConfig cfg = resolve_config(common);
    if (in_dir) {
        cfg.paths.corpus = *in_dir;
    }
    if (out_dir) {
        cfg.paths.out = *out_dir;
    }
    if (min_len) {
        cfg.corpus.min_len = *min_len;
    }
    if (max_len) {
        cfg.corpus.max_len = *max_len;
    }
    if (unit) {
        cfg.corpus.unit = parse_length_unit(*unit);
    }
    const fs::path corpus_dir = require(cfg.paths.corpus, "in");
    const fs::path dest = require(cfg.paths.out, "out");
    cfg.validate();

    const WordTokenizer tokenizer =
        tokenizer_path ? WordTokenizer::load(*tokenizer_path) : WordTokenizer(cfg.tokenizer);
    const auto docs = load_corpus(corpus_dir, tokenizer, cfg.corpus.unit);
    FilterSummary summary;
    const auto kept = filter_corpus(docs, cfg.corpus.min_len, cfg.corpus.max_len, &summary);

    fs::create_directories(dest);
    save_corpus(kept, dest / "corpus.jsonl");
    nlohmann::json stats = summary.to_json();
    stats["min_len"] = cfg.corpus.min_len;
    stats["max_len"] = cfg.corpus.max_len;
    stats["length_unit"] = std::string(to_string(cfg.corpus.unit));
    write_file(dest / "corpus_stats.json", stats.dump(2) + "\n");
    persist_run_config(cfg, dest);
    copy_source_config(common, dest);
    out << "kept " << summary.kept << ", dropped " << summary.dropped << "\n";
    return 0;
}

// ---- pretrain ----

int run_pretrain(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"MLM further pretraining of a backbone", "fintree pretrain"};
    CommonFlags common;
    std::optional<std::string> corpus, out_dir, backbone_name, resume;
    std::optional<std::size_t> steps, batch_size, seq_len;
    app.add_option("--config", common.config);
    app.add_option("--seed", common.seed);
    app.add_option("--corpus", corpus);
    app.add_option("--out", out_dir);
    app.add_option("--backbone", backbone_name, "Backbone kind, or a cached backbone name under FINTREE_CACHE");
    app.add_option("--steps", steps);
    app.add_option("--batch-size", batch_size);
    app.add_option("--seq-len", seq_len);
    app.add_option("--resume", resume, "Checkpoint directory to continue from");
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);

    RunConfig cfg = resolve_config(common);
    if (corpus) {
        cfg.paths.corpus = *corpus;
    }
    if (out_dir) {
        cfg.paths.out = *out_dir;
    }
    if (steps) {
        cfg.pretrain.steps = *steps;
    }
    if (batch_size) {
        cfg.pretrain.batch_size = *batch_size;
    }
    if (seq_len) {
        cfg.pretrain.seq_len = *seq_len;
    }
    const fs::path corpus_dir = require(cfg.paths.corpus, "corpus");
    const fs::path dest = require(cfg.paths.out, "out");
    cfg.validate();

    std::unique_ptr<WordTokenizer> tokenizer;
    std::unique_ptr<EncoderBackbone> backbone;
    const auto cache = cache_dir();
    if (backbone_name && cache && fs::exists(*cache / *backbone_name / "backbone.bin")) {
        const fs::path cached = *cache / *backbone_name;
        tokenizer = std::make_unique<WordTokenizer>(WordTokenizer::load(cached / "tokenizer.json"));
        backbone = load_backbone(cached / "backbone.bin");
    } else {
        if (backbone_name) {
            cfg.backbone["kind"] = *backbone_name;
        }
        tokenizer = std::make_unique<WordTokenizer>(WordTokenizer::train(read_corpus_texts(corpus_dir), cfg.tokenizer));
        register_prompt_tokens(*tokenizer, cfg.prompt.markers);
        nlohmann::json backbone_cfg = cfg.backbone;
        backbone_cfg["vocab_size"] = tokenizer->vocab_size();
        RandomSources rng = set_seed(cfg.pretrain.seed);
        backbone = create_backbone(backbone_cfg, rng.init);
    }

    const auto docs = load_corpus(corpus_dir, *tokenizer, cfg.corpus.unit);
    const auto windows = make_windows(docs, *tokenizer, cfg.pretrain.seq_len);
    fs::create_directories(dest);
    PretrainOptions options;
    options.out_dir = dest;
    if (resume) {
        options.resume_from = fs::path(*resume);
    }
    options.on_step = [&out, total = cfg.pretrain.steps](const PretrainStep& s) {
        if ((s.step + 1) % 50 == 0 || s.step + 1 == total) {
            out << "step " << s.step + 1 << "/" << total << " loss " << s.loss << "\n";
        }
    };
    further_pretrain(windows, *tokenizer, *backbone, cfg.pretrain, options);
    tokenizer->save(dest / "tokenizer.json");
    persist_run_config(cfg, dest);
    copy_source_config(common, dest);
    return 0;
}

// ---- finetune ----

struct FinetuneFlags {
    std::optional<std::string> train, dev, labels, out, fp;
    std::optional<std::size_t> epochs, batch_size, max_len;
    std::optional<double> lr;
    bool no_pi = false;
    bool no_mcpp = false;
    bool no_awp = false;
};

void add_finetune_flags(CLI::App& app, CommonFlags& common, FinetuneFlags& f) {
    app.add_option("--config", common.config);
    app.add_option("--seed", common.seed);
    app.add_option("--train", f.train);
    app.add_option("--dev", f.dev);
    app.add_option("--labels", f.labels);
    app.add_option("--out", f.out);
    app.add_option("--fp", f.fp, "Further-pretraining output directory");
    app.add_option("--epochs", f.epochs);
    app.add_option("--batch-size", f.batch_size);
    app.add_option("--max-len", f.max_len);
    app.add_option("--lr", f.lr);
    app.add_flag("--no-pi", f.no_pi);
    app.add_flag("--no-mcpp", f.no_mcpp);
    app.add_flag("--no-awp", f.no_awp);
}

void apply_finetune_flags(RunConfig& cfg, const FinetuneFlags& f) {
    if (f.train) {
        cfg.paths.train = *f.train;
    }
    if (f.dev) {
        cfg.paths.dev = *f.dev;
    }
    if (f.labels) {
        cfg.paths.labels = *f.labels;
    }
    if (f.out) {
        cfg.paths.out = *f.out;
    }
    if (f.fp) {
        cfg.train.use_fp_checkpoint = *f.fp;
    }
    if (f.epochs) {
        const bool awp_was_off = !cfg.train.awp_enabled();
        cfg.train.epochs = *f.epochs;
        if (awp_was_off) {
            cfg.train.awp_start_epoch = cfg.train.epochs + 1;
        }
    }
    if (f.batch_size) {
        cfg.train.batch_size = *f.batch_size;
    }
    if (f.max_len) {
        cfg.train.max_len = *f.max_len;
    }
    if (f.lr) {
        cfg.train.learning_rate = *f.lr;
    }
    if (f.no_pi) {
        cfg.train.use_pi = false;
    }
    if (f.no_mcpp) {
        cfg.train.use_mcpp_eval = false;
    }
    if (f.no_awp) {
        cfg.train.awp_start_epoch = cfg.train.epochs + 1;
    }
}

int run_finetune(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Fine-tune a relation model", "fintree finetune"};
    CommonFlags common;
    FinetuneFlags flags;
    add_finetune_flags(app, common, flags);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);

    RunConfig cfg = resolve_config(common);
    apply_finetune_flags(cfg, flags);
    const fs::path train_path = require(cfg.paths.train, "train");
    const fs::path dest = require(cfg.paths.out, "out");
    cfg.validate();

    const LabelRegistry registry = load_registry(cfg);
    const Dataset train = load_instances(train_path, registry, Split::train, cfg.fields);
    const Dataset dev =
        cfg.paths.dev ? load_instances(*cfg.paths.dev, registry, Split::dev, cfg.fields) : Dataset{Split::dev, {}};
    const CompatibilityTable table = CompatibilityTable::build(registry);

    RelationModel model = build_model(cfg, cfg.train, train, registry);
    fs::create_directories(dest);
    persist_run_config(cfg, dest);
    copy_source_config(common, dest);

    FinetuneOptions options;
    options.out_dir = dest;
    options.on_epoch = [&out](const EpochEvent& e) {
        out << "epoch " << e.epoch << " loss " << e.mean_loss;
        if (e.micro_f1) {
            out << " dev micro " << *e.micro_f1 << " macro " << *e.macro_f1 << " weighted " << *e.weighted_f1;
        }
        out << "\n";
    };
    const TrainingLog log = finetune(train, dev, model, table, cfg.train, options);
    if (log.steps.empty()) {
        save_checkpoint(model, dest / "checkpoint", {{"seed", cfg.train.seed}, {"config_hash", cfg.hash()}});
        write_file(dest / "train_log.jsonl", "");
    }
    return 0;
}

// ---- predict ----

int run_predict(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Predict relations with a fine-tuned checkpoint", "fintree predict"};
    CommonFlags common;
    std::optional<std::string> checkpoint, test, out_file;
    bool no_mcpp = false;
    app.add_option("--config", common.config);
    app.add_option("--checkpoint", checkpoint);
    app.add_option("--test", test);
    app.add_option("--out", out_file, "Prediction JSONL file");
    app.add_flag("--no-mcpp", no_mcpp);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);

    RunConfig cfg = resolve_config(common);
    if (checkpoint) {
        cfg.paths.checkpoint = *checkpoint;
    }
    if (test) {
        cfg.paths.test = *test;
    }
    if (out_file) {
        cfg.paths.out = *out_file;
    }
    if (no_mcpp) {
        cfg.train.use_mcpp_eval = false;
    }
    const fs::path ckpt = require(cfg.paths.checkpoint, "checkpoint");
    const fs::path test_path = require(cfg.paths.test, "test");
    const fs::path dest = require(cfg.paths.out, "out");
    cfg.validate();

    const RelationModel model = load_checkpoint(ckpt);
    const Dataset ds = load_instances(test_path, model.registry, Split::test, cfg.fields);
    const CompatibilityTable table = CompatibilityTable::build(model.registry);
    const auto ckpt_config = nlohmann::json::parse(read_file(ckpt / "config.json"));
    std::optional<std::uint64_t> seed;
    if (ckpt_config.contains("seed")) {
        seed = ckpt_config.at("seed").get<std::uint64_t>();
        cfg.train.seed = *seed;
    }
    const PredictionSet preds = predict_dataset(model, ds, table, cfg.train.use_mcpp_eval, seed);
    write_file(dest, to_jsonl(preds, model.registry));
    persist_run_config(cfg, dest.parent_path().empty() ? fs::path(".") : dest.parent_path(),
                       dest.filename().string() + ".");
    out << "wrote " << preds.size() << " predictions to " << dest.string() << "\n";
    return 0;
}

// ---- evaluate ----

int run_evaluate(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Score predictions against gold labels", "fintree evaluate"};
    CommonFlags common;
    std::optional<std::string> pred, gold, labels;
    app.add_option("--config", common.config);
    app.add_option("--pred", pred);
    app.add_option("--gold", gold);
    app.add_option("--labels", labels);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);

    RunConfig cfg = resolve_config(common);
    if (labels) {
        cfg.paths.labels = *labels;
    }
    if (gold) {
        cfg.paths.test = *gold;
    }
    const fs::path pred_path = require(pred, "pred");
    const fs::path gold_path = require(cfg.paths.test, "gold");
    if (!fs::exists(pred_path)) {
        throw ConfigError("pred", "'" + pred_path.string() + "' does not exist");
    }
    cfg.validate();

    const LabelRegistry registry = load_registry(cfg);
    const Dataset gold_ds = load_instances(gold_path, registry, Split::test, cfg.fields);
    const PredictionSet preds = load_predictions(pred_path, registry);
    EvalReport report = f1_scores(preds, gold_ds, registry);
    report.run_meta["pred"] = pred_path.string();
    // Provenance of the prediction run, when predict left it next to the file.
    const fs::path pred_cfg = pred_path.parent_path() / (pred_path.filename().string() + ".run_config.json");
    if (fs::exists(pred_cfg)) {
        const RunConfig producer = RunConfig::load(pred_cfg);
        report.run_meta["config_hash"] = producer.hash();
        report.run_meta["seed"] = producer.train.seed;
    } else {
        report.run_meta["config_hash"] = nullptr;
        report.run_meta["seed"] = nullptr;
    }
    out << report.to_json().dump(2) << "\n";
    return 0;
}

// ---- ensemble ----

int run_ensemble(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Hard-vote several prediction files", "fintree ensemble"};
    CommonFlags common;
    std::vector<std::string> preds;
    std::optional<std::string> out_file, labels;
    app.add_option("--config", common.config);
    app.add_option("--pred", preds)->expected(1, -1);
    app.add_option("--out", out_file);
    app.add_option("--labels", labels);
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);

    RunConfig cfg = resolve_config(common);
    if (labels) {
        cfg.paths.labels = *labels;
    }
    if (out_file) {
        cfg.paths.out = *out_file;
    }
    if (preds.empty()) {
        throw ConfigError("pred", "at least one prediction file is required");
    }
    const fs::path dest = require(cfg.paths.out, "out");
    std::vector<fs::path> pred_paths;
    for (const auto& p : preds) {
        if (!fs::exists(p)) {
            throw ConfigError("pred", "'" + p + "' does not exist");
        }
        pred_paths.emplace_back(p);
    }
    cfg.validate();

    const LabelRegistry registry = cfg.paths.labels ? load_registry(cfg) : infer_registry(pred_paths);
    std::vector<PredictionSet> runs;
    for (const auto& p : pred_paths) {
        runs.push_back(load_predictions(p, registry));
    }
    const PredictionSet voted = hard_vote(runs);
    write_file(dest, to_jsonl(voted, registry));
    persist_run_config(cfg, dest.parent_path().empty() ? fs::path(".") : dest.parent_path(),
                       dest.filename().string() + ".");
    out << "voted " << runs.size() << " runs over " << voted.size() << " instances\n";
    return 0;
}

// ---- ablate ----

int run_ablate(const std::vector<std::string>& args, std::ostream& out) {
    CLI::App app{"Run the MCPP / FP / PI / AWP ablation matrix", "fintree ablate"};
    CommonFlags common;
    FinetuneFlags flags;
    std::string toggles_text = "mcpp,fp,pi,awp";
    add_finetune_flags(app, common, flags);
    app.add_option("--toggles", toggles_text, "Comma-separated subset of mcpp,fp,pi,awp");
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);

    RunConfig cfg = resolve_config(common);
    apply_finetune_flags(cfg, flags);
    const auto toggles = parse_toggles(toggles_text);
    const fs::path train_path = require(cfg.paths.train, "train");
    const fs::path dev_path = require(cfg.paths.dev, "dev");
    const fs::path dest = require(cfg.paths.out, "out");
    cfg.validate();

    const LabelRegistry registry = load_registry(cfg);
    const Dataset train = load_instances(train_path, registry, Split::train, cfg.fields);
    const Dataset dev = load_instances(dev_path, registry, Split::dev, cfg.fields);
    const CompatibilityTable table = CompatibilityTable::build(registry);
    const ModelFactory factory = [&](const TrainConfig& tc) { return build_model(cfg, tc, train, registry); };

    const AblationTable result = run_ablation(cfg.train, toggles, train, dev, table, factory);
    fs::create_directories(dest);
    const nlohmann::json table_json = {{"rows", result.to_json()}, {"config_hash", cfg.hash()}};
    write_file(dest / "ablation.json", table_json.dump(2) + "\n");
    persist_run_config(cfg, dest);
    copy_source_config(common, dest);
    out << table_json.dump(2) << "\n";
    return 0;
}

using Command = std::function<int(const std::vector<std::string>&, std::ostream&)>;

const std::map<std::string, Command>& commands() {
    static const std::map<std::string, Command> table{
        {"pretrain-corpus", run_pretrain_corpus}, {"pretrain", run_pretrain}, {"finetune", run_finetune},
        {"predict", run_predict},                 {"evaluate", run_evaluate}, {"ensemble", run_ensemble},
        {"ablate", run_ablate},
    };
    return table;
}

} // namespace

RelationModel build_model(const RunConfig& run, const TrainConfig& train_cfg, const Dataset& train,
                          const LabelRegistry& registry) {
    RandomSources rng = set_seed(train_cfg.seed);
    PromptOptions prompt = run.resolved_prompt();
    prompt.max_len = train_cfg.max_len;
    prompt.use_markers = train_cfg.use_pi;
    const auto texts = vocabulary_texts(train, prompt);

    std::unique_ptr<WordTokenizer> tokenizer;
    std::unique_ptr<EncoderBackbone> backbone;
    if (train_cfg.use_fp_checkpoint) {
        const fs::path& dir = *train_cfg.use_fp_checkpoint;
        tokenizer = std::make_unique<WordTokenizer>(WordTokenizer::load(dir / "tokenizer.json"));
        backbone = load_backbone(dir / "backbone.bin");
        for (const auto& text : texts) {
            for (const auto& word : WordTokenizer::pre_tokenize(text, tokenizer->options().lowercase)) {
                if (!tokenizer->word_id(word)) {
                    tokenizer->add_word(word);
                }
            }
        }
    } else {
        tokenizer = std::make_unique<WordTokenizer>(WordTokenizer::train(texts, run.tokenizer));
        nlohmann::json backbone_cfg = run.backbone;
        backbone_cfg["vocab_size"] = tokenizer->vocab_size();
        backbone = create_backbone(backbone_cfg, rng.init);
    }
    return make_relation_model(std::move(tokenizer), std::move(backbone), registry, prompt, rng.init,
                               train_cfg.head_dropout);
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    if (args.empty()) {
        err << usage();
        return 2;
    }
    if (args.front() == "-h" || args.front() == "--help" || args.front() == "help") {
        out << usage();
        return 0;
    }
    try {
        const auto it = commands().find(args.front());
        if (it == commands().end()) {
            throw UnknownCommand(args.front());
        }
        return it->second(std::vector<std::string>(args.begin() + 1, args.end()), out);
    } catch (const UnknownCommand& e) {
        err << "error: " << e.what() << "\n\n" << usage();
        return 2;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const CLI::CallForHelp&) {
        out << usage();
        return 0;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n\n" << usage();
        return 2;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace fintree
