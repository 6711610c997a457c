#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "fintree/cli.hpp"
#include "fintree/evaluation.hpp"
#include "fintree/strings.hpp"
#include "fintree/synthetic.hpp"
#include "test_support.hpp"

using namespace fintree;
namespace fs = std::filesystem;

namespace {

struct Run {
    int code;
    std::string out;
    std::string err;
};

Run run(const std::vector<std::string>& args) {
    std::ostringstream out, err;
    const int code = dispatch(args, out, err);
    return {code, out.str(), err.str()};
}

// Synthetic train/dev/labels plus a config that keeps the encoder tiny.
struct Workspace {
    testing::TempDir tmp{"cli"};
    fs::path train, dev, labels, config;

    Workspace() {
        train = tmp.path() / "train.jsonl";
        dev = tmp.path() / "dev.jsonl";
        labels = tmp.path() / "labels.txt";
        config = tmp.path() / "config.json";
        write_file(train, to_jsonl(make_synthetic(12, 1)));
        write_file(dev, to_jsonl(make_synthetic(6, 2, Split::dev)));
        synthetic_registry().save(labels);
        TinyEncoderConfig enc;
        enc.hidden = 16;
        enc.layers = 1;
        enc.heads = 2;
        enc.ffn = 32;
        enc.max_positions = 64;
        const nlohmann::json cfg{{"backbone", enc.to_json()},
                                 {"train", {{"max_len", 64}, {"epochs", 2}, {"batch_size", 4}, {"awp_start_epoch", 2}}}};
        write_file(config, cfg.dump());
    }

    std::string path(const std::string& name) const { return (tmp.path() / name).string(); }
};

} // namespace

TEST_CASE("unknown command prints usage and fails", "[cli]") {
    const auto r = run({"frobnicate"});
    CHECK(r.code == 2);
    CHECK(r.err.find("frobnicate") != std::string::npos);
    CHECK(r.err.find("finetune") != std::string::npos);
    CHECK(run({}).code == 2);
    CHECK(run({"--help"}).code == 0);
}

TEST_CASE("finetune without training data names the missing field", "[cli]") {
    Workspace ws;
    const auto r = run({"finetune", "--labels", ws.labels.string(), "--out", ws.path("out")});
    CHECK(r.code == 2);
    CHECK(r.err.find("'train'") != std::string::npos);
}

TEST_CASE("bad flag values are usage errors", "[cli]") {
    CHECK(run({"finetune", "--epochs", "many"}).code == 2);
    CHECK(run({"evaluate", "--bogus"}).code == 2);
}

TEST_CASE("evaluate prints a JSON report", "[cli]") {
    Workspace ws;
    const auto registry = synthetic_registry();
    const auto dev = make_synthetic(6, 2, Split::dev);
    PredictionSet preds;
    for (const auto& inst : dev.instances) {
        preds.ids.push_back(inst.id);
        preds.labels.push_back(*registry.find(*inst.relation));
    }
    write_file(ws.path("p.jsonl"), to_jsonl(preds, registry));
    const auto r = run({"evaluate", "--pred", ws.path("p.jsonl"), "--gold", ws.dev.string(), "--labels",
                        ws.labels.string()});
    REQUIRE(r.code == 0);
    const auto j = nlohmann::json::parse(r.out);
    CHECK(j.at("micro_f1") == 1.0);
    CHECK(j.at("n") == 6);
    CHECK(j.at("run_meta").at("seed").is_null());
}

TEST_CASE("finetune, predict, evaluate and ensemble end to end", "[cli]") {
    Workspace ws;
    for (const std::string seed : {"1", "2", "3"}) {
        const auto r = run({"finetune", "--config", ws.config.string(), "--train", ws.train.string(), "--dev",
                            ws.dev.string(), "--labels", ws.labels.string(), "--out", ws.path("ft" + seed), "--seed",
                            seed});
        INFO(r.err);
        REQUIRE(r.code == 0);
        CHECK(fs::exists(ws.tmp.path() / ("ft" + seed) / "checkpoint" / "head.bin"));
        CHECK(fs::exists(ws.tmp.path() / ("ft" + seed) / "train_log.jsonl"));
        CHECK(fs::exists(ws.tmp.path() / ("ft" + seed) / "config_hash.txt"));

        const auto p = run({"predict", "--checkpoint", ws.path("ft" + seed + "/checkpoint"), "--test", ws.dev.string(),
                            "--out", ws.path("pred" + seed + ".jsonl")});
        INFO(p.err);
        REQUIRE(p.code == 0);
    }
    const auto e = run({"evaluate", "--pred", ws.path("pred1.jsonl"), "--gold", ws.dev.string(), "--labels",
                        ws.labels.string()});
    REQUIRE(e.code == 0);
    const auto report = nlohmann::json::parse(e.out);
    CHECK(report.at("run_meta").at("seed") == 1);
    CHECK(report.at("run_meta").at("config_hash").is_string());

    const auto v = run({"ensemble", "--pred", ws.path("pred1.jsonl"), ws.path("pred2.jsonl"), ws.path("pred3.jsonl"),
                        "--labels", ws.labels.string(), "--out", ws.path("vote.jsonl")});
    INFO(v.err);
    REQUIRE(v.code == 0);
    const auto registry = synthetic_registry();
    const auto voted = load_predictions(ws.tmp.path() / "vote.jsonl", registry);
    CHECK(voted.size() == 6);
    std::vector<PredictionSet> runs;
    for (const std::string s : {"1", "2", "3"}) {
        runs.push_back(load_predictions(ws.tmp.path() / ("pred" + s + ".jsonl"), registry));
    }
    CHECK(voted.labels == hard_vote(runs).labels);
}

TEST_CASE("pretrain-corpus filters a directory and reports counts", "[cli]") {
    testing::TempDir tmp("corpus-cli");
    std::string long_doc;
    for (int i = 0; i < 80; ++i) {
        long_doc += "revenue ";
    }
    write_file(tmp.path() / "in" / "edgar" / "a.txt", long_doc);
    write_file(tmp.path() / "in" / "edgar" / "b.txt", "too short");
    const auto r = run({"pretrain-corpus", "--in", (tmp.path() / "in").string(), "--out", (tmp.path() / "out").string()});
    INFO(r.err);
    REQUIRE(r.code == 0);
    const auto stats = nlohmann::json::parse(read_file(tmp.path() / "out" / "corpus_stats.json"));
    CHECK(stats.at("kept") == 1);
    CHECK(stats.at("dropped") == 1);
}
