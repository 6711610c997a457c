// Acceptance runner: one PASS/FAIL line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cstring>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>

#include "fintree/errors.hpp"
#include "fintree/evaluation.hpp"
#include "fintree/modeling.hpp"
#include "fintree/pretraining.hpp"
#include "fintree/prompting.hpp"
#include "fintree/synthetic.hpp"
#include "fintree/tiny_encoder.hpp"
#include "fintree/training.hpp"
#include "test_support.hpp"

using namespace fintree;
namespace oracle = fintree::testing::oracle;

namespace {

struct Outcome {
    bool pass = true;
    std::ostringstream detail;

    void require(bool ok, const std::string& what) {
        if (!ok) {
            pass = false;
            detail << "[violated: " << what << "] ";
        }
    }
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
    return std::chrono::duration<double>(Clock::now() - start).count();
}

// ---- 1, 2: MCPP soundness and conservativity ----

struct MCPPStats {
    std::size_t trials = 0;
    std::size_t unsound = 0;
    std::size_t changed_compatible = 0;
    std::size_t corrected = 0;
    double seconds = 0.0;
};

const MCPPStats& mcpp_trials() {
    static const MCPPStats stats = [] {
        MCPPStats s;
        const auto start = Clock::now();
        std::mt19937_64 rng(20240601);
        const std::vector<std::string> types{"org", "pers", "date", "gpe", "univ", "money", "title"};
        WordTokenizer base = WordTokenizer::train({"a b c d e f g h"});
        register_prompt_tokens(base);
        for (std::size_t trial = 0; trial < 10000; ++trial) {
            std::vector<std::string> labels;
            const std::size_t untyped = rng() % 3;
            for (std::size_t u = 0; u < untyped; ++u) {
                labels.push_back("none" + std::to_string(u));
            }
            const std::size_t typed = 1 + rng() % 12;
            for (std::size_t i = 0; i < typed; ++i) {
                labels.push_back(types[rng() % types.size()] + ":" + types[rng() % types.size()] + ":r" +
                                 std::to_string(i));
            }
            std::shuffle(labels.begin(), labels.end(), rng);
            const auto registry = LabelRegistry::from_raw(labels);
            const auto table = build_compatibility(registry);

            std::string t1 = types[rng() % types.size()];
            std::string t2 = types[rng() % types.size()];
            if (untyped == 0 && !table.has_pair(t1, t2)) {
                // no fallback label: draw the pair from the registry instead
                const auto& pairs = table.pairs();
                const auto& pick = pairs[rng() % pairs.size()];
                t1 = pick.first;
                t2 = pick.second;
            }
            if (rng() % 2 == 0) {
                t1[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(t1[0])));
            }

            const std::size_t hidden = 2 + rng() % 8;
            Matrix states = Matrix::Random(static_cast<Eigen::Index>(base.vocab_size()), static_cast<Eigen::Index>(hidden));
            auto model = make_relation_model(
                base.clone(),
                std::make_unique<testing::TableBackbone>(states, testing::TableBackbone::Mode::token_lookup,
                                                         base.vocab_size()),
                registry, PromptOptions{}, rng);
            model.head.weight.value *= 1.0 + static_cast<double>(rng() % 20);
            model.head.bias.value = Matrix::Random(1, static_cast<Eigen::Index>(registry.size())) * 3.0;

            const auto inst = testing::make_instance("t", {"a", "b", "c", "d", "e"}, {0, 1}, {3, 5}, t1, t2);
            const auto enc = model.encode(inst);
            const auto plain = predict_encoded(enc, model, table, false);
            const auto constrained = predict_encoded(enc, model, table, true);
            const auto allowed = oracle::allowed_by_prefix(labels, t1, t2);
            const auto admissible = [&](std::size_t label) {
                return std::find(allowed.begin(), allowed.end(), label) != allowed.end();
            };
            ++s.trials;
            if (!admissible(constrained.label)) {
                ++s.unsound;
            }
            if (admissible(plain.label)) {
                if (plain.label != constrained.label) {
                    ++s.changed_compatible;
                }
            } else {
                ++s.corrected;
            }
        }
        s.seconds = seconds_since(start);
        return s;
    }();
    return stats;
}

void criterion1(Outcome& o) {
    const auto& s = mcpp_trials();
    o.require(s.trials == 10000, "10000 trials");
    o.require(s.unsound == 0, "zero incompatible predictions");
    o.require(s.seconds < 60.0, "runtime < 60 s");
    o.detail << s.trials << " trials, " << s.unsound << " violations, " << s.corrected
             << " incompatible argmaxes corrected, " << std::fixed << std::setprecision(1) << s.seconds << " s";
}

void criterion2(Outcome& o) {
    const auto& s = mcpp_trials();
    o.require(s.changed_compatible == 0, "compatible argmax preserved");
    o.detail << s.trials - s.corrected << " trials with a compatible argmax, " << s.changed_compatible << " changed";
}

// ---- 3: metrics ----

LabelRegistry plain_registry(std::size_t k) {
    std::vector<std::string> raw;
    for (std::size_t c = 0; c < k; ++c) {
        raw.push_back("c" + std::to_string(c));
    }
    return LabelRegistry::from_raw(raw);
}

EvalReport score(const std::vector<std::size_t>& gold, const std::vector<std::size_t>& pred, const LabelRegistry& reg) {
    Dataset ds;
    PredictionSet ps;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const std::string id = "i" + std::to_string(i);
        ds.instances.push_back(testing::make_instance(id, {"a", "b"}, {0, 1}, {1, 2}, "x", "y", reg.at(gold[i]).raw));
        ps.ids.push_back(id);
        ps.labels.push_back(pred[i]);
    }
    return f1_scores(ps, ds, reg);
}

void criterion3(Outcome& o) {
    std::mt19937_64 rng(3);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng() % 9;
        const std::size_t n = 1 + rng() % 200;
        std::vector<std::size_t> gold(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = rng() % k;
            pred[i] = rng() % 4 == 0 ? gold[i] : rng() % k;
        }
        const auto reg = plain_registry(k);
        const auto r = score(gold, pred, reg);
        const auto e = oracle::f1(gold, pred, k);
        worst = std::max({worst, std::abs(r.micro_f1 - e.micro), std::abs(r.macro_f1 - e.macro),
                          std::abs(r.weighted_f1 - e.weighted)});
    }
    o.require(worst <= 1e-9, "oracle agreement within 1e-9");

    // gold [A,A,B,C], pred [A,B,B,B]
    const auto hand = score({0, 0, 1, 2}, {0, 1, 1, 1}, plain_registry(3));
    const auto hand_oracle = oracle::f1({0, 0, 1, 2}, {0, 1, 1, 1}, 3);
    o.require(hand.micro_f1 == 0.5, "hand case micro == 0.5");
    o.require(hand.macro_f1 == 4.0 / 9.0, "hand case macro == 4/9");
    o.require(hand.weighted_f1 == 0.5, "hand case weighted == 0.5");
    o.detail << "1000 random cases, max |diff| " << std::scientific << std::setprecision(2) << worst
             << "; hand case micro " << std::defaultfloat << std::setprecision(10) << hand.micro_f1 << " macro "
             << hand.macro_f1 << " weighted " << hand.weighted_f1 << " (oracle macro " << hand_oracle.macro
             << " weighted " << hand_oracle.weighted << ")";
}

// ---- 4: template ----

void criterion4(Outcome& o) {
    const auto lines = testing::fixture_lines("golden_queries.jsonl");
    std::size_t exact = 0;
    for (const auto& line : lines) {
        const auto j = nlohmann::json::parse(line);
        const auto inst = testing::make_instance(
            "g", j.at("tokens").get<std::vector<std::string>>(),
            {j["e1"][0].get<std::size_t>(), j["e1"][1].get<std::size_t>()},
            {j["e2"][0].get<std::size_t>(), j["e2"][1].get<std::size_t>()}, j.at("t1").get<std::string>(),
            j.at("t2").get<std::string>());
        exact += build_query(inst) == j.at("query").get<std::string>();
    }
    o.require(!lines.empty() && exact == lines.size(), "golden queries byte-exact");

    auto data = make_synthetic(200, 4);
    std::mt19937_64 rng(4);
    for (std::size_t len : {1000, 1520, 1536, 1600, 5000}) {
        auto inst = data.instances.front();
        inst.id = "long" + std::to_string(len);
        while (inst.tokens.size() < len) {
            inst.tokens.push_back("filler" + std::to_string(rng() % 50));
        }
        data.instances.push_back(inst);
    }
    WordTokenizer tok = WordTokenizer::train(synthetic_texts(data));
    register_prompt_tokens(tok);
    PromptOptions opts;
    opts.max_len = 1536;
    std::size_t bad = 0, longest = 0;
    for (const auto& inst : data.instances) {
        for (const bool markers : {true, false}) {
            opts.use_markers = markers;
            const auto enc = encode_example(inst, tok, opts);
            const auto masks = std::count(enc.input_ids.begin(), enc.input_ids.end(), tok.mask_id());
            longest = std::max(longest, enc.size());
            if (masks != 1 || enc.input_ids[enc.mask_index] != tok.mask_id() || enc.size() > 1536) {
                ++bad;
            }
        }
    }
    o.require(bad == 0, "exactly one mask within 1536 tokens");
    o.detail << exact << "/" << lines.size() << " golden queries exact; " << 2 * data.size()
             << " encodings, longest " << longest << ", " << bad << " with mask count != 1";
}

// ---- 5: AWP ----

void criterion5(Outcome& o) {
    Parameter w("w", ParamRole::weight, Matrix::Constant(1, 1, 2.0));
    w.grad(0, 0) = 0.7;
    AWPState state;
    double perturbed = 0.0;
    awp_step({&w}, [&] {
        perturbed = w.value(0, 0);
        return 0.0;
    }, 0.1, std::numeric_limits<double>::infinity(), state);
    o.require(perturbed == 2.2, "scalar 2.0 -> 2.2");
    o.require(w.value(0, 0) == 2.0, "scalar restored");

    const auto registry = synthetic_registry();
    const auto table = build_compatibility(registry);
    const auto train = make_synthetic(16, 5);
    auto model = testing::tiny_model(train, registry, 5, 16, 2);
    const auto params = model.parameters();
    const auto enc = model.encode(train.instances.front());
    const std::size_t gold = *registry.find(*train.instances.front().relation);
    zero_grad(params);
    relation_loss_backward(enc, gold, *model.backbone, model.head, 0.0, nullptr);
    const auto before = snapshot_values(params);
    bool moved = false;
    awp_step(params, [&] {
        const auto during = snapshot_values(params);
        for (std::size_t i = 0; i < during.size(); ++i) {
            moved = moved || !(during[i] == before[i]);
        }
        return relation_loss_backward(enc, gold, *model.backbone, model.head, 0.0, nullptr);
    }, 1e-2, 1e-2, state);
    const auto after = snapshot_values(params);
    bool bitwise = true;
    for (std::size_t i = 0; i < before.size(); ++i) {
        bitwise = bitwise && std::memcmp(before[i].data(), after[i].data(),
                                         sizeof(double) * static_cast<std::size_t>(before[i].size())) == 0;
    }
    o.require(moved, "weights perturbed inside the step");
    o.require(bitwise, "bitwise restore");

    TrainConfig cfg;
    cfg.epochs = 5;
    cfg.awp_start_epoch = 3;
    cfg.batch_size = 4;
    cfg.max_len = 64;
    auto fresh = testing::tiny_model(train, registry, 6);
    const auto log = finetune(train, Dataset{}, fresh, table, cfg);
    std::vector<std::size_t> active;
    for (const auto& e : log.epochs) {
        if (e.awp_steps > 0) {
            active.push_back(e.epoch);
        }
    }
    o.require(active == std::vector<std::size_t>{3, 4, 5}, "AWP active in epochs 3-5 only");
    o.detail << "scalar perturbed to " << std::setprecision(17) << perturbed << ", " << params.size()
             << " tensors restored bitwise: " << (bitwise ? "yes" : "no") << ", AWP epochs:";
    for (auto e : active) {
        o.detail << " " << e;
    }
}

// ---- 6: schedule ----

void criterion6(Outcome& o) {
    const double peak = 1e-5;
    double worst = 0.0;
    for (const auto& [total, warmup] :
         std::vector<std::pair<std::size_t, std::size_t>>{{1000, 60}, {5000, 300}, {97, 6}, {10, 0}, {250, 250}}) {
        for (std::size_t s = 0; s <= total; ++s) {
            worst = std::max(worst, std::abs(lr_at_step(s, total, warmup, peak) -
                                             oracle::lr(static_cast<double>(s), static_cast<double>(total),
                                                        static_cast<double>(warmup), peak)));
        }
    }
    const std::size_t total = 1000, warmup = 60;
    o.require(lr_at_step(0, total, warmup, peak) == 0.0, "0 at step 0");
    o.require(lr_at_step(warmup, total, warmup, peak) == peak, "peak at warm-up end");
    o.require(std::abs(lr_at_step(total, total, warmup, peak)) < 1e-12, "0 at total_steps");
    // the decay branch evaluated at the junction equals the warm-up branch there
    const double decay_at_junction = peak * 0.5 * (1.0 + std::cos(0.0));
    const double step_left = lr_at_step(warmup, total, warmup, peak) - lr_at_step(warmup - 1, total, warmup, peak);
    const double step_right = lr_at_step(warmup, total, warmup, peak) - lr_at_step(warmup + 1, total, warmup, peak);
    o.require(std::abs(decay_at_junction - lr_at_step(warmup, total, warmup, peak)) < 1e-12, "continuous at junction");
    o.require(step_right >= 0.0 && step_right <= step_left, "no jump after the junction");
    o.require(worst < 1e-12, "max deviation < 1e-12");
    o.detail << "max |lr - closed form| = " << std::scientific << std::setprecision(2) << worst;
}

// ---- 7: corpus filter ----

void criterion7(Outcome& o) {
    std::vector<CorpusDocument> edge;
    for (std::size_t n : {63, 64, 2048, 2049}) {
        edge.push_back({"d" + std::to_string(n), n, "t"});
    }
    const auto kept = filter_corpus(edge);
    o.require(kept.size() == 2 && kept[0].token_count == 64 && kept[1].token_count == 2048,
              "63/64/2048/2049 -> drop/keep/keep/drop");

    std::mt19937_64 rng(7);
    const WordTokenizer tok;
    std::vector<CorpusDocument> docs;
    docs.reserve(10000);
    for (std::size_t i = 0; i < 10000; ++i) {
        const std::size_t words = rng() % 2600;
        std::string text;
        for (std::size_t w = 0; w < words; ++w) {
            text += (w % 13 == 12 ? ", " : " ") + std::string("w");
        }
        docs.push_back(make_document(std::move(text), "syn", tok));
    }
    FilterSummary first;
    const auto once = filter_corpus(docs, kDefaultMinDocLength, kDefaultMaxDocLength, &first);
    const auto twice = filter_corpus(once);
    bool same = once.size() == twice.size();
    for (std::size_t i = 0; same && i < once.size(); ++i) {
        same = once[i].text == twice[i].text;
    }
    o.require(same, "filter idempotent");
    o.detail << "edge cases kept " << kept.size() << "/4; 10000 docs -> " << first.kept << " kept, "
             << first.dropped << " dropped, second pass " << (same ? "identical" : "differs");
}

// ---- 8: MLM masking ----

void criterion8(Outcome& o) {
    std::vector<std::string> vocab_words;
    std::string text;
    for (int i = 0; i < 1000; ++i) {
        vocab_words.push_back("tok" + std::to_string(i));
        text += vocab_words.back() + " ";
    }
    const WordTokenizer tok = WordTokenizer::train({text});
    std::vector<TokenId> ids = tok.encode(text);
    ids.insert(ids.begin(), tok.cls_id());
    ids.push_back(tok.sep_id());
    const std::size_t eligible = ids.size() - 2;

    std::size_t selected = 0, masked = 0, randomized = 0, kept = 0, specials_hit = 0, seeds_outside = 0;
    const double p = 0.15;
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
        std::mt19937_64 rng(seed);
        const auto ex = make_mlm_example(ids, tok, rng);
        std::size_t here = 0;
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (ex.labels[i] == kIgnoreIndex) {
                continue;
            }
            ++here;
            if (tok.is_special(ids[i])) {
                ++specials_hit;
            }
            if (ex.input_ids[i] == tok.mask_id()) {
                ++masked;
            } else if (ex.input_ids[i] == ids[i]) {
                ++kept;
            } else {
                ++randomized;
            }
        }
        const double sd = std::sqrt(static_cast<double>(eligible) * p * (1 - p));
        if (std::abs(static_cast<double>(here) - static_cast<double>(eligible) * p) > 2.576 * sd) {
            ++seeds_outside;
        }
        selected += here;
    }
    const double trials = 200.0 * static_cast<double>(eligible);
    const double fraction = static_cast<double>(selected) / trials;
    const double half_width = 2.576 * std::sqrt(p * (1 - p) / trials);
    const double f_mask = static_cast<double>(masked) / static_cast<double>(selected);
    const double f_rand = static_cast<double>(randomized) / static_cast<double>(selected);
    const double f_keep = static_cast<double>(kept) / static_cast<double>(selected);
    o.require(std::abs(fraction - p) <= half_width, "selected fraction inside the 99% band");
    o.require(std::abs(f_mask - 0.8) <= 0.05 && std::abs(f_rand - 0.1) <= 0.05 && std::abs(f_keep - 0.1) <= 0.05,
              "branch proportions within 5 points");
    o.require(specials_hit == 0, "special tokens never selected");
    o.detail << std::fixed << std::setprecision(4) << "selected " << fraction << " (band 0.15 +/- " << half_width
             << ", " << seeds_outside << "/200 single seeds outside their own band); mask/random/keep " << f_mask
             << "/" << f_rand << "/" << f_keep;
}

// ---- 9: toy end to end ----

void criterion9(Outcome& o) {
    const auto start = Clock::now();
    const auto registry = synthetic_registry();
    const auto table = build_compatibility(registry);
    const auto train = make_synthetic(200, 9);
    const auto dev = make_synthetic(100, 10, Split::dev);
    auto model = testing::tiny_model(train, registry, 9, 64, 2);

    TrainConfig cfg;
    cfg.epochs = 30;
    cfg.batch_size = 8;
    cfg.max_len = 64;
    cfg.learning_rate = 1e-3;
    cfg.seed = 9;

    const auto train_accuracy = [&](const RelationModel& m) {
        return f1_scores(predict_dataset(m, train, table, false), train, registry).micro_f1;
    };
    std::optional<std::size_t> reached;
    FinetuneOptions options;
    options.on_epoch = [&](const EpochEvent& e) {
        if (!reached && train_accuracy(model) >= 0.99) {
            reached = e.epoch;
        }
    };
    finetune(train, Dataset{}, model, table, cfg, options);
    const double final_accuracy = train_accuracy(model);
    const double seconds = seconds_since(start);
    o.require(reached.has_value(), ">= 99% train accuracy within 30 epochs");
    o.require(final_accuracy >= 0.99, "final train accuracy >= 99%");
    o.require(seconds < 300.0, "< 5 minutes");

    // Corrupt the head toward one typed class, then compare dev F1 with and without MCPP.
    auto corrupted = model.clone();
    const std::size_t target = *registry.find("pers:org:employee_of");
    corrupted.head.bias.value(0, static_cast<Eigen::Index>(target)) += 50.0;
    const auto plain = f1_scores(predict_dataset(corrupted, dev, table, false), dev, registry);
    const auto masked = f1_scores(predict_dataset(corrupted, dev, table, true), dev, registry);
    o.require(masked.micro_f1 > plain.micro_f1, "MCPP strictly improves corrupted-head micro F1");
    o.detail << std::fixed << std::setprecision(3) << "train accuracy >= 0.99 at epoch "
             << (reached ? std::to_string(*reached) : std::string("never")) << ", final " << final_accuracy << ", "
             << std::setprecision(1) << seconds << " s; corrupted head dev micro " << std::setprecision(3)
             << plain.micro_f1 << " -> " << masked.micro_f1 << " with MCPP";
}

// ---- 10: gradient check ----

void criterion10(Outcome& o) {
    std::mt19937_64 rng(10);
    TinyEncoderConfig cfg;
    cfg.vocab_size = 12;
    cfg.hidden = 8;
    cfg.layers = 2;
    cfg.heads = 2;
    cfg.ffn = 16;
    cfg.max_positions = 16;
    cfg.init_std = 0.3;
    TinyEncoder encoder(cfg, rng);
    RelationHead head(4, 8, rng);
    head.bias.value.setRandom();
    PromptEncoding enc;
    enc.input_ids = {2, 9, 4, 1, 7, 3, 11, 5};
    enc.attention_mask = {1, 1, 1, 1, 1, 1, 0, 0};
    enc.mask_index = 3;

    double worst_head = 0.0, worst_all = 0.0;
    std::size_t checked = 0;
    for (std::size_t gold = 0; gold < 4; ++gold) {
        ParameterList params = encoder.encoder_parameters();
        params.push_back(&head.weight);
        params.push_back(&head.bias);
        zero_grad(params);
        relation_loss_backward(enc, gold, encoder, head, 0.0, nullptr);
        const double h = 1e-5;
        for (Parameter* p : params) {
            for (Eigen::Index i = 0; i < p->value.size(); ++i) {
                const double saved = p->value.data()[i];
                p->value.data()[i] = saved + h;
                const double up = relation_loss(enc, gold, encoder, head);
                p->value.data()[i] = saved - h;
                const double down = relation_loss(enc, gold, encoder, head);
                p->value.data()[i] = saved;
                const double numeric = (up - down) / (2 * h);
                const double analytic = p->grad.data()[i];
                const double rel =
                    std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6});
                worst_all = std::max(worst_all, rel);
                if (p == &head.weight || p == &head.bias) {
                    worst_head = std::max(worst_head, rel);
                }
                ++checked;
            }
        }
    }
    o.require(worst_head <= 1e-4, "head relative error <= 1e-4");
    o.require(worst_all <= 1e-4, "encoder relative error <= 1e-4");
    o.detail << checked << " coordinates (hidden 8, K 4), worst relative error head " << std::scientific
             << std::setprecision(2) << worst_head << ", all " << worst_all;
}

// ---- 11: ensemble ----

void criterion11(Outcome& o) {
    std::mt19937_64 rng(11);
    std::size_t perm_fail = 0, majority_fail = 0, identity_fail = 0, tie_fail = 0, ties = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t k = 2 + rng() % 5, r = 1 + rng() % 7, n = 1 + rng() % 12;
        const bool with_probs = rng() % 2 == 0;
        std::vector<PredictionSet> runs(r);
        for (auto& run : runs) {
            if (with_probs) {
                run.probs.emplace();
            }
            for (std::size_t i = 0; i < n; ++i) {
                run.ids.push_back("x" + std::to_string(i));
                run.labels.push_back(rng() % k);
                if (with_probs) {
                    std::vector<double> row(k);
                    double z = 0;
                    for (auto& v : row) {
                        v = static_cast<double>(1 + rng() % 1000);
                        z += v;
                    }
                    for (auto& v : row) {
                        v /= z;
                    }
                    run.probs->push_back(row);
                }
            }
        }
        const auto voted = hard_vote(runs);
        auto shuffled = runs;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        perm_fail += hard_vote(shuffled).labels != voted.labels;
        identity_fail += hard_vote({runs.front()}).labels != runs.front().labels;
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<std::size_t> labels;
            std::vector<std::vector<double>> probs;
            for (const auto& run : runs) {
                labels.push_back(run.labels[i]);
                if (with_probs) {
                    probs.push_back((*run.probs)[i]);
                }
            }
            std::vector<std::size_t> counts(k, 0);
            for (auto l : labels) {
                ++counts[l];
            }
            const auto top = *std::max_element(counts.begin(), counts.end());
            for (std::size_t c = 0; c < k; ++c) {
                if (2 * counts[c] > r && voted.labels[i] != c) {
                    ++majority_fail;
                }
            }
            if (std::count(counts.begin(), counts.end(), top) > 1) {
                ++ties;
            }
            tie_fail += voted.labels[i] != oracle::vote(labels, with_probs ? &probs : nullptr, k);
        }
    }
    o.require(perm_fail == 0, "permutation invariance");
    o.require(majority_fail == 0, "strict majority wins");
    o.require(identity_fail == 0, "single run is the identity");
    o.require(tie_fail == 0, "tie-break matches the reference");
    o.detail << "1000 vote sets, " << ties << " tied instances; failures perm/majority/identity/tie-break "
             << perm_fail << "/" << majority_fail << "/" << identity_fail << "/" << tie_fail;
}

// ---- 12: determinism ----

void criterion12(Outcome& o) {
    const auto registry = synthetic_registry();
    const auto table = build_compatibility(registry);
    const auto train = make_synthetic(40, 12);
    const auto dev = make_synthetic(20, 13, Split::dev);
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 8;
    cfg.max_len = 64;
    cfg.learning_rate = 1e-3;
    cfg.seed = 12;

    auto a = testing::tiny_model(train, registry, cfg.seed, 32, 2);
    auto b = testing::tiny_model(train, registry, cfg.seed, 32, 2);
    const auto la = finetune(train, dev, a, table, cfg);
    const auto lb = finetune(train, dev, b, table, cfg);
    bool same_losses = la.steps.size() == lb.steps.size();
    for (std::size_t i = 0; same_losses && i < la.steps.size(); ++i) {
        same_losses = la.steps[i].loss == lb.steps[i].loss;
    }
    bool same_dev = la.epochs.size() == lb.epochs.size();
    for (std::size_t i = 0; same_dev && i < la.epochs.size(); ++i) {
        same_dev = la.epochs[i].micro_f1 == lb.epochs[i].micro_f1 && la.epochs[i].macro_f1 == lb.epochs[i].macro_f1 &&
                   la.epochs[i].weighted_f1 == lb.epochs[i].weighted_f1;
    }
    o.require(same_losses, "identical loss curves");
    o.require(same_dev, "identical dev F1");

    testing::TempDir tmp("acceptance-ckpt");
    save_checkpoint(a, tmp.path() / "ckpt");
    const auto loaded = load_checkpoint(tmp.path() / "ckpt");
    const auto before = f1_scores(predict_dataset(a, dev, table, true), dev, registry);
    const auto after = f1_scores(predict_dataset(loaded, dev, table, true), dev, registry);
    const bool same_scores = before.micro_f1 == after.micro_f1 && before.macro_f1 == after.macro_f1 &&
                             before.weighted_f1 == after.weighted_f1;
    o.require(same_scores, "checkpoint round-trip keeps evaluation scores");
    o.detail << la.steps.size() << " steps compared, final dev micro " << std::setprecision(4)
             << la.epochs.back().micro_f1.value_or(-1) << "; reloaded micro/macro/weighted " << after.micro_f1 << "/"
             << after.macro_f1 << "/" << after.weighted_f1;
}

} // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<void(Outcome&)>>> criteria{
        {"MCPP soundness", criterion1},
        {"MCPP conservativity", criterion2},
        {"metric oracle equivalence", criterion3},
        {"template byte-exactness", criterion4},
        {"AWP contract", criterion5},
        {"scheduler", criterion6},
        {"corpus filter boundaries", criterion7},
        {"MLM masking statistics", criterion8},
        {"toy end-to-end", criterion9},
        {"gradient check", criterion10},
        {"ensemble properties", criterion11},
        {"determinism", criterion12},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome outcome;
        try {
            criteria[i].second(outcome);
        } catch (const std::exception& e) {
            outcome.pass = false;
            outcome.detail << "[exception: " << e.what() << "]";
        }
        failed += outcome.pass ? 0 : 1;
        std::cout << "criterion " << std::setw(2) << i + 1 << " " << (outcome.pass ? "PASS" : "FAIL") << "  "
                  << criteria[i].first << ": " << outcome.detail.str() << std::endl;
    }
    std::cout << (criteria.size() - static_cast<std::size_t>(failed)) << "/" << criteria.size() << " criteria passed"
              << std::endl;
    return failed == 0 ? 0 : 1;
}
