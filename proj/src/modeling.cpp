#include "fintree/modeling.hpp"

#include <cmath>
#include <fstream>
#include <limits>

#include "fintree/errors.hpp"
#include "fintree/strings.hpp"

namespace fintree {

RelationHead::RelationHead(std::size_t num_labels, std::size_t hidden, std::mt19937_64& rng) {
    const auto k = static_cast<Eigen::Index>(num_labels);
    const auto h = static_cast<Eigen::Index>(hidden);
    const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Matrix w(k, h);
    for (Eigen::Index r = 0; r < k; ++r) {
        for (Eigen::Index c = 0; c < h; ++c) {
            w(r, c) = dist(rng);
        }
    }
    weight = Parameter("head.weight", ParamRole::weight, std::move(w));
    bias = Parameter("head.bias", ParamRole::bias, Matrix::Zero(1, k));
}

Vector RelationHead::logits(const Vector& hidden_state) const {
    return weight.value * hidden_state + bias.value.row(0).transpose();
}

std::size_t RelationLogits::argmax() const {
    std::size_t best = values.size();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!masked.empty() && masked[i]) {
            continue;
        }
        if (best == values.size() || values[i] > values[best]) {
            best = i;
        }
    }
    if (best == values.size()) {
        throw EmptyAllowedSet();
    }
    return best;
}

namespace {

Vector mask_hidden_state(const PromptEncoding& enc, const EncoderBackbone& backbone, const RelationHead& head,
                         std::unique_ptr<ForwardTrace>* trace) {
    if (backbone.hidden_size() != head.hidden_size()) {
        throw DimensionMismatch("backbone hidden size " + std::to_string(backbone.hidden_size()) +
                                " differs from head input size " + std::to_string(head.hidden_size()));
    }
    if (enc.mask_index >= enc.input_ids.size()) {
        throw DimensionMismatch("mask index outside the encoded sequence");
    }
    const Matrix hidden = backbone.forward(enc.input_ids, enc.attention_mask, trace);
    return hidden.row(static_cast<Eigen::Index>(enc.mask_index)).transpose();
}

RelationLogits to_logits(const Vector& scores) {
    RelationLogits out;
    out.values.assign(scores.data(), scores.data() + scores.size());
    out.masked.assign(out.values.size(), false);
    return out;
}

double log_sum_exp(const Vector& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

} // namespace

RelationLogits forward_logits(const PromptEncoding& enc, const EncoderBackbone& backbone, const RelationHead& head) {
    return to_logits(head.logits(mask_hidden_state(enc, backbone, head, nullptr)));
}

RelationLogits apply_constraint_mask(const RelationLogits& logits, const LabelSet& allowed) {
    if (allowed.size() != logits.size()) {
        throw DimensionMismatch("constraint mask covers " + std::to_string(allowed.size()) + " classes, logits have " +
                                std::to_string(logits.size()));
    }
    if (allowed.none()) {
        throw EmptyAllowedSet();
    }
    RelationLogits out;
    out.values = logits.values;
    out.masked.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        out.masked[i] = !allowed.test(i);
    }
    return out;
}

std::vector<double> masked_softmax(const RelationLogits& logits) {
    const std::size_t best = logits.argmax();
    const double max_value = logits.values[best];
    std::vector<double> probs(logits.size(), 0.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!logits.masked.empty() && logits.masked[i]) {
            continue;
        }
        probs[i] = std::exp(logits.values[i] - max_value);
        sum += probs[i];
    }
    for (auto& p : probs) {
        p /= sum;
    }
    return probs;
}

RelationModel RelationModel::clone() const {
    RelationModel copy;
    copy.tokenizer = tokenizer ? tokenizer->clone() : nullptr;
    copy.backbone = backbone ? backbone->clone() : nullptr;
    copy.head = head;
    copy.registry = registry;
    copy.prompt = prompt;
    copy.head_dropout = head_dropout;
    return copy;
}

ParameterList RelationModel::parameters() {
    ParameterList params = backbone->encoder_parameters();
    for (Parameter* p : head.parameters()) {
        params.push_back(p);
    }
    return params;
}

PromptEncoding RelationModel::encode(const REInstance& inst) const {
    return encode_example(inst, *tokenizer, prompt);
}

RelationModel make_relation_model(std::unique_ptr<Tokenizer> tokenizer, std::unique_ptr<EncoderBackbone> backbone,
                                  const LabelRegistry& registry, const PromptOptions& prompt, std::mt19937_64& rng,
                                  double head_dropout) {
    register_prompt_tokens(*tokenizer, prompt.markers);
    if (tokenizer->vocab_size() > backbone->vocab_size()) {
        backbone->resize_vocab(tokenizer->vocab_size(), rng);
    }
    RelationModel model;
    model.head = RelationHead(registry.size(), backbone->hidden_size(), rng);
    model.tokenizer = std::move(tokenizer);
    model.backbone = std::move(backbone);
    model.registry = registry;
    model.prompt = prompt;
    model.head_dropout = head_dropout;
    return model;
}

Prediction predict_encoded(const PromptEncoding& enc, const RelationModel& model, const CompatibilityTable& table,
                           bool use_mcpp) {
    RelationLogits logits = forward_logits(enc, *model.backbone, model.head);
    Prediction out;
    if (use_mcpp) {
        logits = apply_constraint_mask(logits, table.allowed(enc.pair.first, enc.pair.second));
        out.constrained = true;
    }
    out.label = logits.argmax();
    out.probs = masked_softmax(logits);
    return out;
}

Prediction predict(const REInstance& inst, const RelationModel& model, const CompatibilityTable& table,
                   bool use_mcpp) {
    return predict_encoded(model.encode(inst), model, table, use_mcpp);
}

double relation_loss(const PromptEncoding& enc, std::size_t gold, const EncoderBackbone& backbone,
                     const RelationHead& head) {
    const Vector scores = head.logits(mask_hidden_state(enc, backbone, head, nullptr));
    if (gold >= static_cast<std::size_t>(scores.size())) {
        throw DimensionMismatch("gold label index outside the head");
    }
    return log_sum_exp(scores) - scores(static_cast<Eigen::Index>(gold));
}

double relation_loss_backward(const PromptEncoding& enc, std::size_t gold, EncoderBackbone& backbone,
                              RelationHead& head, double dropout, std::mt19937_64* dropout_rng,
                              double grad_scale) {
    std::unique_ptr<ForwardTrace> trace;
    const Vector h = mask_hidden_state(enc, backbone, head, &trace);

    Vector keep = Vector::Ones(h.size());
    if (dropout_rng != nullptr && dropout > 0.0) {
        std::bernoulli_distribution drop(dropout);
        for (Eigen::Index i = 0; i < keep.size(); ++i) {
            keep(i) = drop(*dropout_rng) ? 0.0 : 1.0 / (1.0 - dropout);
        }
    }
    const Vector h_in = h.cwiseProduct(keep);
    const Vector scores = head.logits(h_in);
    if (gold >= static_cast<std::size_t>(scores.size())) {
        throw DimensionMismatch("gold label index outside the head");
    }
    const double lse = log_sum_exp(scores);
    const double loss = lse - scores(static_cast<Eigen::Index>(gold));

    Vector d_scores = (scores.array() - lse).exp().matrix();
    d_scores(static_cast<Eigen::Index>(gold)) -= 1.0;
    d_scores *= grad_scale;

    head.weight.grad.noalias() += d_scores * h_in.transpose();
    head.bias.grad.row(0) += d_scores.transpose();
    const Vector d_h = (head.weight.value.transpose() * d_scores).cwiseProduct(keep);

    Matrix d_hidden = Matrix::Zero(static_cast<Eigen::Index>(enc.input_ids.size()),
                                   static_cast<Eigen::Index>(backbone.hidden_size()));
    d_hidden.row(static_cast<Eigen::Index>(enc.mask_index)) = d_h.transpose();
    backbone.backward(*trace, d_hidden);
    return loss;
}

nlohmann::json prompt_to_json(const PromptOptions& prompt) {
    return {{"template", prompt.query_template},
            {"markers",
             {prompt.markers.e1_open, prompt.markers.e1_close, prompt.markers.e2_open, prompt.markers.e2_close}},
            {"max_len", prompt.max_len},
            {"use_markers", prompt.use_markers},
            {"order", std::string(to_string(prompt.order))}};
}

PromptOptions prompt_from_json(const nlohmann::json& j) {
    PromptOptions p;
    p.query_template = j.value("template", p.query_template);
    if (j.contains("markers")) {
        const auto& m = j.at("markers");
        if (!m.is_array() || m.size() != 4) {
            throw ConfigError("prompt.markers", "expected four marker strings [E1 open, E1 close, E2 open, E2 close]");
        }
        p.markers = {m[0].get<std::string>(), m[1].get<std::string>(), m[2].get<std::string>(),
                     m[3].get<std::string>()};
    }
    p.max_len = j.value("max_len", p.max_len);
    p.use_markers = j.value("use_markers", p.use_markers);
    p.order = parse_prompt_order(j.value("order", std::string(to_string(p.order))));
    return p;
}

void save_checkpoint(const RelationModel& model, const std::filesystem::path& dir, const nlohmann::json& extra) {
    std::filesystem::create_directories(dir);
    save_backbone(*model.backbone, dir / "backbone.bin");
    model.tokenizer->save(dir / "tokenizer.json");
    model.registry.save(dir / "labels.txt");

    std::ofstream head_out(dir / "head.bin", std::ios::binary | std::ios::trunc);
    if (!head_out) {
        throw CheckpointError("cannot write '" + (dir / "head.bin").string() + "'");
    }
    const auto write_f32 = [&head_out](double v) {
        const auto f = static_cast<float>(v);
        head_out.write(reinterpret_cast<const char*>(&f), sizeof(f));
    };
    const Matrix& w = model.head.weight.value;
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            write_f32(w(r, c));
        }
    }
    for (Eigen::Index c = 0; c < model.head.bias.value.cols(); ++c) {
        write_f32(model.head.bias.value(0, c));
    }
    head_out.close();
    if (!head_out) {
        throw CheckpointError("write to head.bin failed");
    }

    nlohmann::json config = prompt_to_json(model.prompt);
    config["num_labels"] = model.head.num_labels();
    config["hidden_size"] = model.head.hidden_size();
    config["head_dropout"] = model.head_dropout;
    config["backbone"] = model.backbone->config();
    for (const auto& [key, value] : extra.items()) {
        config[key] = value;
    }
    write_file(dir / "config.json", config.dump(2) + "\n");
}

RelationModel load_checkpoint(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) {
        throw CheckpointError("checkpoint directory '" + dir.string() + "' does not exist");
    }
    const auto config = nlohmann::json::parse(read_file(dir / "config.json"));
    RelationModel model;
    model.registry = LabelRegistry::load(dir / "labels.txt");
    model.tokenizer = std::make_unique<WordTokenizer>(WordTokenizer::load(dir / "tokenizer.json"));
    model.backbone = load_backbone(dir / "backbone.bin");
    model.prompt = prompt_from_json(config);
    model.head_dropout = config.value("head_dropout", 0.1);

    const auto k = config.at("num_labels").get<Eigen::Index>();
    const auto h = config.at("hidden_size").get<Eigen::Index>();
    if (static_cast<std::size_t>(k) != model.registry.size()) {
        throw CheckpointError("head has " + std::to_string(k) + " classes but labels.txt has " +
                              std::to_string(model.registry.size()));
    }
    if (static_cast<std::size_t>(h) != model.backbone->hidden_size()) {
        throw CheckpointError("head input size does not match the backbone hidden size");
    }

    std::ifstream head_in(dir / "head.bin", std::ios::binary);
    if (!head_in) {
        throw CheckpointError("cannot open '" + (dir / "head.bin").string() + "'");
    }
    const auto read_f32 = [&head_in]() {
        float f = 0.0F;
        head_in.read(reinterpret_cast<char*>(&f), sizeof(f));
        if (!head_in) {
            throw CheckpointError("head.bin is truncated");
        }
        return static_cast<double>(f);
    };
    Matrix w(k, h);
    for (Eigen::Index r = 0; r < k; ++r) {
        for (Eigen::Index c = 0; c < h; ++c) {
            w(r, c) = read_f32();
        }
    }
    Matrix b(1, k);
    for (Eigen::Index c = 0; c < k; ++c) {
        b(0, c) = read_f32();
    }
    model.head.weight = Parameter("head.weight", ParamRole::weight, std::move(w));
    model.head.bias = Parameter("head.bias", ParamRole::bias, std::move(b));
    return model;
}

} // namespace fintree
