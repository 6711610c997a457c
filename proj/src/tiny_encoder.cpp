#include "fintree/tiny_encoder.hpp"

#include <cmath>
#include <limits>

#include "fintree/errors.hpp"

namespace fintree {

namespace {

constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;

Matrix random_normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, stddev);
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            m(r, c) = dist(rng);
        }
    }
    return m;
}

struct LayerNormCache {
    Matrix xhat;
    Vector rstd;
};

Matrix layer_norm(const Matrix& x, const Parameter& gamma, const Parameter& beta, double eps,
                  LayerNormCache* cache) {
    const Vector mean = x.rowwise().mean();
    const Matrix centered = x.colwise() - mean;
    const Vector var = centered.array().square().rowwise().mean();
    const Vector rstd = (var.array() + eps).rsqrt();
    Matrix xhat = centered.array().colwise() * rstd.array();
    Matrix y = (xhat.array().rowwise() * gamma.value.row(0).array()).rowwise() + beta.value.row(0).array();
    if (cache != nullptr) {
        cache->xhat = std::move(xhat);
        cache->rstd = rstd;
    }
    return y;
}

Matrix layer_norm_backward(const Matrix& dy, const LayerNormCache& cache, Parameter& gamma, Parameter& beta) {
    gamma.grad.row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
    beta.grad.row(0) += dy.colwise().sum();
    const Matrix dxhat = dy.array().rowwise() * gamma.value.row(0).array();
    const Vector mean_dxhat = dxhat.rowwise().mean();
    const Vector mean_dxhat_xhat = (dxhat.array() * cache.xhat.array()).rowwise().mean();
    Matrix dx = dxhat.colwise() - mean_dxhat;
    dx.array() -= cache.xhat.array().colwise() * mean_dxhat_xhat.array();
    dx.array().colwise() *= cache.rstd.array();
    return dx;
}

Matrix affine(const Matrix& x, const Parameter& w, const Parameter& b) {
    return (x * w.value).rowwise() + b.value.row(0);
}

// dy -> dx, accumulating dW and db.
Matrix affine_backward(const Matrix& x, const Matrix& dy, Parameter& w, Parameter& b) {
    w.grad.noalias() += x.transpose() * dy;
    b.grad.row(0) += dy.colwise().sum();
    return dy * w.value.transpose();
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x * kInvSqrt2));
}

double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * kInvSqrt2)) + x * kInvSqrt2Pi * std::exp(-0.5 * x * x);
}

struct LayerTrace {
    Matrix x_in;
    Matrix q, k, v;
    std::vector<Matrix> probs;
    Matrix ctx;
    LayerNormCache ln1;
    Matrix y;
    Matrix h_pre;
    Matrix h_act;
    LayerNormCache ln2;
};

struct TinyTrace final : ForwardTrace {
    std::vector<TokenId> ids;
    std::vector<std::uint8_t> attention;
    LayerNormCache emb_ln;
    std::vector<LayerTrace> layers;
};

Parameter make_weight(std::string name, Eigen::Index rows, Eigen::Index cols, double std, std::mt19937_64& rng) {
    return {std::move(name), ParamRole::weight, random_normal(rows, cols, std, rng)};
}

Parameter make_bias(std::string name, Eigen::Index cols) {
    return {std::move(name), ParamRole::bias, Matrix::Zero(1, cols)};
}

Parameter make_norm(std::string name, Eigen::Index cols, double fill) {
    return {std::move(name), ParamRole::norm, Matrix::Constant(1, cols, fill)};
}

} // namespace

nlohmann::json TinyEncoderConfig::to_json() const {
    return {{"kind", "tiny"},
            {"vocab_size", vocab_size},
            {"hidden", hidden},
            {"layers", layers},
            {"heads", heads},
            {"ffn", ffn},
            {"max_positions", max_positions},
            {"init_std", init_std},
            {"layer_norm_eps", layer_norm_eps},
            {"mlm_head", mlm_head}};
}

TinyEncoderConfig TinyEncoderConfig::from_json(const nlohmann::json& j) {
    TinyEncoderConfig c;
    c.vocab_size = j.value("vocab_size", c.vocab_size);
    c.hidden = j.value("hidden", c.hidden);
    c.layers = j.value("layers", c.layers);
    c.heads = j.value("heads", c.heads);
    c.ffn = j.value("ffn", c.ffn);
    c.max_positions = j.value("max_positions", c.max_positions);
    c.init_std = j.value("init_std", c.init_std);
    c.layer_norm_eps = j.value("layer_norm_eps", c.layer_norm_eps);
    c.mlm_head = j.value("mlm_head", c.mlm_head);
    return c;
}

TinyEncoder::TinyEncoder(const TinyEncoderConfig& config, std::mt19937_64& rng) : config_(config) {
    if (config_.vocab_size == 0 || config_.hidden == 0 || config_.heads == 0 || config_.ffn == 0 ||
        config_.max_positions == 0) {
        throw Error("tiny encoder dimensions must be positive");
    }
    if (config_.hidden % config_.heads != 0) {
        throw Error("tiny encoder hidden size must be divisible by the head count");
    }
    const auto h = static_cast<Eigen::Index>(config_.hidden);
    const auto f = static_cast<Eigen::Index>(config_.ffn);
    const auto v = static_cast<Eigen::Index>(config_.vocab_size);
    const double s = config_.init_std;

    token_embedding_ = {"embeddings.token", ParamRole::embedding, random_normal(v, h, s, rng)};
    position_embedding_ = {"embeddings.position", ParamRole::embedding,
                           random_normal(static_cast<Eigen::Index>(config_.max_positions), h, s, rng)};
    emb_ln_gamma_ = make_norm("embeddings.ln.gamma", h, 1.0);
    emb_ln_beta_ = make_norm("embeddings.ln.beta", h, 0.0);

    for (std::size_t i = 0; i < config_.layers; ++i) {
        const std::string p = "layers." + std::to_string(i) + ".";
        Layer layer;
        layer.wq = make_weight(p + "attn.wq", h, h, s, rng);
        layer.bq = make_bias(p + "attn.bq", h);
        layer.wk = make_weight(p + "attn.wk", h, h, s, rng);
        layer.bk = make_bias(p + "attn.bk", h);
        layer.wv = make_weight(p + "attn.wv", h, h, s, rng);
        layer.bv = make_bias(p + "attn.bv", h);
        layer.wo = make_weight(p + "attn.wo", h, h, s, rng);
        layer.bo = make_bias(p + "attn.bo", h);
        layer.ln1_gamma = make_norm(p + "ln1.gamma", h, 1.0);
        layer.ln1_beta = make_norm(p + "ln1.beta", h, 0.0);
        layer.w1 = make_weight(p + "ffn.w1", h, f, s, rng);
        layer.b1 = make_bias(p + "ffn.b1", f);
        layer.w2 = make_weight(p + "ffn.w2", f, h, s, rng);
        layer.b2 = make_bias(p + "ffn.b2", h);
        layer.ln2_gamma = make_norm(p + "ln2.gamma", h, 1.0);
        layer.ln2_beta = make_norm(p + "ln2.beta", h, 0.0);
        layers_.push_back(std::move(layer));
    }

    if (config_.mlm_head) {
        mlm_weight_ = make_weight("mlm.weight", h, v, s, rng);
        mlm_bias_ = make_bias("mlm.bias", v);
    }
}

Matrix TinyEncoder::forward(std::span<const TokenId> ids, std::span<const std::uint8_t> attention,
                            std::unique_ptr<ForwardTrace>* trace_out) const {
    const auto t_len = static_cast<Eigen::Index>(ids.size());
    if (ids.empty()) {
        throw DimensionMismatch("tiny encoder: empty input");
    }
    if (attention.size() != ids.size()) {
        throw DimensionMismatch("tiny encoder: attention mask length differs from input length");
    }
    if (ids.size() > config_.max_positions) {
        throw DimensionMismatch("tiny encoder: sequence of " + std::to_string(ids.size()) +
                                " tokens exceeds max_positions " + std::to_string(config_.max_positions));
    }
    std::vector<Eigen::Index> valid_keys;
    for (std::size_t j = 0; j < attention.size(); ++j) {
        if (attention[j] != 0) {
            valid_keys.push_back(static_cast<Eigen::Index>(j));
        }
    }
    if (valid_keys.empty()) {
        throw DimensionMismatch("tiny encoder: attention mask selects no position");
    }

    std::unique_ptr<TinyTrace> trace;
    if (trace_out != nullptr) {
        trace = std::make_unique<TinyTrace>();
        trace->ids.assign(ids.begin(), ids.end());
        trace->attention.assign(attention.begin(), attention.end());
    }

    const auto hidden = static_cast<Eigen::Index>(config_.hidden);
    Matrix emb(t_len, hidden);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        const TokenId id = ids[static_cast<std::size_t>(t)];
        if (id < 0 || static_cast<std::size_t>(id) >= config_.vocab_size) {
            throw DimensionMismatch("tiny encoder: token id " + std::to_string(id) + " outside vocabulary");
        }
        emb.row(t) = token_embedding_.value.row(id) + position_embedding_.value.row(t);
    }
    Matrix x = layer_norm(emb, emb_ln_gamma_, emb_ln_beta_, config_.layer_norm_eps, trace ? &trace->emb_ln : nullptr);

    const auto n_heads = static_cast<Eigen::Index>(config_.heads);
    const Eigen::Index head_dim = hidden / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    for (const auto& layer : layers_) {
        LayerTrace lt;
        Matrix q = affine(x, layer.wq, layer.bq);
        Matrix k = affine(x, layer.wk, layer.bk);
        Matrix v = affine(x, layer.wv, layer.bv);
        Matrix ctx(t_len, hidden);
        std::vector<Matrix> probs;
        for (Eigen::Index h = 0; h < n_heads; ++h) {
            const Matrix scores = (q.middleCols(h * head_dim, head_dim) *
                                   k.middleCols(h * head_dim, head_dim).transpose()) * scale;
            Matrix p = Matrix::Zero(t_len, t_len);
            for (Eigen::Index i = 0; i < t_len; ++i) {
                double max_score = -std::numeric_limits<double>::infinity();
                for (const auto j : valid_keys) {
                    max_score = std::max(max_score, scores(i, j));
                }
                double sum = 0.0;
                for (const auto j : valid_keys) {
                    p(i, j) = std::exp(scores(i, j) - max_score);
                    sum += p(i, j);
                }
                p.row(i) /= sum;
            }
            ctx.middleCols(h * head_dim, head_dim).noalias() = p * v.middleCols(h * head_dim, head_dim);
            if (trace) {
                probs.push_back(std::move(p));
            }
        }
        const Matrix attn_out = affine(ctx, layer.wo, layer.bo);
        Matrix y = layer_norm(x + attn_out, layer.ln1_gamma, layer.ln1_beta, config_.layer_norm_eps,
                              trace ? &lt.ln1 : nullptr);
        Matrix h_pre = affine(y, layer.w1, layer.b1);
        Matrix h_act = h_pre.unaryExpr([](double z) { return gelu(z); });
        const Matrix ffn_out = affine(h_act, layer.w2, layer.b2);
        Matrix out = layer_norm(y + ffn_out, layer.ln2_gamma, layer.ln2_beta, config_.layer_norm_eps,
                                trace ? &lt.ln2 : nullptr);
        if (trace) {
            lt.x_in = std::move(x);
            lt.q = std::move(q);
            lt.k = std::move(k);
            lt.v = std::move(v);
            lt.probs = std::move(probs);
            lt.ctx = std::move(ctx);
            lt.y = std::move(y);
            lt.h_pre = std::move(h_pre);
            lt.h_act = std::move(h_act);
            trace->layers.push_back(std::move(lt));
        }
        x = std::move(out);
    }

    if (trace_out != nullptr) {
        *trace_out = std::move(trace);
    }
    return x;
}

void TinyEncoder::backward(const ForwardTrace& trace_base, const Matrix& d_hidden) {
    const auto* trace = dynamic_cast<const TinyTrace*>(&trace_base);
    if (trace == nullptr) {
        throw StateError("tiny encoder: backward() given a trace from a different backbone");
    }
    const auto t_len = static_cast<Eigen::Index>(trace->ids.size());
    const auto hidden = static_cast<Eigen::Index>(config_.hidden);
    if (d_hidden.rows() != t_len || d_hidden.cols() != hidden) {
        throw DimensionMismatch("tiny encoder: gradient shape does not match the traced forward pass");
    }
    const auto n_heads = static_cast<Eigen::Index>(config_.heads);
    const Eigen::Index head_dim = hidden / n_heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Matrix dx = d_hidden;
    for (std::size_t li = layers_.size(); li-- > 0;) {
        Layer& layer = layers_[li];
        const LayerTrace& lt = trace->layers[li];

        // out = LN2(y + ffn(y))
        const Matrix d_sum2 = layer_norm_backward(dx, lt.ln2, layer.ln2_gamma, layer.ln2_beta);
        Matrix d_y = d_sum2;
        const Matrix d_h_act = affine_backward(lt.h_act, d_sum2, layer.w2, layer.b2);
        const Matrix d_h_pre = d_h_act.cwiseProduct(lt.h_pre.unaryExpr([](double z) { return gelu_grad(z); }));
        d_y += affine_backward(lt.y, d_h_pre, layer.w1, layer.b1);

        // y = LN1(x + attn(x))
        const Matrix d_sum1 = layer_norm_backward(d_y, lt.ln1, layer.ln1_gamma, layer.ln1_beta);
        Matrix d_x_in = d_sum1;
        const Matrix d_ctx = affine_backward(lt.ctx, d_sum1, layer.wo, layer.bo);

        Matrix d_q(t_len, hidden), d_k(t_len, hidden), d_v(t_len, hidden);
        for (Eigen::Index h = 0; h < n_heads; ++h) {
            const Matrix& p = lt.probs[static_cast<std::size_t>(h)];
            const auto cols = [&](const Matrix& m) { return m.middleCols(h * head_dim, head_dim); };
            const Matrix d_ctx_h = cols(d_ctx);
            const Matrix d_p = d_ctx_h * cols(lt.v).transpose();
            d_v.middleCols(h * head_dim, head_dim).noalias() = p.transpose() * d_ctx_h;
            const Vector row_dot = (d_p.array() * p.array()).rowwise().sum();
            const Matrix d_scores = (p.array() * (d_p.colwise() - row_dot).array()).matrix() * scale;
            d_q.middleCols(h * head_dim, head_dim).noalias() = d_scores * cols(lt.k);
            d_k.middleCols(h * head_dim, head_dim).noalias() = d_scores.transpose() * cols(lt.q);
        }
        d_x_in += affine_backward(lt.x_in, d_q, layer.wq, layer.bq);
        d_x_in += affine_backward(lt.x_in, d_k, layer.wk, layer.bk);
        d_x_in += affine_backward(lt.x_in, d_v, layer.wv, layer.bv);
        dx = std::move(d_x_in);
    }

    const Matrix d_emb = layer_norm_backward(dx, trace->emb_ln, emb_ln_gamma_, emb_ln_beta_);
    for (Eigen::Index t = 0; t < t_len; ++t) {
        token_embedding_.grad.row(trace->ids[static_cast<std::size_t>(t)]) += d_emb.row(t);
        position_embedding_.grad.row(t) += d_emb.row(t);
    }
}

ParameterList TinyEncoder::parameters() {
    ParameterList out = encoder_parameters();
    if (config_.mlm_head) {
        out.push_back(&mlm_weight_);
        out.push_back(&mlm_bias_);
    }
    return out;
}

ParameterList TinyEncoder::encoder_parameters() {
    ParameterList out{&token_embedding_, &position_embedding_, &emb_ln_gamma_, &emb_ln_beta_};
    for (auto& l : layers_) {
        for (Parameter* p : {&l.wq, &l.bq, &l.wk, &l.bk, &l.wv, &l.bv, &l.wo, &l.bo, &l.ln1_gamma, &l.ln1_beta,
                             &l.w1, &l.b1, &l.w2, &l.b2, &l.ln2_gamma, &l.ln2_beta}) {
            out.push_back(p);
        }
    }
    return out;
}

Matrix TinyEncoder::mlm_logits(const Matrix& hidden) const {
    if (!config_.mlm_head) {
        return EncoderBackbone::mlm_logits(hidden);
    }
    return affine(hidden, mlm_weight_, mlm_bias_);
}

Matrix TinyEncoder::mlm_backward(const Matrix& hidden, const Matrix& d_logits) {
    if (!config_.mlm_head) {
        return EncoderBackbone::mlm_backward(hidden, d_logits);
    }
    return affine_backward(hidden, d_logits, mlm_weight_, mlm_bias_);
}

void TinyEncoder::resize_vocab(std::size_t new_size, std::mt19937_64& rng) {
    if (new_size <= config_.vocab_size) {
        return;
    }
    const auto old_v = static_cast<Eigen::Index>(config_.vocab_size);
    const auto extra = static_cast<Eigen::Index>(new_size) - old_v;
    const auto h = static_cast<Eigen::Index>(config_.hidden);

    Matrix tok(old_v + extra, h);
    tok.topRows(old_v) = token_embedding_.value;
    tok.bottomRows(extra) = random_normal(extra, h, config_.init_std, rng);
    token_embedding_.value = std::move(tok);
    token_embedding_.zero_grad();

    if (config_.mlm_head) {
        Matrix w(h, old_v + extra);
        w.leftCols(old_v) = mlm_weight_.value;
        w.rightCols(extra) = random_normal(h, extra, config_.init_std, rng);
        mlm_weight_.value = std::move(w);
        mlm_weight_.zero_grad();
        Matrix b = Matrix::Zero(1, old_v + extra);
        b.leftCols(old_v) = mlm_bias_.value;
        mlm_bias_.value = std::move(b);
        mlm_bias_.zero_grad();
    }
    config_.vocab_size = new_size;
}

nlohmann::json TinyEncoder::config() const {
    return config_.to_json();
}

std::unique_ptr<EncoderBackbone> TinyEncoder::clone() const {
    return std::make_unique<TinyEncoder>(*this);
}

} // namespace fintree
