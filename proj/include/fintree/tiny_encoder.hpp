#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "fintree/backbone.hpp"

namespace fintree {

struct TinyEncoderConfig {
    std::size_t vocab_size = 0;
    std::size_t hidden = 64;
    std::size_t layers = 2;
    std::size_t heads = 4;
    std::size_t ffn = 256;
    std::size_t max_positions = 1536;
    double init_std = 0.02;
    double layer_norm_eps = 1e-5;
    bool mlm_head = true;

    nlohmann::json to_json() const;
    static TinyEncoderConfig from_json(const nlohmann::json& j);
};

// Post-LN transformer encoder (BERT layout): learned token + position
// embeddings, multi-head self-attention with key padding mask, GELU FFN.
// Gradients are hand-derived; every parameter is exposed by name.
class TinyEncoder final : public EncoderBackbone {
public:
    TinyEncoder(const TinyEncoderConfig& config, std::mt19937_64& rng);

    std::string kind() const override { return "tiny"; }
    std::size_t hidden_size() const override { return config_.hidden; }
    std::size_t vocab_size() const override { return config_.vocab_size; }

    Matrix forward(std::span<const TokenId> ids, std::span<const std::uint8_t> attention,
                   std::unique_ptr<ForwardTrace>* trace = nullptr) const override;
    void backward(const ForwardTrace& trace, const Matrix& d_hidden) override;

    ParameterList parameters() override;
    ParameterList encoder_parameters() override;

    bool has_mlm_head() const override { return config_.mlm_head; }
    Matrix mlm_logits(const Matrix& hidden) const override;
    Matrix mlm_backward(const Matrix& hidden, const Matrix& d_logits) override;

    void resize_vocab(std::size_t new_size, std::mt19937_64& rng) override;

    nlohmann::json config() const override;
    std::unique_ptr<EncoderBackbone> clone() const override;

    const TinyEncoderConfig& settings() const noexcept { return config_; }

private:
    struct Layer {
        Parameter wq, bq, wk, bk, wv, bv, wo, bo;
        Parameter ln1_gamma, ln1_beta;
        Parameter w1, b1, w2, b2;
        Parameter ln2_gamma, ln2_beta;
    };

    TinyEncoderConfig config_;
    Parameter token_embedding_;
    Parameter position_embedding_;
    Parameter emb_ln_gamma_, emb_ln_beta_;
    std::vector<Layer> layers_;
    Parameter mlm_weight_, mlm_bias_;
};

} // namespace fintree
