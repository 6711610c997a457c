#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "fintree/tokenizer.hpp"

namespace fintree {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;

enum class ParamRole { weight, embedding, bias, norm };

// A named trainable tensor and its accumulated gradient (same shape).
struct Parameter {
    std::string name;
    ParamRole role = ParamRole::weight;
    Matrix value;
    Matrix grad;

    Parameter() = default;
    Parameter(std::string n, ParamRole r, Matrix v)
        : name(std::move(n)), role(r), value(std::move(v)), grad(Matrix::Zero(value.rows(), value.cols())) {}

    // Weight matrices and embeddings; AWP and weight decay target these.
    bool is_weight() const noexcept { return role == ParamRole::weight || role == ParamRole::embedding; }
    void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter*>;

void zero_grad(const ParameterList& params);
double grad_norm(const ParameterList& params);
// Scales gradients so their global L2 norm is at most max_norm; returns the pre-clip norm.
double clip_grad_norm(const ParameterList& params, double max_norm);

// Opaque record of a training-mode forward pass, consumed by backward().
class ForwardTrace {
public:
    virtual ~ForwardTrace() = default;
};

// Encoder contract: token ids + attention mask in, one hidden row per position out.
// forward() is const and safe to call concurrently; backward() accumulates
// into parameter gradients and needs exclusive access.
class EncoderBackbone {
public:
    virtual ~EncoderBackbone() = default;

    virtual std::string kind() const = 0;
    virtual std::size_t hidden_size() const = 0;
    virtual std::size_t vocab_size() const = 0;

    // Returns [ids.size() x hidden_size()]. Positions with attention 0 are never
    // attended to. When trace is non-null it receives what backward() needs.
    virtual Matrix forward(std::span<const TokenId> ids, std::span<const std::uint8_t> attention,
                           std::unique_ptr<ForwardTrace>* trace = nullptr) const = 0;
    virtual void backward(const ForwardTrace& trace, const Matrix& d_hidden) = 0;

    virtual ParameterList parameters() = 0;
    // Parameters on the path to the hidden states (excludes the MLM head).
    virtual ParameterList encoder_parameters() { return parameters(); }

    virtual bool has_mlm_head() const { return false; }
    // Vocabulary logits for the given hidden rows: [rows x vocab_size()].
    virtual Matrix mlm_logits(const Matrix& hidden) const;
    // Accumulates MLM-head gradients and returns the gradient w.r.t. hidden.
    virtual Matrix mlm_backward(const Matrix& hidden, const Matrix& d_logits);

    // Grows the token vocabulary; new rows are randomly initialized.
    virtual void resize_vocab(std::size_t new_size, std::mt19937_64& rng) = 0;

    // Everything needed to re-create an identically shaped backbone.
    virtual nlohmann::json config() const = 0;
    virtual std::unique_ptr<EncoderBackbone> clone() const = 0;
};

// Binary parameter file: magic, config JSON, then (name, rows, cols, float64 data) records.
void save_backbone(const EncoderBackbone& backbone, const std::filesystem::path& path);
std::unique_ptr<EncoderBackbone> load_backbone(const std::filesystem::path& path);

// Builds a freshly initialized backbone from a config object ("kind" selects the type).
std::unique_ptr<EncoderBackbone> create_backbone(const nlohmann::json& config, std::mt19937_64& rng);

// Bitwise snapshot of parameter values, keyed by position in the list.
std::vector<Matrix> snapshot_values(const ParameterList& params);
void restore_values(const ParameterList& params, const std::vector<Matrix>& values);

} // namespace fintree
