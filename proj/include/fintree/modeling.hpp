#pragma once

#include <cstddef>
#include <filesystem>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "fintree/backbone.hpp"
#include "fintree/data.hpp"
#include "fintree/prompting.hpp"
#include "fintree/schema.hpp"
#include "fintree/tokenizer.hpp"

namespace fintree {

// Linear classifier over the mask position's final hidden state.
class RelationHead {
public:
    RelationHead() = default;
    // weight ~ U(-1/sqrt(hidden), 1/sqrt(hidden)), bias = 0
    RelationHead(std::size_t num_labels, std::size_t hidden, std::mt19937_64& rng);

    std::size_t num_labels() const noexcept { return static_cast<std::size_t>(weight.value.rows()); }
    std::size_t hidden_size() const noexcept { return static_cast<std::size_t>(weight.value.cols()); }

    Vector logits(const Vector& hidden_state) const;
    ParameterList parameters() { return {&weight, &bias}; }

    Parameter weight; // [K x hidden]
    Parameter bias;   // [1 x K]
};

struct RelationLogits {
    std::vector<double> values;
    std::vector<bool> masked;

    std::size_t size() const noexcept { return values.size(); }
    // Highest unmasked score; ties go to the lowest index.
    std::size_t argmax() const;
};

RelationLogits forward_logits(const PromptEncoding& enc, const EncoderBackbone& backbone, const RelationHead& head);

RelationLogits apply_constraint_mask(const RelationLogits& logits, const LabelSet& allowed);

// Softmax over unmasked entries; masked entries get exactly 0.
std::vector<double> masked_softmax(const RelationLogits& logits);

// Everything inference needs: tokenizer, encoder, head, and prompt settings.
struct RelationModel {
    std::unique_ptr<Tokenizer> tokenizer;
    std::unique_ptr<EncoderBackbone> backbone;
    RelationHead head;
    LabelRegistry registry;
    PromptOptions prompt;
    double head_dropout = 0.1;

    RelationModel() = default;
    RelationModel(RelationModel&&) noexcept = default;
    RelationModel& operator=(RelationModel&&) noexcept = default;

    RelationModel clone() const;
    // Encoder parameters followed by the head (MLM head excluded).
    ParameterList parameters();
    PromptEncoding encode(const REInstance& inst) const;
};

// Registers prompt tokens, grows the backbone vocabulary to match, and attaches a fresh head.
RelationModel make_relation_model(std::unique_ptr<Tokenizer> tokenizer, std::unique_ptr<EncoderBackbone> backbone,
                                  const LabelRegistry& registry, const PromptOptions& prompt, std::mt19937_64& rng,
                                  double head_dropout = 0.1);

struct Prediction {
    std::size_t label = 0;
    std::vector<double> probs;
    bool constrained = false;
};

Prediction predict_encoded(const PromptEncoding& enc, const RelationModel& model, const CompatibilityTable& table,
                           bool use_mcpp);
Prediction predict(const REInstance& inst, const RelationModel& model, const CompatibilityTable& table,
                   bool use_mcpp);

// Cross-entropy of the unconstrained logits against gold (no dropout).
double relation_loss(const PromptEncoding& enc, std::size_t gold, const EncoderBackbone& backbone,
                     const RelationHead& head);

// Same loss, plus gradients (scaled by grad_scale) accumulated into backbone and head.
// dropout_rng == nullptr disables head dropout.
double relation_loss_backward(const PromptEncoding& enc, std::size_t gold, EncoderBackbone& backbone,
                              RelationHead& head, double dropout, std::mt19937_64* dropout_rng,
                              double grad_scale = 1.0);

// Checkpoint directory: backbone.bin, head.bin (float32 row-major weight, then bias),
// labels.txt, tokenizer.json, config.json.
void save_checkpoint(const RelationModel& model, const std::filesystem::path& dir,
                     const nlohmann::json& extra = nlohmann::json::object());
RelationModel load_checkpoint(const std::filesystem::path& dir);

nlohmann::json prompt_to_json(const PromptOptions& prompt);
PromptOptions prompt_from_json(const nlohmann::json& j);

} // namespace fintree
