#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>

#include "fintree/backbone.hpp"

namespace fintree {

struct AdamWOptions {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

// Decoupled weight decay Adam. Decay applies to weight matrices and embeddings
// only, never to biases or normalization parameters. State is keyed by name.
class AdamW {
public:
    explicit AdamW(AdamWOptions options = {}) : options_(options) {}

    void step(const ParameterList& params, double lr);

    std::size_t steps() const noexcept { return step_; }
    const AdamWOptions& options() const noexcept { return options_; }

    void save(const std::filesystem::path& path) const;
    void load(const std::filesystem::path& path);

private:
    struct Moments {
        Matrix m;
        Matrix v;
    };

    AdamWOptions options_;
    std::size_t step_ = 0;
    std::map<std::string, Moments> state_;
};

} // namespace fintree
