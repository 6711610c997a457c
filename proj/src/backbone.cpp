#include "fintree/backbone.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "fintree/errors.hpp"
#include "fintree/tiny_encoder.hpp"

namespace fintree {

namespace {

constexpr char kBackboneMagic[4] = {'F', 'T', 'B', 'B'};
constexpr std::uint32_t kBackboneVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& value) {
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_pod(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) {
        throw CheckpointError("truncated backbone file");
    }
    return value;
}

std::string read_string(std::istream& in, std::uint64_t size) {
    std::string s(size, '\0');
    in.read(s.data(), static_cast<std::streamsize>(size));
    if (!in) {
        throw CheckpointError("truncated backbone file");
    }
    return s;
}

} // namespace

void zero_grad(const ParameterList& params) {
    for (Parameter* p : params) {
        p->zero_grad();
    }
}

double grad_norm(const ParameterList& params) {
    double sq = 0.0;
    for (const Parameter* p : params) {
        sq += p->grad.squaredNorm();
    }
    return std::sqrt(sq);
}

double clip_grad_norm(const ParameterList& params, double max_norm) {
    const double norm = grad_norm(params);
    if (max_norm > 0.0 && norm > max_norm) {
        const double factor = max_norm / (norm + 1e-6);
        for (Parameter* p : params) {
            p->grad *= factor;
        }
    }
    return norm;
}

Matrix EncoderBackbone::mlm_logits(const Matrix&) const {
    throw StateError("backbone '" + kind() + "' has no MLM head");
}

Matrix EncoderBackbone::mlm_backward(const Matrix&, const Matrix&) {
    throw StateError("backbone '" + kind() + "' has no MLM head");
}

void save_backbone(const EncoderBackbone& backbone, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot write backbone to '" + path.string() + "'");
    }
    out.write(kBackboneMagic, sizeof(kBackboneMagic));
    write_pod(out, kBackboneVersion);
    const std::string config = backbone.config().dump();
    write_pod(out, static_cast<std::uint64_t>(config.size()));
    out.write(config.data(), static_cast<std::streamsize>(config.size()));

    // parameters() is logically const here: only values are read.
    const ParameterList params = const_cast<EncoderBackbone&>(backbone).parameters();
    write_pod(out, static_cast<std::uint64_t>(params.size()));
    for (const Parameter* p : params) {
        write_pod(out, static_cast<std::uint64_t>(p->name.size()));
        out.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        write_pod(out, static_cast<std::uint64_t>(p->value.rows()));
        write_pod(out, static_cast<std::uint64_t>(p->value.cols()));
        for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
                write_pod(out, p->value(r, c));
            }
        }
    }
    if (!out) {
        throw CheckpointError("write to '" + path.string() + "' failed");
    }
}

std::unique_ptr<EncoderBackbone> load_backbone(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open backbone file '" + path.string() + "'");
    }
    char magic[4] = {};
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kBackboneMagic, sizeof(magic)) != 0) {
        throw CheckpointError("'" + path.string() + "' is not a backbone file");
    }
    if (read_pod<std::uint32_t>(in) != kBackboneVersion) {
        throw CheckpointError("unsupported backbone file version in '" + path.string() + "'");
    }
    const auto config = nlohmann::json::parse(read_string(in, read_pod<std::uint64_t>(in)));

    std::mt19937_64 unused_rng(0);
    auto backbone = create_backbone(config, unused_rng);
    const ParameterList params = backbone->parameters();
    const auto count = read_pod<std::uint64_t>(in);
    if (count != params.size()) {
        throw CheckpointError("backbone file has " + std::to_string(count) + " tensors, expected " +
                              std::to_string(params.size()));
    }
    for (Parameter* p : params) {
        const std::string name = read_string(in, read_pod<std::uint64_t>(in));
        const auto rows = read_pod<std::uint64_t>(in);
        const auto cols = read_pod<std::uint64_t>(in);
        if (name != p->name || rows != static_cast<std::uint64_t>(p->value.rows()) ||
            cols != static_cast<std::uint64_t>(p->value.cols())) {
            throw CheckpointError("backbone tensor '" + name + "' does not match expected '" + p->name + "'");
        }
        for (Eigen::Index r = 0; r < p->value.rows(); ++r) {
            for (Eigen::Index c = 0; c < p->value.cols(); ++c) {
                p->value(r, c) = read_pod<double>(in);
            }
        }
        p->zero_grad();
    }
    return backbone;
}

std::unique_ptr<EncoderBackbone> create_backbone(const nlohmann::json& config, std::mt19937_64& rng) {
    const std::string kind = config.value("kind", "tiny");
    if (kind == "tiny") {
        return std::make_unique<TinyEncoder>(TinyEncoderConfig::from_json(config), rng);
    }
    throw Error("unknown backbone kind '" + kind + "'");
}

std::vector<Matrix> snapshot_values(const ParameterList& params) {
    std::vector<Matrix> values;
    values.reserve(params.size());
    for (const Parameter* p : params) {
        values.push_back(p->value);
    }
    return values;
}

void restore_values(const ParameterList& params, const std::vector<Matrix>& values) {
    if (values.size() != params.size()) {
        throw StateError("snapshot does not match the parameter list");
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        params[i]->value = values[i];
    }
}

} // namespace fintree
