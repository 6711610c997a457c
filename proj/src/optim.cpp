#include "fintree/optim.hpp"

#include <cmath>
#include <fstream>

#include "fintree/errors.hpp"

namespace fintree {

void AdamW::step(const ParameterList& params, double lr) {
    ++step_;
    const double bc1 = 1.0 - std::pow(options_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(options_.beta2, static_cast<double>(step_));
    for (Parameter* p : params) {
        auto [it, inserted] = state_.try_emplace(p->name);
        Moments& s = it->second;
        if (inserted || s.m.rows() != p->value.rows() || s.m.cols() != p->value.cols()) {
            // A resized vocabulary keeps the existing rows' moments.
            Matrix m = Matrix::Zero(p->value.rows(), p->value.cols());
            Matrix v = Matrix::Zero(p->value.rows(), p->value.cols());
            if (!inserted) {
                const auto r = std::min(m.rows(), s.m.rows());
                const auto c = std::min(m.cols(), s.m.cols());
                m.topLeftCorner(r, c) = s.m.topLeftCorner(r, c);
                v.topLeftCorner(r, c) = s.v.topLeftCorner(r, c);
            }
            s.m = std::move(m);
            s.v = std::move(v);
        }
        if (p->is_weight() && options_.weight_decay > 0.0) {
            p->value *= 1.0 - lr * options_.weight_decay;
        }
        s.m = options_.beta1 * s.m + (1.0 - options_.beta1) * p->grad;
        s.v = options_.beta2 * s.v + (1.0 - options_.beta2) * p->grad.cwiseAbs2();
        p->value.array() -= lr * (s.m.array() / bc1) / ((s.v.array() / bc2).sqrt() + options_.eps);
    }
}

namespace {

void write_matrix(std::ostream& out, const Matrix& m) {
    const auto rows = static_cast<std::uint64_t>(m.rows());
    const auto cols = static_cast<std::uint64_t>(m.cols());
    out.write(reinterpret_cast<const char*>(&rows), sizeof(rows));
    out.write(reinterpret_cast<const char*>(&cols), sizeof(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            const double v = m(r, c);
            out.write(reinterpret_cast<const char*>(&v), sizeof(v));
        }
    }
}

Matrix read_matrix(std::istream& in) {
    std::uint64_t rows = 0, cols = 0;
    in.read(reinterpret_cast<char*>(&rows), sizeof(rows));
    in.read(reinterpret_cast<char*>(&cols), sizeof(cols));
    Matrix m(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        for (Eigen::Index c = 0; c < m.cols(); ++c) {
            in.read(reinterpret_cast<char*>(&m(r, c)), sizeof(double));
        }
    }
    if (!in) {
        throw CheckpointError("optimizer state file is truncated");
    }
    return m;
}

} // namespace

void AdamW::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw CheckpointError("cannot write optimizer state to '" + path.string() + "'");
    }
    const auto step = static_cast<std::uint64_t>(step_);
    const auto count = static_cast<std::uint64_t>(state_.size());
    out.write(reinterpret_cast<const char*>(&step), sizeof(step));
    out.write(reinterpret_cast<const char*>(&count), sizeof(count));
    for (const auto& [name, s] : state_) {
        const auto len = static_cast<std::uint64_t>(name.size());
        out.write(reinterpret_cast<const char*>(&len), sizeof(len));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        write_matrix(out, s.m);
        write_matrix(out, s.v);
    }
}

void AdamW::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw CheckpointError("cannot open optimizer state '" + path.string() + "'");
    }
    std::uint64_t step = 0, count = 0;
    in.read(reinterpret_cast<char*>(&step), sizeof(step));
    in.read(reinterpret_cast<char*>(&count), sizeof(count));
    if (!in) {
        throw CheckpointError("optimizer state file is truncated");
    }
    std::map<std::string, Moments> state;
    for (std::uint64_t i = 0; i < count; ++i) {
        std::uint64_t len = 0;
        in.read(reinterpret_cast<char*>(&len), sizeof(len));
        std::string name(len, '\0');
        in.read(name.data(), static_cast<std::streamsize>(len));
        Moments s;
        s.m = read_matrix(in);
        s.v = read_matrix(in);
        state.emplace(std::move(name), std::move(s));
    }
    step_ = static_cast<std::size_t>(step);
    state_ = std::move(state);
}

} // namespace fintree
