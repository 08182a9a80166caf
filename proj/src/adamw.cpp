// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/adamw.hpp"

#include <cmath>

namespace cogsplat {

void ParamRegistry::add(std::string name, Matrix& tensor) {
    for (const Entry& e : entries_)
        if (e.name == name) throw ConfigError("ParamRegistry: duplicate tensor name " + name);
    entries_.push_back(Entry{std::move(name), &tensor});
}

void ParamRegistry::add_group(const std::string& prefix, const ParamRegistry& group) {
    for (const Entry& e : group.entries_) add(prefix + "." + e.name, *e.tensor);
}

Eigen::Index ParamRegistry::total_size() const {
    Eigen::Index n = 0;
    for (const Entry& e : entries_) n += e.tensor->size();
    return n;
}

Vector ParamRegistry::flatten() const {
    Vector flat(total_size());
    Eigen::Index at = 0;
    for (const Entry& e : entries_) {
        flat.segment(at, e.tensor->size()) = Eigen::Map<const Vector>(e.tensor->data(), e.tensor->size());
        at += e.tensor->size();
    }
    return flat;
}

void ParamRegistry::unflatten(const Vector& flat) const {
    if (flat.size() != total_size()) throw DimensionError("ParamRegistry: flat vector size mismatch");
    Eigen::Index at = 0;
    for (const Entry& e : entries_) {
        Eigen::Map<Vector>(e.tensor->data(), e.tensor->size()) = flat.segment(at, e.tensor->size());
        at += e.tensor->size();
    }
}

OptimizerState OptimizerState::init(const ParamRegistry& params) {
    OptimizerState s;
    for (const ParamRegistry::Entry& e : params.entries()) {
        s.m.push_back(Matrix::Zero(e.tensor->rows(), e.tensor->cols()));
        s.v.push_back(Matrix::Zero(e.tensor->rows(), e.tensor->cols()));
    }
    return s;
}

void optimizer_step(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, long long step, double lr,
                    const AdamWConfig& config) {
    if (grad.rows() != param.rows() || grad.cols() != param.cols())
        throw DimensionError("optimizer_step: gradient shape mismatch");
    const double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
    // Fused elementwise update; avoids full-size temporaries on large tensors.
    m.array() = config.beta1 * m.array() + (1.0 - config.beta1) * grad.array();
    v.array() = config.beta2 * v.array() + (1.0 - config.beta2) * grad.array().square();
    param.array() -= lr * ((m.array() / bc1) / ((v.array() / bc2).sqrt() + config.eps));
    param.array() -= lr * config.weight_decay * param.array();
}

void optimizer_step(const ParamRegistry& params, const std::vector<Matrix>& grads, OptimizerState& state,
                    double lr, const AdamWConfig& config) {
    if (grads.size() != params.count()) throw DimensionError("optimizer_step: gradient count mismatch");
    ++state.step;
    for (std::size_t i = 0; i < params.count(); ++i) {
        Matrix& p = *params.entries()[i].tensor;
        if (grads[i].size() == 0) {
            Matrix zero = Matrix::Zero(p.rows(), p.cols());
            optimizer_step(p, zero, state.m[i], state.v[i], state.step, lr, config);
        } else {
            optimizer_step(p, grads[i], state.m[i], state.v[i], state.step, lr, config);
        }
    }
}

}  // namespace cogsplat
