// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/common.hpp"

#include <string>
#include <vector>

namespace cogsplat {

/// Named views over a model's parameter tensors in a fixed registration
/// order. The registry does not own the tensors.
class ParamRegistry {
public:
    struct Entry {
        std::string name;
        Matrix* tensor;
    };

    void add(std::string name, Matrix& tensor);
    /// Registers every tensor of `registry` under `prefix + "."`.
    void add_group(const std::string& prefix, const ParamRegistry& group);

    const std::vector<Entry>& entries() const { return entries_; }
    std::size_t count() const { return entries_.size(); }
    Eigen::Index total_size() const;

    Vector flatten() const;
    void unflatten(const Vector& flat) const;

private:
    std::vector<Entry> entries_;
};

/// Decoupled weight decay Adam. Moments mirror the registry order.
struct AdamWConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct OptimizerState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    long long step = 0;

    static OptimizerState init(const ParamRegistry& params);
};

/// One update over every registered tensor. `grads` must align with the
/// registry order; missing gradients are treated as zero.
void optimizer_step(const ParamRegistry& params, const std::vector<Matrix>& grads, OptimizerState& state,
                    double lr, const AdamWConfig& config = {});

/// Single-tensor form of the same update.
void optimizer_step(Matrix& param, const Matrix& grad, Matrix& m, Matrix& v, long long step, double lr,
                    const AdamWConfig& config = {});

}  // namespace cogsplat
