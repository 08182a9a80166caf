// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/common.hpp"

#include <functional>
#include <utility>
#include <vector>

namespace cogsplat::ad {

class Tape;

/// Handle to a node on a tape. Cheap to copy; valid for the tape's lifetime.
struct Var {
    Tape* tape = nullptr;
    int id = -1;
    bool valid() const { return tape != nullptr && id >= 0; }
};

/// Wengert-list reverse-mode differentiation over dense matrices. Nodes are
/// appended in evaluation order, so a single reverse sweep visits every node
/// after all of its consumers.
class Tape {
public:
    using BackwardFn = std::function<void(Tape&, const Matrix&)>;

    /// Leaf with gradient tracking (parameters, differentiable inputs).
    Var leaf(Matrix value) { return push(std::move(value), nullptr); }

    /// Leaf whose gradient is never used (data, targets).
    Var constant(Matrix value) { return push(std::move(value), nullptr); }

    /// Derived node. `backward` receives the output cotangent and must
    /// accumulate into the node's parents via accum().
    Var node(Matrix value, BackwardFn backward) { return push(std::move(value), std::move(backward)); }

    const Matrix& val(Var v) const { return nodes_[check(v)].value; }
    const Matrix& val(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }

    /// Gradient of the last backward() target with respect to `v`. Zero-sized
    /// if no path reached the node.
    const Matrix& grad(Var v) const { return nodes_[check(v)].grad; }

    /// Gradient with zeros materialized for unreached nodes.
    Matrix grad_or_zero(Var v) const {
        const Rec& r = nodes_[check(v)];
        if (r.grad.size() == 0) return Matrix::Zero(r.value.rows(), r.value.cols());
        return r.grad;
    }

    void accum(int id, const Matrix& g) {
        Rec& r = nodes_[static_cast<std::size_t>(id)];
        if (r.grad.size() == 0)
            r.grad = g;
        else
            r.grad += g;
    }

    /// Reverse sweep from a 1x1 node. Clears previous gradients.
    void backward(Var output) {
        const std::size_t out = check(output);
        if (nodes_[out].value.size() != 1)
            throw DimensionError("Tape::backward: output must be a 1x1 scalar");
        for (Rec& r : nodes_) r.grad.resize(0, 0);
        nodes_[out].grad = Matrix::Ones(1, 1);
        for (std::size_t i = nodes_.size(); i-- > 0;) {
            Rec& r = nodes_[i];
            if (r.backward && r.grad.size() != 0) r.backward(*this, r.grad);
        }
    }

    std::size_t size() const { return nodes_.size(); }

private:
    struct Rec {
        Matrix value;
        Matrix grad;
        BackwardFn backward;
    };

    Var push(Matrix value, BackwardFn backward) {
        nodes_.push_back(Rec{std::move(value), Matrix(), std::move(backward)});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    std::size_t check(Var v) const {
        if (v.tape != this || v.id < 0 || static_cast<std::size_t>(v.id) >= nodes_.size())
            throw StateError("Var does not belong to this tape");
        return static_cast<std::size_t>(v.id);
    }

    std::vector<Rec> nodes_;
};

// Elementwise and structural operations. All shapes are validated eagerly.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var neg(Var a);
Var cmul(Var a, Var b);
Var cdiv(Var a, Var b);
Var matmul(Var a, Var b);
Var transpose(Var a);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
/// Adds a 1 x cols row vector to every row of `a`.
Var add_rowvec(Var a, Var row);
Var sum(Var a);
Var mean(Var a);
Var square(Var a);
Var sqrt_v(Var a);
Var abs_v(Var a);
Var exp_v(Var a);
Var log_v(Var a);
Var sigmoid(Var a);
Var tanh_v(Var a);
Var gelu(Var a);
/// Row-wise softmax with max subtraction.
Var softmax_rows(Var a);
/// Row-wise layer normalization with affine parameters (1 x d each).
Var layer_norm_rows(Var x, Var gamma, Var beta, double eps);
/// Divides each row by its Euclidean norm.
Var normalize_rows(Var a);
Var concat_rows(Var a, Var b);
Var concat_cols(Var a, Var b);
Var block(Var a, Eigen::Index i, Eigen::Index j, Eigen::Index rows, Eigen::Index cols);
Var gather_rows(Var a, const std::vector<int>& rows);
/// Column-major reshape.
Var reshape(Var a, Eigen::Index rows, Eigen::Index cols);
/// Mean cross entropy of logit rows against integer labels.
Var cross_entropy_logits(Var logits, const std::vector<int>& labels);
/// Per-channel valid 2D convolution with a separable 1D kernel. Images are
/// stored as (H*W) x C with column-major pixel flattening (p = x*H + y).
Var conv_sep_valid(Var img, int height, int width, const Vector& kernel);

// Plain-value kernels shared by tape ops and direct callers.
Matrix softmax_rows_value(const Matrix& scores);
Matrix gelu_value(const Matrix& x);
double gelu_scalar(double x);

}  // namespace cogsplat::ad
