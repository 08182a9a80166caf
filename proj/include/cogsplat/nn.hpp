// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/common.hpp"
#include "cogsplat/rng.hpp"
#include "cogsplat/tape.hpp"

#include <functional>

namespace cogsplat::nn {

/// Projections for scaled dot-product attention. Weights are stored input-dim
/// by output-dim so token rows project by right multiplication.
struct AttentionParams {
    Matrix w_q;  // d_in_q x d_k
    Matrix w_k;  // d_in_kv x d_k
    Matrix w_v;  // d_in_kv x d_v

    Eigen::Index key_dim() const { return w_q.cols(); }
    void validate() const;
};

/// Two-layer perceptron with GELU activation.
struct MlpParams {
    Matrix w1;  // d_in x d_hidden
    Matrix b1;  // 1 x d_hidden
    Matrix w2;  // d_hidden x d_out
    Matrix b2;  // 1 x d_out

    void validate() const;
};

struct LayerNormParams {
    Matrix gamma;  // 1 x d
    Matrix beta;   // 1 x d
    double eps = 1e-5;

    void validate() const;
};

/// Sinusoidal embedding of 2D integer grid coordinates. The first d/2 entries
/// encode x, the last d/2 encode y, each as interleaved sin/cos pairs at
/// geometrically spaced frequencies.
struct PosEmbed2D {
    int dim = 0;
    double base = 10000.0;
};

/// 3D positional embedding: sinusoidal over (x, y) concatenated with a
/// learnable per-depth-level table row.
struct PosEmbed3D {
    PosEmbed2D planar;
    Matrix depth_table;  // depth_levels x d_z

    int dim() const { return planar.dim + static_cast<int>(depth_table.cols()); }
    int depth_levels() const { return static_cast<int>(depth_table.rows()); }
};

// Plain forward paths.

/// out = Softmax(q k^T / sqrt(d_k)) v. Pass `weights` to retain the softmax rows.
Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights = nullptr);

/// Normalizes one vector: gamma .* (x - mean) / sqrt(var + eps) + beta.
Vector layer_norm(const Vector& x, const LayerNormParams& params);

/// Applies the perceptron to each row of x.
Matrix mlp(const Matrix& x, const MlpParams& params);

Vector pe2d(int x_p, int y_p, const PosEmbed2D& spec);
Vector pe3d(int x_q, int y_q, int z_index, const PosEmbed3D& emb);

// Tape counterparts. Parameter bundles are bound to leaves once per tape.

struct AttentionVars {
    ad::Var w_q, w_k, w_v;
};
struct MlpVars {
    ad::Var w1, b1, w2, b2;
};
struct LayerNormVars {
    ad::Var gamma, beta;
    double eps = 1e-5;
};

AttentionVars bind(ad::Tape& t, const AttentionParams& p);
MlpVars bind(ad::Tape& t, const MlpParams& p);
LayerNormVars bind(ad::Tape& t, const LayerNormParams& p);

struct AttentionOut {
    ad::Var out;
    ad::Var weights;
};

/// Raw attention on already projected matrices.
AttentionOut attention(ad::Tape& t, ad::Var q, ad::Var k, ad::Var v);

/// Projects x_q/x_kv through the parameter bundle, then attends.
AttentionOut projected_attention(ad::Tape& t, ad::Var x_q, ad::Var x_kv, const AttentionVars& p);

ad::Var mlp(ad::Tape& t, ad::Var x, const MlpVars& p);
ad::Var layer_norm(ad::Tape& t, ad::Var x, const LayerNormVars& p);

/// Gathers the depth row z_index from a bound table and concatenates it after
/// the sinusoidal planar part; gradient flows into the table.
ad::Var pe3d(ad::Tape& t, int x_q, int y_q, int z_index, const PosEmbed2D& planar, ad::Var depth_table);

// Initializers. Every tensor draws from its own named stream.
AttentionParams init_attention(std::uint64_t seed, std::string_view name, Eigen::Index d_in_q,
                               Eigen::Index d_in_kv, Eigen::Index d_k, Eigen::Index d_v);
MlpParams init_mlp(std::uint64_t seed, std::string_view name, Eigen::Index d_in, Eigen::Index d_hidden,
                   Eigen::Index d_out);
LayerNormParams init_layer_norm(Eigen::Index d, double eps = 1e-5);

/// A scalar function with its analytic gradient, as consumed by grad_check.
struct DifferentiableScalarFn {
    std::function<double(const Vector&)> value;
    std::function<Vector(const Vector&)> gradient;
};

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|).
double grad_check(const DifferentiableScalarFn& f, const Vector& x, double eps);

}  // namespace cogsplat::nn
