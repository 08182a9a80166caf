// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/nn.hpp"

#include <cmath>
#include <string>

namespace cogsplat::nn {

void AttentionParams::validate() const {
    if (w_q.cols() <= 0 || w_q.cols() != w_k.cols())
        throw DimensionError("AttentionParams: w_q and w_k must share the key dimension");
    if (w_k.rows() != w_v.rows()) throw DimensionError("AttentionParams: w_k and w_v must share the input dimension");
}

void MlpParams::validate() const {
    if (w1.cols() != b1.cols() || b1.rows() != 1) throw DimensionError("MlpParams: b1 must be 1 x hidden");
    if (w1.cols() != w2.rows()) throw DimensionError("MlpParams: inner dimensions do not chain");
    if (w2.cols() != b2.cols() || b2.rows() != 1) throw DimensionError("MlpParams: b2 must be 1 x out");
}

void LayerNormParams::validate() const {
    if (gamma.rows() != 1 || beta.rows() != 1 || gamma.cols() != beta.cols())
        throw DimensionError("LayerNormParams: gamma/beta must be 1 x d");
    if (eps <= 0) throw ConfigError("LayerNormParams: epsilon must be positive");
}

Matrix attention(const Matrix& q, const Matrix& k, const Matrix& v, Matrix* weights) {
    if (q.cols() != k.cols()) throw DimensionError("attention: q and k feature dimensions differ");
    if (k.rows() != v.rows()) throw DimensionError("attention: k and v row counts differ");
    require_finite(q, "attention q");
    require_finite(k, "attention k");
    require_finite(v, "attention v");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(q.cols()));
    const Matrix w = ad::softmax_rows_value(q * k.transpose() * inv_sqrt_dk);
    if (weights != nullptr) *weights = w;
    return w * v;
}

Vector layer_norm(const Vector& x, const LayerNormParams& params) {
    if (params.gamma.cols() != x.size()) throw DimensionError("layer_norm: parameter length mismatch");
    require_finite(x, "layer_norm x");
    const double mu = x.mean();
    const double var = (x.array() - mu).square().mean();
    const Eigen::ArrayXd xhat = (x.array() - mu) / std::sqrt(var + params.eps);
    return (params.gamma.row(0).transpose().array() * xhat + params.beta.row(0).transpose().array()).matrix();
}

Matrix mlp(const Matrix& x, const MlpParams& params) {
    params.validate();
    if (x.cols() != params.w1.rows()) throw DimensionError("mlp: input dimension mismatch");
    Matrix h = (x * params.w1).rowwise() + params.b1.row(0);
    return (ad::gelu_value(h) * params.w2).rowwise() + params.b2.row(0);
}

namespace {

// One coordinate's half of the embedding: d/2 values as (sin, cos) pairs.
void fill_sincos(double pos, double base, Eigen::Index half, double* out) {
    const Eigen::Index pairs = half / 2;
    for (Eigen::Index j = 0; j < pairs; ++j) {
        const double freq = std::pow(base, -static_cast<double>(j) / static_cast<double>(pairs));
        out[2 * j] = std::sin(pos * freq);
        out[2 * j + 1] = std::cos(pos * freq);
    }
}

}  // namespace

Vector pe2d(int x_p, int y_p, const PosEmbed2D& spec) {
    if (spec.dim <= 0 || spec.dim % 4 != 0)
        throw ConfigError("pe2d: dimension must be a positive multiple of 4, got " + std::to_string(spec.dim));
    Vector e(spec.dim);
    const Eigen::Index half = spec.dim / 2;
    fill_sincos(static_cast<double>(x_p), spec.base, half, e.data());
    fill_sincos(static_cast<double>(y_p), spec.base, half, e.data() + half);
    return e;
}

Vector pe3d(int x_q, int y_q, int z_index, const PosEmbed3D& emb) {
    if (z_index < 0 || z_index >= emb.depth_levels())
        throw DimensionError("pe3d: depth index " + std::to_string(z_index) + " outside [0, " +
                             std::to_string(emb.depth_levels()) + ")");
    Vector e(emb.dim());
    e.head(emb.planar.dim) = pe2d(x_q, y_q, emb.planar);
    e.tail(emb.depth_table.cols()) = emb.depth_table.row(z_index).transpose();
    return e;
}

AttentionVars bind(ad::Tape& t, const AttentionParams& p) {
    p.validate();
    return AttentionVars{t.leaf(p.w_q), t.leaf(p.w_k), t.leaf(p.w_v)};
}

MlpVars bind(ad::Tape& t, const MlpParams& p) {
    p.validate();
    return MlpVars{t.leaf(p.w1), t.leaf(p.b1), t.leaf(p.w2), t.leaf(p.b2)};
}

LayerNormVars bind(ad::Tape& t, const LayerNormParams& p) {
    p.validate();
    return LayerNormVars{t.leaf(p.gamma), t.leaf(p.beta), p.eps};
}

AttentionOut attention(ad::Tape& t, ad::Var q, ad::Var k, ad::Var v) {
    if (t.val(q).cols() != t.val(k).cols()) throw DimensionError("attention: q and k feature dimensions differ");
    if (t.val(k).rows() != t.val(v).rows()) throw DimensionError("attention: k and v row counts differ");
    const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(t.val(q).cols()));
    ad::Var scores = ad::scale(ad::matmul(q, ad::transpose(k)), inv_sqrt_dk);
    ad::Var w = ad::softmax_rows(scores);
    return AttentionOut{ad::matmul(w, v), w};
}

AttentionOut projected_attention(ad::Tape& t, ad::Var x_q, ad::Var x_kv, const AttentionVars& p) {
    return attention(t, ad::matmul(x_q, p.w_q), ad::matmul(x_kv, p.w_k), ad::matmul(x_kv, p.w_v));
}

ad::Var mlp(ad::Tape& t, ad::Var x, const MlpVars& p) {
    ad::Var h = ad::gelu(ad::add_rowvec(ad::matmul(x, p.w1), p.b1));
    return ad::add_rowvec(ad::matmul(h, p.w2), p.b2);
}

ad::Var layer_norm(ad::Tape& t, ad::Var x, const LayerNormVars& p) {
    return ad::layer_norm_rows(x, p.gamma, p.beta, p.eps);
}

ad::Var pe3d(ad::Tape& t, int x_q, int y_q, int z_index, const PosEmbed2D& planar, ad::Var depth_table) {
    if (z_index < 0 || z_index >= t.val(depth_table).rows()) throw DimensionError("pe3d: depth index out of range");
    ad::Var planar_part = t.constant(pe2d(x_q, y_q, planar).transpose());
    ad::Var depth_row = ad::gather_rows(depth_table, {z_index});
    return ad::concat_cols(planar_part, depth_row);
}

AttentionParams init_attention(std::uint64_t seed, std::string_view name, Eigen::Index d_in_q,
                               Eigen::Index d_in_kv, Eigen::Index d_k, Eigen::Index d_v) {
    AttentionParams p;
    const std::string base(name);
    p.w_q = RngStream(seed, base + ".w_q").normal_matrix(d_in_q, d_k) / std::sqrt(static_cast<double>(d_in_q));
    p.w_k = RngStream(seed, base + ".w_k").normal_matrix(d_in_kv, d_k) / std::sqrt(static_cast<double>(d_in_kv));
    p.w_v = RngStream(seed, base + ".w_v").normal_matrix(d_in_kv, d_v) / std::sqrt(static_cast<double>(d_in_kv));
    return p;
}

MlpParams init_mlp(std::uint64_t seed, std::string_view name, Eigen::Index d_in, Eigen::Index d_hidden,
                   Eigen::Index d_out) {
    MlpParams p;
    const std::string base(name);
    p.w1 = RngStream(seed, base + ".w1").normal_matrix(d_in, d_hidden) / std::sqrt(static_cast<double>(d_in));
    p.b1 = Matrix::Zero(1, d_hidden);
    p.w2 = RngStream(seed, base + ".w2").normal_matrix(d_hidden, d_out) / std::sqrt(static_cast<double>(d_hidden));
    p.b2 = Matrix::Zero(1, d_out);
    return p;
}

LayerNormParams init_layer_norm(Eigen::Index d, double eps) {
    LayerNormParams p;
    p.gamma = Matrix::Ones(1, d);
    p.beta = Matrix::Zero(1, d);
    p.eps = eps;
    return p;
}

double grad_check(const DifferentiableScalarFn& f, const Vector& x, double eps) {
    if (eps < 1e-7 || eps > 1e-3) throw ConfigError("grad_check: eps must lie in [1e-7, 1e-3]");
    const double fx = f.value(x);
    if (!std::isfinite(fx)) throw NumericError("grad_check: f(x) is not finite");
    const Vector analytic = f.gradient(x);
    double worst = 0.0;
    Vector probe = x;
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        probe(i) = x(i) + eps;
        const double fp = f.value(probe);
        probe(i) = x(i) - eps;
        const double fm = f.value(probe);
        probe(i) = x(i);
        const double numeric = (fp - fm) / (2.0 * eps);
        const double rel = std::abs(analytic(i) - numeric) / std::max(1.0, std::abs(analytic(i)));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace cogsplat::nn
