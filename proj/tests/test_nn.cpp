// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogsplat/nn.hpp"

#include <cmath>

using namespace cogsplat;

namespace {

// Independent scalar GELU for oracle evaluation.
double oracle_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

nn::DifferentiableScalarFn tape_fn(std::function<ad::Var(ad::Tape&, ad::Var)> program, Eigen::Index rows,
                                   Eigen::Index cols) {
    auto value = [program, rows, cols](const Vector& x) {
        ad::Tape t;
        ad::Var v = t.leaf(Eigen::Map<const Matrix>(x.data(), rows, cols));
        return t.val(program(t, v))(0, 0);
    };
    auto gradient = [program, rows, cols](const Vector& x) {
        ad::Tape t;
        ad::Var v = t.leaf(Eigen::Map<const Matrix>(x.data(), rows, cols));
        t.backward(program(t, v));
        Matrix g = t.grad_or_zero(v);
        return Vector(Eigen::Map<const Vector>(g.data(), g.size()));
    };
    return nn::DifferentiableScalarFn{value, gradient};
}

}  // namespace

TEST_CASE("attention with a single key returns the value row exactly") {
    Matrix q(3, 2);
    q << 1, 0, -2, 5, 0.3, 0.4;
    Matrix k(1, 2);
    k << 0.7, -0.1;
    Matrix v(1, 4);
    v << 1, 2, 3, 4;
    Matrix out = nn::attention(q, k, v);
    for (int i = 0; i < 3; ++i) CHECK((out.row(i) - v.row(0)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("attention with identical keys averages the values") {
    Matrix q(2, 3);
    q << 1, 2, 3, -1, 0, 1;
    Matrix k = Matrix::Ones(4, 3) * 0.5;
    RngStream s(0, "attn-avg");
    Matrix v = s.normal_matrix(4, 2);
    Matrix out = nn::attention(q, k, v);
    Eigen::RowVectorXd mean = v.colwise().mean();
    for (int i = 0; i < 2; ++i) CHECK((out.row(i) - mean).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("attention two-key instance matches the scalar softmax oracle") {
    Matrix q(1, 2);
    q << 1, 0;
    Matrix k(2, 2);
    k << 1, 0, 0, 1;
    Matrix v(2, 2);
    v << 1, 0, 0, 1;
    // Scores are (1/sqrt(2), 0); evaluate the softmax by hand.
    const double s1 = 1.0 / std::sqrt(2.0), s2 = 0.0;
    const double e1 = std::exp(s1), e2 = std::exp(s2);
    const double w1 = e1 / (e1 + e2), w2 = e2 / (e1 + e2);
    Matrix weights;
    Matrix out = nn::attention(q, k, v, &weights);
    CHECK(out(0, 0) == doctest::Approx(w1).epsilon(1e-14));
    CHECK(out(0, 1) == doctest::Approx(w2).epsilon(1e-14));
    CHECK(weights(0, 0) == doctest::Approx(w1).epsilon(1e-14));
}

TEST_CASE("attention weight rows sum to one and are key/value permutation equivariant") {
    RngStream s(5, "attn-prop");
    for (int trial = 0; trial < 20; ++trial) {
        Matrix q = s.normal_matrix(3, 4), k = s.normal_matrix(6, 4), v = s.normal_matrix(6, 5);
        Matrix w;
        Matrix out = nn::attention(q, k, v, &w);
        for (int i = 0; i < w.rows(); ++i) CHECK(std::abs(w.row(i).sum() - 1.0) < 1e-9);

        std::vector<int> perm{3, 0, 5, 1, 4, 2};
        Matrix kp(6, 4), vp(6, 5);
        for (int i = 0; i < 6; ++i) {
            kp.row(i) = k.row(perm[static_cast<std::size_t>(i)]);
            vp.row(i) = v.row(perm[static_cast<std::size_t>(i)]);
        }
        Matrix out_p = nn::attention(q, kp, vp);
        CHECK((out - out_p).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("attention rejects bad shapes and non-finite input") {
    Matrix q(1, 2), k(2, 3), v(2, 2);
    q.setZero();
    k.setZero();
    v.setZero();
    CHECK_THROWS_AS(nn::attention(q, k, v), DimensionError);
    Matrix k2 = Matrix::Zero(2, 2);
    Matrix q2 = q;
    q2(0, 0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(nn::attention(q2, k2, v), NumericError);
}

TEST_CASE("layer_norm closed-form cases") {
    nn::LayerNormParams p = nn::init_layer_norm(3);

    Vector c = Vector::Constant(3, 4.2);
    Vector out = nn::layer_norm(c, p);
    CHECK(out.cwiseAbs().maxCoeff() < 1e-9);

    nn::LayerNormParams zero_gain = p;
    zero_gain.gamma.setZero();
    zero_gain.beta = Matrix::Constant(1, 3, 0.7);
    Vector x(3);
    x << -3, 8, 0.1;
    out = nn::layer_norm(x, zero_gain);
    for (int i = 0; i < 3; ++i) CHECK(out(i) == 0.7);

    // x = [1,2,3], eps = 0: population variance 2/3.
    nn::LayerNormParams exact = p;
    exact.eps = 1e-300;  // effectively zero while keeping the invariant eps > 0
    Vector y(3);
    y << 1, 2, 3;
    out = nn::layer_norm(y, exact);
    CHECK(out(0) == doctest::Approx(-std::sqrt(1.5)).epsilon(1e-12));
    CHECK(out(1) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(out(2) == doctest::Approx(std::sqrt(1.5)).epsilon(1e-12));
}

TEST_CASE("layer_norm output mean/variance for random non-constant input") {
    RngStream s(9, "ln-prop");
    nn::LayerNormParams p = nn::init_layer_norm(16);
    for (int trial = 0; trial < 50; ++trial) {
        Vector x = s.normal_matrix(16, 1);
        Vector out = nn::layer_norm(x, p);
        CHECK(std::abs(out.mean()) < 1e-9);
        double var = (out.array() - out.mean()).square().mean();
        CHECK(std::abs(var - 1.0) < 1e-4);
    }
}

TEST_CASE("mlp closed-form and oracle cases") {
    nn::MlpParams p = nn::init_mlp(0, "test.mlp", 2, 2, 2);

    nn::MlpParams zeros = p;
    zeros.w1.setZero();
    zeros.w2.setZero();
    zeros.b1.setZero();
    zeros.b2 << 1.5, -2.0;
    Matrix x(1, 2);
    x << 3, -4;
    Matrix out = nn::mlp(x, zeros);
    CHECK(out(0, 0) == 1.5);
    CHECK(out(0, 1) == -2.0);

    nn::MlpParams ident = p;
    ident.w1 = Matrix::Identity(2, 2);
    ident.w2 = Matrix::Identity(2, 2);
    ident.b1.setZero();
    ident.b2.setZero();
    out = nn::mlp(Matrix::Zero(1, 2), ident);
    CHECK(out.cwiseAbs().maxCoeff() == 0.0);  // GELU(0) = 0

    // Seed-0 params on [1, -1] against an independent scalar evaluation.
    x << 1, -1;
    out = nn::mlp(x, p);
    for (int o = 0; o < 2; ++o) {
        double acc = p.b2(0, o);
        for (int h = 0; h < 2; ++h) {
            double pre = p.b1(0, h);
            for (int i = 0; i < 2; ++i) pre += x(0, i) * p.w1(i, h);
            acc += oracle_gelu(pre) * p.w2(h, o);
        }
        CHECK(out(0, o) == doctest::Approx(acc).epsilon(1e-14));
    }
}

TEST_CASE("pe2d deterministic and matches the direct formula") {
    nn::PosEmbed2D spec{4, 10000.0};
    Vector a = nn::pe2d(3, -2, spec), b = nn::pe2d(3, -2, spec);
    CHECK((a - b).cwiseAbs().maxCoeff() == 0.0);

    Vector zero = nn::pe2d(0, 0, spec);
    CHECK(zero(0) == 0.0);
    CHECK(zero(1) == 1.0);
    CHECK(zero(2) == 0.0);
    CHECK(zero(3) == 1.0);

    Vector e = nn::pe2d(1, 0, spec);
    CHECK(e(0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    CHECK(e(1) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
    CHECK(e(2) == 0.0);
    CHECK(e(3) == 1.0);

    CHECK_THROWS_AS(nn::pe2d(0, 0, nn::PosEmbed2D{6, 10000.0}), ConfigError);
    CHECK_THROWS_AS(nn::pe2d(0, 0, nn::PosEmbed2D{5, 10000.0}), ConfigError);
}

TEST_CASE("pe3d concatenates planar embedding with the depth table row") {
    nn::PosEmbed3D emb;
    emb.planar = nn::PosEmbed2D{4, 10000.0};
    emb.depth_table = Matrix::Zero(3, 2);
    Vector e = nn::pe3d(1, 2, 1, emb);
    Vector planar = nn::pe2d(1, 2, emb.planar);
    CHECK((e.head(4) - planar).cwiseAbs().maxCoeff() == 0.0);
    CHECK(e.tail(2).cwiseAbs().maxCoeff() == 0.0);

    Vector again = nn::pe3d(1, 2, 1, emb);
    CHECK((e - again).cwiseAbs().maxCoeff() == 0.0);

    CHECK_THROWS_AS(nn::pe3d(0, 0, 3, emb), DimensionError);
}

TEST_CASE("pe3d table gradient matches finite differences") {
    RngStream s(4, "pe3d");
    Matrix table = s.normal_matrix(3, 4);
    nn::PosEmbed2D planar{4, 10000.0};
    auto fn = tape_fn(
        [&](ad::Tape& t, ad::Var tab) {
            ad::Var row = nn::pe3d(t, 2, 1, 1, planar, tab);
            return ad::sum(ad::square(row));
        },
        3, 4);
    Vector flat = Eigen::Map<const Vector>(table.data(), table.size());
    CHECK(nn::grad_check(fn, flat, 1e-5) < 1e-5);
}

TEST_CASE("grad_check on exact quadratic, attention program and constant") {
    nn::DifferentiableScalarFn quad{
        [](const Vector& x) { return x.squaredNorm(); },
        [](const Vector& x) { return Vector(2.0 * x); },
    };
    Vector x(2);
    x << 1, 2;
    CHECK(nn::grad_check(quad, x, 1e-5) <= 1e-8);

    RngStream s(0, "gc-attn");
    Matrix q0 = s.normal_matrix(2, 2);
    const Matrix kc = s.normal_matrix(2, 2), vc = s.normal_matrix(2, 2);
    auto attn_fn = tape_fn(
        [&](ad::Tape& t, ad::Var q) {
            ad::Var k = t.constant(kc);
            ad::Var v = t.constant(vc);
            return ad::sum(nn::attention(t, q, k, v).out);
        },
        2, 2);
    Vector qflat = Eigen::Map<const Vector>(q0.data(), q0.size());
    CHECK(nn::grad_check(attn_fn, qflat, 1e-5) <= 1e-5);

    nn::DifferentiableScalarFn constant{
        [](const Vector&) { return 3.0; },
        [](const Vector& x) { return Vector(Vector::Zero(x.size())); },
    };
    CHECK(nn::grad_check(constant, x, 1e-5) == 0.0);

    CHECK_THROWS_AS(nn::grad_check(quad, x, 1e-2), ConfigError);
    nn::DifferentiableScalarFn bad{
        [](const Vector&) { return std::numeric_limits<double>::infinity(); },
        [](const Vector& x) { return Vector(Vector::Zero(x.size())); },
    };
    CHECK_THROWS_AS(nn::grad_check(bad, x, 1e-5), NumericError);
}

TEST_CASE("tape and plain forwards agree for attention, mlp and layer_norm") {
    RngStream s(8, "agree");
    Matrix q = s.normal_matrix(3, 4), k = s.normal_matrix(5, 4), v = s.normal_matrix(5, 4);
    nn::MlpParams mp = nn::init_mlp(8, "agree.mlp", 4, 8, 4);
    nn::LayerNormParams lp = nn::init_layer_norm(4);

    ad::Tape t;
    auto attn = nn::attention(t, t.constant(q), t.constant(k), t.constant(v));
    CHECK((t.val(attn.out) - nn::attention(q, k, v)).cwiseAbs().maxCoeff() < 1e-14);

    ad::Var x = t.constant(q);
    ad::Var m = nn::mlp(t, x, nn::bind(t, mp));
    CHECK((t.val(m) - nn::mlp(q, mp)).cwiseAbs().maxCoeff() < 1e-14);

    ad::Var ln = nn::layer_norm(t, x, nn::bind(t, lp));
    for (int i = 0; i < q.rows(); ++i) {
        Vector row = nn::layer_norm(q.row(i).transpose(), lp);
        CHECK((t.val(ln).row(i).transpose() - row).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("nn parameter gradient checks across random seeds") {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        RngStream s(seed, "nn-grad");
        const Matrix x = s.normal_matrix(3, 4);

        nn::AttentionParams ap = nn::init_attention(seed, "g.attn", 4, 4, 4, 4);
        Matrix flat(4 * 4 * 3, 1);
        flat << Eigen::Map<const Vector>(ap.w_q.data(), 16), Eigen::Map<const Vector>(ap.w_k.data(), 16),
            Eigen::Map<const Vector>(ap.w_v.data(), 16);
        auto attn_fn = tape_fn(
            [&](ad::Tape& t, ad::Var packed) {
                nn::AttentionVars av{ad::reshape(ad::block(packed, 0, 0, 16, 1), 4, 4),
                                     ad::reshape(ad::block(packed, 16, 0, 16, 1), 4, 4),
                                     ad::reshape(ad::block(packed, 32, 0, 16, 1), 4, 4)};
                ad::Var xv = t.constant(x);
                return ad::sum(nn::projected_attention(t, xv, xv, av).out);
            },
            48, 1);
        CHECK(nn::grad_check(attn_fn, flat.col(0), 1e-5) < 1e-5);
    }
}
