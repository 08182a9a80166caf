// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogsplat/rng.hpp"
#include "cogsplat/tape.hpp"

#include <cmath>
#include <functional>

using namespace cogsplat;

namespace {

// Finite-difference check of d(scalar)/d(leaf) for an arbitrary tape program.
// Builds the program from scratch at every probe so no state leaks.
double fd_check(const Matrix& x0, const std::function<ad::Var(ad::Tape&, ad::Var)>& program,
                double eps = 1e-6) {
    ad::Tape t;
    ad::Var x = t.leaf(x0);
    ad::Var y = program(t, x);
    t.backward(y);
    Matrix analytic = t.grad_or_zero(x);

    double worst = 0.0;
    Matrix probe = x0;
    for (Eigen::Index i = 0; i < x0.size(); ++i) {
        const double saved = probe(i);
        auto eval = [&](double v) {
            probe(i) = v;
            ad::Tape tt;
            ad::Var xx = tt.leaf(probe);
            return tt.val(program(tt, xx))(0, 0);
        };
        const double num = (eval(saved + eps) - eval(saved - eps)) / (2.0 * eps);
        probe(i) = saved;
        const double rel = std::abs(analytic(i) - num) / std::max(1.0, std::abs(analytic(i)));
        worst = std::max(worst, rel);
    }
    return worst;
}

}  // namespace

TEST_CASE("rng streams are deterministic and independent by name") {
    RngStream a(7, "alpha"), a2(7, "alpha"), b(7, "beta");
    std::vector<double> xs, ys;
    for (int i = 0; i < 32; ++i) {
        xs.push_back(a.normal());
        ys.push_back(a2.normal());
    }
    CHECK(xs == ys);
    // A different name produces a different sequence.
    bool any_diff = false;
    RngStream a3(7, "alpha");
    for (int i = 0; i < 32; ++i) any_diff |= (a3.normal() != b.normal());
    CHECK(any_diff);
}

TEST_CASE("rng uniform_int stays in range") {
    RngStream s(3, "ints");
    for (int i = 0; i < 1000; ++i) {
        int v = s.uniform_int(7);
        CHECK(v >= 0);
        CHECK(v < 7);
    }
}

TEST_CASE("rng normal moments are sane") {
    RngStream s(11, "moments");
    const int n = 200000;
    double sum = 0, sum2 = 0;
    for (int i = 0; i < n; ++i) {
        double v = s.normal();
        sum += v;
        sum2 += v * v;
    }
    CHECK(std::abs(sum / n) < 0.01);
    CHECK(std::abs(sum2 / n - 1.0) < 0.02);
}

TEST_CASE("tape gradients match finite differences per op") {
    RngStream s(0, "fd");
    const Matrix a = s.normal_matrix(3, 4);
    const Matrix b = s.normal_matrix(3, 4);
    const Matrix m = s.normal_matrix(4, 2);

    auto through_sum = [](std::function<ad::Var(ad::Tape&, ad::Var)> f) {
        return [f](ad::Tape& t, ad::Var x) { return ad::sum(f(t, x)); };
    };

    CHECK(fd_check(a, through_sum([&](ad::Tape& t, ad::Var x) { return ad::add(x, t.constant(b)); })) < 1e-8);
    CHECK(fd_check(a, through_sum([&](ad::Tape& t, ad::Var x) { return ad::sub(t.constant(b), x); })) < 1e-8);
    CHECK(fd_check(a, through_sum([&](ad::Tape& t, ad::Var x) { return ad::cmul(x, t.constant(b)); })) < 1e-8);
    CHECK(fd_check(a, through_sum([&](ad::Tape& t, ad::Var x) {
              return ad::cdiv(t.constant(b), ad::add_scalar(ad::square(x), 1.0));
          })) < 1e-6);
    CHECK(fd_check(a, through_sum([&](ad::Tape& t, ad::Var x) { return ad::matmul(x, t.constant(m)); })) < 1e-8);
    CHECK(fd_check(m, through_sum([&](ad::Tape& t, ad::Var x) { return ad::matmul(t.constant(a), x); })) < 1e-8);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::transpose(x); })) < 1e-8);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::scale(x, -2.5); })) < 1e-8);
    CHECK(fd_check(a, [](ad::Tape&, ad::Var x) { return ad::mean(ad::square(x)); }) < 1e-7);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::exp_v(x); })) < 1e-6);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) {
              return ad::log_v(ad::add_scalar(ad::square(x), 1.5));
          })) < 1e-6);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::sigmoid(x); })) < 1e-6);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::tanh_v(x); })) < 1e-6);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::gelu(x); })) < 1e-6);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) {
              return ad::sqrt_v(ad::add_scalar(ad::square(x), 0.5));
          })) < 1e-6);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::softmax_rows(x); })) < 1e-6);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::normalize_rows(x); })) < 1e-6);
    CHECK(fd_check(a, through_sum([&](ad::Tape& t, ad::Var x) {
              return ad::add_rowvec(x, t.constant(Matrix::Ones(1, 4)));
          })) < 1e-8);
    CHECK(fd_check(Matrix::Ones(1, 4), through_sum([&](ad::Tape& t, ad::Var x) {
              return ad::add_rowvec(ad::square(ad::add_rowvec(t.constant(a), x)), x);
          })) < 1e-6);
    CHECK(fd_check(a, through_sum([&](ad::Tape& t, ad::Var x) { return ad::concat_rows(x, t.constant(b)); })) <
          1e-8);
    const Matrix wide = s.normal_matrix(3, 8);
    CHECK(fd_check(a, through_sum([&](ad::Tape& t, ad::Var x) {
              return ad::cmul(ad::concat_cols(x, x), t.constant(wide));
          })) < 1e-7);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::block(x, 1, 1, 2, 3); })) < 1e-8);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::gather_rows(x, {2, 0, 2}); })) < 1e-8);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::reshape(x, 4, 3); })) < 1e-8);
    CHECK(fd_check(a, through_sum([](ad::Tape&, ad::Var x) { return ad::abs_v(x); })) < 1e-6);
}

TEST_CASE("tape layer_norm_rows gradient w.r.t. x, gamma, beta") {
    RngStream s(1, "ln");
    const Matrix x = s.normal_matrix(3, 5);
    const Matrix gamma = s.normal_matrix(1, 5);
    const Matrix beta = s.normal_matrix(1, 5);

    auto build = [&](ad::Tape& t, ad::Var lx, ad::Var lg, ad::Var lb) {
        return ad::sum(ad::square(ad::layer_norm_rows(lx, lg, lb, 1e-5)));
    };
    {
        double err = fd_check(x, [&](ad::Tape& t, ad::Var v) {
            return build(t, v, t.constant(gamma), t.constant(beta));
        });
        CHECK(err < 1e-6);
    }
    {
        double err = fd_check(gamma, [&](ad::Tape& t, ad::Var v) {
            return build(t, t.constant(x), v, t.constant(beta));
        });
        CHECK(err < 1e-6);
    }
    {
        double err = fd_check(beta, [&](ad::Tape& t, ad::Var v) {
            return build(t, t.constant(x), t.constant(gamma), v);
        });
        CHECK(err < 1e-6);
    }
}

TEST_CASE("tape cross entropy matches hand computation and finite differences") {
    Matrix logits(2, 3);
    logits << 1.0, -0.5, 0.25, 0.0, 2.0, -1.0;
    const std::vector<int> labels{2, 1};

    // Independent evaluation via explicit log-sum-exp.
    double expected = 0.0;
    for (int i = 0; i < 2; ++i) {
        double lse = std::log(std::exp(logits(i, 0)) + std::exp(logits(i, 1)) + std::exp(logits(i, 2)));
        expected += lse - logits(i, labels[static_cast<std::size_t>(i)]);
    }
    expected /= 2.0;

    ad::Tape t;
    ad::Var l = t.leaf(logits);
    ad::Var ce = ad::cross_entropy_logits(l, labels);
    CHECK(t.val(ce)(0, 0) == doctest::Approx(expected).epsilon(1e-12));

    double err = fd_check(logits, [&](ad::Tape& tt, ad::Var x) { return ad::cross_entropy_logits(x, labels); });
    CHECK(err < 1e-6);
}

TEST_CASE("separable valid convolution matches dense oracle and finite differences") {
    const int height = 7, width = 6;
    RngStream s(2, "conv");
    Matrix img = s.normal_matrix(height * width, 2);
    Vector kernel(3);
    kernel << 0.25, 0.5, 0.25;

    ad::Tape t;
    ad::Var iv = t.leaf(img);
    ad::Var out = ad::conv_sep_valid(iv, height, width, kernel);

    // Dense 2D oracle: direct double loop with the outer-product kernel.
    const int oh = height - 2, ow = width - 2;
    for (int c = 0; c < 2; ++c) {
        for (int ox = 0; ox < ow; ++ox) {
            for (int oy = 0; oy < oh; ++oy) {
                double acc = 0.0;
                for (int kx = 0; kx < 3; ++kx)
                    for (int ky = 0; ky < 3; ++ky)
                        acc += kernel(ky) * kernel(kx) * img((ox + kx) * height + (oy + ky), c);
                CHECK(t.val(out)(ox * oh + oy, c) == doctest::Approx(acc).epsilon(1e-12));
            }
        }
    }

    double err = fd_check(img, [&](ad::Tape& tt, ad::Var x) {
        return ad::sum(ad::square(ad::conv_sep_valid(x, height, width, kernel)));
    });
    CHECK(err < 1e-6);
}

TEST_CASE("tape rejects shape mismatches and foreign vars") {
    ad::Tape t;
    ad::Var a = t.leaf(Matrix::Zero(2, 3));
    ad::Var b = t.leaf(Matrix::Zero(3, 2));
    CHECK_THROWS_AS(ad::add(a, b), DimensionError);
    CHECK_THROWS_AS(ad::matmul(a, a), DimensionError);
    ad::Tape other;
    ad::Var c = other.leaf(Matrix::Zero(2, 3));
    CHECK_THROWS_AS(ad::add(a, c), StateError);
    CHECK_THROWS_AS(t.backward(a), DimensionError);
}
