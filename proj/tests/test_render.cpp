// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogsplat/rng.hpp"
#include "cogsplat/nn.hpp"
#include "cogsplat/ssim.hpp"

#include <cmath>
#include <filesystem>

using namespace cogsplat;

namespace {

Gaussian3D make_gaussian(Vector3d center, double sigma, double opacity, Vector3d color) {
    Gaussian3D g;
    g.center = center;
    g.log_scale = Vector3d::Constant(std::log(sigma));
    g.rotation = Vector4d(1, 0, 0, 0);
    g.opacity_logit = std::log(opacity / (1.0 - opacity));
    g.color = color;
    return g;
}

// Independent per-pixel compositing oracle: evaluates the product formula
// term by term from the analytic projection, without any cutoff logic.
Vector3d oracle_pixel(const std::vector<Gaussian3D>& sorted_front_to_back, const CameraView& view,
                      double u, double v) {
    Vector3d right, up, fwd;
    view.basis(right, up, fwd);
    Vector3d c = Vector3d::Zero();
    double transmittance = 1.0;
    for (const Gaussian3D& g : sorted_front_to_back) {
        Eigen::Matrix3d cov = g.covariance();
        Eigen::Matrix<double, 2, 3> m;
        m.row(0) = right.transpose();
        m.row(1) = up.transpose();
        Eigen::Matrix2d s = m * cov * m.transpose();
        Eigen::Vector2d d(u - right.dot(g.center), v - up.dot(g.center));
        const double q = d.dot(s.inverse() * d);
        const double alpha = g.opacity() * std::exp(-0.5 * q);
        c += g.color * alpha * transmittance;
        transmittance *= 1.0 - alpha;
    }
    c += view.background * transmittance;
    return c;
}

GaussianScene random_scene(std::uint64_t seed, int count) {
    RngStream s(seed, "render-test");
    GaussianScene scene;
    for (int i = 0; i < count; ++i) {
        Gaussian3D g;
        g.center = Vector3d(s.uniform(-0.5, 0.5), s.uniform(-0.5, 0.5), s.uniform(-0.5, 0.5));
        g.log_scale = Vector3d(s.uniform(-2.5, -1.2), s.uniform(-2.5, -1.2), s.uniform(-2.5, -1.2));
        Vector4d q(s.normal(), s.normal(), s.normal(), s.normal());
        g.rotation = q / q.norm();
        g.opacity_logit = s.uniform(-1.0, 1.5);
        g.color = Vector3d(s.uniform(0.1, 0.9), s.uniform(0.1, 0.9), s.uniform(0.1, 0.9));
        scene.gaussians.push_back(g);
    }
    return scene;
}

}  // namespace

TEST_CASE("fully transparent scene renders the background") {
    GaussianScene scene;
    for (int i = 0; i < 4; ++i) {
        Gaussian3D g = make_gaussian(Vector3d(0.1 * i, 0, 0), 0.2, 0.5, Vector3d(1, 0, 0));
        g.opacity_logit = -40.0;  // opacity ~ 4e-18
        scene.gaussians.push_back(g);
    }
    CameraView view = CameraView::axis("+x");
    view.width = view.height = 16;
    view.background = Vector3d(0.25, 0.5, 0.75);
    Image img = render(scene, view);
    for (int p = 0; p < img.pixels.rows(); ++p)
        for (int c = 0; c < 3; ++c) CHECK(img.pixels(p, c) == doctest::Approx(view.background(c)).epsilon(1e-12));
}

TEST_CASE("single gaussian centered on a pixel gives color times opacity there") {
    CameraView view = CameraView::axis("+x");
    view.width = view.height = 16;
    view.extent = 1.0;
    Vector3d right, up, fwd;
    view.basis(right, up, fwd);
    // Center the Gaussian exactly on pixel (4, 9): u = -1 + 9.5 * 2/16, v = 1 - 4.5 * 2/16.
    const double u = -1.0 + 9.5 * (2.0 / 16), v = 1.0 - 4.5 * (2.0 / 16);
    const double opacity = 0.6;
    GaussianScene scene;
    scene.gaussians.push_back(make_gaussian(u * right + v * up, 0.05, opacity, Vector3d(0.2, 0.9, 0.4)));

    Image img = render(scene, view);
    for (int c = 0; c < 3; ++c)
        CHECK(img.at(4, 9, c) == doctest::Approx(scene.gaussians[0].color(c) * opacity).epsilon(1e-9));
}

TEST_CASE("overlapping gaussians match the per-pixel compositing oracle") {
    CameraView view = CameraView::axis("+z");
    view.width = view.height = 24;
    view.extent = 1.0;
    view.background = Vector3d(0.1, 0.1, 0.2);

    GaussianScene scene;
    scene.gaussians.push_back(make_gaussian(Vector3d(-0.1, 0.05, 0.3), 0.25, 0.7, Vector3d(0.9, 0.2, 0.1)));
    scene.gaussians.push_back(make_gaussian(Vector3d(0.1, -0.05, -0.2), 0.3, 0.5, Vector3d(0.1, 0.3, 0.8)));
    scene.gaussians.push_back(make_gaussian(Vector3d(0.0, 0.2, 0.6), 0.2, 0.4, Vector3d(0.2, 0.9, 0.3)));

    // Sort front to back along +z by hand for the oracle.
    std::vector<Gaussian3D> sorted = {scene.gaussians[1], scene.gaussians[0], scene.gaussians[2]};

    Image img = render(scene, view);
    for (int y = 0; y < view.height; y += 3) {
        for (int x = 0; x < view.width; x += 3) {
            const double u = -1.0 + (x + 0.5) * (2.0 / 24);
            const double v = 1.0 - (y + 0.5) * (2.0 / 24);
            Vector3d expected = oracle_pixel(sorted, view, u, v);
            for (int c = 0; c < 3; ++c) CHECK(img.at(y, x, c) == doctest::Approx(expected(c)).epsilon(1e-9));
        }
    }
}

TEST_CASE("rotated anisotropic gaussian matches the oracle") {
    CameraView view = CameraView::axis("-y");
    view.width = view.height = 16;
    view.extent = 0.8;
    GaussianScene scene = random_scene(3, 5);
    std::vector<Gaussian3D> sorted = scene.gaussians;
    Vector3d right, up, fwd;
    view.basis(right, up, fwd);
    std::stable_sort(sorted.begin(), sorted.end(), [&](const Gaussian3D& a, const Gaussian3D& b) {
        return fwd.dot(a.center) < fwd.dot(b.center);
    });
    Image img = render(scene, view);
    for (int y = 0; y < 16; y += 2)
        for (int x = 0; x < 16; x += 2) {
            const double u = -0.8 + (x + 0.5) * (1.6 / 16);
            const double v = 0.8 - (y + 0.5) * (1.6 / 16);
            Vector3d expected = oracle_pixel(sorted, view, u, v);
            for (int c = 0; c < 3; ++c)
                CHECK(std::abs(img.at(y, x, c) - expected(c)) < 1e-9);
        }
}

TEST_CASE("pixel values and transmittance stay within bounds") {
    GaussianScene scene = random_scene(7, 32);
    for (const char* axis : {"+x", "-y", "+z"}) {
        CameraView view = CameraView::axis(axis);
        view.width = view.height = 32;
        view.background = Vector3d(0.3, 0.3, 0.3);
        Image img = render(scene, view);
        CHECK(img.pixels.minCoeff() >= 0.0);
        CHECK(img.pixels.maxCoeff() <= 1.0 + 1e-12);
    }
}

TEST_CASE("renderer gradients match finite differences") {
    CameraView view = CameraView::axis("+y");
    view.width = view.height = 12;
    view.extent = 1.0;
    view.background = Vector3d(0.2, 0.1, 0.3);

    for (std::uint64_t seed = 0; seed < 3; ++seed) {
        GaussianScene scene = random_scene(100 + seed, 3);
        // Keep depths distinct so the fixed sort is valid under probing.
        for (std::size_t i = 0; i < scene.gaussians.size(); ++i)
            scene.gaussians[i].center.y() += 0.3 * static_cast<double>(i);

        Matrix packed = scene.to_matrix();
        auto run = [&](ad::Tape& t, const Matrix& m, RenderInputs* inputs_out) {
            RenderInputs in{t.leaf(m.leftCols<3>()), t.leaf(m.middleCols<3>(3)), t.leaf(m.middleCols<4>(6)),
                            t.leaf(m.col(10)), t.leaf(m.rightCols<3>())};
            if (inputs_out != nullptr) *inputs_out = in;
            // Weighted sum spreads the output cotangent unevenly across pixels.
            Matrix weights(view.height * view.width, 3);
            for (int i = 0; i < weights.rows(); ++i)
                for (int c = 0; c < 3; ++c) weights(i, c) = 0.5 + 0.001 * i + 0.1 * c;
            return ad::sum(ad::cmul(render(t, in, view), t.constant(weights)));
        };

        nn::DifferentiableScalarFn fn{
            [&](const Vector& x) {
                Matrix m = Eigen::Map<const Matrix>(x.data(), packed.rows(), packed.cols());
                ad::Tape t;
                return t.val(run(t, m, nullptr))(0, 0);
            },
            [&](const Vector& x) {
                Matrix m = Eigen::Map<const Matrix>(x.data(), packed.rows(), packed.cols());
                ad::Tape t;
                RenderInputs in;
                t.backward(run(t, m, &in));
                Matrix g(m.rows(), m.cols());
                g.leftCols<3>() = t.grad_or_zero(in.centers);
                g.middleCols<3>(3) = t.grad_or_zero(in.log_scales);
                g.middleCols<4>(6) = t.grad_or_zero(in.rotations);
                g.col(10) = t.grad_or_zero(in.opacity_logits);
                g.rightCols<3>() = t.grad_or_zero(in.colors);
                return Vector(Eigen::Map<const Vector>(g.data(), g.size()));
            },
        };
        Vector flat = Eigen::Map<const Vector>(packed.data(), packed.size());
        CHECK(nn::grad_check(fn, flat, 1e-5) < 1e-3);
    }
}


TEST_CASE("ssim identity, symmetry and constant-patch closed form") {
    RngStream s(5, "ssim");
    Image a{16, 16, Matrix::Zero(256, 3)}, b{16, 16, Matrix::Zero(256, 3)};
    for (int p = 0; p < 256; ++p)
        for (int c = 0; c < 3; ++c) {
            a.pixels(p, c) = s.uniform(0, 1);
            b.pixels(p, c) = s.uniform(0, 1);
        }
    CHECK(ssim(a, a) == 1.0);
    CHECK(std::abs(ssim(a, b) - ssim(b, a)) < 1e-12);

    Image ca{16, 16, Matrix::Constant(256, 3, 0.2)}, cb{16, 16, Matrix::Constant(256, 3, 0.8)};
    // Constant patches: variances vanish, so SSIM reduces to the luminance
    // term (2 m1 m2 + C1) / (m1^2 + m2^2 + C1).
    const double c1 = 0.01 * 0.01;
    const double expected = (2.0 * 0.2 * 0.8 + c1) / (0.2 * 0.2 + 0.8 * 0.8 + c1);
    CHECK(ssim(ca, cb) == doctest::Approx(expected).epsilon(1e-12));

    Image tiny{8, 8, Matrix::Zero(64, 3)};
    CHECK_THROWS_AS(ssim(tiny, tiny), DimensionError);
    CHECK_THROWS_AS(ssim(a, tiny), DimensionError);
}

TEST_CASE("ssim gradient matches finite differences") {
    RngStream s(6, "ssim-grad");
    const int hw = 12;
    Matrix a0 = s.uniform_matrix(hw * hw, 3, 0.2, 0.8);
    Matrix b0 = s.uniform_matrix(hw * hw, 3, 0.2, 0.8);
    nn::DifferentiableScalarFn fn{
        [&](const Vector& x) {
            ad::Tape t;
            ad::Var a = t.leaf(Eigen::Map<const Matrix>(x.data(), hw * hw, 3));
            return t.val(ssim(t, a, t.constant(b0), hw, hw))(0, 0);
        },
        [&](const Vector& x) {
            ad::Tape t;
            ad::Var a = t.leaf(Eigen::Map<const Matrix>(x.data(), hw * hw, 3));
            t.backward(ssim(t, a, t.constant(b0), hw, hw));
            Matrix g = t.grad_or_zero(a);
            return Vector(Eigen::Map<const Vector>(g.data(), g.size()));
        },
    };
    Vector flat = Eigen::Map<const Vector>(a0.data(), a0.size());
    CHECK(nn::grad_check(fn, flat, 1e-5) < 1e-5);
}

TEST_CASE("png writer produces a well-formed file") {
    GaussianScene scene = random_scene(11, 8);
    CameraView view = CameraView::axis("+x");
    view.width = 32;
    view.height = 24;
    Image img = render(scene, view);
    const std::string path = (std::filesystem::temp_directory_path() / "render_test.png").string();
    write_png(img, path);
    std::ifstream in(path, std::ios::binary);
    unsigned char sig[8];
    in.read(reinterpret_cast<char*>(sig), 8);
    CHECK(sig[1] == 'P');
    CHECK(sig[2] == 'N');
    CHECK(sig[3] == 'G');
    CHECK(std::filesystem::file_size(path) > 100);
    std::filesystem::remove(path);
}

TEST_CASE("psnr of identical images is infinite and of shifted images finite") {
    GaussianScene scene = random_scene(12, 4);
    CameraView view = CameraView::axis("+z");
    view.width = view.height = 16;
    Image img = render(scene, view);
    CHECK(std::isinf(psnr(img, img)));
    Image moved = img;
    moved.pixels.array() += 0.01;
    CHECK(psnr(img, moved) == doctest::Approx(40.0).epsilon(1e-9));
}
