// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/render.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <memory>
#include <numeric>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace cogsplat {

namespace {

constexpr double kQCut = 81.0;       // 9-sigma ellipse
constexpr double kAlphaMax = 0.999;  // keeps 1/(1-alpha) bounded in backward
constexpr double kCovEps = 1e-8;
constexpr double kCondLimit = 1e8;

std::atomic<long> g_regularized{0};

struct ProjectedGaussian {
    double mu_u = 0, mu_v = 0, depth = 0;
    double ia = 0, ib = 0, ic = 0;  // inverse 2D covariance [ia ib; ib ic]
    double opacity = 0;
    Vector3d color = Vector3d::Zero();
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds, empty if x1 < x0
    Eigen::Matrix3d rot;
    Vector3d s2;       // squared scales
    Eigen::Matrix2d s2d_inv;  // = [ia ib; ib ic]
    Vector4d quat_raw;
    double quat_norm = 1;

    bool covers() const { return x1 >= x0 && y1 >= y0; }
};

struct RenderCache {
    CameraView view;
    Vector3d right, up, fwd;
    Vector u_coords, v_coords;
    std::vector<ProjectedGaussian> gaussians;
    std::vector<int> order;  // depth-ascending indices
};

// Projects all Gaussians and fixes the compositing order.
std::shared_ptr<RenderCache> project_scene(const Matrix& centers, const Matrix& log_scales,
                                           const Matrix& rotations, const Matrix& opacity_logits,
                                           const Matrix& colors, const CameraView& view) {
    view.validate();
    const Eigen::Index n = centers.rows();
    if (log_scales.rows() != n || rotations.rows() != n || opacity_logits.rows() != n || colors.rows() != n)
        throw DimensionError("render: parameter matrices disagree on Gaussian count");
    if (centers.cols() != 3 || log_scales.cols() != 3 || rotations.cols() != 4 || opacity_logits.cols() != 1 ||
        colors.cols() != 3)
        throw DimensionError("render: parameter matrices have wrong widths");

    auto cache = std::make_shared<RenderCache>();
    cache->view = view;
    view.basis(cache->right, cache->up, cache->fwd);
    const int w = view.width, h = view.height;
    const double du = 2.0 * view.extent / w;
    const double dv = 2.0 * view.extent / h;
    cache->u_coords.resize(w);
    for (int x = 0; x < w; ++x) cache->u_coords(x) = -view.extent + (x + 0.5) * du;
    cache->v_coords.resize(h);
    for (int y = 0; y < h; ++y) cache->v_coords(y) = view.extent - (y + 0.5) * dv;

    cache->gaussians.resize(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        ProjectedGaussian& g = cache->gaussians[static_cast<std::size_t>(i)];
        const Vector3d c = centers.row(i).transpose();
        g.mu_u = cache->right.dot(c);
        g.mu_v = cache->up.dot(c);
        g.depth = cache->fwd.dot(c);
        g.opacity = 1.0 / (1.0 + std::exp(-opacity_logits(i, 0)));
        g.color = colors.row(i).transpose();

        g.quat_raw = rotations.row(i).transpose();
        g.quat_norm = g.quat_raw.norm();
        if (g.quat_norm == 0.0) throw NumericError("render: zero rotation quaternion");
        Gaussian3D tmp;
        tmp.rotation = g.quat_raw / g.quat_norm;
        g.rot = tmp.rotation_matrix();
        g.s2 = (2.0 * log_scales.row(i).transpose().array()).exp();

        const Eigen::Matrix3d cov3 = g.rot * g.s2.asDiagonal() * g.rot.transpose();
        Eigen::Matrix<double, 2, 3> m;
        m.row(0) = cache->right.transpose();
        m.row(1) = cache->up.transpose();
        Eigen::Matrix2d s2d = m * cov3 * m.transpose();

        // Regularize near-degenerate footprints.
        const double tr = s2d(0, 0) + s2d(1, 1);
        const double disc = std::sqrt(std::max(0.0, tr * tr - 4.0 * s2d.determinant()));
        const double lmin = 0.5 * (tr - disc), lmax = 0.5 * (tr + disc);
        if (!(lmin > 0.0) || lmax / lmin > kCondLimit) {
            s2d(0, 0) += kCovEps;
            s2d(1, 1) += kCovEps;
            g_regularized.fetch_add(1, std::memory_order_relaxed);
        }

        const double det = s2d.determinant();
        if (!(det > 0.0) || !std::isfinite(det)) throw NumericError("render: singular 2D covariance");
        g.s2d_inv << s2d(1, 1) / det, -s2d(0, 1) / det, -s2d(0, 1) / det, s2d(0, 0) / det;
        g.ia = g.s2d_inv(0, 0);
        g.ib = g.s2d_inv(0, 1);
        g.ic = g.s2d_inv(1, 1);

        // Bounding box of the 9-sigma ellipse in pixel indices.
        const double ru = 9.0 * std::sqrt(s2d(0, 0));
        const double rv = 9.0 * std::sqrt(s2d(1, 1));
        g.x0 = std::max(0, static_cast<int>(std::ceil((g.mu_u - ru + view.extent) / du - 0.5)));
        g.x1 = std::min(w - 1, static_cast<int>(std::floor((g.mu_u + ru + view.extent) / du - 0.5)));
        // v axis is flipped: v = extent - (y + 0.5) dv.
        g.y0 = std::max(0, static_cast<int>(std::ceil((view.extent - (g.mu_v + rv)) / dv - 0.5)));
        g.y1 = std::min(h - 1, static_cast<int>(std::floor((view.extent - (g.mu_v - rv)) / dv - 0.5)));
    }

    cache->order.resize(static_cast<std::size_t>(n));
    std::iota(cache->order.begin(), cache->order.end(), 0);
    std::stable_sort(cache->order.begin(), cache->order.end(), [&](int a, int b) {
        return cache->gaussians[static_cast<std::size_t>(a)].depth <
               cache->gaussians[static_cast<std::size_t>(b)].depth;
    });
    return cache;
}

// Column-block partition used by both passes; results are accumulated per
// block and reduced in block order, so the output does not depend on the
// thread schedule.
struct ColumnBlock {
    int x0, x1;  // inclusive
};

std::vector<ColumnBlock> make_blocks(int width) {
    constexpr int kBlock = 8;
    std::vector<ColumnBlock> blocks;
    for (int x = 0; x < width; x += kBlock) blocks.push_back({x, std::min(width - 1, x + kBlock - 1)});
    return blocks;
}

// Per-thread scratch reused across columns; head(rows) views avoid heap
// traffic in the inner loops.
struct BlockScratch {
    Eigen::ArrayXd q, alpha, work;

    explicit BlockScratch(int height) : q(height), alpha(height), work(height) {}
};

// alpha = min(opacity * exp(-q/2), alpha_max) inside the cutoff, else 0.
inline void alpha_from_q(const ProjectedGaussian& g, int rows, BlockScratch& s) {
    auto q = s.q.head(rows);
    auto alpha = s.alpha.head(rows);
    alpha = (-0.5 * q).exp() * g.opacity;
    alpha = (q <= kQCut).select(alpha.min(kAlphaMax), 0.0);
}

inline void quad_form(const RenderCache& cache, const ProjectedGaussian& g, int x, int rows,
                      BlockScratch& s) {
    const double du = cache.u_coords(x) - g.mu_u;
    auto dv = s.work.head(rows);
    dv = cache.v_coords.segment(g.y0, rows).array() - g.mu_v;
    s.q.head(rows) = g.ia * du * du + 2.0 * g.ib * du * dv + g.ic * dv.square();
}

// Forward compositing over one column block. C channels and T are H x W.
void composite_block(const RenderCache& cache, const ColumnBlock& blk, Matrix C[3], Matrix& T) {
    BlockScratch s(cache.view.height);
    for (int idx : cache.order) {
        const ProjectedGaussian& g = cache.gaussians[static_cast<std::size_t>(idx)];
        if (!g.covers()) continue;
        const int bx0 = std::max(g.x0, blk.x0), bx1 = std::min(g.x1, blk.x1);
        if (bx0 > bx1) continue;
        const int rows = g.y1 - g.y0 + 1;
        for (int x = bx0; x <= bx1; ++x) {
            quad_form(cache, g, x, rows, s);
            alpha_from_q(g, rows, s);
            auto alpha = s.alpha.head(rows);
            auto t_seg = T.col(x).segment(g.y0, rows).array();
            for (int c = 0; c < 3; ++c)
                C[c].col(x).segment(g.y0, rows).array() += g.color(c) * alpha * t_seg;
            t_seg *= (1.0 - alpha);
        }
    }
    for (int x = blk.x0; x <= blk.x1; ++x)
        for (int c = 0; c < 3; ++c)
            C[c].col(x).array() += cache.view.background(c) * T.col(x).array();
}

Matrix flatten_planes(const Matrix C[3], int h, int w) {
    Matrix out(static_cast<Eigen::Index>(h) * w, 3);
    for (int c = 0; c < 3; ++c)
        out.col(c) = Eigen::Map<const Vector>(C[c].data(), static_cast<Eigen::Index>(h) * w);
    return out;
}

Matrix forward_image(const RenderCache& cache) {
    const int h = cache.view.height, w = cache.view.width;
    Matrix C[3] = {Matrix::Zero(h, w), Matrix::Zero(h, w), Matrix::Zero(h, w)};
    Matrix T = Matrix::Ones(h, w);
    const std::vector<ColumnBlock> blocks = make_blocks(w);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t b = 0; b < blocks.size(); ++b) composite_block(cache, blocks[b], C, T);
    return flatten_planes(C, h, w);
}

// Per-gaussian gradient accumulators for one block.
struct BlockGrads {
    Vector g_mu_u, g_mu_v, g_ia, g_ib, g_ic, g_opacity;
    Matrix g_color;

    explicit BlockGrads(Eigen::Index n)
        : g_mu_u(Vector::Zero(n)),
          g_mu_v(Vector::Zero(n)),
          g_ia(Vector::Zero(n)),
          g_ib(Vector::Zero(n)),
          g_ic(Vector::Zero(n)),
          g_opacity(Vector::Zero(n)),
          g_color(Matrix::Zero(n, 3)) {}

    void add(const BlockGrads& o) {
        g_mu_u += o.g_mu_u;
        g_mu_v += o.g_mu_v;
        g_ia += o.g_ia;
        g_ib += o.g_ib;
        g_ic += o.g_ic;
        g_opacity += o.g_opacity;
        g_color += o.g_color;
    }
};

// Reverse pass over one column block. `image` is the forward output, used for
// the suffix identity sum_{k>i} c_k a_k T_k + bg T_fin = C - prefix_i.
void backward_block(const RenderCache& cache, const ColumnBlock& blk, const Matrix& image,
                    const Matrix& grad_out, BlockGrads& grads) {
    const int h = cache.view.height;
    const int cols = blk.x1 - blk.x0 + 1;

    Matrix T = Matrix::Ones(h, cols);
    Matrix A[3] = {Matrix::Zero(h, cols), Matrix::Zero(h, cols), Matrix::Zero(h, cols)};

    // Scratch reused across the whole block to keep the inner loops free of
    // heap allocation.
    Eigen::ArrayXd dv(h), q(h), gexp(h), alpha(h), open(h), t_before(h), g_alpha(h), contrib(h), g_q(h);

    for (int idx : cache.order) {
        const ProjectedGaussian& g = cache.gaussians[static_cast<std::size_t>(idx)];
        if (!g.covers()) continue;
        const int bx0 = std::max(g.x0, blk.x0), bx1 = std::min(g.x1, blk.x1);
        if (bx0 > bx1) continue;
        const int rows = g.y1 - g.y0 + 1;
        auto dvr = dv.head(rows);
        auto qr = q.head(rows);
        auto gexpr = gexp.head(rows);
        auto alphar = alpha.head(rows);
        auto openr = open.head(rows);
        auto tbr = t_before.head(rows);
        auto gar = g_alpha.head(rows);
        auto cr = contrib.head(rows);
        auto gqr = g_q.head(rows);
        for (int x = bx0; x <= bx1; ++x) {
            const int bc = x - blk.x0;
            const double du = cache.u_coords(x) - g.mu_u;
            dvr = cache.v_coords.segment(g.y0, rows).array() - g.mu_v;
            qr = g.ia * du * du + 2.0 * g.ib * du * dvr + g.ic * dvr.square();
            gexpr = (qr <= kQCut).select((-0.5 * qr).exp(), 0.0);
            openr = (g.opacity * gexpr < kAlphaMax).cast<double>();
            alphar = (g.opacity * gexpr).min(kAlphaMax);

            tbr = T.col(bc).segment(g.y0, rows).array();

            // dL/dalpha via the suffix sums, and color gradients.
            gar.setZero();
            for (int c = 0; c < 3; ++c) {
                auto go = Eigen::Map<const Matrix>(grad_out.col(c).data(), h, cache.view.width)
                              .col(x)
                              .segment(g.y0, rows)
                              .array();
                auto img = Eigen::Map<const Matrix>(image.col(c).data(), h, cache.view.width)
                               .col(x)
                               .segment(g.y0, rows)
                               .array();
                auto a_seg = A[c].col(bc).segment(g.y0, rows).array();
                cr = g.color(c) * alphar * tbr;
                // suffix term: img - (a_seg + contrib)
                gar += go * (g.color(c) * tbr - (img - (a_seg + cr)) / (1.0 - alphar));
                grads.g_color(idx, c) += (go * alphar * tbr).sum();
                a_seg += cr;
            }
            T.col(bc).segment(g.y0, rows).array() *= (1.0 - alphar);

            // Through the clamp: no gradient where alpha saturated.
            grads.g_opacity(idx) += (gar * openr * gexpr).sum();
            gqr = gar * openr * alphar * (-0.5);
            // g_ib holds the cotangent of ONE off-diagonal entry of the
            // inverse covariance; the assembly below mirrors it.
            grads.g_ia(idx) += (gqr * du * du).sum();
            grads.g_ib(idx) += (gqr * du * dvr).sum();
            grads.g_ic(idx) += (gqr * dvr.square()).sum();
            grads.g_mu_u(idx) += (gqr * (-2.0 * g.ia * du - 2.0 * g.ib * dvr)).sum();
            grads.g_mu_v(idx) += (gqr * (-2.0 * g.ib * du - 2.0 * g.ic * dvr)).sum();
        }
    }
}

struct RenderGrads {
    Matrix centers, log_scales, rotations, opacity_logits, colors;
};

// Chains the per-gaussian screen-space gradients back to the stored
// parameterization.
RenderGrads chain_to_parameters(const RenderCache& cache, const BlockGrads& acc) {
    const Eigen::Index n = static_cast<Eigen::Index>(cache.gaussians.size());
    RenderGrads out{Matrix::Zero(n, 3), Matrix::Zero(n, 3), Matrix::Zero(n, 4), Matrix::Zero(n, 1),
                    Matrix::Zero(n, 3)};
    Eigen::Matrix<double, 2, 3> m;
    m.row(0) = cache.right.transpose();
    m.row(1) = cache.up.transpose();

    for (Eigen::Index i = 0; i < n; ++i) {
        const ProjectedGaussian& g = cache.gaussians[static_cast<std::size_t>(i)];
        out.centers.row(i) = (acc.g_mu_u(i) * cache.right + acc.g_mu_v(i) * cache.up).transpose();
        out.colors.row(i) = acc.g_color.row(i);
        out.opacity_logits(i, 0) = acc.g_opacity(i) * g.opacity * (1.0 - g.opacity);

        // d(inv S) -> dS = -S^-T G S^-T with S symmetric.
        Eigen::Matrix2d g_inv;
        g_inv << acc.g_ia(i), acc.g_ib(i), acc.g_ib(i), acc.g_ic(i);
        Eigen::Matrix2d g_s2d = -g.s2d_inv * g_inv * g.s2d_inv;
        // S2d = M Cov3 M^T.
        Eigen::Matrix3d g_cov3 = m.transpose() * g_s2d * m;
        // Cov3 = R D R^T with D = diag(s^2).
        Eigen::Matrix3d sym = g_cov3 + g_cov3.transpose();
        Eigen::Matrix3d g_rot = sym * g.rot * g.s2.asDiagonal();
        Vector3d g_d = (g.rot.transpose() * g_cov3 * g.rot).diagonal();
        out.log_scales.row(i) = (2.0 * g_d.array() * g.s2.array()).transpose();

        // R(q_normalized) -> raw quaternion.
        const Vector4d qn = g.quat_raw / g.quat_norm;
        const double w = qn(0), x = qn(1), y = qn(2), z = qn(3);
        Eigen::Matrix3d dw, dx, dy, dz;
        dw << 0, -2 * z, 2 * y, 2 * z, 0, -2 * x, -2 * y, 2 * x, 0;
        dx << 0, 2 * y, 2 * z, 2 * y, -4 * x, -2 * w, 2 * z, 2 * w, -4 * x;
        dy << -4 * y, 2 * x, 2 * w, 2 * x, 0, 2 * z, -2 * w, 2 * z, -4 * y;
        dz << -4 * z, -2 * w, 2 * x, 2 * w, -4 * z, 2 * y, 2 * x, 2 * y, 0;
        Vector4d g_qn(g_rot.cwiseProduct(dw).sum(), g_rot.cwiseProduct(dx).sum(),
                      g_rot.cwiseProduct(dy).sum(), g_rot.cwiseProduct(dz).sum());
        out.rotations.row(i) = ((g_qn - qn * qn.dot(g_qn)) / g.quat_norm).transpose();
    }
    return out;
}

RenderGrads backward_image(const RenderCache& cache, const Matrix& image, const Matrix& grad_out) {
    const std::vector<ColumnBlock> blocks = make_blocks(cache.view.width);
    std::vector<BlockGrads> per_block(blocks.size(), BlockGrads(static_cast<Eigen::Index>(cache.gaussians.size())));
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic)
#endif
    for (std::size_t b = 0; b < blocks.size(); ++b)
        backward_block(cache, blocks[b], image, grad_out, per_block[b]);

    BlockGrads total(static_cast<Eigen::Index>(cache.gaussians.size()));
    for (const BlockGrads& bg : per_block) total.add(bg);
    return chain_to_parameters(cache, total);
}

}  // namespace

CameraView CameraView::axis(const std::string& name) {
    CameraView v;
    if (name == "+x")
        v.direction = Vector3d(1, 0, 0);
    else if (name == "-x")
        v.direction = Vector3d(-1, 0, 0);
    else if (name == "+y")
        v.direction = Vector3d(0, 1, 0);
    else if (name == "-y")
        v.direction = Vector3d(0, -1, 0);
    else if (name == "+z")
        v.direction = Vector3d(0, 0, 1);
    else if (name == "-z")
        v.direction = Vector3d(0, 0, -1);
    else
        throw ConfigError("CameraView: unknown axis name \"" + name + "\"");
    return v;
}

void CameraView::basis(Vector3d& right, Vector3d& up, Vector3d& fwd) const {
    fwd = direction.normalized();
    const Vector3d pole = std::abs(fwd.z()) < 0.99 ? Vector3d(0, 0, 1) : Vector3d(1, 0, 0);
    right = pole.cross(fwd).normalized();
    up = fwd.cross(right);
}

void CameraView::validate() const {
    if (width < 8 || height < 8) throw ConfigError("CameraView: resolution must be at least 8x8");
    if (!(extent > 0)) throw ConfigError("CameraView: extent must be positive");
    if (direction.norm() == 0) throw ConfigError("CameraView: zero view direction");
}

Image render(const GaussianScene& scene, const CameraView& view) {
    const Matrix m = scene.to_matrix();
    auto cache = project_scene(m.leftCols<3>(), m.middleCols<3>(3), m.middleCols<4>(6), m.col(10),
                               m.rightCols<3>(), view);
    Image img;
    img.height = view.height;
    img.width = view.width;
    img.pixels = forward_image(*cache);
    return img;
}

ad::Var render(ad::Tape& t, const RenderInputs& in, const CameraView& view) {
    auto cache = project_scene(t.val(in.centers), t.val(in.log_scales), t.val(in.rotations),
                               t.val(in.opacity_logits), t.val(in.colors), view);
    Matrix image = forward_image(*cache);
    const int ic = in.centers.id, il = in.log_scales.id, ir = in.rotations.id, io = in.opacity_logits.id,
              icol = in.colors.id;
    const int self = static_cast<int>(t.size());
    return t.node(std::move(image), [cache, ic, il, ir, io, icol, self](ad::Tape& t, const Matrix& g) {
        RenderGrads grads = backward_image(*cache, t.val(self), g);
        t.accum(ic, grads.centers);
        t.accum(il, grads.log_scales);
        t.accum(ir, grads.rotations);
        t.accum(io, grads.opacity_logits);
        t.accum(icol, grads.colors);
    });
}

RenderInputs bind_scene(ad::Tape& t, const GaussianScene& scene) {
    const Matrix m = scene.to_matrix();
    return RenderInputs{t.leaf(m.leftCols<3>()), t.leaf(m.middleCols<3>(3)), t.leaf(m.middleCols<4>(6)),
                        t.leaf(m.col(10)), t.leaf(m.rightCols<3>())};
}

long render_regularization_count() { return g_regularized.load(std::memory_order_relaxed); }

double psnr(const Image& a, const Image& b) {
    if (a.pixels.rows() != b.pixels.rows()) throw DimensionError("psnr: resolution mismatch");
    const double mse = (a.pixels - b.pixels).array().square().mean();
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

}  // namespace cogsplat
