// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/gaussians.hpp"
#include "cogsplat/tape.hpp"

#include <string>

namespace cogsplat {

/// Orthographic camera looking along +direction. Pixels cover the square
/// [-extent, extent]^2 on the view plane.
struct CameraView {
    Vector3d direction = Vector3d(1, 0, 0);
    double extent = 1.2;
    int width = 64;
    int height = 64;
    Vector3d background = Vector3d::Zero();

    /// Named axis views: "+x", "-x", "+y", "-y", "+z", "-z".
    static CameraView axis(const std::string& name);
    void basis(Vector3d& right, Vector3d& up, Vector3d& fwd) const;
    void validate() const;
};

/// H x W image stored as an (H*W) x 3 matrix with column-major pixel
/// flattening: pixel (y, x) lives at row x*H + y.
struct Image {
    int height = 0;
    int width = 0;
    Matrix pixels;

    double& at(int y, int x, int c) { return pixels(static_cast<Eigen::Index>(x) * height + y, c); }
    double at(int y, int x, int c) const { return pixels(static_cast<Eigen::Index>(x) * height + y, c); }
};

/// Front-to-back alpha compositing of the projected Gaussians. The 2D
/// covariance is the top-left block of the rotated 3D covariance, which is
/// the exact orthographic marginalization. Contributions are cut off outside
/// the 9-sigma ellipse of each Gaussian.
Image render(const GaussianScene& scene, const CameraView& view);

/// Gaussian parameter matrices on a tape, in stored parameterization.
struct RenderInputs {
    ad::Var centers;         // N x 3
    ad::Var log_scales;      // N x 3
    ad::Var rotations;       // N x 4, normalized internally
    ad::Var opacity_logits;  // N x 1
    ad::Var colors;          // N x 3 in [0, 1]
};

/// Differentiable render; the depth order is held fixed during backprop.
ad::Var render(ad::Tape& t, const RenderInputs& in, const CameraView& view);

RenderInputs bind_scene(ad::Tape& t, const GaussianScene& scene);

/// Total number of covariance regularization events since process start.
long render_regularization_count();

double psnr(const Image& a, const Image& b);

/// 8-bit RGB PNG, no gamma handling.
void write_png(const Image& image, const std::string& path);

}  // namespace cogsplat
