// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/common.hpp"

#include <string>
#include <vector>

namespace cogsplat {

/// One anisotropic 3D Gaussian primitive. Scale is stored in log space and
/// opacity as a logit so every stored real decodes to a valid value.
struct Gaussian3D {
    Vector3d center = Vector3d::Zero();
    Vector3d log_scale = Vector3d::Zero();
    Vector4d rotation = Vector4d(1, 0, 0, 0);  // unit quaternion (w, x, y, z)
    double opacity_logit = 0.0;
    Vector3d color = Vector3d::Zero();  // rgb in [0, 1]

    Vector3d scale() const { return log_scale.array().exp(); }
    double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }
    Eigen::Matrix3d rotation_matrix() const;
    /// R diag(s^2) R^T.
    Eigen::Matrix3d covariance() const;

    bool valid() const;
};

/// Fixed-size set of Gaussians. The count is part of the model configuration;
/// unused slots are padded with near-transparent primitives.
struct GaussianScene {
    std::vector<Gaussian3D> gaussians;

    std::size_t size() const { return gaussians.size(); }
    bool valid() const;

    static constexpr int kParamsPerGaussian = 14;

    /// Packs to an N x 14 matrix: center, log_scale, rotation, opacity_logit, color.
    Matrix to_matrix() const;
    static GaussianScene from_matrix(const Matrix& m);
};

/// Number of trailing padding slots a generator adds to reach a fixed count.
Gaussian3D padding_gaussian();

// Scene container, magic "CGS1": u32 count, then f32 rows in to_matrix order.
void save_scene(const GaussianScene& scene, const std::string& path);
GaussianScene load_scene(const std::string& path);

// PLY with per-vertex float properties
// (x, y, z, scale_0..2, rot_0..3, opacity, red, green, blue).
void export_ply(const GaussianScene& scene, const std::string& path, bool binary = true);
GaussianScene import_ply(const std::string& path);

}  // namespace cogsplat
