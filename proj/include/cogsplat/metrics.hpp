// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/gaussians.hpp"

#include <vector>

namespace cogsplat {

using PointCloud = std::vector<Vector3d>;

/// Gaussian centers with decoded opacity >= 0.5; padding stays excluded.
PointCloud scene_point_cloud(const GaussianScene& scene);

/// Symmetric mean of squared nearest-neighbor distances.
double chamfer(const PointCloud& x, const PointCloud& y);

/// Harmonic mean of precision and recall at distance threshold tau.
double fscore(const PointCloud& x, const PointCloud& y, double tau);

/// Occupancy IoU on an r^3 grid over [-1, 1]^3. A voxel is occupied when the
/// opacity-weighted Gaussian density at its center exceeds rho.
double iou_voxel(const GaussianScene& a, const GaussianScene& b, int resolution, double rho = 0.5);

/// Density field sampled by the voxelizer, exposed for oracle tests.
double gaussian_density(const GaussianScene& scene, const Vector3d& at);

/// One-sided Mann-Whitney U test that `greater` stochastically dominates
/// `lesser`; returns the normal-approximation p-value.
double mann_whitney_p(const std::vector<double>& greater, const std::vector<double>& lesser);

}  // namespace cogsplat
