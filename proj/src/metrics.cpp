// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/metrics.hpp"

#include <algorithm>
#include <cmath>

namespace cogsplat {

PointCloud scene_point_cloud(const GaussianScene& scene) {
    PointCloud cloud;
    for (const Gaussian3D& g : scene.gaussians)
        if (g.opacity() >= 0.5) cloud.push_back(g.center);
    return cloud;
}

namespace {

double squared_dist(const Vector3d& a, const Vector3d& b) {
    const double dx = a.x() - b.x(), dy = a.y() - b.y(), dz = a.z() - b.z();
    return dx * dx + dy * dy + dz * dz;
}

double min_squared_dist(const Vector3d& p, const PointCloud& cloud) {
    double best = squared_dist(p, cloud[0]);
    for (std::size_t i = 1; i < cloud.size(); ++i) best = std::min(best, squared_dist(p, cloud[i]));
    return best;
}

}  // namespace

double chamfer(const PointCloud& x, const PointCloud& y) {
    if (x.empty() || y.empty()) throw DimensionError("chamfer: empty point cloud");
    double sx = 0, sy = 0;
    for (const Vector3d& p : x) sx += min_squared_dist(p, y);
    for (const Vector3d& p : y) sy += min_squared_dist(p, x);
    return 0.5 * (sx / static_cast<double>(x.size()) + sy / static_cast<double>(y.size()));
}

double fscore(const PointCloud& x, const PointCloud& y, double tau) {
    if (x.empty() || y.empty()) throw DimensionError("fscore: empty point cloud");
    if (!(tau > 0)) throw ConfigError("fscore: threshold must be positive");
    const double tau2 = tau * tau;
    double hit_x = 0, hit_y = 0;
    for (const Vector3d& p : x)
        if (min_squared_dist(p, y) <= tau2) hit_x += 1.0;
    for (const Vector3d& p : y)
        if (min_squared_dist(p, x) <= tau2) hit_y += 1.0;
    const double precision = hit_x / static_cast<double>(x.size());
    const double recall = hit_y / static_cast<double>(y.size());
    if (precision + recall == 0.0) return 0.0;
    return 2.0 * precision * recall / (precision + recall);
}

double gaussian_density(const GaussianScene& scene, const Vector3d& at) {
    double density = 0.0;
    for (const Gaussian3D& g : scene.gaussians) {
        const Eigen::Matrix3d cov = g.covariance();
        const Vector3d d = at - g.center;
        density += g.opacity() * std::exp(-0.5 * d.dot(cov.inverse() * d));
    }
    return density;
}

double iou_voxel(const GaussianScene& a, const GaussianScene& b, int resolution, double rho) {
    if (resolution < 4) throw ConfigError("iou_voxel: resolution must be at least 4");
    long both = 0, either = 0;
    const double step = 2.0 / resolution;
    for (int ix = 0; ix < resolution; ++ix) {
        for (int iy = 0; iy < resolution; ++iy) {
            for (int iz = 0; iz < resolution; ++iz) {
                const Vector3d center(-1.0 + (ix + 0.5) * step, -1.0 + (iy + 0.5) * step,
                                      -1.0 + (iz + 0.5) * step);
                const bool in_a = gaussian_density(a, center) > rho;
                const bool in_b = gaussian_density(b, center) > rho;
                both += (in_a && in_b) ? 1 : 0;
                either += (in_a || in_b) ? 1 : 0;
            }
        }
    }
    if (either == 0) return 1.0;
    return static_cast<double>(both) / static_cast<double>(either);
}

double mann_whitney_p(const std::vector<double>& greater, const std::vector<double>& lesser) {
    if (greater.empty() || lesser.empty()) throw ConfigError("mann_whitney_p: empty sample");
    const double n1 = static_cast<double>(greater.size());
    const double n2 = static_cast<double>(lesser.size());
    double u = 0.0;
    for (double g : greater)
        for (double l : lesser) u += g > l ? 1.0 : (g == l ? 0.5 : 0.0);
    const double mean = n1 * n2 / 2.0;
    const double sd = std::sqrt(n1 * n2 * (n1 + n2 + 1.0) / 12.0);
    if (sd == 0.0) return 1.0;
    const double z = (u - mean - 0.5) / sd;  // continuity corrected
    return 0.5 * std::erfc(z / std::sqrt(2.0));
}

}  // namespace cogsplat
