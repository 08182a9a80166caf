// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/gaussians.hpp"

#include "cogsplat/binary_io.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace cogsplat {

Eigen::Matrix3d Gaussian3D::rotation_matrix() const {
    const double n = rotation.norm();
    if (n == 0.0) throw NumericError("Gaussian3D: zero quaternion");
    const double w = rotation(0) / n, x = rotation(1) / n, y = rotation(2) / n, z = rotation(3) / n;
    Eigen::Matrix3d r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - z * w), 2 * (x * z + y * w),  //
        2 * (x * y + z * w), 1 - 2 * (x * x + z * z), 2 * (y * z - x * w),   //
        2 * (x * z - y * w), 2 * (y * z + x * w), 1 - 2 * (x * x + y * y);
    return r;
}

Eigen::Matrix3d Gaussian3D::covariance() const {
    const Eigen::Matrix3d r = rotation_matrix();
    const Vector3d s2 = scale().array().square();
    return r * s2.asDiagonal() * r.transpose();
}

bool Gaussian3D::valid() const {
    if (!center.allFinite() || !log_scale.allFinite() || !rotation.allFinite() || !color.allFinite() ||
        !std::isfinite(opacity_logit))
        return false;
    if (std::abs(rotation.norm() - 1.0) > 1e-6) return false;
    const double o = opacity();
    if (!(o > 0.0 && o < 1.0)) return false;
    if ((scale().array() <= 0.0).any()) return false;
    if ((color.array() < 0.0).any() || (color.array() > 1.0).any()) return false;
    return true;
}

bool GaussianScene::valid() const {
    for (const Gaussian3D& g : gaussians)
        if (!g.valid()) return false;
    return true;
}

Matrix GaussianScene::to_matrix() const {
    Matrix m(static_cast<Eigen::Index>(gaussians.size()), kParamsPerGaussian);
    for (std::size_t i = 0; i < gaussians.size(); ++i) {
        const Gaussian3D& g = gaussians[i];
        const Eigen::Index r = static_cast<Eigen::Index>(i);
        m.block<1, 3>(r, 0) = g.center.transpose();
        m.block<1, 3>(r, 3) = g.log_scale.transpose();
        m.block<1, 4>(r, 6) = g.rotation.transpose();
        m(r, 10) = g.opacity_logit;
        m.block<1, 3>(r, 11) = g.color.transpose();
    }
    return m;
}

GaussianScene GaussianScene::from_matrix(const Matrix& m) {
    if (m.cols() != kParamsPerGaussian) throw DimensionError("GaussianScene: expected 14 columns");
    GaussianScene scene;
    scene.gaussians.resize(static_cast<std::size_t>(m.rows()));
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        Gaussian3D& g = scene.gaussians[static_cast<std::size_t>(r)];
        g.center = m.block<1, 3>(r, 0).transpose();
        g.log_scale = m.block<1, 3>(r, 3).transpose();
        g.rotation = m.block<1, 4>(r, 6).transpose();
        g.opacity_logit = m(r, 10);
        g.color = m.block<1, 3>(r, 11).transpose();
    }
    return scene;
}

Gaussian3D padding_gaussian() {
    Gaussian3D g;
    g.center.setZero();
    g.log_scale.setConstant(round_f32(std::log(1e-3)));
    g.rotation = Vector4d(1, 0, 0, 0);
    g.opacity_logit = -12.0;
    g.color.setZero();
    return g;
}

void save_scene(const GaussianScene& scene, const std::string& path) {
    io::Writer w(path);
    w.magic("CGS1");
    w.u32(static_cast<std::uint32_t>(scene.size()));
    w.matrix_f32(scene.to_matrix());
    w.close();
}

GaussianScene load_scene(const std::string& path) {
    io::Reader r(path);
    r.expect_magic("CGS1");
    const std::uint32_t count = r.u32();
    Matrix m = r.matrix_f32(static_cast<Eigen::Index>(count), GaussianScene::kParamsPerGaussian);
    return GaussianScene::from_matrix(m);
}

namespace {

const std::array<const char*, 14> kPlyProps = {"x",     "y",     "z",     "scale_0", "scale_1",
                                               "scale_2", "rot_0", "rot_1", "rot_2",   "rot_3",
                                               "opacity", "red",   "green", "blue"};

}  // namespace

void export_ply(const GaussianScene& scene, const std::string& path, bool binary) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open for writing: " + path);
    out << "ply\n";
    out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
    out << "element vertex " << scene.size() << "\n";
    for (const char* p : kPlyProps) out << "property float " << p << "\n";
    out << "end_header\n";

    const Matrix m = scene.to_matrix();
    if (binary) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                const float v = static_cast<float>(m(i, j));
                out.write(reinterpret_cast<const char*>(&v), 4);
            }
    } else {
        char buf[64];
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                // %.9g round-trips binary32 exactly.
                std::snprintf(buf, sizeof buf, "%.9g", static_cast<float>(m(i, j)));
                out << buf << (j + 1 < m.cols() ? " " : "");
            }
            out << "\n";
        }
    }
    out.close();
    if (!out) throw IoError("write failed: " + path);
}

GaussianScene import_ply(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open for reading: " + path);

    std::string line;
    auto next_line = [&](const char* what) {
        if (!std::getline(in, line)) throw FormatError(path + ": unexpected end of header, expected " + what, 0);
        return line;
    };

    if (next_line("ply") != "ply") throw FormatError(path + ": missing ply signature", 0);
    const std::string format = next_line("format");
    bool binary;
    if (format == "format binary_little_endian 1.0")
        binary = true;
    else if (format == "format ascii 1.0")
        binary = false;
    else
        throw FormatError(path + ": unsupported format line \"" + format + "\"", 4);

    std::size_t count = 0;
    {
        std::istringstream is(next_line("element vertex"));
        std::string a, b;
        if (!(is >> a >> b >> count) || a != "element" || b != "vertex")
            throw FormatError(path + ": expected element vertex line", 0);
    }
    for (const char* p : kPlyProps) {
        const std::string expected = std::string("property float ") + p;
        if (next_line(expected.c_str()) != expected)
            throw FormatError(path + ": expected \"" + expected + "\", got \"" + line + "\"", 0);
    }
    if (next_line("end_header") != "end_header") throw FormatError(path + ": missing end_header", 0);

    Matrix m(static_cast<Eigen::Index>(count), GaussianScene::kParamsPerGaussian);
    if (binary) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                float v;
                in.read(reinterpret_cast<char*>(&v), 4);
                if (!in) throw FormatError(path + ": truncated vertex data", 0);
                m(i, j) = static_cast<double>(v);
            }
    } else {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) {
                float v;
                if (!(in >> v)) throw FormatError(path + ": truncated vertex data", 0);
                m(i, j) = static_cast<double>(v);
            }
    }
    return GaussianScene::from_matrix(m);
}

}  // namespace cogsplat
