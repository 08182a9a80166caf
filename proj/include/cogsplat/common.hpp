// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>

namespace cogsplat {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Eigen::Vector3d;
using Eigen::Vector4d;

/// Base class for all library errors.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

/// Incompatible matrix/vector shapes.
class DimensionError : public Error {
public:
    using Error::Error;
};

/// Non-finite values where finite ones are required.
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed file contents. Carries the byte offset of the problem.
class FormatError : public Error {
public:
    FormatError(const std::string& msg, std::uint64_t offset)
        : Error(msg + " (byte offset " + std::to_string(offset) + ")"), offset_(offset) {}
    std::uint64_t offset() const { return offset_; }

private:
    std::uint64_t offset_;
};

/// Invalid configuration or usage.
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Operation invoked in a state that does not support it.
class StateError : public Error {
public:
    using Error::Error;
};

/// Procedural generation could not satisfy its constraints.
class GenerationError : public Error {
public:
    using Error::Error;
};

/// Filesystem level failure.
class IoError : public Error {
public:
    using Error::Error;
};

inline void require_finite(const Matrix& m, const char* what) {
    if (!m.allFinite()) throw NumericError(std::string(what) + ": non-finite values");
}

inline void require_shape(const Matrix& m, Eigen::Index rows, Eigen::Index cols, const char* what) {
    if (m.rows() != rows || m.cols() != cols)
        throw DimensionError(std::string(what) + ": expected " + std::to_string(rows) + "x" +
                             std::to_string(cols) + ", got " + std::to_string(m.rows()) + "x" +
                             std::to_string(m.cols()));
}

/// Rounds one double through IEEE binary32. The volatile store keeps the
/// narrowing conversion from being folded away at high optimization levels.
inline double round_f32(double x) {
    volatile float f = static_cast<float>(x);
    return static_cast<double>(f);
}

/// Rounds every entry through IEEE binary32. Values produced this way survive
/// f32 serialization bit-exactly.
inline Matrix round_f32(const Matrix& m) {
    Matrix out(m.rows(), m.cols());
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) out(i, j) = round_f32(m(i, j));
    return out;
}

}  // namespace cogsplat
