// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/common.hpp"

#include <cstring>
#include <fstream>
#include <string>

namespace cogsplat::io {

// Little-endian binary readers/writers with byte-offset tracking so format
// errors can name the exact position. The build targets little-endian hosts;
// values are memcpy'd through fixed-width types.

class Writer {
public:
    explicit Writer(const std::string& path) : out_(path, std::ios::binary) {
        if (!out_) throw IoError("cannot open for writing: " + path);
    }

    void bytes(const void* data, std::size_t n) {
        out_.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
        offset_ += n;
    }
    void u32(std::uint32_t v) { bytes(&v, 4); }
    void f32(float v) { bytes(&v, 4); }
    void magic(const char tag[5]) { bytes(tag, 4); }

    /// Row-major f32 dump of a double matrix.
    void matrix_f32(const Matrix& m) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) f32(static_cast<float>(m(i, j)));
    }

    std::uint64_t offset() const { return offset_; }
    void close() {
        out_.close();
        if (!out_) throw IoError("write failed while closing");
    }

private:
    std::ofstream out_;
    std::uint64_t offset_ = 0;
};

class Reader {
public:
    explicit Reader(const std::string& path) : in_(path, std::ios::binary), path_(path) {
        if (!in_) throw IoError("cannot open for reading: " + path);
    }

    void bytes(void* data, std::size_t n) {
        in_.read(static_cast<char*>(data), static_cast<std::streamsize>(n));
        if (in_.gcount() != static_cast<std::streamsize>(n))
            throw FormatError(path_ + ": truncated payload", offset_);
        offset_ += n;
    }
    std::uint32_t u32() {
        std::uint32_t v;
        bytes(&v, 4);
        return v;
    }
    float f32() {
        float v;
        bytes(&v, 4);
        return v;
    }
    void expect_magic(const char tag[5]) {
        const std::uint64_t at = offset_;
        char got[4];
        bytes(got, 4);
        if (std::memcmp(got, tag, 4) != 0)
            throw FormatError(path_ + ": bad magic, expected \"" + std::string(tag, 4) + "\"", at);
    }

    Matrix matrix_f32(Eigen::Index rows, Eigen::Index cols) {
        Matrix m(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = static_cast<double>(f32());
        return m;
    }

    bool at_eof() {
        in_.peek();
        return in_.eof();
    }
    std::uint64_t offset() const { return offset_; }
    const std::string& path() const { return path_; }

private:
    std::ifstream in_;
    std::string path_;
    std::uint64_t offset_ = 0;
};

}  // namespace cogsplat::io
