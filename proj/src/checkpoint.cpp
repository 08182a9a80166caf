// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/checkpoint.hpp"

#include "cogsplat/binary_io.hpp"

#include <filesystem>
#include <map>

namespace cogsplat {

namespace {
constexpr std::uint32_t kVersion = 1;
}

void save_checkpoint(const ParamRegistry& params, const std::string& path) {
    io::Writer w(path);
    w.magic("CGD1");
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(params.count()));
    for (const ParamRegistry::Entry& e : params.entries()) {
        w.u32(static_cast<std::uint32_t>(e.name.size()));
        w.bytes(e.name.data(), e.name.size());
        w.u32(static_cast<std::uint32_t>(e.tensor->rows()));
        w.u32(static_cast<std::uint32_t>(e.tensor->cols()));
        w.matrix_f32(*e.tensor);
    }
    w.close();
}

void load_checkpoint(const ParamRegistry& params, const std::string& path) {
    io::Reader r(path);
    r.expect_magic("CGD1");
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version), 4);
    const std::uint32_t count = r.u32();
    if (count != params.count())
        throw FormatError(path + ": tensor count " + std::to_string(count) + " does not match model (" +
                              std::to_string(params.count()) + ")",
                          8);

    std::map<std::string, Matrix> loaded;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32();
        std::string name(name_len, '\0');
        r.bytes(name.data(), name_len);
        const std::uint32_t rows = r.u32();
        const std::uint32_t cols = r.u32();
        loaded[name] = r.matrix_f32(rows, cols);
    }

    for (const ParamRegistry::Entry& e : params.entries()) {
        auto it = loaded.find(e.name);
        if (it == loaded.end()) throw FormatError(path + ": missing tensor " + e.name, r.offset());
        if (it->second.rows() != e.tensor->rows() || it->second.cols() != e.tensor->cols())
            throw FormatError(path + ": shape mismatch for tensor " + e.name, r.offset());
        *e.tensor = it->second;
    }
}

bool checkpoint_exists(const std::string& path) { return std::filesystem::exists(path); }

}  // namespace cogsplat
