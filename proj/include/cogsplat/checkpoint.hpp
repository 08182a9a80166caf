// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/adamw.hpp"

#include <string>

namespace cogsplat {

// Checkpoint container, magic "CGD1": u32 version, u32 tensor count, then per
// tensor a name (u32 length + bytes), u32 rows, u32 cols and row-major f32
// data. Tensors are stored in registry order; loading matches by name and
// requires an exact one-to-one correspondence.

void save_checkpoint(const ParamRegistry& params, const std::string& path);
void load_checkpoint(const ParamRegistry& params, const std::string& path);
bool checkpoint_exists(const std::string& path);

}  // namespace cogsplat
