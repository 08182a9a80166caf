// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/gaussians.hpp"
#include "cogsplat/tokens.hpp"

namespace cogsplat {

struct SceneGenConfig {
    SceneGeometry geometry;
    int gaussians_per_object = 8;
    int n_gauss = 256;  // fixed scene size after padding
    int class_vocab = ProjectionBank::kClassVocab;
    int max_placement_attempts = 100;
};

struct GeneratedScene {
    SceneSpec spec;
    GaussianScene scene;
    GroundingLabels labels;
};

/// Deterministic procedural scene: rejection-placed axis-aligned boxes inside
/// the unit cube, each realized as a handful of axis-aligned Gaussian blobs,
/// with relations derived from the final geometry. All emitted reals are
/// f32-representable.
GeneratedScene gen_scene(std::uint64_t seed, int num_objects, const SceneGenConfig& config = {});

}  // namespace cogsplat
