// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/common.hpp"
#include "cogsplat/gaussians.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cogsplat {

enum class Relation : int { none = 0, left_of = 1, above = 2, near_to = 3 };

constexpr int kRelationVocab = 4;

struct SceneObject {
    int class_id = 0;
    Vector3d center = Vector3d::Zero();
    Vector3d half_extent = Vector3d::Zero();
    Vector3d color = Vector3d::Zero();
};

/// Geometry thresholds driving relation derivation and generation.
struct SceneGeometry {
    double contact_margin = 0.05;  // axis gap beyond which left-of / above hold
    double near_margin = 0.25;     // center distance below which near holds
    double min_half_extent = 0.10;
    double max_half_extent = 0.22;
    double placement_gap = 0.02;  // required clearance between bounding boxes
};

/// Ground-truth scene description. Relations are always derived from the
/// object geometry, never set independently.
struct SceneSpec {
    std::vector<SceneObject> objects;
    Eigen::MatrixXi relations;  // ordered pairs, relations(a, b)

    int count() const { return static_cast<int>(objects.size()); }
};

/// Classifies every ordered object pair. Precedence: left-of, above, near.
Eigen::MatrixXi derive_relations(const std::vector<SceneObject>& objects, const SceneGeometry& geom);

struct GroundingLabel {
    std::uint32_t entity = 0;
    std::uint32_t class_id = 0;
};

using GroundingLabels = std::vector<GroundingLabel>;

/// The three cognitive token streams plus grounding supervision for one scene.
struct TokenBundle {
    Matrix t_s;  // n_s x d semantic tokens
    Matrix t_g;  // n_g x d geometric tokens
    Matrix t_l;  // m x d logical tokens
    GroundingLabels labels;

    Eigen::Index dim() const { return t_s.cols(); }
    void validate(int vocab_size) const;
};

/// Fixed random projections standing in for the per-stream encoders. The
/// descriptor layouts are frozen:
///   semantic: class one-hot (8) + color (3)
///   geometric: center (3) + half extent (3)
///   logical: relation one-hot (4) + class one-hots (8 + 8) + global flag (1)
struct ProjectionBank {
    Matrix p_sem;
    Matrix p_geo;
    Matrix p_log;

    static constexpr int kClassVocab = 8;
    static constexpr int kSemDesc = kClassVocab + 3;
    static constexpr int kGeoDesc = 6;
    static constexpr int kLogDesc = kRelationVocab + 2 * kClassVocab + 1;

    static ProjectionBank make(std::uint64_t seed, Eigen::Index token_dim);
    Eigen::Index token_dim() const { return p_sem.cols(); }
};

/// Projects a scene spec into the three token streams. Entries are rounded
/// through f32 so serialized bundles are bit-exact.
TokenBundle synth_tokens(const SceneSpec& spec, const ProjectionBank& bank);

// Bundle container, magic "CGT1": u32 header [d, n_s, n_g, m, K], three f32
// matrices in row-major order, then K pairs of u32 (entity, class).
void save_bundle(const TokenBundle& bundle, const std::string& path);
TokenBundle load_bundle(const std::string& path);

// Scene spec JSON: {objects: [{class, center, half_extent, color}],
// relations: [[i, j, rel]]} with only non-none relations listed.
void save_scene_spec(const SceneSpec& spec, const std::string& path);
SceneSpec load_scene_spec(const std::string& path, const SceneGeometry& geom);

}  // namespace cogsplat
