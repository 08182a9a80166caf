// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/scene_gen.hpp"

#include "cogsplat/rng.hpp"

#include <cmath>
#include <string>

namespace cogsplat {

namespace {

bool boxes_overlap(const SceneObject& a, const SceneObject& b, double gap) {
    for (int k = 0; k < 3; ++k) {
        const double dist = std::abs(a.center(k) - b.center(k));
        if (dist >= a.half_extent(k) + b.half_extent(k) + gap) return false;
    }
    return true;
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

GeneratedScene gen_scene(std::uint64_t seed, int num_objects, const SceneGenConfig& config) {
    if (num_objects < 1 || num_objects > 16)
        throw ConfigError("gen_scene: num_objects must lie in [1, 16], got " + std::to_string(num_objects));
    if (config.gaussians_per_object * num_objects > config.n_gauss)
        throw ConfigError("gen_scene: n_gauss too small for the requested objects");

    RngStream rng(seed, "dataset.scene");
    const SceneGeometry& geom = config.geometry;

    GeneratedScene out;
    for (int i = 0; i < num_objects; ++i) {
        SceneObject obj;
        obj.class_id = rng.uniform_int(config.class_vocab);
        for (int k = 0; k < 3; ++k) obj.half_extent(k) = rng.uniform(geom.min_half_extent, geom.max_half_extent);
        for (int k = 0; k < 3; ++k) obj.color(k) = rng.uniform(0.15, 0.95);

        bool placed = false;
        for (int attempt = 0; attempt < config.max_placement_attempts; ++attempt) {
            for (int k = 0; k < 3; ++k)
                obj.center(k) = rng.uniform(-1.0 + obj.half_extent(k), 1.0 - obj.half_extent(k));
            bool overlap = false;
            for (const SceneObject& other : out.spec.objects)
                overlap = overlap || boxes_overlap(obj, other, geom.placement_gap);
            if (!overlap) {
                placed = true;
                break;
            }
        }
        if (!placed)
            throw GenerationError("gen_scene: overlap resolution failed after " +
                                  std::to_string(config.max_placement_attempts) + " rejection samples");

        obj.center = round_f32(obj.center);
        obj.half_extent = round_f32(obj.half_extent);
        obj.color = round_f32(obj.color);
        out.spec.objects.push_back(obj);
    }
    out.spec.relations = derive_relations(out.spec.objects, geom);

    for (const SceneObject& obj : out.spec.objects) {
        for (int g = 0; g < config.gaussians_per_object; ++g) {
            Gaussian3D gs;
            for (int k = 0; k < 3; ++k) {
                gs.center(k) = obj.center(k) + rng.uniform(-0.7, 0.7) * obj.half_extent(k);
                gs.log_scale(k) = std::log(obj.half_extent(k) * rng.uniform(0.30, 0.50));
                gs.color(k) = std::min(1.0, std::max(0.0, obj.color(k) + rng.uniform(-0.05, 0.05)));
            }
            gs.rotation = Vector4d(1, 0, 0, 0);
            gs.opacity_logit = logit(rng.uniform(0.75, 0.90));
            gs.center = round_f32(gs.center);
            gs.log_scale = round_f32(gs.log_scale);
            gs.color = round_f32(gs.color);
            gs.opacity_logit = round_f32(gs.opacity_logit);
            out.scene.gaussians.push_back(gs);
        }
    }
    while (static_cast<int>(out.scene.gaussians.size()) < config.n_gauss)
        out.scene.gaussians.push_back(padding_gaussian());

    for (int i = 0; i < num_objects; ++i)
        out.labels.push_back(GroundingLabel{
            static_cast<std::uint32_t>(i),
            static_cast<std::uint32_t>(out.spec.objects[static_cast<std::size_t>(i)].class_id)});
    return out;
}

}  // namespace cogsplat
