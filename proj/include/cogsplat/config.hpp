// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/diffusion.hpp"
#include "cogsplat/fusion.hpp"
#include "cogsplat/losses.hpp"
#include "cogsplat/render.hpp"
#include "cogsplat/scene_gen.hpp"

#include <string>
#include <vector>

namespace cogsplat {

/// Whole-run configuration. Parsed strictly: unknown keys anywhere are
/// rejected, and every cross-module dimension constraint is validated before
/// any compute starts.
struct RunConfig {
    std::uint64_t seed = 0;

    struct Model {
        int token_dim = 64;
        int sem_grid_x = 8, sem_grid_y = 8;
        int geo_grid_x = 4, geo_grid_y = 4;
        int depth_levels = 4;
        int message_rounds = 1;
        int latent_tokens = 16;
        int latent_dim = 32;
        int n_gauss = 256;
        int encoder_feat_dim = 64;
        int decoder_hidden = 256;
        int denoiser_layers = 4;
        int denoiser_dim = 64;
        int vocab = 8;
    } model;

    struct Schedule {
        int timesteps = 1000;
        double beta_start = 1e-4;
        double beta_end = 0.02;
    } schedule;

    struct Sampler {
        int steps = 50;
    } sampler;

    LossWeights loss;

    struct Train {
        double learning_rate = 1e-5;
        long stage1_iters = 20000;
        long stage2_iters = 30000;
        long stage3_iters = 2000;
        int stage3_ddim_steps = 5;
        long log_every = 100;
        long eval_every = 500;
        double stage1_target_psnr = 0.0;  // 0 disables early stopping
        double stage2_target_ldiff_frac = 0.0;
        double stage2_target_lg = 0.0;
        double stage2_target_acc = 0.0;
    } train;

    struct Render {
        int width = 64;
        int height = 64;
        double extent = 1.2;
        Vector3d background = Vector3d::Zero();
        std::vector<std::string> views = {"+x", "-x", "+y", "-y"};
    } render;

    struct Data {
        int objects = 3;
        int gaussians_per_object = 8;
        double near_margin = 0.25;
        double contact_margin = 0.05;
        double placement_gap = 0.02;
        double min_half_extent = 0.10;
        double max_half_extent = 0.22;
    } data;

    struct Paths {
        std::string run_dir = "runs/default";
    } paths;

    void validate() const;

    // Derived accessors.
    int node_count() const { return model.sem_grid_x * model.sem_grid_y; }
    std::vector<CameraView> camera_views() const;
    SceneGenConfig scene_gen_config() const;
    NoiseSchedule noise_schedule() const { return make_schedule(schedule.timesteps, schedule.beta_start, schedule.beta_end); }

    std::string data_dir() const { return paths.run_dir + "/data"; }
    std::string checkpoint_dir() const { return paths.run_dir + "/ckpt"; }
    std::string output_dir() const { return paths.run_dir + "/out"; }
    std::string manifest_path() const { return data_dir() + "/manifest.json"; }
    std::string stage_checkpoint(int stage) const {
        return checkpoint_dir() + "/stage" + std::to_string(stage) + ".cgd";
    }
    std::string stage_loss_csv(int stage) const {
        return checkpoint_dir() + "/stage" + std::to_string(stage) + "_loss.csv";
    }
};

RunConfig default_config();
RunConfig load_config(const std::string& path);
RunConfig config_from_json_text(const std::string& text);

/// Applies one "dotted.path=value" override; values parse as JSON when
/// possible and as strings otherwise.
void apply_override(RunConfig& config, const std::string& assignment);

}  // namespace cogsplat
