// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/autoencoder.hpp"
#include "cogsplat/config.hpp"
#include "cogsplat/diffusion.hpp"
#include "cogsplat/fusion.hpp"
#include "cogsplat/losses.hpp"

#include <string>
#include <vector>

namespace cogsplat {

/// Every learnable tensor of the system.
struct ModelParams {
    CognitionModel cognition;
    EncoderParams encoder;
    DecoderParams decoder;
    DenoiserParams denoiser;
    ClassifierHead head;

    static ModelParams init(const RunConfig& config);

    /// Full registry in a stable order (checkpoints, determinism checks).
    ParamRegistry registry();
    /// Tensors optimized by each stage: 1 = autoencoder, 2 = cognition +
    /// denoiser + grounding head, 3 = stage 2 plus the decoder.
    ParamRegistry stage_registry(int stage);
};

void register_params(ClassifierHead& head, ParamRegistry& reg);

struct SceneEntry {
    SceneSpec spec;
    TokenBundle bundle;
    GaussianScene scene;
    std::vector<ViewTarget> gt_views;  // filled on demand
    Matrix z0;                         // cached frozen-encoder latent
};

struct Dataset {
    std::vector<SceneEntry> entries;

    std::size_t size() const { return entries.size(); }
};

Dataset load_dataset(const std::string& manifest_path, const RunConfig& config);

/// Renders ground-truth views for every entry (idempotent).
void prepare_gt_views(Dataset& data, const RunConfig& config);
/// Encodes every scene with the frozen encoder (idempotent per call).
void prepare_latents(Dataset& data, const ModelParams& model);

struct StageReport {
    long iterations = 0;
    double seconds = 0;
    double first_window_loss = 0;  // mean total loss over the first window
    double last_window_loss = 0;   // mean total loss over the last window
    double psnr = 0;               // stage 1/3: final train-set PSNR
    double l_diff_first_window = 0;
    double l_diff_last_window = 0;
    double l_g_last_window = 0;
    double grounding_acc = 0;  // stage 2/3: final train-set accuracy
};

StageReport train_stage1(ModelParams& model, Dataset& data, const RunConfig& config,
                         const std::string& loss_csv_path);
StageReport train_stage2(ModelParams& model, Dataset& data, const RunConfig& config,
                         const std::string& loss_csv_path);
StageReport train_stage3(ModelParams& model, Dataset& data, const RunConfig& config,
                         const std::string& loss_csv_path);

/// Mean PSNR of decode(encode(scene)) renders against the ground truth views.
double dataset_psnr(const ModelParams& model, Dataset& data, const RunConfig& config);
/// Mean grounding accuracy over the dataset with the current parameters.
double dataset_grounding_accuracy(const ModelParams& model, const Dataset& data);

}  // namespace cogsplat
