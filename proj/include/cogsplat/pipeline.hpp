// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/metrics.hpp"
#include "cogsplat/training.hpp"

#include <string>
#include <vector>

namespace cogsplat {

/// Writes spec/bundle/gaussians triples for seeds [seed_lo, seed_hi] plus a
/// manifest, all under config.data_dir(). Returns the manifest path.
std::string run_dataset_gen(const RunConfig& config, std::uint64_t seed_lo, std::uint64_t seed_hi,
                            int objects);

/// Runs one training stage. Stages 2 and 3 require the previous stage's
/// checkpoint on disk and fail with a ConfigError naming the missing file.
StageReport run_train(const RunConfig& config, int stage);

struct GeneratedSample {
    std::string ply_path;
    std::vector<std::string> png_paths;
    bool valid = false;
};

/// Samples `count` scenes conditioned on manifest bundles (cycled), decodes
/// them and writes PLY plus one PNG per configured view.
std::vector<GeneratedSample> run_generate(const RunConfig& config, int count,
                                          const std::string& manifest_path,
                                          const std::string& checkpoint_path);

struct EvalReport {
    double chamfer_mean = 0;
    double fscore_mean = 0;
    double iou_mean = 0;
    std::string json_path;
};

EvalReport run_eval(const RunConfig& config, const std::string& manifest_path,
                    const std::string& checkpoint_path);

void run_render(const RunConfig& config, const std::string& scene_path, const std::string& view_name,
                const std::string& out_png);

struct StabilityRow {
    double delta = 0;
    double mean_drift = 0;
};

/// Latent-side stability probe: relative drift of the cognition graph under
/// unit-norm logical-token perturbations scaled to each delta.
std::vector<StabilityRow> run_probe_stability(const RunConfig& config, const std::string& bundle_path,
                                              const std::vector<double>& deltas,
                                              const std::string& checkpoint_path = "");

struct AttentionProbe {
    std::vector<int> token_argmax_node;  // per logical token
    std::vector<int> node_argmax_token;  // per node
    std::vector<int> topk_nodes;         // grounding selection
    std::string dump_path;               // CGG1 binary
    std::string report_path;             // JSON report
};

AttentionProbe run_probe_attention(const RunConfig& config, const std::string& bundle_path,
                                   const std::string& checkpoint_path = "");

/// Debug container, magic "CGG1": u32 [m, d, n], f32 tokens, f32 trace.
void save_cognition_dump(const CognitionGraph& cog, const std::string& path);

}  // namespace cogsplat
