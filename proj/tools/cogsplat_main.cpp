// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/pipeline.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <string>
#include <vector>

namespace {

using namespace cogsplat;

// Exit codes: 0 success, 1 runtime/numeric failure, 2 usage/config failure.
constexpr int kRuntimeFailure = 1;
constexpr int kUsageFailure = 2;

struct SeedRange {
    std::uint64_t lo = 0, hi = 0;
};

SeedRange parse_seed_range(const std::string& text) {
    const std::size_t dots = text.find("..");
    SeedRange r;
    try {
        if (dots == std::string::npos) {
            r.lo = r.hi = std::stoull(text);
        } else {
            r.lo = std::stoull(text.substr(0, dots));
            r.hi = std::stoull(text.substr(dots + 2));
        }
    } catch (const std::exception&) {
        throw ConfigError("invalid seed range \"" + text + "\", expected A or A..B");
    }
    if (r.hi < r.lo) throw ConfigError("invalid seed range \"" + text + "\": end before start");
    return r;
}

int run(int argc, char** argv) {
    CLI::App app{"cognition-graph conditioned 3D Gaussian scene generation"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON run configuration (defaults used when omitted)");
    app.add_option("--set", overrides, "override a config key, e.g. --set model.token_dim=32")
        ->take_all();

    std::string seeds_text = "0..7";
    int objects = 0;
    CLI::App* dataset = app.add_subcommand("dataset-gen", "generate scenes, token bundles and a manifest");
    dataset->add_option("--seeds", seeds_text, "seed range A..B (inclusive)");
    dataset->add_option("--objects", objects, "objects per scene (defaults to config data.objects)");

    int stage = 1;
    CLI::App* train = app.add_subcommand("train", "run one training stage");
    train->add_option("--stage", stage, "training stage 1, 2 or 3")->required();

    int count = 1;
    std::string manifest_arg, checkpoint_arg;
    CLI::App* generate = app.add_subcommand("generate", "sample scenes conditioned on held-out bundles");
    generate->add_option("--count", count, "number of samples");
    generate->add_option("--manifest", manifest_arg, "manifest of conditioning bundles");
    generate->add_option("--checkpoint", checkpoint_arg, "model checkpoint (defaults to stage 3)");

    std::string eval_manifest, eval_checkpoint;
    CLI::App* eval_cmd = app.add_subcommand("eval", "metrics of generated scenes against ground truth");
    eval_cmd->add_option("--manifest", eval_manifest, "evaluation manifest")->required();
    eval_cmd->add_option("--checkpoint", eval_checkpoint, "model checkpoint")->required();

    std::string scene_path, view_name = "+x", out_png;
    CLI::App* render_cmd = app.add_subcommand("render", "render a stored scene to PNG");
    render_cmd->add_option("--scene", scene_path, "scene file (.cgs or .ply)")->required();
    render_cmd->add_option("--view", view_name, "axis view, one of +x -x +y -y +z -z");
    render_cmd->add_option("--out", out_png, "output PNG path");

    std::string bundle_path, probe_checkpoint;
    std::vector<double> deltas{1e-3, 1e-2, 1e-1};
    CLI::App* stability = app.add_subcommand("probe-stability", "logical-token perturbation drift table");
    stability->add_option("--bundle", bundle_path, "token bundle file")->required();
    stability->add_option("--deltas", deltas, "perturbation norms");
    stability->add_option("--checkpoint", probe_checkpoint, "optional model checkpoint");

    std::string attn_bundle, attn_checkpoint;
    CLI::App* attention = app.add_subcommand("probe-attention", "attention trace dump and argmax report");
    attention->add_option("--bundle", attn_bundle, "token bundle file")->required();
    attention->add_option("--checkpoint", attn_checkpoint, "optional model checkpoint");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kUsageFailure;
    }

    RunConfig config = config_path.empty() ? default_config() : load_config(config_path);
    for (const std::string& o : overrides) apply_override(config, o);
    config.validate();

    if (dataset->parsed()) {
        const SeedRange seeds = parse_seed_range(seeds_text);
        if (objects > 0) apply_override(config, "data.objects=" + std::to_string(objects));
        const std::string manifest = run_dataset_gen(config, seeds.lo, seeds.hi, config.data.objects);
        std::printf("dataset: %llu scene(s) -> %s\n",
                    static_cast<unsigned long long>(seeds.hi - seeds.lo + 1), manifest.c_str());
        return 0;
    }
    if (train->parsed()) {
        const StageReport r = run_train(config, stage);
        std::printf("stage %d: %ld iterations in %.1fs, loss %.6g -> %.6g", stage, r.iterations, r.seconds,
                    r.first_window_loss, r.last_window_loss);
        if (stage == 1) std::printf(", psnr %.2f dB", r.psnr);
        if (stage >= 2) std::printf(", grounding acc %.3f", r.grounding_acc);
        std::printf("\n  checkpoint: %s\n  loss log:   %s\n", config.stage_checkpoint(stage).c_str(),
                    config.stage_loss_csv(stage).c_str());
        if (render_regularization_count() > 0)
            std::printf("  note: %ld covariance regularization events\n", render_regularization_count());
        return 0;
    }
    if (generate->parsed()) {
        const std::string manifest = manifest_arg.empty() ? config.manifest_path() : manifest_arg;
        const std::string ckpt = checkpoint_arg.empty() ? config.stage_checkpoint(3) : checkpoint_arg;
        const auto samples = run_generate(config, count, manifest, ckpt);
        int valid = 0;
        for (const GeneratedSample& s : samples) valid += s.valid ? 1 : 0;
        std::printf("generated %zu sample(s), %d valid, under %s\n", samples.size(), valid,
                    config.output_dir().c_str());
        return 0;
    }
    if (eval_cmd->parsed()) {
        const EvalReport r = run_eval(config, eval_manifest, eval_checkpoint);
        std::printf("eval: chamfer %.6g, fscore %.4f, iou %.4f\n  report: %s\n", r.chamfer_mean,
                    r.fscore_mean, r.iou_mean, r.json_path.c_str());
        return 0;
    }
    if (render_cmd->parsed()) {
        const std::string out = out_png.empty() ? scene_path + "." + view_name + ".png" : out_png;
        run_render(config, scene_path, view_name, out);
        std::printf("rendered %s -> %s\n", scene_path.c_str(), out.c_str());
        return 0;
    }
    if (stability->parsed()) {
        const auto rows = run_probe_stability(config, bundle_path, deltas, probe_checkpoint);
        std::printf("%12s %16s\n", "delta", "mean drift");
        for (const StabilityRow& r : rows) std::printf("%12g %16.8g\n", r.delta, r.mean_drift);
        return 0;
    }
    if (attention->parsed()) {
        const AttentionProbe p = run_probe_attention(config, attn_bundle, attn_checkpoint);
        std::printf("attention probe: %zu logical tokens, %zu nodes\n  dump:   %s\n  report: %s\n",
                    p.token_argmax_node.size(), p.node_argmax_token.size(), p.dump_path.c_str(),
                    p.report_path.c_str());
        return 0;
    }
    return kUsageFailure;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const cogsplat::ConfigError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kUsageFailure;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kRuntimeFailure;
    }
}
