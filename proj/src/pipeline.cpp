// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/pipeline.hpp"

#include "cogsplat/binary_io.hpp"
#include "cogsplat/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>

namespace cogsplat {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

void ensure_dir(const std::string& dir) { fs::create_directories(dir); }

ModelParams load_model(const RunConfig& config, const std::string& checkpoint_path) {
    ModelParams model = ModelParams::init(config);
    if (!checkpoint_path.empty()) {
        if (!checkpoint_exists(checkpoint_path))
            throw ConfigError("missing checkpoint: " + checkpoint_path);
        ParamRegistry reg = model.registry();
        load_checkpoint(reg, checkpoint_path);
    }
    return model;
}

GaussianScene sample_scene(const RunConfig& config, const ModelParams& model, const SceneEntry& entry,
                           const Matrix& z_prior, const NoiseSchedule& sched) {
    CognitionGraph cog = cognition_forward(entry.bundle, model.cognition);
    Matrix z0 = ddim_sample(z_prior, sched, config.sampler.steps, [&](const Matrix& z, int t) {
        return predict_noise(z, t, cog.tokens, model.denoiser);
    });
    return decode_latent(z0, model.decoder);
}

}  // namespace

std::string run_dataset_gen(const RunConfig& config, std::uint64_t seed_lo, std::uint64_t seed_hi,
                            int objects) {
    if (seed_hi < seed_lo) throw ConfigError("dataset-gen: seed range is empty");
    ensure_dir(config.data_dir());
    const SceneGenConfig gen_cfg = config.scene_gen_config();
    const ProjectionBank bank = ProjectionBank::make(config.seed, config.model.token_dim);

    json manifest = json::array();
    for (std::uint64_t seed = seed_lo; seed <= seed_hi; ++seed) {
        GeneratedScene g = gen_scene(seed, objects, gen_cfg);
        TokenBundle bundle = synth_tokens(g.spec, bank);

        // Relative names keep the tree relocatable and byte-stable across
        // output directories.
        const std::string name = "scene_" + std::to_string(seed);
        const std::string stem = config.data_dir() + "/" + name;
        save_scene_spec(g.spec, stem + ".json");
        save_bundle(bundle, stem + ".cgt");
        save_scene(g.scene, stem + ".cgs");
        manifest.push_back({{"spec", name + ".json"}, {"bundle", name + ".cgt"}, {"gaussians", name + ".cgs"}});
    }
    std::ofstream out(config.manifest_path());
    if (!out) throw IoError("cannot write manifest: " + config.manifest_path());
    out << manifest.dump(2) << "\n";
    return config.manifest_path();
}

StageReport run_train(const RunConfig& config, int stage) {
    if (stage < 1 || stage > 3) throw ConfigError("train: stage must be 1, 2 or 3");
    ensure_dir(config.checkpoint_dir());
    Dataset data = load_dataset(config.manifest_path(), config);

    ModelParams model = ModelParams::init(config);
    if (stage > 1) {
        const std::string prev = config.stage_checkpoint(stage - 1);
        if (!checkpoint_exists(prev)) throw ConfigError("missing checkpoint: " + prev);
        ParamRegistry reg = model.registry();
        load_checkpoint(reg, prev);
    }

    StageReport report;
    if (stage == 1)
        report = train_stage1(model, data, config, config.stage_loss_csv(1));
    else if (stage == 2)
        report = train_stage2(model, data, config, config.stage_loss_csv(2));
    else
        report = train_stage3(model, data, config, config.stage_loss_csv(3));

    ParamRegistry reg = model.registry();
    save_checkpoint(reg, config.stage_checkpoint(stage));
    return report;
}

std::vector<GeneratedSample> run_generate(const RunConfig& config, int count,
                                          const std::string& manifest_path,
                                          const std::string& checkpoint_path) {
    if (count < 1) throw ConfigError("generate: count must be positive");
    ensure_dir(config.output_dir());
    Dataset data = load_dataset(manifest_path, config);
    ModelParams model = load_model(config, checkpoint_path);
    const NoiseSchedule sched = config.noise_schedule();
    const std::vector<CameraView> views = config.camera_views();

    std::vector<GeneratedSample> samples;
    for (int i = 0; i < count; ++i) {
        const SceneEntry& entry = data.entries[static_cast<std::size_t>(i) % data.size()];
        RngStream prior(config.seed, "generate.zt." + std::to_string(i));
        const Matrix z_prior = prior.normal_matrix(config.model.latent_tokens, config.model.latent_dim);
        GaussianScene scene = sample_scene(config, model, entry, z_prior, sched);

        GeneratedSample sample;
        sample.valid = scene.valid();
        const std::string stem = config.output_dir() + "/sample_" + std::to_string(i);
        export_ply(scene, stem + ".ply");
        sample.ply_path = stem + ".ply";
        for (std::size_t v = 0; v < views.size(); ++v) {
            const std::string png = stem + "_view" + std::to_string(v) + ".png";
            write_png(render(scene, views[v]), png);
            sample.png_paths.push_back(png);
        }
        samples.push_back(std::move(sample));
    }
    return samples;
}

EvalReport run_eval(const RunConfig& config, const std::string& manifest_path,
                    const std::string& checkpoint_path) {
    ensure_dir(config.output_dir());
    Dataset data = load_dataset(manifest_path, config);
    ModelParams model = load_model(config, checkpoint_path);
    const NoiseSchedule sched = config.noise_schedule();

    EvalReport report;
    json per_scene = json::array();
    for (std::size_t i = 0; i < data.size(); ++i) {
        const SceneEntry& entry = data.entries[i];
        RngStream prior(config.seed, "eval.zt." + std::to_string(i));
        const Matrix z_prior = prior.normal_matrix(config.model.latent_tokens, config.model.latent_dim);
        GaussianScene generated = sample_scene(config, model, entry, z_prior, sched);

        PointCloud gen_cloud = scene_point_cloud(generated);
        PointCloud gt_cloud = scene_point_cloud(entry.scene);
        // An all-transparent generation has no cloud; score it as far-off.
        const double cd = gen_cloud.empty() ? 4.0 : chamfer(gen_cloud, gt_cloud);
        const double fs = gen_cloud.empty() ? 0.0 : fscore(gen_cloud, gt_cloud, 0.05);
        const double iou = iou_voxel(generated, entry.scene, 16);
        report.chamfer_mean += cd;
        report.fscore_mean += fs;
        report.iou_mean += iou;
        per_scene.push_back({{"scene", i}, {"chamfer", cd}, {"fscore", fs}, {"iou", iou}});
    }
    report.chamfer_mean /= static_cast<double>(data.size());
    report.fscore_mean /= static_cast<double>(data.size());
    report.iou_mean /= static_cast<double>(data.size());

    report.json_path = config.output_dir() + "/metrics.json";
    std::ofstream out(report.json_path);
    if (!out) throw IoError("cannot write metrics: " + report.json_path);
    out << json{{"chamfer", report.chamfer_mean},
                {"fscore", report.fscore_mean},
                {"iou", report.iou_mean},
                {"per_scene", per_scene}}
               .dump(2)
        << "\n";
    return report;
}

void run_render(const RunConfig& config, const std::string& scene_path, const std::string& view_name,
                const std::string& out_png) {
    GaussianScene scene;
    if (scene_path.size() > 4 && scene_path.substr(scene_path.size() - 4) == ".ply")
        scene = import_ply(scene_path);
    else
        scene = load_scene(scene_path);
    CameraView view = CameraView::axis(view_name);
    view.width = config.render.width;
    view.height = config.render.height;
    view.extent = config.render.extent;
    view.background = config.render.background;
    write_png(render(scene, view), out_png);
}

std::vector<StabilityRow> run_probe_stability(const RunConfig& config, const std::string& bundle_path,
                                              const std::vector<double>& deltas,
                                              const std::string& checkpoint_path) {
    TokenBundle bundle = load_bundle(bundle_path);
    ModelParams model = load_model(config, checkpoint_path);
    CognitionGraph base = cognition_forward(bundle, model.cognition);
    const double base_norm = base.tokens.norm();
    RngStream rng(config.seed, "probe.stability");

    std::vector<StabilityRow> rows;
    const int trials = 16;
    for (double delta : deltas) {
        if (!(delta > 0)) throw ConfigError("probe-stability: deltas must be positive");
        double acc = 0;
        for (int r = 0; r < trials; ++r) {
            Matrix u = rng.normal_matrix(bundle.t_l.rows(), bundle.t_l.cols());
            TokenBundle perturbed = bundle;
            perturbed.t_l += u * (delta / u.norm());
            CognitionGraph cog = cognition_forward(perturbed, model.cognition);
            acc += (cog.tokens - base.tokens).norm() / base_norm;
        }
        rows.push_back(StabilityRow{delta, acc / trials});
    }
    return rows;
}

void save_cognition_dump(const CognitionGraph& cog, const std::string& path) {
    io::Writer w(path);
    w.magic("CGG1");
    const Matrix& trace = attention_map(cog);
    w.u32(static_cast<std::uint32_t>(cog.tokens.rows()));
    w.u32(static_cast<std::uint32_t>(cog.tokens.cols()));
    w.u32(static_cast<std::uint32_t>(trace.cols()));
    w.matrix_f32(cog.tokens);
    w.matrix_f32(trace);
    w.close();
}

AttentionProbe run_probe_attention(const RunConfig& config, const std::string& bundle_path,
                                   const std::string& checkpoint_path) {
    TokenBundle bundle = load_bundle(bundle_path);
    ModelParams model = load_model(config, checkpoint_path);
    CognitionGraph cog = cognition_forward(bundle, model.cognition);
    const Matrix trace = attention_map(cog);

    AttentionProbe probe;
    for (Eigen::Index i = 0; i < trace.rows(); ++i) {
        Eigen::Index best;
        trace.row(i).maxCoeff(&best);
        probe.token_argmax_node.push_back(static_cast<int>(best));
    }
    for (Eigen::Index j = 0; j < trace.cols(); ++j) {
        Eigen::Index best;
        trace.col(j).maxCoeff(&best);
        probe.node_argmax_token.push_back(static_cast<int>(best));
    }
    if (!bundle.labels.empty())
        probe.topk_nodes = select_topk(trace, static_cast<int>(bundle.labels.size()));

    ensure_dir(config.output_dir());
    probe.dump_path = config.output_dir() + "/attention.cgg";
    save_cognition_dump(cog, probe.dump_path);
    probe.report_path = config.output_dir() + "/attention.json";
    std::ofstream out(probe.report_path);
    if (!out) throw IoError("cannot write report: " + probe.report_path);
    out << json{{"token_argmax_node", probe.token_argmax_node},
                {"node_argmax_token", probe.node_argmax_token},
                {"topk_nodes", probe.topk_nodes}}
               .dump(2)
        << "\n";
    return probe;
}

}  // namespace cogsplat
