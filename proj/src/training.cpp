// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/training.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>

namespace cogsplat {

using nlohmann::json;

void register_params(ClassifierHead& head, ParamRegistry& reg) {
    reg.add("w", head.w);
    reg.add("b", head.b);
}

ModelParams ModelParams::init(const RunConfig& c) {
    ModelParams m;
    m.cognition = init_cognition_model(c.seed, c.model.token_dim, c.model.sem_grid_x, c.model.sem_grid_y,
                                       c.model.geo_grid_x, c.model.geo_grid_y, c.model.depth_levels,
                                       c.model.message_rounds);
    m.encoder = init_encoder(c.seed, c.model.latent_tokens, c.model.latent_dim, c.model.encoder_feat_dim);
    m.decoder = init_decoder(c.seed, c.model.latent_tokens, c.model.latent_dim, c.model.n_gauss,
                             c.model.decoder_hidden);
    m.denoiser = init_denoiser(c.seed, c.model.latent_dim, c.model.denoiser_dim, c.model.token_dim,
                               c.model.denoiser_layers);
    m.head = init_head(c.seed, c.model.token_dim, c.model.vocab);
    return m;
}

ParamRegistry ModelParams::registry() {
    ParamRegistry reg;
    ParamRegistry cog, enc, dec, den, hd;
    register_params(cognition, cog);
    register_params(encoder, enc);
    register_params(decoder, dec);
    register_params(denoiser, den);
    register_params(head, hd);
    reg.add_group("cognition", cog);
    reg.add_group("ae.enc", enc);
    reg.add_group("ae.dec", dec);
    reg.add_group("denoiser", den);
    reg.add_group("head", hd);
    return reg;
}

ParamRegistry ModelParams::stage_registry(int stage) {
    ParamRegistry reg;
    if (stage == 1) {
        ParamRegistry enc, dec;
        register_params(encoder, enc);
        register_params(decoder, dec);
        reg.add_group("ae.enc", enc);
        reg.add_group("ae.dec", dec);
        return reg;
    }
    if (stage == 2 || stage == 3) {
        ParamRegistry cog, den, hd;
        register_params(cognition, cog);
        register_params(denoiser, den);
        register_params(head, hd);
        reg.add_group("cognition", cog);
        reg.add_group("denoiser", den);
        reg.add_group("head", hd);
        if (stage == 3) {
            ParamRegistry dec;
            register_params(decoder, dec);
            reg.add_group("ae.dec", dec);
        }
        return reg;
    }
    throw ConfigError("stage_registry: stage must be 1, 2 or 3");
}

Dataset load_dataset(const std::string& manifest_path, const RunConfig& config) {
    std::ifstream in(manifest_path);
    if (!in) throw ConfigError("dataset: cannot open manifest " + manifest_path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw FormatError(manifest_path + ": " + e.what(), 0);
    }
    if (!j.is_array() || j.empty()) throw FormatError(manifest_path + ": manifest must be a non-empty array", 0);

    // Relative manifest entries resolve against the manifest's directory.
    const std::filesystem::path base = std::filesystem::path(manifest_path).parent_path();
    auto resolve = [&](const std::string& p) {
        return std::filesystem::path(p).is_absolute() ? p : (base / p).string();
    };

    Dataset data;
    for (const json& e : j) {
        SceneEntry entry;
        entry.spec = load_scene_spec(resolve(e.at("spec").get<std::string>()),
                                     config.scene_gen_config().geometry);
        entry.bundle = load_bundle(resolve(e.at("bundle").get<std::string>()));
        entry.scene = load_scene(resolve(e.at("gaussians").get<std::string>()));
        entry.bundle.validate(config.model.vocab);
        if (entry.bundle.dim() != config.model.token_dim)
            throw ConfigError("dataset: bundle token dimension does not match config");
        if (static_cast<int>(entry.scene.size()) != config.model.n_gauss)
            throw ConfigError("dataset: scene Gaussian count does not match config");
        if (static_cast<Eigen::Index>(entry.bundle.labels.size()) > config.node_count())
            throw ConfigError("dataset: more grounding labels than latent nodes");
        data.entries.push_back(std::move(entry));
    }
    return data;
}

void prepare_gt_views(Dataset& data, const RunConfig& config) {
    const std::vector<CameraView> views = config.camera_views();
    for (SceneEntry& e : data.entries) {
        if (!e.gt_views.empty()) continue;
        for (const CameraView& v : views) e.gt_views.push_back(ViewTarget{v, render(e.scene, v)});
    }
}

void prepare_latents(Dataset& data, const ModelParams& model) {
    for (SceneEntry& e : data.entries) e.z0 = encode_scene(e.scene, model.encoder);
}

namespace {

class LossCsv {
public:
    explicit LossCsv(const std::string& path) : out_(path) {
        if (!out_) throw IoError("cannot open loss log: " + path);
        out_ << "iteration,l_diff,l_g,l_recon,total\n";
    }
    void row(long it, double l_diff, double l_g, double l_recon, double total) {
        out_ << it << ',' << l_diff << ',' << l_g << ',' << l_recon << ',' << total << "\n";
    }

private:
    std::ofstream out_;
};

// Mean of the first/last `window` entries.
double window_mean(const std::vector<double>& xs, std::size_t window, bool front) {
    if (xs.empty()) return 0.0;
    window = std::min(window, xs.size());
    double acc = 0;
    for (std::size_t i = 0; i < window; ++i) acc += front ? xs[i] : xs[xs.size() - 1 - i];
    return acc / static_cast<double>(window);
}

std::vector<Matrix> gather_grads(ad::Tape& t, const std::vector<ad::Var>& vars) {
    std::vector<Matrix> grads;
    grads.reserve(vars.size());
    for (ad::Var v : vars) grads.push_back(t.grad_or_zero(v));
    return grads;
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

}  // namespace

double dataset_psnr(const ModelParams& model, Dataset& data, const RunConfig& config) {
    prepare_gt_views(data, config);
    double mse_acc = 0;
    long count = 0;
    for (const SceneEntry& e : data.entries) {
        GaussianScene decoded = decode_latent(encode_scene(e.scene, model.encoder), model.decoder);
        for (const ViewTarget& vt : e.gt_views) {
            Image rendered = render(decoded, vt.view);
            mse_acc += (rendered.pixels - vt.image.pixels).array().square().mean();
            ++count;
        }
    }
    const double mse = mse_acc / static_cast<double>(count);
    return mse == 0.0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(mse);
}

double dataset_grounding_accuracy(const ModelParams& model, const Dataset& data) {
    double acc = 0;
    for (const SceneEntry& e : data.entries) {
        ad::Tape t;
        CognitionVars vars = bind(t, model.cognition);
        FusionOut out = cognition_forward(t, t.constant(e.bundle.t_s), t.constant(e.bundle.t_g),
                                          t.constant(e.bundle.t_l), model.cognition, vars);
        acc += grounding_accuracy(t.val(out.values), t.val(out.trace), e.bundle.labels, model.head);
    }
    return acc / static_cast<double>(data.size());
}

StageReport train_stage1(ModelParams& model, Dataset& data, const RunConfig& config,
                         const std::string& loss_csv_path) {
    if (data.entries.empty()) throw ConfigError("train_stage1: empty dataset");
    prepare_gt_views(data, config);
    LossCsv csv(loss_csv_path);
    ParamRegistry reg = model.stage_registry(1);
    OptimizerState opt = OptimizerState::init(reg);
    RngStream order(config.seed, "train.stage1.order");

    const double t0 = now_seconds();
    std::vector<double> totals, recons;
    StageReport report;
    for (long it = 1; it <= config.train.stage1_iters; ++it) {
        SceneEntry& e = data.entries[static_cast<std::size_t>(order.uniform_int(static_cast<int>(data.size())))];

        ad::Tape t;
        EncoderVars ev = bind(t, model.encoder);
        DecoderVars dv = bind(t, model.decoder);
        ad::Var z = encode_scene(t, t.constant(e.scene.to_matrix()), ev);
        RenderInputs decoded = decode_latent(t, z, model.decoder, dv);
        ad::Var l_recon = recon_loss(t, decoded, e.gt_views, config.loss);
        t.backward(l_recon);

        std::vector<ad::Var> vars;
        collect_vars(ev, vars);
        collect_vars(dv, vars);
        optimizer_step(reg, gather_grads(t, vars), opt, config.train.learning_rate);

        const double lr_val = t.val(l_recon)(0, 0);
        if (!std::isfinite(lr_val)) throw NumericError("train_stage1: non-finite loss at iteration " + std::to_string(it));
        const double total = total_loss(0.0, 0.0, lr_val, config.loss);
        totals.push_back(total);
        recons.push_back(lr_val);
        if (it % config.train.log_every == 0 || it == 1) csv.row(it, 0.0, 0.0, lr_val, total);

        report.iterations = it;
        if (config.train.stage1_target_psnr > 0 && it % config.train.eval_every == 0) {
            const double p = dataset_psnr(model, data, config);
            if (p >= config.train.stage1_target_psnr) break;
        }
    }
    report.seconds = now_seconds() - t0;
    const std::size_t window = std::max<std::size_t>(1, std::min<std::size_t>(100, totals.size() / 10));
    report.first_window_loss = window_mean(totals, window, true);
    report.last_window_loss = window_mean(totals, window, false);
    report.psnr = dataset_psnr(model, data, config);
    return report;
}

StageReport train_stage2(ModelParams& model, Dataset& data, const RunConfig& config,
                         const std::string& loss_csv_path) {
    if (data.entries.empty()) throw ConfigError("train_stage2: empty dataset");
    prepare_latents(data, model);
    LossCsv csv(loss_csv_path);
    ParamRegistry reg = model.stage_registry(2);
    OptimizerState opt = OptimizerState::init(reg);
    const NoiseSchedule sched = config.noise_schedule();
    RngStream order(config.seed, "train.stage2.order");
    RngStream tstream(config.seed, "train.stage2.t");
    RngStream noise(config.seed, "train.stage2.eps");

    const double t0 = now_seconds();
    std::vector<double> totals, diffs, grounds;
    StageReport report;
    for (long it = 1; it <= config.train.stage2_iters; ++it) {
        SceneEntry& e = data.entries[static_cast<std::size_t>(order.uniform_int(static_cast<int>(data.size())))];
        const int timestep = 1 + tstream.uniform_int(sched.timesteps);
        const Matrix eps = noise.normal_matrix(e.z0.rows(), e.z0.cols());
        const Matrix z_t = forward_noise(e.z0, timestep, eps, sched);

        ad::Tape t;
        CognitionVars cv = bind(t, model.cognition);
        DenoiserVars dv = bind(t, model.denoiser);
        HeadVars hv = bind(t, model.head);
        FusionOut cog = cognition_forward(t, t.constant(e.bundle.t_s), t.constant(e.bundle.t_g),
                                          t.constant(e.bundle.t_l), model.cognition, cv);
        ad::Var eps_hat = predict_noise(t, t.constant(z_t), timestep, cog.tokens, model.denoiser, dv);
        ad::Var l_diff = diff_loss(t, t.constant(eps), eps_hat);
        ad::Var l_g = grounding_loss(t, cog.values, t.val(cog.trace), e.bundle.labels, hv,
                                     model.head.vocab());
        ad::Var zero = t.constant(Matrix::Zero(1, 1));
        ad::Var total = total_loss(t, l_diff, l_g, zero, config.loss);
        t.backward(total);

        std::vector<ad::Var> vars;
        collect_vars(model.cognition, cv, vars);
        collect_vars(dv, vars);
        vars.push_back(hv.w);
        vars.push_back(hv.b);
        optimizer_step(reg, gather_grads(t, vars), opt, config.train.learning_rate);

        const double ld = t.val(l_diff)(0, 0), lg = t.val(l_g)(0, 0), tot = t.val(total)(0, 0);
        if (!std::isfinite(tot)) throw NumericError("train_stage2: non-finite loss at iteration " + std::to_string(it));
        totals.push_back(tot);
        diffs.push_back(ld);
        grounds.push_back(lg);
        if (it % config.train.log_every == 0 || it == 1) csv.row(it, ld, lg, 0.0, tot);

        report.iterations = it;
        if (config.train.stage2_target_ldiff_frac > 0 && it % config.train.eval_every == 0) {
            const std::size_t win = std::max<std::size_t>(1, std::min<std::size_t>(200, diffs.size() / 10));
            const double d_first = window_mean(diffs, win, true);
            const double d_last = window_mean(diffs, win, false);
            const double g_last = window_mean(grounds, win, false);
            if (d_last < config.train.stage2_target_ldiff_frac * d_first &&
                g_last < config.train.stage2_target_lg &&
                dataset_grounding_accuracy(model, data) >= config.train.stage2_target_acc)
                break;
        }
    }
    report.seconds = now_seconds() - t0;
    const std::size_t window = std::max<std::size_t>(1, std::min<std::size_t>(200, totals.size() / 10));
    report.first_window_loss = window_mean(totals, window, true);
    report.last_window_loss = window_mean(totals, window, false);
    report.l_diff_first_window = window_mean(diffs, window, true);
    report.l_diff_last_window = window_mean(diffs, window, false);
    report.l_g_last_window = window_mean(grounds, window, false);
    report.grounding_acc = dataset_grounding_accuracy(model, data);
    return report;
}

StageReport train_stage3(ModelParams& model, Dataset& data, const RunConfig& config,
                         const std::string& loss_csv_path) {
    if (data.entries.empty()) throw ConfigError("train_stage3: empty dataset");
    prepare_gt_views(data, config);
    prepare_latents(data, model);
    LossCsv csv(loss_csv_path);
    ParamRegistry reg = model.stage_registry(3);
    OptimizerState opt = OptimizerState::init(reg);
    const NoiseSchedule sched = config.noise_schedule();
    RngStream order(config.seed, "train.stage3.order");
    RngStream tstream(config.seed, "train.stage3.t");
    RngStream noise(config.seed, "train.stage3.eps");
    RngStream prior(config.seed, "train.stage3.zt");

    const double t0 = now_seconds();
    std::vector<double> totals;
    StageReport report;
    for (long it = 1; it <= config.train.stage3_iters; ++it) {
        SceneEntry& e = data.entries[static_cast<std::size_t>(order.uniform_int(static_cast<int>(data.size())))];
        const int timestep = 1 + tstream.uniform_int(sched.timesteps);
        const Matrix eps = noise.normal_matrix(e.z0.rows(), e.z0.cols());
        const Matrix z_t = forward_noise(e.z0, timestep, eps, sched);
        const Matrix z_prior = prior.normal_matrix(e.z0.rows(), e.z0.cols());

        ad::Tape t;
        CognitionVars cv = bind(t, model.cognition);
        DenoiserVars dv = bind(t, model.denoiser);
        HeadVars hv = bind(t, model.head);
        DecoderVars decv = bind(t, model.decoder);
        FusionOut cog = cognition_forward(t, t.constant(e.bundle.t_s), t.constant(e.bundle.t_g),
                                          t.constant(e.bundle.t_l), model.cognition, cv);
        ad::Var eps_hat = predict_noise(t, t.constant(z_t), timestep, cog.tokens, model.denoiser, dv);
        ad::Var l_diff = diff_loss(t, t.constant(eps), eps_hat);
        ad::Var l_g = grounding_loss(t, cog.values, t.val(cog.trace), e.bundle.labels, hv,
                                     model.head.vocab());
        // Truncated deterministic sampler keeps the unrolled graph small.
        ad::Var z0_hat = ddim_sample(t, t.constant(z_prior), cog.tokens, sched,
                                     config.train.stage3_ddim_steps, model.denoiser, dv);
        RenderInputs decoded = decode_latent(t, z0_hat, model.decoder, decv);
        ad::Var l_recon = recon_loss(t, decoded, e.gt_views, config.loss);
        ad::Var total = total_loss(t, l_diff, l_g, l_recon, config.loss);
        t.backward(total);

        std::vector<ad::Var> vars;
        collect_vars(model.cognition, cv, vars);
        collect_vars(dv, vars);
        vars.push_back(hv.w);
        vars.push_back(hv.b);
        collect_vars(decv, vars);
        optimizer_step(reg, gather_grads(t, vars), opt, config.train.learning_rate);

        const double tot = t.val(total)(0, 0);
        if (!std::isfinite(tot)) throw NumericError("train_stage3: non-finite loss at iteration " + std::to_string(it));
        totals.push_back(tot);
        if (it % config.train.log_every == 0 || it == 1)
            csv.row(it, t.val(l_diff)(0, 0), t.val(l_g)(0, 0), t.val(l_recon)(0, 0), tot);
        report.iterations = it;
    }
    report.seconds = now_seconds() - t0;
    const std::size_t window = std::max<std::size_t>(1, std::min<std::size_t>(100, totals.size() / 10));
    report.first_window_loss = window_mean(totals, window, true);
    report.last_window_loss = window_mean(totals, window, false);
    report.grounding_acc = dataset_grounding_accuracy(model, data);
    return report;
}

}  // namespace cogsplat
