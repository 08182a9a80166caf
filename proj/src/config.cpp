// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/config.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace cogsplat {

using nlohmann::json;

namespace {

json to_json(const RunConfig& c) {
    return json{
        {"seed", c.seed},
        {"model",
         {{"token_dim", c.model.token_dim},
          {"semantic_grid", {c.model.sem_grid_x, c.model.sem_grid_y}},
          {"geometric_grid", {c.model.geo_grid_x, c.model.geo_grid_y}},
          {"depth_levels", c.model.depth_levels},
          {"message_rounds", c.model.message_rounds},
          {"latent_tokens", c.model.latent_tokens},
          {"latent_dim", c.model.latent_dim},
          {"n_gauss", c.model.n_gauss},
          {"encoder_feat_dim", c.model.encoder_feat_dim},
          {"decoder_hidden", c.model.decoder_hidden},
          {"denoiser_layers", c.model.denoiser_layers},
          {"denoiser_dim", c.model.denoiser_dim},
          {"vocab", c.model.vocab}}},
        {"schedule",
         {{"timesteps", c.schedule.timesteps},
          {"beta_start", c.schedule.beta_start},
          {"beta_end", c.schedule.beta_end}}},
        {"sampler", {{"steps", c.sampler.steps}}},
        {"loss",
         {{"lambda_diff", c.loss.lambda_diff},
          {"lambda_ground", c.loss.lambda_ground},
          {"lambda_recon", c.loss.lambda_recon},
          {"lambda_l1", c.loss.lambda_l1},
          {"lambda_ssim", c.loss.lambda_ssim}}},
        {"train",
         {{"learning_rate", c.train.learning_rate},
          {"stage1_iters", c.train.stage1_iters},
          {"stage2_iters", c.train.stage2_iters},
          {"stage3_iters", c.train.stage3_iters},
          {"stage3_ddim_steps", c.train.stage3_ddim_steps},
          {"log_every", c.train.log_every},
          {"eval_every", c.train.eval_every},
          {"stage1_target_psnr", c.train.stage1_target_psnr},
          {"stage2_target_ldiff_frac", c.train.stage2_target_ldiff_frac},
          {"stage2_target_lg", c.train.stage2_target_lg},
          {"stage2_target_acc", c.train.stage2_target_acc}}},
        {"render",
         {{"width", c.render.width},
          {"height", c.render.height},
          {"extent", c.render.extent},
          {"background", {c.render.background.x(), c.render.background.y(), c.render.background.z()}},
          {"views", c.render.views}}},
        {"data",
         {{"objects", c.data.objects},
          {"gaussians_per_object", c.data.gaussians_per_object},
          {"near_margin", c.data.near_margin},
          {"contact_margin", c.data.contact_margin},
          {"placement_gap", c.data.placement_gap},
          {"min_half_extent", c.data.min_half_extent},
          {"max_half_extent", c.data.max_half_extent}}},
        {"paths", {{"run_dir", c.paths.run_dir}}},
    };
}

void reject_unknown_keys(const json& given, const json& schema, const std::string& prefix) {
    if (!given.is_object()) return;
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (!schema.contains(it.key())) throw ConfigError("config: unknown key \"" + path + "\"");
        if (it.value().is_object()) reject_unknown_keys(it.value(), schema.at(it.key()), path);
    }
}

RunConfig from_json(const json& j) {
    RunConfig c = RunConfig{};
    reject_unknown_keys(j, to_json(c), "");
    try {
        c.seed = j.value("seed", c.seed);
        if (j.contains("model")) {
            const json& m = j.at("model");
            c.model.token_dim = m.value("token_dim", c.model.token_dim);
            if (m.contains("semantic_grid")) {
                c.model.sem_grid_x = m.at("semantic_grid").at(0).get<int>();
                c.model.sem_grid_y = m.at("semantic_grid").at(1).get<int>();
            }
            if (m.contains("geometric_grid")) {
                c.model.geo_grid_x = m.at("geometric_grid").at(0).get<int>();
                c.model.geo_grid_y = m.at("geometric_grid").at(1).get<int>();
            }
            c.model.depth_levels = m.value("depth_levels", c.model.depth_levels);
            c.model.message_rounds = m.value("message_rounds", c.model.message_rounds);
            c.model.latent_tokens = m.value("latent_tokens", c.model.latent_tokens);
            c.model.latent_dim = m.value("latent_dim", c.model.latent_dim);
            c.model.n_gauss = m.value("n_gauss", c.model.n_gauss);
            c.model.encoder_feat_dim = m.value("encoder_feat_dim", c.model.encoder_feat_dim);
            c.model.decoder_hidden = m.value("decoder_hidden", c.model.decoder_hidden);
            c.model.denoiser_layers = m.value("denoiser_layers", c.model.denoiser_layers);
            c.model.denoiser_dim = m.value("denoiser_dim", c.model.denoiser_dim);
            c.model.vocab = m.value("vocab", c.model.vocab);
        }
        if (j.contains("schedule")) {
            const json& s = j.at("schedule");
            c.schedule.timesteps = s.value("timesteps", c.schedule.timesteps);
            c.schedule.beta_start = s.value("beta_start", c.schedule.beta_start);
            c.schedule.beta_end = s.value("beta_end", c.schedule.beta_end);
        }
        if (j.contains("sampler")) c.sampler.steps = j.at("sampler").value("steps", c.sampler.steps);
        if (j.contains("loss")) {
            const json& l = j.at("loss");
            c.loss.lambda_diff = l.value("lambda_diff", c.loss.lambda_diff);
            c.loss.lambda_ground = l.value("lambda_ground", c.loss.lambda_ground);
            c.loss.lambda_recon = l.value("lambda_recon", c.loss.lambda_recon);
            c.loss.lambda_l1 = l.value("lambda_l1", c.loss.lambda_l1);
            c.loss.lambda_ssim = l.value("lambda_ssim", c.loss.lambda_ssim);
        }
        if (j.contains("train")) {
            const json& t = j.at("train");
            c.train.learning_rate = t.value("learning_rate", c.train.learning_rate);
            c.train.stage1_iters = t.value("stage1_iters", c.train.stage1_iters);
            c.train.stage2_iters = t.value("stage2_iters", c.train.stage2_iters);
            c.train.stage3_iters = t.value("stage3_iters", c.train.stage3_iters);
            c.train.stage3_ddim_steps = t.value("stage3_ddim_steps", c.train.stage3_ddim_steps);
            c.train.log_every = t.value("log_every", c.train.log_every);
            c.train.eval_every = t.value("eval_every", c.train.eval_every);
            c.train.stage1_target_psnr = t.value("stage1_target_psnr", c.train.stage1_target_psnr);
            c.train.stage2_target_ldiff_frac =
                t.value("stage2_target_ldiff_frac", c.train.stage2_target_ldiff_frac);
            c.train.stage2_target_lg = t.value("stage2_target_lg", c.train.stage2_target_lg);
            c.train.stage2_target_acc = t.value("stage2_target_acc", c.train.stage2_target_acc);
        }
        if (j.contains("render")) {
            const json& r = j.at("render");
            c.render.width = r.value("width", c.render.width);
            c.render.height = r.value("height", c.render.height);
            c.render.extent = r.value("extent", c.render.extent);
            if (r.contains("background"))
                for (int i = 0; i < 3; ++i) c.render.background(i) = r.at("background").at(i).get<double>();
            if (r.contains("views")) c.render.views = r.at("views").get<std::vector<std::string>>();
        }
        if (j.contains("data")) {
            const json& d = j.at("data");
            c.data.objects = d.value("objects", c.data.objects);
            c.data.gaussians_per_object = d.value("gaussians_per_object", c.data.gaussians_per_object);
            c.data.near_margin = d.value("near_margin", c.data.near_margin);
            c.data.contact_margin = d.value("contact_margin", c.data.contact_margin);
            c.data.placement_gap = d.value("placement_gap", c.data.placement_gap);
            c.data.min_half_extent = d.value("min_half_extent", c.data.min_half_extent);
            c.data.max_half_extent = d.value("max_half_extent", c.data.max_half_extent);
        }
        if (j.contains("paths")) c.paths.run_dir = j.at("paths").value("run_dir", c.paths.run_dir);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    c.validate();
    return c;
}

}  // namespace

void RunConfig::validate() const {
    auto fail = [](const std::string& field, const std::string& why) {
        throw ConfigError("config: field " + field + " " + why);
    };
    if (model.token_dim <= 0 || model.token_dim % 8 != 0)
        fail("model.token_dim", "must be a positive multiple of 8 (positional embedding layout)");
    if (model.sem_grid_x < 1 || model.sem_grid_y < 1) fail("model.semantic_grid", "must be positive");
    if (model.geo_grid_x < 1 || model.geo_grid_y < 1) fail("model.geometric_grid", "must be positive");
    if (model.depth_levels < 1) fail("model.depth_levels", "must be at least 1");
    const int sem_n = model.sem_grid_x * model.sem_grid_y;
    const int geo_n = model.geo_grid_x * model.geo_grid_y * model.depth_levels;
    if (sem_n != geo_n)
        fail("model.geometric_grid",
             "node counts must match: semantic " + std::to_string(sem_n) + " vs geometric " +
                 std::to_string(geo_n));
    if (model.message_rounds < 0) fail("model.message_rounds", "must be non-negative");
    if (model.latent_tokens < 1 || model.latent_dim < 1) fail("model.latent_tokens", "must be positive");
    if (model.n_gauss < 1) fail("model.n_gauss", "must be positive");
    if (model.encoder_feat_dim < 1 || model.decoder_hidden < 1) fail("model.encoder_feat_dim", "must be positive");
    if (model.denoiser_layers < 1) fail("model.denoiser_layers", "must be at least 1");
    if (model.denoiser_dim < 2 || model.denoiser_dim % 2 != 0)
        fail("model.denoiser_dim", "must be a positive even number (timestep embedding)");
    if (model.vocab < 1 || model.vocab > ProjectionBank::kClassVocab)
        fail("model.vocab", "must lie in [1, " + std::to_string(ProjectionBank::kClassVocab) + "]");
    if (sem_n < model.vocab && sem_n < 1) fail("model.semantic_grid", "needs at least one node");

    if (schedule.timesteps < 1) fail("schedule.timesteps", "must be positive");
    if (!(schedule.beta_start > 0) || !(schedule.beta_end < 1) || schedule.beta_start > schedule.beta_end)
        fail("schedule.beta_start", "must satisfy 0 < beta_start <= beta_end < 1");
    if (sampler.steps < 1 || sampler.steps > schedule.timesteps)
        fail("sampler.steps", "must lie in [1, schedule.timesteps]");
    loss.validate();
    if (train.learning_rate <= 0) fail("train.learning_rate", "must be positive");
    if (train.stage1_iters < 1 || train.stage2_iters < 1 || train.stage3_iters < 1)
        fail("train.stage1_iters", "iteration budgets must be positive");
    if (train.stage3_ddim_steps < 1 || train.stage3_ddim_steps > schedule.timesteps)
        fail("train.stage3_ddim_steps", "must lie in [1, schedule.timesteps]");
    if (train.log_every < 1 || train.eval_every < 1) fail("train.log_every", "must be positive");
    if (render.width < 8 || render.height < 8) fail("render.width", "resolution must be at least 8");
    if (!(render.extent > 0)) fail("render.extent", "must be positive");
    if (render.views.empty()) fail("render.views", "need at least one view");
    for (const std::string& v : render.views) CameraView::axis(v);  // validates names
    if (data.objects < 1 || data.objects > 16) fail("data.objects", "must lie in [1, 16]");
    if (data.gaussians_per_object < 1) fail("data.gaussians_per_object", "must be positive");
    if (data.gaussians_per_object * data.objects > model.n_gauss)
        fail("model.n_gauss", "too small for data.objects * data.gaussians_per_object");
    if (!(data.min_half_extent > 0) || data.min_half_extent > data.max_half_extent)
        fail("data.min_half_extent", "must satisfy 0 < min <= max");
}

std::vector<CameraView> RunConfig::camera_views() const {
    std::vector<CameraView> out;
    for (const std::string& name : render.views) {
        CameraView v = CameraView::axis(name);
        v.width = render.width;
        v.height = render.height;
        v.extent = render.extent;
        v.background = render.background;
        out.push_back(v);
    }
    return out;
}

SceneGenConfig RunConfig::scene_gen_config() const {
    SceneGenConfig g;
    g.geometry.contact_margin = data.contact_margin;
    g.geometry.near_margin = data.near_margin;
    g.geometry.placement_gap = data.placement_gap;
    g.geometry.min_half_extent = data.min_half_extent;
    g.geometry.max_half_extent = data.max_half_extent;
    g.gaussians_per_object = data.gaussians_per_object;
    g.n_gauss = model.n_gauss;
    g.class_vocab = model.vocab;
    return g;
}

RunConfig default_config() { return RunConfig{}; }

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("config: cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return config_from_json_text(buf.str());
}

RunConfig config_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config: invalid JSON: ") + e.what());
    }
    return from_json(j);
}

void apply_override(RunConfig& config, const std::string& assignment) {
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos) throw ConfigError("config override must look like path.key=value");
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);

    json j = to_json(config);
    json* node = &j;
    std::size_t start = 0;
    std::vector<std::string> keys;
    while (true) {
        const std::size_t dot = path.find('.', start);
        keys.push_back(path.substr(start, dot == std::string::npos ? dot : dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->contains(keys[i])) throw ConfigError("config override: unknown key \"" + path + "\"");
        node = &(*node)[keys[i]];
    }
    if (!node->contains(keys.back())) throw ConfigError("config override: unknown key \"" + path + "\"");
    json parsed;
    try {
        parsed = json::parse(value);
    } catch (const json::exception&) {
        parsed = value;  // plain string
    }
    (*node)[keys.back()] = parsed;
    config = from_json(j);
}

}  // namespace cogsplat
