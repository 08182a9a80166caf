// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/diffusion.hpp"

#include <cmath>
#include <string>

namespace cogsplat {

NoiseSchedule make_schedule(int timesteps, double beta_start, double beta_end) {
    if (timesteps < 1) throw ConfigError("make_schedule: need at least one timestep");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end)
        throw ConfigError("make_schedule: require 0 < beta_start <= beta_end < 1");

    NoiseSchedule s;
    s.timesteps = timesteps;
    s.beta = Vector::Zero(timesteps + 1);
    s.alpha = Vector::Ones(timesteps + 1);
    s.alpha_bar = Vector::Ones(timesteps + 1);
    for (int t = 1; t <= timesteps; ++t) {
        const double frac = timesteps == 1 ? 0.0 : static_cast<double>(t - 1) / (timesteps - 1);
        s.beta(t) = beta_start + (beta_end - beta_start) * frac;
        s.alpha(t) = 1.0 - s.beta(t);
        s.alpha_bar(t) = s.alpha_bar(t - 1) * s.alpha(t);
    }
    return s;
}

Matrix forward_noise(const Matrix& z0, int t, const Matrix& eps, const NoiseSchedule& sched) {
    if (t < 1 || t > sched.timesteps)
        throw ConfigError("forward_noise: timestep " + std::to_string(t) + " outside [1, T]");
    if (eps.rows() != z0.rows() || eps.cols() != z0.cols())
        throw DimensionError("forward_noise: noise shape mismatch");
    const double ab = sched.abar(t);
    return std::sqrt(ab) * z0 + std::sqrt(1.0 - ab) * eps;
}

Eigen::RowVectorXd timestep_embedding(int t, Eigen::Index dim, double base) {
    if (dim % 2 != 0) throw ConfigError("timestep_embedding: dimension must be even");
    Eigen::RowVectorXd e(dim);
    const Eigen::Index half = dim / 2;
    for (Eigen::Index i = 0; i < half; ++i) {
        const double freq = std::pow(base, -static_cast<double>(i) / static_cast<double>(half));
        e(i) = std::sin(t * freq);
        e(half + i) = std::cos(t * freq);
    }
    return e;
}

void DenoiserParams::validate() const {
    if (blocks.empty()) throw ConfigError("DenoiserParams: need at least one block");
    temb.validate();
    out_ln.validate();
    for (const DenoiserBlock& b : blocks) {
        b.ln1.validate();
        b.self_attn.validate();
        b.ln2.validate();
        b.cross_attn.validate();
        b.ln3.validate();
        b.ffn.validate();
    }
    if (out_w.rows() != model_dim() || out_b.cols() != latent_dim())
        throw ConfigError("DenoiserParams: output projection dims do not chain");
}

DenoiserParams init_denoiser(std::uint64_t seed, Eigen::Index latent_dim, Eigen::Index model_dim,
                             Eigen::Index cond_dim, int layers) {
    if (layers < 1) throw ConfigError("init_denoiser: need at least one layer");
    DenoiserParams p;
    const double s_in = std::sqrt(static_cast<double>(latent_dim));
    const double s_m = std::sqrt(static_cast<double>(model_dim));
    p.in_w = RngStream(seed, "denoiser.in_w").normal_matrix(latent_dim, model_dim) / s_in;
    p.in_b = Matrix::Zero(1, model_dim);
    p.temb = nn::init_mlp(seed, "denoiser.temb", model_dim, 4 * model_dim, model_dim);
    for (int l = 0; l < layers; ++l) {
        const std::string base = "denoiser.block" + std::to_string(l);
        DenoiserBlock b;
        b.ln1 = nn::init_layer_norm(model_dim);
        b.self_attn = nn::init_attention(seed, base + ".self", model_dim, model_dim, model_dim, model_dim);
        b.self_out = RngStream(seed, base + ".self_out").normal_matrix(model_dim, model_dim) / s_m;
        b.ln2 = nn::init_layer_norm(model_dim);
        b.cross_attn = nn::init_attention(seed, base + ".cross", model_dim, cond_dim, model_dim, model_dim);
        b.cross_out = RngStream(seed, base + ".cross_out").normal_matrix(model_dim, model_dim) / s_m;
        b.ln3 = nn::init_layer_norm(model_dim);
        b.ffn = nn::init_mlp(seed, base + ".ffn", model_dim, 4 * model_dim, model_dim);
        p.blocks.push_back(std::move(b));
    }
    p.out_ln = nn::init_layer_norm(model_dim);
    p.out_w = RngStream(seed, "denoiser.out_w").normal_matrix(model_dim, latent_dim) / s_m;
    p.out_b = Matrix::Zero(1, latent_dim);
    p.validate();
    return p;
}

DenoiserVars bind(ad::Tape& t, const DenoiserParams& p) {
    p.validate();
    DenoiserVars v;
    v.in_w = t.leaf(p.in_w);
    v.in_b = t.leaf(p.in_b);
    v.temb = nn::bind(t, p.temb);
    for (const DenoiserBlock& b : p.blocks)
        v.blocks.push_back(DenoiserBlockVars{nn::bind(t, b.ln1), nn::bind(t, b.self_attn), t.leaf(b.self_out),
                                             nn::bind(t, b.ln2), nn::bind(t, b.cross_attn), t.leaf(b.cross_out),
                                             nn::bind(t, b.ln3), nn::bind(t, b.ffn)});
    v.out_ln = nn::bind(t, p.out_ln);
    v.out_w = t.leaf(p.out_w);
    v.out_b = t.leaf(p.out_b);
    return v;
}

ad::Var predict_noise(ad::Tape& t, ad::Var z_t, int timestep, ad::Var g_cog, const DenoiserParams& meta,
                      const DenoiserVars& vars) {
    require_finite(t.val(z_t), "predict_noise z_t");
    if (t.val(z_t).cols() != meta.latent_dim())
        throw DimensionError("predict_noise: latent dimension mismatch");

    ad::Var x = ad::add_rowvec(ad::matmul(z_t, vars.in_w), vars.in_b);
    ad::Var temb_row =
        nn::mlp(t, t.constant(timestep_embedding(timestep, meta.model_dim(), meta.temb_base)), vars.temb);
    x = ad::add_rowvec(x, temb_row);

    for (const DenoiserBlockVars& b : vars.blocks) {
        ad::Var h1 = nn::layer_norm(t, x, b.ln1);
        x = ad::add(x, ad::matmul(nn::projected_attention(t, h1, h1, b.self_attn).out, b.self_out));
        ad::Var h2 = nn::layer_norm(t, x, b.ln2);
        x = ad::add(x, ad::matmul(nn::projected_attention(t, h2, g_cog, b.cross_attn).out, b.cross_out));
        ad::Var h3 = nn::layer_norm(t, x, b.ln3);
        x = ad::add(x, nn::mlp(t, h3, b.ffn));
    }
    return ad::add_rowvec(ad::matmul(nn::layer_norm(t, x, vars.out_ln), vars.out_w), vars.out_b);
}

Matrix predict_noise(const Matrix& z_t, int timestep, const Matrix& g_cog, const DenoiserParams& params) {
    ad::Tape t;
    DenoiserVars vars = bind(t, params);
    return t.val(predict_noise(t, t.constant(z_t), timestep, t.constant(g_cog), params, vars));
}

std::vector<int> ddim_timesteps(int total, int steps) {
    if (steps < 1 || steps > total) throw ConfigError("ddim_timesteps: steps must lie in [1, T]");
    std::vector<int> ts;
    if (steps == 1) {
        ts.push_back(total);
        return ts;
    }
    for (int i = 0; i < steps; ++i) {
        const double x = 1.0 + static_cast<double>(total - 1) * i / (steps - 1);
        ts.push_back(static_cast<int>(std::lround(x)));
    }
    std::reverse(ts.begin(), ts.end());
    return ts;
}

Matrix ddim_sample(const Matrix& z_t_start, const NoiseSchedule& sched, int steps,
                   const NoisePredictor& predictor) {
    const std::vector<int> ts = ddim_timesteps(sched.timesteps, steps);
    Matrix z = z_t_start;
    for (std::size_t s = 0; s < ts.size(); ++s) {
        const int t_cur = ts[s];
        const int t_prev = s + 1 < ts.size() ? ts[s + 1] : 0;
        const double ab = sched.abar(t_cur);
        const double ab_prev = sched.abar(t_prev);
        const Matrix eps = predictor(z, t_cur);
        const Matrix x0 = (z - std::sqrt(1.0 - ab) * eps) / std::sqrt(ab);
        z = std::sqrt(ab_prev) * x0 + std::sqrt(1.0 - ab_prev) * eps;
    }
    return z;
}

ad::Var ddim_sample(ad::Tape& t, ad::Var z_t_start, ad::Var g_cog, const NoiseSchedule& sched, int steps,
                    const DenoiserParams& meta, const DenoiserVars& vars) {
    const std::vector<int> ts = ddim_timesteps(sched.timesteps, steps);
    ad::Var z = z_t_start;
    for (std::size_t s = 0; s < ts.size(); ++s) {
        const int t_cur = ts[s];
        const int t_prev = s + 1 < ts.size() ? ts[s + 1] : 0;
        const double ab = sched.abar(t_cur);
        const double ab_prev = sched.abar(t_prev);
        ad::Var eps = predict_noise(t, z, t_cur, g_cog, meta, vars);
        ad::Var x0 = ad::scale(ad::sub(z, ad::scale(eps, std::sqrt(1.0 - ab))), 1.0 / std::sqrt(ab));
        z = ad::add(ad::scale(x0, std::sqrt(ab_prev)), ad::scale(eps, std::sqrt(1.0 - ab_prev)));
    }
    return z;
}

void register_params(DenoiserParams& p, ParamRegistry& reg) {
    reg.add("in_w", p.in_w);
    reg.add("in_b", p.in_b);
    reg.add("temb.w1", p.temb.w1);
    reg.add("temb.b1", p.temb.b1);
    reg.add("temb.w2", p.temb.w2);
    reg.add("temb.b2", p.temb.b2);
    for (std::size_t l = 0; l < p.blocks.size(); ++l) {
        DenoiserBlock& b = p.blocks[l];
        const std::string base = "block" + std::to_string(l) + ".";
        reg.add(base + "ln1.gamma", b.ln1.gamma);
        reg.add(base + "ln1.beta", b.ln1.beta);
        reg.add(base + "self.w_q", b.self_attn.w_q);
        reg.add(base + "self.w_k", b.self_attn.w_k);
        reg.add(base + "self.w_v", b.self_attn.w_v);
        reg.add(base + "self.out", b.self_out);
        reg.add(base + "ln2.gamma", b.ln2.gamma);
        reg.add(base + "ln2.beta", b.ln2.beta);
        reg.add(base + "cross.w_q", b.cross_attn.w_q);
        reg.add(base + "cross.w_k", b.cross_attn.w_k);
        reg.add(base + "cross.w_v", b.cross_attn.w_v);
        reg.add(base + "cross.out", b.cross_out);
        reg.add(base + "ln3.gamma", b.ln3.gamma);
        reg.add(base + "ln3.beta", b.ln3.beta);
        reg.add(base + "ffn.w1", b.ffn.w1);
        reg.add(base + "ffn.b1", b.ffn.b1);
        reg.add(base + "ffn.w2", b.ffn.w2);
        reg.add(base + "ffn.b2", b.ffn.b2);
    }
    reg.add("out_ln.gamma", p.out_ln.gamma);
    reg.add("out_ln.beta", p.out_ln.beta);
    reg.add("out_w", p.out_w);
    reg.add("out_b", p.out_b);
}

void collect_vars(const DenoiserVars& v, std::vector<ad::Var>& out) {
    out.insert(out.end(), {v.in_w, v.in_b, v.temb.w1, v.temb.b1, v.temb.w2, v.temb.b2});
    for (const DenoiserBlockVars& b : v.blocks) {
        out.insert(out.end(), {b.ln1.gamma, b.ln1.beta, b.self_attn.w_q, b.self_attn.w_k, b.self_attn.w_v,
                               b.self_out, b.ln2.gamma, b.ln2.beta, b.cross_attn.w_q, b.cross_attn.w_k,
                               b.cross_attn.w_v, b.cross_out, b.ln3.gamma, b.ln3.beta, b.ffn.w1, b.ffn.b1,
                               b.ffn.w2, b.ffn.b2});
    }
    out.insert(out.end(), {v.out_ln.gamma, v.out_ln.beta, v.out_w, v.out_b});
}

}  // namespace cogsplat
