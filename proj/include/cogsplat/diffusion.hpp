// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/adamw.hpp"
#include "cogsplat/nn.hpp"

#include <functional>
#include <vector>

namespace cogsplat {

/// Linear beta schedule. Arrays are indexed by timestep with entry 0 unused
/// for beta and defined as the identity for alpha_bar (so alpha_bar(0) = 1).
struct NoiseSchedule {
    int timesteps = 0;
    Vector beta;       // size T+1, beta(0) = 0
    Vector alpha;      // size T+1, alpha(0) = 1
    Vector alpha_bar;  // size T+1, alpha_bar(0) = 1, strictly decreasing

    double abar(int t) const {
        if (t < 0 || t > timesteps) throw ConfigError("NoiseSchedule: timestep out of range");
        return alpha_bar(t);
    }
};

NoiseSchedule make_schedule(int timesteps, double beta_start, double beta_end);

/// Closed-form forward marginal z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps.
Matrix forward_noise(const Matrix& z0, int t, const Matrix& eps, const NoiseSchedule& sched);

/// Half sin, half cos at geometric frequencies.
Eigen::RowVectorXd timestep_embedding(int t, Eigen::Index dim, double base = 10000.0);

struct DenoiserBlock {
    nn::LayerNormParams ln1;
    nn::AttentionParams self_attn;  // d_m -> d_m
    Matrix self_out;                // d_m x d_m
    nn::LayerNormParams ln2;
    nn::AttentionParams cross_attn;  // queries d_m, keys/values from cognition tokens
    Matrix cross_out;                // d_m x d_m
    nn::LayerNormParams ln3;
    nn::MlpParams ffn;  // d_m -> 4 d_m -> d_m
};

/// Conditional noise predictor: latent tokens self-attend and cross-attend
/// into the cognition graph tokens inside every block.
struct DenoiserParams {
    Matrix in_w;   // d_z x d_m
    Matrix in_b;   // 1 x d_m
    nn::MlpParams temb;  // d_m -> 4 d_m -> d_m on the sinusoidal embedding
    std::vector<DenoiserBlock> blocks;
    nn::LayerNormParams out_ln;
    Matrix out_w;  // d_m x d_z
    Matrix out_b;  // 1 x d_z
    double temb_base = 10000.0;

    Eigen::Index model_dim() const { return in_w.cols(); }
    Eigen::Index latent_dim() const { return in_w.rows(); }
    void validate() const;
};

DenoiserParams init_denoiser(std::uint64_t seed, Eigen::Index latent_dim, Eigen::Index model_dim,
                             Eigen::Index cond_dim, int layers);

struct DenoiserBlockVars {
    nn::LayerNormVars ln1;
    nn::AttentionVars self_attn;
    ad::Var self_out;
    nn::LayerNormVars ln2;
    nn::AttentionVars cross_attn;
    ad::Var cross_out;
    nn::LayerNormVars ln3;
    nn::MlpVars ffn;
};
struct DenoiserVars {
    ad::Var in_w, in_b;
    nn::MlpVars temb;
    std::vector<DenoiserBlockVars> blocks;
    nn::LayerNormVars out_ln;
    ad::Var out_w, out_b;
};

DenoiserVars bind(ad::Tape& t, const DenoiserParams& p);

ad::Var predict_noise(ad::Tape& t, ad::Var z_t, int timestep, ad::Var g_cog, const DenoiserParams& meta,
                      const DenoiserVars& vars);
Matrix predict_noise(const Matrix& z_t, int timestep, const Matrix& g_cog, const DenoiserParams& params);

/// Evenly spaced subsequence from T down to 1 (inclusive).
std::vector<int> ddim_timesteps(int total, int steps);

using NoisePredictor = std::function<Matrix(const Matrix& z_t, int t)>;

/// Deterministic DDIM (eta = 0) over the evenly spaced subsequence, ending
/// with the exact step to alpha_bar = 1.
Matrix ddim_sample(const Matrix& z_t_start, const NoiseSchedule& sched, int steps,
                   const NoisePredictor& predictor);

/// Differentiable truncated sampler used in end-to-end fine-tuning.
ad::Var ddim_sample(ad::Tape& t, ad::Var z_t_start, ad::Var g_cog, const NoiseSchedule& sched, int steps,
                    const DenoiserParams& meta, const DenoiserVars& vars);

void register_params(DenoiserParams& p, ParamRegistry& reg);
void collect_vars(const DenoiserVars& v, std::vector<ad::Var>& out);

}  // namespace cogsplat
