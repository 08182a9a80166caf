// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/adamw.hpp"
#include "cogsplat/nn.hpp"
#include "cogsplat/render.hpp"

namespace cogsplat {

/// Set encoder E_GS: per-Gaussian featurization followed by attention pooling
/// into k latent tokens. Permutation invariant by construction. Latent scenes
/// are k x d_z matrices.
struct EncoderParams {
    nn::MlpParams featurizer;  // 14 -> hidden -> d_f
    Matrix pool_q;             // k x d_a, learnable pooling queries
    Matrix w_k;                // d_f x d_a
    Matrix w_v;                // d_f x d_z
    nn::MlpParams post;        // d_z -> 4 d_z -> d_z
    nn::LayerNormParams ln;    // keeps latent rows at a scale the diffusion can noise

    Eigen::Index latent_tokens() const { return pool_q.rows(); }
    Eigen::Index latent_dim() const { return w_v.cols(); }
    void validate() const;
};

/// Decoder D_GS: one learnable query per Gaussian slot cross-attends into the
/// latent tokens, a shared MLP head emits scene-conditional deviations, and a
/// learnable per-slot base table anchors each slot's parameters. The base
/// gives every slot its own direct gradient path, which keeps misplaced slots
/// recoverable instead of letting a shared bias fade the whole scene.
/// Activations guarantee valid Gaussians for any finite latent.
struct DecoderParams {
    Matrix slot_q;       // n_gauss x d_a, learnable slot queries
    Matrix w_k;          // d_z x d_a
    Matrix w_v;          // d_z x d_v
    nn::MlpParams head;  // d_v -> hidden -> 14
    Matrix base;         // n_gauss x 14, learnable per-slot anchor
    int n_gauss = 0;
    // Relative modulation gains of the shared head per field.
    double center_gain = 1.0;
    double scale_gain = 1.0;
    double rotation_gain = 1.0;
    double opacity_gain = 1.0;

    void validate() const;
};

EncoderParams init_encoder(std::uint64_t seed, Eigen::Index latent_tokens, Eigen::Index latent_dim,
                           Eigen::Index feat_dim);
DecoderParams init_decoder(std::uint64_t seed, Eigen::Index latent_tokens, Eigen::Index latent_dim,
                           int n_gauss, Eigen::Index hidden);

struct EncoderVars {
    nn::MlpVars featurizer;
    ad::Var pool_q, w_k, w_v;
    nn::MlpVars post;
    nn::LayerNormVars ln;
};
struct DecoderVars {
    ad::Var slot_q, w_k, w_v;
    nn::MlpVars head;
    ad::Var base;
};

EncoderVars bind(ad::Tape& t, const EncoderParams& p);
DecoderVars bind(ad::Tape& t, const DecoderParams& p);

/// scene_params is the N x 14 stored-parameter matrix of a GaussianScene.
ad::Var encode_scene(ad::Tape& t, ad::Var scene_params, const EncoderVars& vars);
Matrix encode_scene(const GaussianScene& scene, const EncoderParams& params);

/// Decoded Gaussian parameter matrices in stored form.
RenderInputs decode_latent(ad::Tape& t, ad::Var latent, const DecoderParams& meta, const DecoderVars& vars);
GaussianScene decode_latent(const Matrix& latent, const DecoderParams& params);

GaussianScene scene_from_inputs(const ad::Tape& t, const RenderInputs& in);

void register_params(EncoderParams& p, ParamRegistry& reg);
void register_params(DecoderParams& p, ParamRegistry& reg);
void collect_vars(const EncoderVars& v, std::vector<ad::Var>& out);
void collect_vars(const DecoderVars& v, std::vector<ad::Var>& out);

}  // namespace cogsplat
