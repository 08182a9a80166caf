// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/autoencoder.hpp"

namespace cogsplat {

void EncoderParams::validate() const {
    featurizer.validate();
    post.validate();
    ln.validate();
    if (featurizer.w1.rows() != GaussianScene::kParamsPerGaussian)
        throw ConfigError("EncoderParams: featurizer must consume 14-wide Gaussian rows");
    if (featurizer.w2.cols() != w_k.rows() || featurizer.w2.cols() != w_v.rows())
        throw ConfigError("EncoderParams: feature dimension does not chain into pooling");
    if (pool_q.cols() != w_k.cols()) throw ConfigError("EncoderParams: pooling query/key dims differ");
    if (post.w1.rows() != latent_dim() || ln.gamma.cols() != latent_dim())
        throw ConfigError("EncoderParams: post-MLP/layer-norm must operate on latent rows");
}

void DecoderParams::validate() const {
    head.validate();
    if (n_gauss <= 0) throw ConfigError("DecoderParams: n_gauss must be positive");
    if (slot_q.rows() != n_gauss) throw ConfigError("DecoderParams: one slot query per Gaussian required");
    if (slot_q.cols() != w_k.cols()) throw ConfigError("DecoderParams: slot query/key dims differ");
    if (w_k.rows() != w_v.rows()) throw ConfigError("DecoderParams: key/value input dims differ");
    if (head.w1.rows() != w_v.cols()) throw ConfigError("DecoderParams: head input must match value dim");
    if (head.w2.cols() != GaussianScene::kParamsPerGaussian)
        throw ConfigError("DecoderParams: head must emit 14 parameter values");
    if (base.rows() != n_gauss || base.cols() != GaussianScene::kParamsPerGaussian)
        throw ConfigError("DecoderParams: base table must be n_gauss x 14");
}

EncoderParams init_encoder(std::uint64_t seed, Eigen::Index latent_tokens, Eigen::Index latent_dim,
                           Eigen::Index feat_dim) {
    EncoderParams p;
    p.featurizer = nn::init_mlp(seed, "ae.enc.featurizer", GaussianScene::kParamsPerGaussian, feat_dim, feat_dim);
    p.pool_q = RngStream(seed, "ae.enc.pool_q").normal_matrix(latent_tokens, feat_dim) /
               std::sqrt(static_cast<double>(feat_dim));
    p.w_k = RngStream(seed, "ae.enc.w_k").normal_matrix(feat_dim, feat_dim) /
            std::sqrt(static_cast<double>(feat_dim));
    p.w_v = RngStream(seed, "ae.enc.w_v").normal_matrix(feat_dim, latent_dim) /
            std::sqrt(static_cast<double>(feat_dim));
    p.post = nn::init_mlp(seed, "ae.enc.post", latent_dim, 4 * latent_dim, latent_dim);
    p.ln = nn::init_layer_norm(latent_dim);
    p.validate();
    return p;
}

DecoderParams init_decoder(std::uint64_t seed, Eigen::Index latent_tokens, Eigen::Index latent_dim,
                           int n_gauss, Eigen::Index hidden) {
    (void)latent_tokens;
    DecoderParams p;
    p.n_gauss = n_gauss;
    const Eigen::Index d_a = latent_dim;
    p.slot_q = RngStream(seed, "ae.dec.slot_q").normal_matrix(n_gauss, d_a) /
               std::sqrt(static_cast<double>(d_a));
    p.w_k = RngStream(seed, "ae.dec.w_k").normal_matrix(latent_dim, d_a) /
            std::sqrt(static_cast<double>(latent_dim));
    p.w_v = RngStream(seed, "ae.dec.w_v").normal_matrix(latent_dim, latent_dim) /
            std::sqrt(static_cast<double>(latent_dim));
    p.head = nn::init_mlp(seed, "ae.dec.head", latent_dim, hidden, GaussianScene::kParamsPerGaussian);
    p.head.w2 *= 0.5;
    // Base init: slots spread over the cube with moderate footprints, neutral
    // rotation offset, low opacity and mid-gray color.
    // Spread translucent slots with varied colors; per-slot anchors keep each
    // Gaussian individually recoverable while the conditional head learns
    // scene-specific corrections.
    p.base = Matrix::Zero(n_gauss, GaussianScene::kParamsPerGaussian);
    p.base.leftCols<3>() = RngStream(seed, "ae.dec.base_centers").uniform_matrix(n_gauss, 3, -0.8, 0.8);
    p.base.middleCols<3>(3).setConstant(-2.1);  // sigma ~ 0.12
    p.base.col(10).setConstant(-2.2);           // opacity ~ 0.10
    p.base.rightCols<3>() = RngStream(seed, "ae.dec.base_colors").uniform_matrix(n_gauss, 3, -1.0, 1.0);
    p.validate();
    return p;
}

EncoderVars bind(ad::Tape& t, const EncoderParams& p) {
    p.validate();
    return EncoderVars{nn::bind(t, p.featurizer), t.leaf(p.pool_q), t.leaf(p.w_k), t.leaf(p.w_v),
                       nn::bind(t, p.post), nn::bind(t, p.ln)};
}

DecoderVars bind(ad::Tape& t, const DecoderParams& p) {
    p.validate();
    return DecoderVars{t.leaf(p.slot_q), t.leaf(p.w_k), t.leaf(p.w_v), nn::bind(t, p.head), t.leaf(p.base)};
}

ad::Var encode_scene(ad::Tape& t, ad::Var scene_params, const EncoderVars& vars) {
    ad::Var features = nn::mlp(t, scene_params, vars.featurizer);
    ad::Var pooled = nn::attention(t, vars.pool_q, ad::matmul(features, vars.w_k),
                                   ad::matmul(features, vars.w_v))
                         .out;
    ad::Var refined = ad::add(pooled, nn::mlp(t, pooled, vars.post));
    return nn::layer_norm(t, refined, vars.ln);
}

Matrix encode_scene(const GaussianScene& scene, const EncoderParams& params) {
    if (!scene.valid()) throw NumericError("encode_scene: invalid scene");
    ad::Tape t;
    EncoderVars vars = bind(t, params);
    return t.val(encode_scene(t, t.constant(scene.to_matrix()), vars));
}

RenderInputs decode_latent(ad::Tape& t, ad::Var latent, const DecoderParams& meta, const DecoderVars& vars) {
    const Eigen::Index n = meta.n_gauss;
    ad::Var slots = nn::attention(t, vars.slot_q, ad::matmul(latent, vars.w_k),
                                  ad::matmul(latent, vars.w_v))
                        .out;
    ad::Var mod = nn::mlp(t, slots, vars.head);

    Matrix quat_offset = Matrix::Zero(n, 4);
    quat_offset.col(0).setOnes();
    auto field = [&](Eigen::Index col, Eigen::Index width, double gain) {
        return ad::add(ad::block(vars.base, 0, col, n, width),
                       ad::scale(ad::block(mod, 0, col, n, width), gain));
    };

    RenderInputs out;
    out.centers = field(0, 3, meta.center_gain);
    out.log_scales = field(3, 3, meta.scale_gain);
    out.rotations = ad::normalize_rows(ad::add(field(6, 4, meta.rotation_gain), t.constant(quat_offset)));
    out.opacity_logits = field(10, 1, meta.opacity_gain);
    // Color stays an unbounded pre-activation; the sigmoid bounds it.
    out.colors = ad::sigmoid(ad::add(ad::block(vars.base, 0, 11, n, 3), ad::block(mod, 0, 11, n, 3)));
    return out;
}

GaussianScene decode_latent(const Matrix& latent, const DecoderParams& params) {
    require_finite(latent, "decode_latent input");
    ad::Tape t;
    DecoderVars vars = bind(t, params);
    RenderInputs in = decode_latent(t, t.constant(latent), params, vars);
    return scene_from_inputs(t, in);
}

GaussianScene scene_from_inputs(const ad::Tape& t, const RenderInputs& in) {
    const Eigen::Index n = t.val(in.centers).rows();
    Matrix m(n, GaussianScene::kParamsPerGaussian);
    m.leftCols<3>() = t.val(in.centers);
    m.middleCols<3>(3) = t.val(in.log_scales);
    m.middleCols<4>(6) = t.val(in.rotations);
    m.col(10) = t.val(in.opacity_logits);
    m.rightCols<3>() = t.val(in.colors);
    return GaussianScene::from_matrix(m);
}

void register_params(EncoderParams& p, ParamRegistry& reg) {
    reg.add("featurizer.w1", p.featurizer.w1);
    reg.add("featurizer.b1", p.featurizer.b1);
    reg.add("featurizer.w2", p.featurizer.w2);
    reg.add("featurizer.b2", p.featurizer.b2);
    reg.add("pool_q", p.pool_q);
    reg.add("w_k", p.w_k);
    reg.add("w_v", p.w_v);
    reg.add("post.w1", p.post.w1);
    reg.add("post.b1", p.post.b1);
    reg.add("post.w2", p.post.w2);
    reg.add("post.b2", p.post.b2);
    reg.add("ln.gamma", p.ln.gamma);
    reg.add("ln.beta", p.ln.beta);
}

void register_params(DecoderParams& p, ParamRegistry& reg) {
    reg.add("base", p.base);
    reg.add("slot_q", p.slot_q);
    reg.add("w_k", p.w_k);
    reg.add("w_v", p.w_v);
    reg.add("head.w1", p.head.w1);
    reg.add("head.b1", p.head.b1);
    reg.add("head.w2", p.head.w2);
    reg.add("head.b2", p.head.b2);
}

void collect_vars(const EncoderVars& v, std::vector<ad::Var>& out) {
    out.insert(out.end(), {v.featurizer.w1, v.featurizer.b1, v.featurizer.w2, v.featurizer.b2, v.pool_q,
                           v.w_k, v.w_v, v.post.w1, v.post.b1, v.post.w2, v.post.b2, v.ln.gamma, v.ln.beta});
}

void collect_vars(const DecoderVars& v, std::vector<ad::Var>& out) {
    out.insert(out.end(), {v.base, v.slot_q, v.w_k, v.w_v, v.head.w1, v.head.b1, v.head.w2, v.head.b2});
}

}  // namespace cogsplat
