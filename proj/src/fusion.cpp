// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/fusion.hpp"

#include <string>

namespace cogsplat {

void FusionParams::validate() const {
    const Eigen::Index d = dim();
    if (w_k.rows() != 2 * d || w_v.rows() != 2 * d)
        throw ConfigError("FusionParams: key/value input dimension must be exactly 2d");
    if (w_q.cols() != w_k.cols()) throw ConfigError("FusionParams: query/key dimensions differ");
    if (w_v.cols() != d) throw ConfigError("FusionParams: value dimension must equal d");
    ln.validate();
    mlp.validate();
    if (ln.gamma.cols() != d || mlp.w1.rows() != d || mlp.w2.cols() != d)
        throw ConfigError("FusionParams: layer norm and MLP must operate on d-wide tokens");
}

FusionParams init_fusion(std::uint64_t seed, std::string_view name, Eigen::Index d) {
    const std::string base(name);
    FusionParams p;
    p.w_q = RngStream(seed, base + ".w_q").normal_matrix(d, d) / std::sqrt(static_cast<double>(d));
    p.w_k = RngStream(seed, base + ".w_k").normal_matrix(2 * d, d) / std::sqrt(static_cast<double>(2 * d));
    p.w_v = RngStream(seed, base + ".w_v").normal_matrix(2 * d, d) / std::sqrt(static_cast<double>(2 * d));
    p.ln = nn::init_layer_norm(d);
    p.mlp = nn::init_mlp(seed, base + ".mlp", d, 4 * d, d);
    p.validate();
    return p;
}

FusionVars bind(ad::Tape& t, const FusionParams& p) {
    p.validate();
    return FusionVars{t.leaf(p.w_q), t.leaf(p.w_k), t.leaf(p.w_v), nn::bind(t, p.ln), nn::bind(t, p.mlp)};
}

FusionOut common_fusion(ad::Tape& t, ad::Var sem_nodes, ad::Var geo_nodes, ad::Var t_l,
                        const FusionVars& vars) {
    if (t.val(sem_nodes).rows() != t.val(geo_nodes).rows())
        throw DimensionError("common_fusion: streams must agree on node count for feature concatenation");
    ad::Var joint = ad::concat_cols(sem_nodes, geo_nodes);  // n x 2d
    ad::Var q = ad::matmul(t_l, vars.w_q);
    ad::Var k = ad::matmul(joint, vars.w_k);
    ad::Var v = ad::matmul(joint, vars.w_v);
    nn::AttentionOut attn = nn::attention(t, q, k, v);
    ad::Var stabilized = nn::layer_norm(t, ad::add(t_l, attn.out), vars.ln);
    ad::Var fused = ad::add(nn::mlp(t, stabilized, vars.mlp), stabilized);
    return FusionOut{fused, attn.weights, v};
}

CognitionGraph common_fusion(const LatentGraph& g_sem, const LatentGraph& g_geo, const Matrix& t_l,
                             const FusionParams& params) {
    ad::Tape t;
    FusionVars vars = bind(t, params);
    FusionOut out =
        common_fusion(t, t.constant(g_sem.nodes), t.constant(g_geo.nodes), t.constant(t_l), vars);
    CognitionGraph cog;
    cog.tokens = t.val(out.tokens);
    cog.trace = t.val(out.trace);
    return cog;
}

Matrix attention_map(const CognitionGraph& cog) {
    if (!cog.trace.has_value()) throw StateError("attention_map: no trace was retained at fusion time");
    return *cog.trace;
}

void CognitionModel::validate() const {
    sem.validate();
    geo.validate();
    fusion.validate();
    if (sem.kind != GraphKind::semantic || geo.kind != GraphKind::geometric)
        throw ConfigError("CognitionModel: stream kinds are swapped");
    if (sem.node_count() != geo.node_count())
        throw ConfigError("CognitionModel: streams must share the node count n");
    if (sem.dim() != geo.dim() || sem.dim() != fusion.dim())
        throw ConfigError("CognitionModel: token dimension mismatch across components");
    if (message_rounds < 0) throw ConfigError("CognitionModel: negative message rounds");
}

CognitionModel init_cognition_model(std::uint64_t seed, Eigen::Index d, int sem_grid_x, int sem_grid_y,
                                    int geo_grid_x, int geo_grid_y, int depth_levels, int message_rounds) {
    CognitionModel m;
    m.sem = init_graph_encoder(seed, "graph.sem", GraphKind::semantic, d, sem_grid_x, sem_grid_y);
    m.geo = init_graph_encoder(seed, "graph.geo", GraphKind::geometric, d, geo_grid_x, geo_grid_y,
                               depth_levels);
    m.fusion = init_fusion(seed, "fusion", d);
    m.message_rounds = message_rounds;
    m.validate();
    return m;
}

CognitionVars bind(ad::Tape& t, const CognitionModel& m) {
    return CognitionVars{bind(t, m.sem), bind(t, m.geo), bind(t, m.fusion)};
}

FusionOut cognition_forward(ad::Tape& t, ad::Var t_s, ad::Var t_g, ad::Var t_l,
                            const CognitionModel& model, const CognitionVars& vars) {
    GraphOut sem = build_graph(t, t_s, t_l, model.sem, vars.sem);
    GraphOut geo = build_graph(t, t_g, t_l, model.geo, vars.geo);
    for (int r = 0; r < model.message_rounds; ++r) {
        sem.nodes = message_passing(t, sem, vars.sem);
        geo.nodes = message_passing(t, geo, vars.geo);
    }
    return common_fusion(t, sem.nodes, geo.nodes, t_l, vars.fusion);
}

void register_params(FusionParams& p, ParamRegistry& reg) {
    reg.add("w_q", p.w_q);
    reg.add("w_k", p.w_k);
    reg.add("w_v", p.w_v);
    reg.add("ln.gamma", p.ln.gamma);
    reg.add("ln.beta", p.ln.beta);
    reg.add("mlp.w1", p.mlp.w1);
    reg.add("mlp.b1", p.mlp.b1);
    reg.add("mlp.w2", p.mlp.w2);
    reg.add("mlp.b2", p.mlp.b2);
}

void collect_vars(const FusionVars& v, std::vector<ad::Var>& out) {
    out.push_back(v.w_q);
    out.push_back(v.w_k);
    out.push_back(v.w_v);
    out.push_back(v.ln.gamma);
    out.push_back(v.ln.beta);
    out.push_back(v.mlp.w1);
    out.push_back(v.mlp.b1);
    out.push_back(v.mlp.w2);
    out.push_back(v.mlp.b2);
}

void register_params(CognitionModel& m, ParamRegistry& reg) {
    ParamRegistry sem, geo, fus;
    register_params(m.sem, sem);
    register_params(m.geo, geo);
    register_params(m.fusion, fus);
    reg.add_group("sem", sem);
    reg.add_group("geo", geo);
    reg.add_group("fusion", fus);
}

void collect_vars(const CognitionModel& m, const CognitionVars& v, std::vector<ad::Var>& out) {
    collect_vars(m.sem, v.sem, out);
    collect_vars(m.geo, v.geo, out);
    collect_vars(v.fusion, out);
}

CognitionGraph cognition_forward(const TokenBundle& bundle, const CognitionModel& model) {
    ad::Tape t;
    CognitionVars vars = bind(t, model);
    FusionOut out = cognition_forward(t, t.constant(bundle.t_s), t.constant(bundle.t_g),
                                      t.constant(bundle.t_l), model, vars);
    CognitionGraph cog;
    cog.tokens = t.val(out.tokens);
    cog.trace = t.val(out.trace);
    return cog;
}

}  // namespace cogsplat
