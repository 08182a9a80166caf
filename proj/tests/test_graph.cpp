// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cogsplat/fusion.hpp"
#include "cogsplat/scene_gen.hpp"

#include <cmath>

using namespace cogsplat;

namespace {

// Straight-line re-evaluations of the module formulas, written with explicit
// loops and std::exp only. These are the oracles the implementation is
// checked against.

Matrix oracle_softmax(const Matrix& s) {
    Matrix p(s.rows(), s.cols());
    for (int i = 0; i < s.rows(); ++i) {
        double mx = s(i, 0);
        for (int j = 1; j < s.cols(); ++j) mx = std::max(mx, s(i, j));
        double z = 0;
        for (int j = 0; j < s.cols(); ++j) z += std::exp(s(i, j) - mx);
        for (int j = 0; j < s.cols(); ++j) p(i, j) = std::exp(s(i, j) - mx) / z;
    }
    return p;
}

Matrix oracle_attention(const Matrix& q, const Matrix& k, const Matrix& v) {
    Matrix s = q * k.transpose() / std::sqrt(static_cast<double>(q.cols()));
    return oracle_softmax(s) * v;
}

double oracle_gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

Matrix oracle_mlp(const Matrix& x, const nn::MlpParams& p) {
    Matrix h = x * p.w1;
    for (int i = 0; i < h.rows(); ++i)
        for (int j = 0; j < h.cols(); ++j) h(i, j) = oracle_gelu(h(i, j) + p.b1(0, j));
    Matrix out = h * p.w2;
    for (int i = 0; i < out.rows(); ++i) out.row(i) += p.b2.row(0);
    return out;
}

GraphEncoderParams tiny_semantic(std::uint64_t seed, int gx, int gy, int d) {
    return init_graph_encoder(seed, "test.sem", GraphKind::semantic, d, gx, gy);
}

}  // namespace

TEST_CASE("single-token stream makes every node the projected token") {
    GraphEncoderParams p = tiny_semantic(0, 2, 2, 8);
    Matrix token = RngStream(1, "one-token").normal_matrix(1, 8);
    Matrix t_l = RngStream(1, "tl").normal_matrix(2, 8);
    LatentGraph g = build_graph(token, t_l, p, GraphKind::semantic);
    Eigen::RowVectorXd projected = token * p.node_attn.w_v;
    for (int i = 0; i < g.node_count(); ++i)
        CHECK((g.nodes.row(i) - projected).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("node extraction is permutation equivariant in the token rows") {
    GraphEncoderParams p = tiny_semantic(2, 2, 2, 8);
    RngStream s(3, "perm");
    Matrix tokens = s.normal_matrix(5, 8);
    Matrix t_l = s.normal_matrix(3, 8);
    LatentGraph g = build_graph(tokens, t_l, p, GraphKind::semantic);

    std::vector<int> perm{4, 2, 0, 3, 1};
    Matrix shuffled(5, 8);
    for (int i = 0; i < 5; ++i) shuffled.row(i) = tokens.row(perm[static_cast<std::size_t>(i)]);
    LatentGraph g2 = build_graph(shuffled, t_l, p, GraphKind::semantic);
    CHECK((g.nodes - g2.nodes).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((g.edges - g2.edges).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("build_graph matches a straight-line formula oracle") {
    const int d = 8, n = 2;
    GraphEncoderParams p = init_graph_encoder(0, "oracle.sem", GraphKind::semantic, d, n, 1);
    RngStream s(5, "oracle-io");
    Matrix tokens = s.normal_matrix(3, d);
    Matrix t_l = s.normal_matrix(2, d);
    LatentGraph g = build_graph(tokens, t_l, p, GraphKind::semantic);

    // Queries: [seed_i || PE2D(grid_i)].
    Matrix queries(n, 2 * d);
    for (int i = 0; i < n; ++i) {
        queries.block(i, 0, 1, d) = p.seeds.row(i);
        queries.block(i, d, 1, d) = nn::pe2d(i, 0, p.planar).transpose();
    }
    Matrix nodes = oracle_attention(queries * p.node_attn.w_q, tokens * p.node_attn.w_k,
                                    tokens * p.node_attn.w_v);
    CHECK((g.nodes - nodes).cwiseAbs().maxCoeff() < 1e-12);

    // Edges: E_ij = edgeMLP([N_i || N_j || attention([N_i || N_j] W_q, T_L, T_L)]).
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            Matrix pair(1, 2 * d);
            pair << nodes.row(i), nodes.row(j);
            Matrix ctx = oracle_attention(pair * p.ctx_attn.w_q, t_l * p.ctx_attn.w_k, t_l * p.ctx_attn.w_v);
            Matrix full(1, 3 * d);
            full << pair, ctx;
            Matrix e = oracle_mlp(full, p.edge_mlp);
            CHECK((g.edge(i, j) - e.row(0)).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("geometric stream uses the learnable depth table") {
    GraphEncoderParams p = init_graph_encoder(0, "oracle.geo", GraphKind::geometric, 8, 2, 1, 2);
    CHECK(p.node_count() == 4);
    RngStream s(6, "geo-io");
    Matrix tokens = s.normal_matrix(3, 8);
    Matrix t_l = s.normal_matrix(2, 8);
    LatentGraph g = build_graph(tokens, t_l, p, GraphKind::geometric);

    // Zeroing the depth table changes the nodes (the table participates).
    GraphEncoderParams p2 = p;
    p2.depth_table.setZero();
    LatentGraph g2 = build_graph(tokens, t_l, p2, GraphKind::geometric);
    CHECK((g.nodes - g2.nodes).cwiseAbs().maxCoeff() > 0.0);

    CHECK_THROWS_AS(build_graph(tokens, t_l, p, GraphKind::semantic), ConfigError);
    CHECK_THROWS_AS(build_graph(tokens, Matrix(0, 8), p, GraphKind::geometric), DimensionError);
}

TEST_CASE("message passing with a zeroed output layer is the identity") {
    GraphEncoderParams p = tiny_semantic(4, 2, 2, 8);
    p.msg_mlp.w2.setZero();
    p.msg_mlp.b2.setZero();
    RngStream s(7, "mp-id");
    LatentGraph g = build_graph(s.normal_matrix(4, 8), s.normal_matrix(2, 8), p, GraphKind::semantic);
    LatentGraph g2 = message_passing(g, p);
    CHECK(g2.nodes == g.nodes);
    CHECK(g2.edges == g.edges);
}

TEST_CASE("message passing with one node has no neighbors") {
    GraphEncoderParams p = tiny_semantic(5, 1, 1, 8);
    RngStream s(8, "mp-one");
    LatentGraph g = build_graph(s.normal_matrix(2, 8), s.normal_matrix(2, 8), p, GraphKind::semantic);
    LatentGraph g2 = message_passing(g, p);
    CHECK(g2.nodes == g.nodes);
}

TEST_CASE("message passing matches a triple-loop oracle") {
    const int d = 8, n = 3;
    GraphEncoderParams p = init_graph_encoder(1, "mp.sem", GraphKind::semantic, d, 3, 1);
    RngStream s(9, "mp-io");
    LatentGraph g = build_graph(s.normal_matrix(4, d), s.normal_matrix(3, d), p, GraphKind::semantic);
    LatentGraph updated = message_passing(g, p);

    for (int i = 0; i < n; ++i) {
        Eigen::RowVectorXd acc = g.nodes.row(i);
        for (int j = 0; j < n; ++j) {
            if (j == i) continue;
            Matrix input(1, 3 * d);
            input << g.nodes.row(i), g.nodes.row(j), g.edge(i, j);
            acc += oracle_mlp(input, p.msg_mlp).row(0);
        }
        CHECK((updated.nodes.row(i) - acc).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("fusion with a single node gives every token that value row") {
    const int d = 8;
    CognitionModel model = init_cognition_model(0, d, 1, 1, 1, 1, 1);
    RngStream s(10, "fuse-one");
    Matrix t_l = s.normal_matrix(3, d);
    LatentGraph sem{GraphKind::semantic, s.normal_matrix(1, d), Matrix::Zero(1, d)};
    LatentGraph geo{GraphKind::geometric, s.normal_matrix(1, d), Matrix::Zero(1, d)};
    CognitionGraph cog = common_fusion(sem, geo, t_l, model.fusion);

    Matrix joint(1, 2 * d);
    joint << sem.nodes, geo.nodes;
    Eigen::RowVectorXd v = joint * model.fusion.w_v;
    Matrix trace = attention_map(cog);
    for (int i = 0; i < 3; ++i) {
        CHECK(trace(i, 0) == 1.0);
        // N^cog equals the single value row; check through the full Eq. 7 path.
        Eigen::RowVectorXd pre = t_l.row(i) + v;
        Vector normed = nn::layer_norm(pre.transpose(), model.fusion.ln);
        Matrix fused = oracle_mlp(normed.transpose(), model.fusion.mlp) + normed.transpose();
        CHECK((cog.tokens.row(i) - fused.row(0)).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("fusion output is invariant to a joint node permutation") {
    const int d = 8, n = 6;
    FusionParams fp = init_fusion(2, "fuse-perm", d);
    RngStream s(11, "fuse-perm-io");
    Matrix sem = s.normal_matrix(n, d), geo = s.normal_matrix(n, d), t_l = s.normal_matrix(4, d);
    LatentGraph gs{GraphKind::semantic, sem, Matrix::Zero(n * n, d)};
    LatentGraph gg{GraphKind::geometric, geo, Matrix::Zero(n * n, d)};
    CognitionGraph base = common_fusion(gs, gg, t_l, fp);

    std::vector<int> perm{5, 3, 0, 4, 1, 2};
    Matrix semp(n, d), geop(n, d);
    for (int i = 0; i < n; ++i) {
        semp.row(i) = sem.row(perm[static_cast<std::size_t>(i)]);
        geop.row(i) = geo.row(perm[static_cast<std::size_t>(i)]);
    }
    LatentGraph gsp{GraphKind::semantic, semp, gs.edges};
    LatentGraph ggp{GraphKind::geometric, geop, gg.edges};
    CognitionGraph permuted = common_fusion(gsp, ggp, t_l, fp);
    CHECK((base.tokens - permuted.tokens).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("fusion matches a straight-line evaluation of the three equations") {
    const int d = 8, n = 2, m = 2;
    FusionParams fp = init_fusion(0, "fuse-oracle", d);
    RngStream s(12, "fuse-oracle-io");
    Matrix sem = s.normal_matrix(n, d), geo = s.normal_matrix(n, d), t_l = s.normal_matrix(m, d);
    LatentGraph gs{GraphKind::semantic, sem, Matrix::Zero(n * n, d)};
    LatentGraph gg{GraphKind::geometric, geo, Matrix::Zero(n * n, d)};
    CognitionGraph cog = common_fusion(gs, gg, t_l, fp);

    Matrix joint(n, 2 * d);
    joint << sem, geo;
    Matrix q = t_l * fp.w_q;
    Matrix k = joint * fp.w_k;
    Matrix v = joint * fp.w_v;
    Matrix ncog = oracle_attention(q, k, v);
    for (int i = 0; i < m; ++i) {
        Eigen::RowVectorXd pre = t_l.row(i) + ncog.row(i);
        Vector normed = nn::layer_norm(pre.transpose(), fp.ln);
        Matrix fused = oracle_mlp(normed.transpose(), fp.mlp) + normed.transpose();
        CHECK((cog.tokens.row(i) - fused.row(0)).cwiseAbs().maxCoeff() < 1e-11);
    }
}

TEST_CASE("fusion rejects node-count mismatch between streams") {
    const int d = 8;
    FusionParams fp = init_fusion(3, "fuse-bad", d);
    RngStream s(13, "fuse-bad-io");
    LatentGraph gs{GraphKind::semantic, s.normal_matrix(2, d), Matrix::Zero(4, d)};
    LatentGraph gg{GraphKind::geometric, s.normal_matrix(3, d), Matrix::Zero(9, d)};
    CHECK_THROWS_AS(common_fusion(gs, gg, s.normal_matrix(2, d), fp), DimensionError);
}

TEST_CASE("attention map rows sum to one; absent trace raises a state error") {
    CognitionModel model = init_cognition_model(1, 8, 2, 2, 2, 1, 2);
    ProjectionBank bank = ProjectionBank::make(0, 8);
    GeneratedScene g = gen_scene(2, 3);
    CognitionGraph cog = cognition_forward(synth_tokens(g.spec, bank), model);
    Matrix trace = attention_map(cog);
    CHECK(trace.cols() == 4);
    for (int i = 0; i < trace.rows(); ++i) CHECK(std::abs(trace.row(i).sum() - 1.0) < 1e-6);

    CognitionGraph stripped{cog.tokens, std::nullopt};
    CHECK_THROWS_AS(attention_map(stripped), StateError);
}

TEST_CASE("cognition forward gradients match finite differences") {
    CognitionModel model = init_cognition_model(4, 8, 2, 1, 1, 1, 2);
    ProjectionBank bank = ProjectionBank::make(1, 8);
    GeneratedScene scene = gen_scene(6, 2);
    TokenBundle bundle = synth_tokens(scene.spec, bank);

    ParamRegistry reg;
    register_params(model, reg);

    auto run = [&](ad::Tape& t, std::vector<ad::Var>* vars_out) {
        CognitionVars vars = bind(t, model);
        if (vars_out != nullptr) collect_vars(model, vars, *vars_out);
        FusionOut out = cognition_forward(t, t.constant(bundle.t_s), t.constant(bundle.t_g),
                                          t.constant(bundle.t_l), model, vars);
        return ad::sum(out.tokens);
    };

    nn::DifferentiableScalarFn fn{
        [&](const Vector& x) {
            reg.unflatten(x);
            ad::Tape t;
            double v = t.val(run(t, nullptr))(0, 0);
            return v;
        },
        [&](const Vector& x) {
            reg.unflatten(x);
            ad::Tape t;
            std::vector<ad::Var> vars;
            ad::Var loss = run(t, &vars);
            t.backward(loss);
            Vector g(x.size());
            Eigen::Index at = 0;
            for (ad::Var v : vars) {
                Matrix gv = t.grad_or_zero(v);
                g.segment(at, gv.size()) = Eigen::Map<const Vector>(gv.data(), gv.size());
                at += gv.size();
            }
            return g;
        },
    };
    Vector x0 = reg.flatten();
    CHECK(nn::grad_check(fn, x0, 1e-5) < 1e-5);
    reg.unflatten(x0);
}

TEST_CASE("latent drift grows continuously with logical perturbation size") {
    CognitionModel model = init_cognition_model(5, 8, 2, 2, 2, 1, 2);
    ProjectionBank bank = ProjectionBank::make(2, 8);
    TokenBundle bundle = synth_tokens(gen_scene(9, 3).spec, bank);
    CognitionGraph base = cognition_forward(bundle, model);
    const double base_norm = base.tokens.norm();

    RngStream s(14, "drift");
    std::vector<double> deltas{1e-3, 1e-2, 1e-1};
    std::vector<double> drifts;
    for (double delta : deltas) {
        double acc = 0;
        const int trials = 8;
        for (int r = 0; r < trials; ++r) {
            Matrix u = s.normal_matrix(bundle.t_l.rows(), bundle.t_l.cols());
            TokenBundle perturbed = bundle;
            perturbed.t_l += u * (delta / u.norm());
            CognitionGraph cog = cognition_forward(perturbed, model);
            acc += (cog.tokens - base.tokens).norm() / base_norm;
        }
        drifts.push_back(acc / trials);
    }
    CHECK(drifts[0] <= drifts[1]);
    CHECK(drifts[1] <= drifts[2]);
    // No blow-up: growth between adjacent levels stays within 100x the
    // delta ratio (10), i.e. a factor of 1000.
    CHECK(drifts[1] <= drifts[0] * 1000.0);
    CHECK(drifts[2] <= drifts[1] * 1000.0);
}
