// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/graph.hpp"

#include <string>

namespace cogsplat {

void GraphEncoderParams::validate() const {
    if (seeds.rows() < 1) throw ConfigError("GraphEncoderParams: need at least one query seed");
    if (static_cast<int>(grid.size()) != node_count())
        throw ConfigError("GraphEncoderParams: grid size must match the seed count");
    const Eigen::Index d = dim();
    if (kind == GraphKind::semantic) {
        if (planar.dim != d) throw ConfigError("GraphEncoderParams: semantic embedding dim must equal d");
    } else {
        if (planar.dim + depth_table.cols() != d)
            throw ConfigError("GraphEncoderParams: geometric embedding dims must sum to d");
        if (depth_table.rows() < 1) throw ConfigError("GraphEncoderParams: depth table needs at least one level");
        for (const auto& g : grid)
            if (g[2] < 0 || g[2] >= depth_table.rows())
                throw ConfigError("GraphEncoderParams: grid depth index outside table");
    }
    node_attn.validate();
    ctx_attn.validate();
    edge_mlp.validate();
    msg_mlp.validate();
    if (node_attn.w_q.rows() != 2 * d || ctx_attn.w_q.rows() != 2 * d)
        throw ConfigError("GraphEncoderParams: query projections expect concatenated inputs of width 2d");
}

GraphEncoderParams init_graph_encoder(std::uint64_t seed, std::string_view name, GraphKind kind,
                                      Eigen::Index d, int grid_x, int grid_y, int depth_levels) {
    const std::string base(name);
    GraphEncoderParams p;
    p.kind = kind;
    const int n = kind == GraphKind::semantic ? grid_x * grid_y : grid_x * grid_y * depth_levels;
    p.seeds = RngStream(seed, base + ".seeds").normal_matrix(n, d) / std::sqrt(static_cast<double>(d));

    if (kind == GraphKind::semantic) {
        p.planar = nn::PosEmbed2D{static_cast<int>(d), 10000.0};
        for (int y = 0; y < grid_y; ++y)
            for (int x = 0; x < grid_x; ++x) p.grid.push_back({x, y, 0});
    } else {
        if (d % 2 != 0) throw ConfigError("init_graph_encoder: geometric stream needs even d");
        p.planar = nn::PosEmbed2D{static_cast<int>(d / 2), 10000.0};
        p.depth_table =
            RngStream(seed, base + ".depth_table").normal_matrix(depth_levels, d / 2) * 0.02;
        for (int z = 0; z < depth_levels; ++z)
            for (int y = 0; y < grid_y; ++y)
                for (int x = 0; x < grid_x; ++x) p.grid.push_back({x, y, z});
    }

    p.node_attn = nn::init_attention(seed, base + ".node_attn", 2 * d, d, d, d);
    p.ctx_attn = nn::init_attention(seed, base + ".ctx_attn", 2 * d, d, d, d);
    p.edge_mlp = nn::init_mlp(seed, base + ".edge_mlp", 3 * d, 4 * d, d);
    p.msg_mlp = nn::init_mlp(seed, base + ".msg_mlp", 3 * d, 4 * d, d);
    p.validate();
    return p;
}

GraphEncoderVars bind(ad::Tape& t, const GraphEncoderParams& p) {
    GraphEncoderVars v;
    v.seeds = t.leaf(p.seeds);
    if (p.kind == GraphKind::geometric) v.depth_table = t.leaf(p.depth_table);
    v.node_attn = nn::bind(t, p.node_attn);
    v.ctx_attn = nn::bind(t, p.ctx_attn);
    v.edge_mlp = nn::bind(t, p.edge_mlp);
    v.msg_mlp = nn::bind(t, p.msg_mlp);
    return v;
}

namespace {

// Positional embedding rows for the whole query lattice.
ad::Var embedding_rows(ad::Tape& t, const GraphEncoderParams& meta, const GraphEncoderVars& vars) {
    const int n = meta.node_count();
    if (meta.kind == GraphKind::semantic) {
        Matrix pe(n, meta.planar.dim);
        for (int i = 0; i < n; ++i)
            pe.row(i) = nn::pe2d(meta.grid[static_cast<std::size_t>(i)][0],
                                 meta.grid[static_cast<std::size_t>(i)][1], meta.planar)
                            .transpose();
        return t.constant(pe);
    }
    Matrix planar(n, meta.planar.dim);
    std::vector<int> depth_rows(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const auto& g = meta.grid[static_cast<std::size_t>(i)];
        planar.row(i) = nn::pe2d(g[0], g[1], meta.planar).transpose();
        depth_rows[static_cast<std::size_t>(i)] = g[2];
    }
    return ad::concat_cols(t.constant(planar), ad::gather_rows(vars.depth_table, depth_rows));
}

// Pair-major [N_i || N_j] matrix, row i*n + j.
ad::Var pair_features(ad::Tape& t, ad::Var nodes) {
    const int n = static_cast<int>(t.val(nodes).rows());
    std::vector<int> left(static_cast<std::size_t>(n) * n), right(static_cast<std::size_t>(n) * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            left[static_cast<std::size_t>(i * n + j)] = i;
            right[static_cast<std::size_t>(i * n + j)] = j;
        }
    return ad::concat_cols(ad::gather_rows(nodes, left), ad::gather_rows(nodes, right));
}

}  // namespace

GraphOut build_graph(ad::Tape& t, ad::Var tokens, ad::Var t_l, const GraphEncoderParams& meta,
                     const GraphEncoderVars& vars) {
    meta.validate();
    if (t.val(tokens).rows() == 0) throw DimensionError("build_graph: empty token stream");
    if (t.val(t_l).rows() == 0) throw DimensionError("build_graph: empty logical stream");
    if (t.val(tokens).cols() != meta.dim() || t.val(t_l).cols() != meta.dim())
        throw DimensionError("build_graph: token dimension does not match encoder");

    ad::Var queries = ad::concat_cols(vars.seeds, embedding_rows(t, meta, vars));
    ad::Var nodes = nn::projected_attention(t, queries, tokens, vars.node_attn).out;

    ad::Var pairs = pair_features(t, nodes);
    ad::Var ctx = nn::attention(t, ad::matmul(pairs, vars.ctx_attn.w_q), ad::matmul(t_l, vars.ctx_attn.w_k),
                                ad::matmul(t_l, vars.ctx_attn.w_v))
                      .out;
    ad::Var edges = nn::mlp(t, ad::concat_cols(pairs, ctx), vars.edge_mlp);
    return GraphOut{nodes, edges};
}

ad::Var message_passing(ad::Tape& t, const GraphOut& graph, const GraphEncoderVars& vars) {
    const int n = static_cast<int>(t.val(graph.nodes).rows());
    ad::Var pairs = pair_features(t, graph.nodes);
    ad::Var messages = nn::mlp(t, ad::concat_cols(pairs, graph.edges), vars.msg_mlp);

    // Aggregation matrix: row i sums messages (i, j) over j != i.
    Matrix agg = Matrix::Zero(n, n * n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j)
            if (i != j) agg(i, i * n + j) = 1.0;
    return ad::add(graph.nodes, ad::matmul(t.constant(agg), messages));
}

LatentGraph build_graph(const Matrix& tokens, const Matrix& t_l, const GraphEncoderParams& params,
                        GraphKind kind) {
    if (kind != params.kind) throw ConfigError("build_graph: stream kind does not match parameters");
    ad::Tape t;
    GraphEncoderVars vars = bind(t, params);
    GraphOut out = build_graph(t, t.constant(tokens), t.constant(t_l), params, vars);
    LatentGraph g;
    g.kind = kind;
    g.nodes = t.val(out.nodes);
    g.edges = t.val(out.edges);
    return g;
}

LatentGraph message_passing(const LatentGraph& graph, const GraphEncoderParams& params) {
    ad::Tape t;
    GraphEncoderVars vars = bind(t, params);
    GraphOut g{t.constant(graph.nodes), t.constant(graph.edges)};
    LatentGraph out = graph;
    out.nodes = t.val(message_passing(t, g, vars));
    return out;
}

void register_params(GraphEncoderParams& p, ParamRegistry& reg) {
    reg.add("seeds", p.seeds);
    if (p.kind == GraphKind::geometric) reg.add("depth_table", p.depth_table);
    reg.add("node_attn.w_q", p.node_attn.w_q);
    reg.add("node_attn.w_k", p.node_attn.w_k);
    reg.add("node_attn.w_v", p.node_attn.w_v);
    reg.add("ctx_attn.w_q", p.ctx_attn.w_q);
    reg.add("ctx_attn.w_k", p.ctx_attn.w_k);
    reg.add("ctx_attn.w_v", p.ctx_attn.w_v);
    reg.add("edge_mlp.w1", p.edge_mlp.w1);
    reg.add("edge_mlp.b1", p.edge_mlp.b1);
    reg.add("edge_mlp.w2", p.edge_mlp.w2);
    reg.add("edge_mlp.b2", p.edge_mlp.b2);
    reg.add("msg_mlp.w1", p.msg_mlp.w1);
    reg.add("msg_mlp.b1", p.msg_mlp.b1);
    reg.add("msg_mlp.w2", p.msg_mlp.w2);
    reg.add("msg_mlp.b2", p.msg_mlp.b2);
}

void collect_vars(const GraphEncoderParams& p, const GraphEncoderVars& v, std::vector<ad::Var>& out) {
    out.push_back(v.seeds);
    if (p.kind == GraphKind::geometric) out.push_back(v.depth_table);
    out.push_back(v.node_attn.w_q);
    out.push_back(v.node_attn.w_k);
    out.push_back(v.node_attn.w_v);
    out.push_back(v.ctx_attn.w_q);
    out.push_back(v.ctx_attn.w_k);
    out.push_back(v.ctx_attn.w_v);
    out.push_back(v.edge_mlp.w1);
    out.push_back(v.edge_mlp.b1);
    out.push_back(v.edge_mlp.w2);
    out.push_back(v.edge_mlp.b2);
    out.push_back(v.msg_mlp.w1);
    out.push_back(v.msg_mlp.b1);
    out.push_back(v.msg_mlp.w2);
    out.push_back(v.msg_mlp.b2);
}

}  // namespace cogsplat
