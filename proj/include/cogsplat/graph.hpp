// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/adamw.hpp"
#include "cogsplat/nn.hpp"

#include <array>
#include <vector>

namespace cogsplat {

enum class GraphKind { semantic, geometric };

/// One latent graph stream: n nodes with dense pairwise edge features. Edge
/// rows are stored pair-major, pair (i, j) at row i*n + j. The diagonal is
/// present but excluded from message aggregation.
struct LatentGraph {
    GraphKind kind = GraphKind::semantic;
    Matrix nodes;  // n x d
    Matrix edges;  // (n*n) x d_e

    int node_count() const { return static_cast<int>(nodes.rows()); }
    Eigen::RowVectorXd edge(int i, int j) const { return edges.row(i * node_count() + j); }
};

/// Parameters of one graph encoder stream. Queries are the learnable seeds
/// concatenated with a positional embedding: 2D sinusoidal for the semantic
/// stream, sinusoidal-plus-learnable-depth for the geometric stream.
struct GraphEncoderParams {
    GraphKind kind = GraphKind::semantic;
    Matrix seeds;  // n x d
    std::vector<std::array<int, 3>> grid;  // query lattice, z ignored for semantic
    nn::PosEmbed2D planar;                 // dim d (semantic) or d/2 (geometric)
    Matrix depth_table;                    // depth_levels x d/2, geometric only
    nn::AttentionParams node_attn;         // queries 2d -> d, keys/values d -> d
    nn::AttentionParams ctx_attn;          // pair queries 2d -> d over logical tokens
    nn::MlpParams edge_mlp;                // 3d -> 4d -> d
    nn::MlpParams msg_mlp;                 // 3d -> 4d -> d

    int node_count() const { return static_cast<int>(seeds.rows()); }
    Eigen::Index dim() const { return seeds.cols(); }
    void validate() const;
};

GraphEncoderParams init_graph_encoder(std::uint64_t seed, std::string_view name, GraphKind kind,
                                      Eigen::Index d, int grid_x, int grid_y, int depth_levels = 1);

struct GraphEncoderVars {
    ad::Var seeds;
    ad::Var depth_table;  // invalid for semantic streams
    nn::AttentionVars node_attn;
    nn::AttentionVars ctx_attn;
    nn::MlpVars edge_mlp;
    nn::MlpVars msg_mlp;
};

GraphEncoderVars bind(ad::Tape& t, const GraphEncoderParams& p);

struct GraphOut {
    ad::Var nodes;
    ad::Var edges;
};

/// Node extraction and logic-guided edge construction, before message passing.
GraphOut build_graph(ad::Tape& t, ad::Var tokens, ad::Var t_l, const GraphEncoderParams& meta,
                     const GraphEncoderVars& vars);

/// One message-passing round: N_i + sum over j != i of msgMLP([N_i, N_j, E_ij]).
ad::Var message_passing(ad::Tape& t, const GraphOut& graph, const GraphEncoderVars& vars);

// Plain wrappers matching the stream contracts.
LatentGraph build_graph(const Matrix& tokens, const Matrix& t_l, const GraphEncoderParams& params,
                        GraphKind kind);
LatentGraph message_passing(const LatentGraph& graph, const GraphEncoderParams& params);

// Registry/var enumeration in one shared order, so optimizer steps, gradient
// collection and checkpoints all line up.
void register_params(GraphEncoderParams& p, ParamRegistry& reg);
void collect_vars(const GraphEncoderParams& p, const GraphEncoderVars& v, std::vector<ad::Var>& out);

}  // namespace cogsplat
