// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/graph.hpp"
#include "cogsplat/tokens.hpp"

#include <optional>

namespace cogsplat {

/// Fused conditioning tokens, one per logical token, with the cross-attention
/// trace retained when produced by fusion.
struct CognitionGraph {
    Matrix tokens;                 // m x d
    std::optional<Matrix> trace;   // m x n softmax weights
};

/// Logical tokens query the feature-wise concatenation of the two streams.
struct FusionParams {
    Matrix w_q;  // d x d
    Matrix w_k;  // 2d x d
    Matrix w_v;  // 2d x d
    nn::LayerNormParams ln;
    nn::MlpParams mlp;  // d -> 4d -> d

    Eigen::Index dim() const { return w_q.rows(); }
    void validate() const;
};

FusionParams init_fusion(std::uint64_t seed, std::string_view name, Eigen::Index d);

struct FusionVars {
    ad::Var w_q, w_k, w_v;
    nn::LayerNormVars ln;
    nn::MlpVars mlp;
};

FusionVars bind(ad::Tape& t, const FusionParams& p);

struct FusionOut {
    ad::Var tokens;  // m x d fused cognition tokens
    ad::Var trace;   // m x n attention weights
    ad::Var values;  // n x d projected joint node values V_SG
};

FusionOut common_fusion(ad::Tape& t, ad::Var sem_nodes, ad::Var geo_nodes, ad::Var t_l,
                        const FusionVars& vars);

/// Plain wrapper over the tape path.
CognitionGraph common_fusion(const LatentGraph& g_sem, const LatentGraph& g_geo, const Matrix& t_l,
                             const FusionParams& params);

/// Returns the stored trace; throws StateError when fusion did not retain one.
Matrix attention_map(const CognitionGraph& cog);

/// Everything from token bundle to cognition graph on one tape.
struct CognitionModel {
    GraphEncoderParams sem;
    GraphEncoderParams geo;
    FusionParams fusion;
    int message_rounds = 1;

    void validate() const;
};

CognitionModel init_cognition_model(std::uint64_t seed, Eigen::Index d, int sem_grid_x, int sem_grid_y,
                                    int geo_grid_x, int geo_grid_y, int depth_levels,
                                    int message_rounds = 1);

struct CognitionVars {
    GraphEncoderVars sem;
    GraphEncoderVars geo;
    FusionVars fusion;
};

CognitionVars bind(ad::Tape& t, const CognitionModel& m);

FusionOut cognition_forward(ad::Tape& t, ad::Var t_s, ad::Var t_g, ad::Var t_l,
                            const CognitionModel& model, const CognitionVars& vars);

/// Plain forward for inference paths.
CognitionGraph cognition_forward(const TokenBundle& bundle, const CognitionModel& model);

void register_params(FusionParams& p, ParamRegistry& reg);
void collect_vars(const FusionVars& v, std::vector<ad::Var>& out);
void register_params(CognitionModel& m, ParamRegistry& reg);
void collect_vars(const CognitionModel& m, const CognitionVars& v, std::vector<ad::Var>& out);

}  // namespace cogsplat
