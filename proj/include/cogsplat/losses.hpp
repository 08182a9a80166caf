// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/render.hpp"
#include "cogsplat/ssim.hpp"
#include "cogsplat/tokens.hpp"

#include <vector>

namespace cogsplat {

struct LossWeights {
    double lambda_diff = 0.8;
    double lambda_ground = 0.2;
    double lambda_recon = 0.8;
    double lambda_l1 = 0.8;
    double lambda_ssim = 0.2;

    void validate() const {
        if (lambda_diff < 0 || lambda_ground < 0 || lambda_recon < 0 || lambda_l1 < 0 || lambda_ssim < 0)
            throw ConfigError("LossWeights: weights must be non-negative");
    }
};

/// Mean squared error between true and predicted noise.
double diff_loss(const Matrix& eps, const Matrix& eps_hat);
ad::Var diff_loss(ad::Tape& t, ad::Var eps, ad::Var eps_hat);

/// Scores each node by the maximum attention it receives over logical tokens
/// (column max of the fusion trace) and returns the k best in descending
/// score order; ties resolve to the lower index.
std::vector<int> select_topk(const Matrix& attn, int k);

struct ClassifierHead {
    Matrix w;  // d x vocab
    Matrix b;  // 1 x vocab

    int vocab() const { return static_cast<int>(w.cols()); }
};

ClassifierHead init_head(std::uint64_t seed, Eigen::Index d, int vocab);

struct HeadVars {
    ad::Var w, b;
};
HeadVars bind(ad::Tape& t, const ClassifierHead& p);

/// Mean cross entropy of the top-K selected node features against grounding
/// labels. Selection runs on the trace values and is not differentiated;
/// ranked nodes pair with labels in emission order.
ad::Var grounding_loss(ad::Tape& t, ad::Var node_features, const Matrix& attn_trace,
                       const GroundingLabels& labels, const HeadVars& head, int vocab);
double grounding_loss(const Matrix& node_features, const Matrix& attn_trace, const GroundingLabels& labels,
                      const ClassifierHead& head);

/// Classification accuracy through the same selection path.
double grounding_accuracy(const Matrix& node_features, const Matrix& attn_trace,
                          const GroundingLabels& labels, const ClassifierHead& head);

/// Sum over views of lambda_l1 * mean-L1 + lambda_ssim * (1 - SSIM).
struct ViewTarget {
    CameraView view;
    Image image;
};

double recon_loss(const GaussianScene& scene, const std::vector<ViewTarget>& gt_views,
                  const LossWeights& weights);
ad::Var recon_loss(ad::Tape& t, const RenderInputs& scene, const std::vector<ViewTarget>& gt_views,
                   const LossWeights& weights);

double total_loss(double l_diff, double l_g, double l_recon, const LossWeights& w);
ad::Var total_loss(ad::Tape& t, ad::Var l_diff, ad::Var l_g, ad::Var l_recon, const LossWeights& w);

}  // namespace cogsplat
