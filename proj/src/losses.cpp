// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/losses.hpp"

#include "cogsplat/rng.hpp"

#include <algorithm>
#include <numeric>

namespace cogsplat {

double diff_loss(const Matrix& eps, const Matrix& eps_hat) {
    if (eps.rows() != eps_hat.rows() || eps.cols() != eps_hat.cols())
        throw DimensionError("diff_loss: shape mismatch");
    return (eps - eps_hat).array().square().mean();
}

ad::Var diff_loss(ad::Tape& t, ad::Var eps, ad::Var eps_hat) {
    return ad::mean(ad::square(ad::sub(eps, eps_hat)));
}

std::vector<int> select_topk(const Matrix& attn, int k) {
    const int n = static_cast<int>(attn.cols());
    if (k > n) throw DimensionError("select_topk: k exceeds node count");
    if (k < 0) throw ConfigError("select_topk: negative k");
    std::vector<int> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    Vector scores(n);
    for (int j = 0; j < n; ++j) scores(j) = attn.col(j).maxCoeff();
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores(a) != scores(b)) return scores(a) > scores(b);
        return a < b;
    });
    idx.resize(static_cast<std::size_t>(k));
    return idx;
}

ClassifierHead init_head(std::uint64_t seed, Eigen::Index d, int vocab) {
    ClassifierHead h;
    h.w = RngStream(seed, "head.w").normal_matrix(d, vocab) / std::sqrt(static_cast<double>(d));
    h.b = Matrix::Zero(1, vocab);
    return h;
}

HeadVars bind(ad::Tape& t, const ClassifierHead& p) { return HeadVars{t.leaf(p.w), t.leaf(p.b)}; }

namespace {

std::vector<int> label_classes(const GroundingLabels& labels, int vocab) {
    std::vector<int> out;
    for (const GroundingLabel& l : labels) {
        if (l.class_id >= static_cast<std::uint32_t>(vocab))
            throw ConfigError("grounding: label class outside head vocabulary");
        out.push_back(static_cast<int>(l.class_id));
    }
    return out;
}

}  // namespace

ad::Var grounding_loss(ad::Tape& t, ad::Var node_features, const Matrix& attn_trace,
                       const GroundingLabels& labels, const HeadVars& head, int vocab) {
    if (labels.empty()) throw ConfigError("grounding_loss: no labels");
    if (static_cast<Eigen::Index>(labels.size()) > t.val(node_features).rows())
        throw DimensionError("grounding_loss: more labels than nodes");
    const std::vector<int> picked = select_topk(attn_trace, static_cast<int>(labels.size()));
    ad::Var logits =
        ad::add_rowvec(ad::matmul(ad::gather_rows(node_features, picked), head.w), head.b);
    return ad::cross_entropy_logits(logits, label_classes(labels, vocab));
}

double grounding_loss(const Matrix& node_features, const Matrix& attn_trace, const GroundingLabels& labels,
                      const ClassifierHead& head) {
    ad::Tape t;
    HeadVars hv = bind(t, head);
    return t.val(grounding_loss(t, t.constant(node_features), attn_trace, labels, hv, head.vocab()))(0, 0);
}

double grounding_accuracy(const Matrix& node_features, const Matrix& attn_trace,
                          const GroundingLabels& labels, const ClassifierHead& head) {
    if (labels.empty()) return 0.0;
    const std::vector<int> picked = select_topk(attn_trace, static_cast<int>(labels.size()));
    int correct = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        Eigen::RowVectorXd logits = node_features.row(picked[i]) * head.w + head.b.row(0);
        Eigen::Index best;
        logits.maxCoeff(&best);
        if (best == static_cast<Eigen::Index>(labels[i].class_id)) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(labels.size());
}

double recon_loss(const GaussianScene& scene, const std::vector<ViewTarget>& gt_views,
                  const LossWeights& weights) {
    ad::Tape t;
    RenderInputs in = bind_scene(t, scene);
    return t.val(recon_loss(t, in, gt_views, weights))(0, 0);
}

ad::Var recon_loss(ad::Tape& t, const RenderInputs& scene, const std::vector<ViewTarget>& gt_views,
                   const LossWeights& weights) {
    if (gt_views.empty()) throw ConfigError("recon_loss: no views");
    weights.validate();
    ad::Var acc = t.constant(Matrix::Zero(1, 1));
    for (const ViewTarget& vt : gt_views) {
        if (vt.image.height != vt.view.height || vt.image.width != vt.view.width)
            throw DimensionError("recon_loss: target image resolution does not match the view");
        ad::Var rendered = render(t, scene, vt.view);
        ad::Var target = t.constant(vt.image.pixels);
        ad::Var l1 = ad::mean(ad::abs_v(ad::sub(rendered, target)));
        ad::Var dssim = ad::add_scalar(
            ad::neg(ssim(t, rendered, target, vt.view.height, vt.view.width)), 1.0);
        acc = ad::add(acc, ad::add(ad::scale(l1, weights.lambda_l1), ad::scale(dssim, weights.lambda_ssim)));
    }
    return acc;
}

double total_loss(double l_diff, double l_g, double l_recon, const LossWeights& w) {
    if (!std::isfinite(l_diff) || !std::isfinite(l_g) || !std::isfinite(l_recon))
        throw NumericError("total_loss: non-finite component");
    return w.lambda_diff * l_diff + w.lambda_ground * l_g + w.lambda_recon * l_recon;
}

ad::Var total_loss(ad::Tape& t, ad::Var l_diff, ad::Var l_g, ad::Var l_recon, const LossWeights& w) {
    return ad::add(ad::scale(l_diff, w.lambda_diff),
                   ad::add(ad::scale(l_g, w.lambda_ground), ad::scale(l_recon, w.lambda_recon)));
}

}  // namespace cogsplat
