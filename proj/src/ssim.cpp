// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#include "cogsplat/ssim.hpp"

#include <cmath>

namespace cogsplat {

namespace {
constexpr int kWindow = 11;
constexpr double kSigma = 1.5;
constexpr double kC1 = 0.01 * 0.01;
constexpr double kC2 = 0.03 * 0.03;
}  // namespace

Vector ssim_window() {
    Vector w(kWindow);
    const int half = kWindow / 2;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - half;
        w(i) = std::exp(-d * d / (2.0 * kSigma * kSigma));
    }
    return w / w.sum();
}

ad::Var ssim(ad::Tape& t, ad::Var a, ad::Var b, int height, int width) {
    if (t.val(a).rows() != t.val(b).rows() || t.val(a).cols() != t.val(b).cols())
        throw DimensionError("ssim: image shapes differ");
    if (height < kWindow || width < kWindow)
        throw DimensionError("ssim: image smaller than the 11x11 window");
    const Vector w = ssim_window();

    auto conv = [&](ad::Var x) { return ad::conv_sep_valid(x, height, width, w); };
    ad::Var mu_a = conv(a);
    ad::Var mu_b = conv(b);
    ad::Var mu_aa = ad::cmul(mu_a, mu_a);
    ad::Var mu_bb = ad::cmul(mu_b, mu_b);
    ad::Var mu_ab = ad::cmul(mu_a, mu_b);
    ad::Var sigma_aa = ad::sub(conv(ad::cmul(a, a)), mu_aa);
    ad::Var sigma_bb = ad::sub(conv(ad::cmul(b, b)), mu_bb);
    ad::Var sigma_ab = ad::sub(conv(ad::cmul(a, b)), mu_ab);

    ad::Var num = ad::cmul(ad::add_scalar(ad::scale(mu_ab, 2.0), kC1), ad::add_scalar(ad::scale(sigma_ab, 2.0), kC2));
    ad::Var den = ad::cmul(ad::add_scalar(ad::add(mu_aa, mu_bb), kC1),
                           ad::add_scalar(ad::add(sigma_aa, sigma_bb), kC2));
    return ad::mean(ad::cdiv(num, den));
}

double ssim(const Image& a, const Image& b) {
    if (a.height != b.height || a.width != b.width) throw DimensionError("ssim: image shapes differ");
    ad::Tape t;
    return t.val(ssim(t, t.constant(a.pixels), t.constant(b.pixels), a.height, a.width))(0, 0);
}

}  // namespace cogsplat
