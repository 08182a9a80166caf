// Copyright Contributors to the CogSplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "cogsplat/render.hpp"
#include "cogsplat/tape.hpp"

namespace cogsplat {

/// Mean local SSIM over the valid region of an 11x11 Gaussian window with
/// sigma 1.5, C1 = (0.01)^2 and C2 = (0.03)^2 on unit-range images.
double ssim(const Image& a, const Image& b);

/// Differentiable SSIM over (H*W) x 3 image vars.
ad::Var ssim(ad::Tape& t, ad::Var a, ad::Var b, int height, int width);

/// The normalized 11-tap window.
Vector ssim_window();

}  // namespace cogsplat
