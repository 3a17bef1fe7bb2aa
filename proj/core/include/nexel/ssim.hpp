#pragma once

#include "nexel/image.hpp"

namespace nexel {

// Mean SSIM over pixels and channels. 11x11 Gaussian window (sigma 1.5),
// zero padding at the borders, C1 = 0.01^2 and C2 = 0.03^2 on a unit dynamic
// range.
double ssim(const Image& a, const Image& b);

// Also writes d(mean ssim)/d(pred) into d_pred (allocated to pred's shape).
double ssim_with_grad(const Image& pred, const Image& gt, Image& d_pred);

} // namespace nexel
