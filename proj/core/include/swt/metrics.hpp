/*
 * Copyright (c) 2026, the Swintormer authors.  All rights reserved.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include "swt/tensor.hpp"

namespace swt {

/// Image-quality scores. Inputs are [0,1]-normalized tensors; PSNR and SSIM
/// are evaluated in the integer domain of the stated bit depth, MAE stays
/// normalized. psnr is +inf (and `identical` set) for equal inputs.
struct MetricReport {
    double psnr = 0.0;
    double ssim = 0.0;
    double mae = 0.0;
    bool identical = false;
};

/// 10 log10(MAX^2 / MSE) with MAX = 2^bit_depth - 1 over integer-domain values.
double psnr(const Tensor& ref, const Tensor& test, int bit_depth = 8);

/// Gaussian-window SSIM (11x11, sigma 1.5, K1 = 0.01, K2 = 0.03), valid-region
/// filtering, averaged over channels. The window shrinks for tiny images.
double ssim(const Tensor& ref, const Tensor& test, int bit_depth = 8);

/// Mean absolute error of the normalized values, in [0, 1].
double mae(const Tensor& ref, const Tensor& test);

MetricReport compute_metrics(const Tensor& ref, const Tensor& test, int bit_depth = 8);

}  // namespace swt
