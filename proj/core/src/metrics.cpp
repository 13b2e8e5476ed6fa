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

#include "swt/metrics.hpp"

#include <cmath>
#include <limits>
#include <vector>

namespace swt {

namespace {

double max_value(int bit_depth) {
    if (bit_depth < 1 || bit_depth > 16) throw ValueError("bit depth must lie in [1, 16]");
    return static_cast<double>((1 << bit_depth) - 1);
}

}  // namespace

double psnr(const Tensor& ref, const Tensor& test, int bit_depth) {
    require_same_shape(ref, test, "psnr");
    const double maxv = max_value(bit_depth);
    double mse = 0.0;
    for (std::int64_t i = 0; i < ref.size(); ++i) {
        const double d = (ref[i] - test[i]) * maxv;
        mse += d * d;
    }
    mse /= static_cast<double>(ref.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(maxv * maxv / mse);
}

double ssim(const Tensor& ref, const Tensor& test, int bit_depth) {
    require_same_shape(ref, test, "ssim");
    if (ref.rank() != 3) throw ShapeError("ssim expects H x W x C images");
    const std::int64_t h = ref.extent(0), w = ref.extent(1), c = ref.extent(2);
    const double maxv = max_value(bit_depth);
    const double c1 = (0.01 * maxv) * (0.01 * maxv);
    const double c2 = (0.03 * maxv) * (0.03 * maxv);

    std::int64_t win = std::min<std::int64_t>({11, h, w});
    if (win % 2 == 0) win -= 1;
    if (win < 1) throw ShapeError("image too small for ssim");
    const std::int64_t half = win / 2;

    // Gaussian weights, sigma 1.5, normalized to sum 1.
    std::vector<double> kernel(static_cast<std::size_t>(win * win));
    double ksum = 0.0;
    for (std::int64_t dy = 0; dy < win; ++dy) {
        for (std::int64_t dx = 0; dx < win; ++dx) {
            const double yy = static_cast<double>(dy - half);
            const double xx = static_cast<double>(dx - half);
            const double v = std::exp(-(yy * yy + xx * xx) / (2.0 * 1.5 * 1.5));
            kernel[static_cast<std::size_t>(dy * win + dx)] = v;
            ksum += v;
        }
    }
    for (auto& v : kernel) v /= ksum;

    double total = 0.0;
    std::int64_t count = 0;
    for (std::int64_t ch = 0; ch < c; ++ch) {
        for (std::int64_t y = half; y + half < h; ++y) {
            for (std::int64_t x = half; x + half < w; ++x) {
                double mx = 0.0, my = 0.0, xx = 0.0, yy = 0.0, xy = 0.0;
                for (std::int64_t dy = 0; dy < win; ++dy) {
                    for (std::int64_t dx = 0; dx < win; ++dx) {
                        const double kv = kernel[static_cast<std::size_t>(dy * win + dx)];
                        const double a = ref.at(y + dy - half, x + dx - half, ch) * maxv;
                        const double b = test.at(y + dy - half, x + dx - half, ch) * maxv;
                        mx += kv * a;
                        my += kv * b;
                        xx += kv * a * a;
                        yy += kv * b * b;
                        xy += kv * a * b;
                    }
                }
                const double vx = xx - mx * mx;
                const double vy = yy - my * my;
                const double vxy = xy - mx * my;
                const double num = (2.0 * mx * my + c1) * (2.0 * vxy + c2);
                const double den = (mx * mx + my * my + c1) * (vx + vy + c2);
                total += num / den;
                ++count;
            }
        }
    }
    return total / static_cast<double>(count);
}

double mae(const Tensor& ref, const Tensor& test) {
    require_same_shape(ref, test, "mae");
    double acc = 0.0;
    for (std::int64_t i = 0; i < ref.size(); ++i) acc += std::fabs(ref[i] - test[i]);
    return acc / static_cast<double>(ref.size());
}

MetricReport compute_metrics(const Tensor& ref, const Tensor& test, int bit_depth) {
    MetricReport r;
    r.psnr = psnr(ref, test, bit_depth);
    r.ssim = ssim(ref, test, bit_depth);
    r.mae = mae(ref, test);
    r.identical = std::isinf(r.psnr);
    return r;
}

}  // namespace swt
