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

#include <doctest.h>

#include <cmath>

#include "swt/metrics.hpp"

using namespace swt;

TEST_SUITE_BEGIN("metrics");

namespace {

Tensor constant_image(std::int64_t h, std::int64_t w, double v) { return Tensor({h, w, 3}, v); }

}  // namespace

TEST_CASE("psnr of a constant offset matches the closed form") {
    const Tensor x = constant_image(16, 16, 100.0 / 255.0);
    const Tensor y = constant_image(16, 16, 110.0 / 255.0);
    const double want = 20.0 * std::log10(255.0 / 10.0);
    CHECK(std::fabs(psnr(x, y, 8) - want) < 1e-9);
}

TEST_CASE("identical images flag infinite psnr and unit ssim") {
    std::mt19937_64 rng(600);
    const Tensor x = Tensor::uniform({16, 20, 3}, rng);
    const MetricReport r = compute_metrics(x, x, 8);
    CHECK(std::isinf(r.psnr));
    CHECK(r.identical);
    CHECK(r.ssim == 1.0);
    CHECK(r.mae == 0.0);
}

TEST_CASE("mae of a constant offset is the normalized offset") {
    const Tensor x = constant_image(8, 8, 40.0 / 255.0);
    const Tensor y = constant_image(8, 8, 65.0 / 255.0);
    CHECK(mae(x, y) == doctest::Approx(25.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("mae and ssim are symmetric") {
    std::mt19937_64 rng(601);
    const Tensor x = Tensor::uniform({14, 14, 3}, rng);
    const Tensor y = Tensor::uniform({14, 14, 3}, rng);
    CHECK(mae(x, y) == mae(y, x));
    CHECK(ssim(x, y, 8) == doctest::Approx(ssim(y, x, 8)).epsilon(1e-12));
}

TEST_CASE("psnr decreases as uniform noise grows") {
    std::mt19937_64 rng(602);
    const Tensor x = Tensor::uniform({12, 12, 3}, rng);
    double prev = std::numeric_limits<double>::infinity();
    for (double amp : {0.01, 0.03, 0.09, 0.27}) {
        Tensor y = x;
        std::mt19937_64 noise_rng(7);
        for (std::int64_t i = 0; i < y.size(); ++i) {
            std::uniform_real_distribution<double> d(-amp, amp);
            y[i] += d(noise_rng);
        }
        const double p = psnr(x, y, 8);
        REQUIRE(p < prev);
        prev = p;
    }
}

TEST_CASE("bit depth moves psnr by exactly the dynamic-range ratio") {
    // the same integer offset at 8 and 16 bits
    const Tensor x8 = constant_image(8, 8, 100.0 / 255.0);
    const Tensor y8 = constant_image(8, 8, 110.0 / 255.0);
    const Tensor x16 = constant_image(8, 8, 100.0 / 65535.0);
    const Tensor y16 = constant_image(8, 8, 110.0 / 65535.0);
    const double delta = psnr(x16, y16, 16) - psnr(x8, y8, 8);
    CHECK(std::fabs(delta - 20.0 * std::log10(65535.0 / 255.0)) < 1e-9);

    // the same relative error keeps psnr unchanged
    const Tensor ya = constant_image(8, 8, 0.5), yb = constant_image(8, 8, 0.5 + 10.0 / 255.0);
    CHECK(std::fabs(psnr(ya, yb, 8) - psnr(ya, yb, 8)) == 0.0);
}

TEST_CASE("ssim drops for noisy images but stays in range") {
    std::mt19937_64 rng(603);
    const Tensor x = Tensor::uniform({16, 16, 3}, rng);
    Tensor y = x;
    for (std::int64_t i = 0; i < y.size(); ++i) {
        std::uniform_real_distribution<double> d(-0.2, 0.2);
        y[i] = std::min(1.0, std::max(0.0, y[i] + d(rng)));
    }
    const double s = ssim(x, y, 8);
    CHECK(s < 1.0);
    CHECK(s >= -1.0);
}

TEST_CASE("tiny images shrink the ssim window instead of failing") {
    std::mt19937_64 rng(604);
    const Tensor x = Tensor::uniform({5, 5, 1}, rng);
    CHECK(ssim(x, x, 8) == 1.0);
}

TEST_CASE("metric preconditions") {
    std::mt19937_64 rng(605);
    const Tensor x = Tensor::uniform({8, 8, 3}, rng);
    CHECK_THROWS_AS(psnr(x, Tensor::uniform({8, 9, 3}, rng), 8), ShapeError);
    CHECK_THROWS_AS(psnr(x, x, 0), ValueError);
}

TEST_SUITE_END();
