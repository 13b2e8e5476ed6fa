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
#include <limits>

#include "swt/gradcheck.hpp"
#include "swt/pipeline.hpp"

using namespace swt;

TEST_SUITE_BEGIN("pipeline");

namespace {

ModelConfig tiny_config(std::int64_t in_channels) {
    ModelConfig cfg;
    cfg.in_channels = in_channels;
    cfg.base_width = 4;
    cfg.blocks = {1, 1};
    cfg.window = 4;
    cfg.refinement_blocks = 0;
    return cfg;
}

Denoiser tiny_denoiser(std::uint64_t seed) {
    DenoiserConfig cfg;
    cfg.base_width = 4;
    cfg.blocks = {1, 1};
    cfg.window = 2;
    cfg.time_dim = 4;
    return build_denoiser(cfg, seed);
}

// smooth synthetic image in [0,1]
Tensor synth_image(std::int64_t h, std::int64_t w, double phase) {
    Tensor img({h, w, 3});
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t x = 0; x < w; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
                img.at(y, x, c) =
                    0.5 + 0.4 * std::sin(0.3 * static_cast<double>(x) + phase +
                                         static_cast<double>(c)) *
                              std::cos(0.2 * static_cast<double>(y) - phase);
            }
        }
    }
    return img;
}

}  // namespace

TEST_CASE("extract_prior is reproducible and keeps the contract shape") {
    const Denoiser d = tiny_denoiser(21);
    const DiffusionSchedule s = default_schedule(6);
    const Tensor image = synth_image(6, 10, 0.2);
    SamplerConfig sc;
    sc.steps = 6;
    const Tensor a = extract_prior(image, d, s, sc, 123);
    const Tensor b = extract_prior(image, d, s, sc, 123);
    const Tensor c = extract_prior(image, d, s, sc, 124);
    CHECK(a.shape() == std::vector<std::int64_t>{6, 10, 3});
    CHECK(tensors_equal(a, b));
    CHECK_FALSE(tensors_equal(a, c));
}

TEST_CASE("extract_prior with a trajectory-oracle noise model recovers the clean latent") {
    std::mt19937_64 rng(511);
    const DiffusionSchedule s = default_schedule(16);
    const Tensor image = synth_image(5, 6, 0.7);
    const Tensor z_target = Tensor::randn({5, 6, 3}, rng);
    // predicts the exact noise that keeps any z_t on the closed-form path to z_target
    const DenoiseFn oracle = [&](const Tensor& z, std::int64_t t, const Tensor&) {
        Tensor e(z.shape());
        const double sa = std::sqrt(s.alpha_bar(t));
        const double se = std::sqrt(1.0 - s.alpha_bar(t));
        for (std::int64_t i = 0; i < z.size(); ++i) e[i] = (z[i] - sa * z_target[i]) / se;
        return e;
    };
    SamplerConfig sc;
    sc.steps = 16;
    const Tensor z0 = extract_prior(image, oracle, 3, s, sc, 42);
    CHECK(max_abs_diff(z0, z_target) < 1e-6);
}

TEST_CASE("extract_prior validates the condition against the denoiser") {
    const Denoiser d = tiny_denoiser(1);
    const DiffusionSchedule s = default_schedule(4);
    SamplerConfig sc;
    sc.steps = 4;
    std::mt19937_64 rng(512);
    CHECK_THROWS_AS(extract_prior(Tensor::uniform({4, 4, 2}, rng), d, s, sc, 0), ShapeError);
}

TEST_CASE("deblur with an identity model reproduces the input bit-exactly") {
    std::mt19937_64 rng(500);
    const Model m = build_model(tiny_config(3), 9);
    for (auto [tile, stride] : {std::pair<int, int>{8, 3}, {16, 16}, {64, 64}, {5, 2}}) {
        DeblurJob job;
        job.image = Tensor::uniform({19, 26, 3}, rng);
        job.tile = tile;
        job.stride = stride;
        const Tensor out = deblur(m, job);
        REQUIRE(tensors_equal(out, job.image));
    }
}

TEST_CASE("overlap amount does not change an identity model's output") {
    std::mt19937_64 rng(501);
    const Model m = build_model(tiny_config(3), 1);
    DeblurJob a;
    a.image = Tensor::uniform({24, 24, 3}, rng);
    a.tile = 8;
    a.stride = 8;  // disjoint
    DeblurJob b = a;
    b.stride = 5;  // overlapping
    CHECK(tensors_equal(deblur(m, a), deblur(m, b)));
}

TEST_CASE("deblur is invariant to batch size and thread count") {
    std::mt19937_64 rng(502);
    Model m = build_model(tiny_config(6), 2);
    // perturb the head so the model is not an identity
    fill_trunc_normal(m.weights.at("out.pw.w"), 0.05, rng);
    DeblurJob base;
    base.image = Tensor::uniform({21, 17, 3}, rng);
    base.prior = Tensor::uniform({21, 17, 3}, rng);
    base.tile = 8;
    base.stride = 5;
    base.batch = 1;
    base.threads = 1;
    const Tensor ref = deblur(m, base);

    DeblurJob batched = base;
    batched.batch = 4;
    CHECK(max_abs_diff(deblur(m, batched), ref) <= 1e-10);

    DeblurJob threaded = base;
    threaded.threads = 4;
    CHECK(max_abs_diff(deblur(m, threaded), ref) <= 1e-10);

    DeblurJob both = base;
    both.batch = 3;
    both.threads = 2;
    CHECK(max_abs_diff(deblur(m, both), ref) <= 1e-10);
}

TEST_CASE("deblur output is clipped to the unit interval") {
    std::mt19937_64 rng(503);
    Model m = build_model(tiny_config(3), 2);
    fill_trunc_normal(m.weights.at("out.pw.w"), 2.0, rng);  // big head, wild outputs
    DeblurJob job;
    job.image = Tensor::uniform({9, 9, 3}, rng);
    job.tile = 8;
    job.stride = 4;
    const Tensor out = deblur(m, job);
    for (std::int64_t i = 0; i < out.size(); ++i) {
        REQUIRE(out[i] >= 0.0);
        REQUIRE(out[i] <= 1.0);
    }
}

TEST_CASE("deblur validates channel and prior agreements") {
    std::mt19937_64 rng(504);
    const Model six = build_model(tiny_config(6), 1);
    DeblurJob job;
    job.image = Tensor::uniform({8, 8, 3}, rng);
    CHECK_THROWS_AS(deblur(six, job), ShapeError);  // model wants a prior

    const Model three = build_model(tiny_config(3), 1);
    job.prior = Tensor::uniform({8, 8, 3}, rng);
    CHECK_THROWS_AS(deblur(three, job), ShapeError);  // model does not take one

    job.prior = Tensor::uniform({4, 8, 3}, rng);
    CHECK_THROWS_AS(deblur(six, job), ShapeError);  // extent mismatch
}

TEST_CASE("a tile larger than the image collapses to one clamped tile") {
    std::mt19937_64 rng(505);
    const Model m = build_model(tiny_config(3), 4);
    DeblurJob job;
    job.image = Tensor::uniform({10, 14, 3}, rng);
    job.tile = 512;
    job.stride = 220;
    CHECK(tensors_equal(deblur(m, job), job.image));
}

TEST_CASE("loss values on simple inputs") {
    Graph g;
    Var a = g.leaf(Tensor({1}, {0.0}));
    Var b = g.leaf(Tensor({1}, {0.5}));
    CHECK(l1_loss(g, a, b).val()[0] == 0.5);
    CHECK(l1_loss(g, a, a).val()[0] == 0.0);

    const FeatureExtractor fe = make_feature_extractor(3);
    std::mt19937_64 rng(506);
    Var x = g.leaf(Tensor::uniform({6, 6, 3}, rng));
    CHECK(perceptual_loss(g, x, x, fe).val()[0] == 0.0);
    Var y = g.leaf(Tensor::uniform({6, 6, 3}, rng));
    CHECK(perceptual_loss(g, x, y, fe).val()[0] > 0.0);
}

TEST_CASE("gradcheck through both deblur losses") {
    std::mt19937_64 rng(507);
    const Tensor target = Tensor::uniform({5, 5, 3}, rng);
    auto r1 = gradcheck(
        [&](Graph& g, const std::vector<Var>& v) { return l1_loss(g, v[0], g.constant(target)); },
        {Tensor::uniform({5, 5, 3}, rng)}, GradCheckOptions{1e-5, 1e-5, 0, 1});
    CHECK(r1.passed);

    const FeatureExtractor fe = make_feature_extractor(11);
    auto r2 = gradcheck(
        [&](Graph& g, const std::vector<Var>& v) {
            return perceptual_loss(g, v[0], g.constant(target), fe);
        },
        {Tensor::uniform({5, 5, 3}, rng)}, GradCheckOptions{1e-5, 1e-5, 0, 1});
    CHECK(r2.passed);
}

TEST_CASE("zero learning rate freezes the loss curve") {
    std::mt19937_64 rng(508);
    Model m = build_model(tiny_config(3), 3);
    fill_trunc_normal(m.weights.at("out.pw.w"), 0.05, rng);
    TrainOptions opts;
    opts.steps = 5;
    opts.lr = 0.0;
    const TrainSample s{Tensor::uniform({8, 8, 3}, rng), Tensor::uniform({8, 8, 3}, rng),
                        std::nullopt};
    const auto curve = train_toy(m, {s}, opts);
    for (double v : curve) REQUIRE(v == curve[0]);
}

TEST_CASE("training is deterministic per seed") {
    std::mt19937_64 rng(509);
    const TrainSample s{Tensor::uniform({8, 8, 3}, rng), Tensor::uniform({8, 8, 3}, rng),
                        std::nullopt};
    TrainOptions opts;
    opts.steps = 12;
    opts.lr = 2e-3;
    opts.seed = 77;
    Model m1 = build_model(tiny_config(3), 5);
    Model m2 = build_model(tiny_config(3), 5);
    const auto c1 = train_toy(m1, {s}, opts);
    const auto c2 = train_toy(m2, {s}, opts);
    CHECK(c1 == c2);
    for (std::size_t i = 0; i < m1.weights.size(); ++i) {
        REQUIRE(tensors_equal(m1.weights.entries()[i].tensor, m2.weights.entries()[i].tensor));
    }
}

TEST_CASE("short overfit run reduces the loss") {
    Model m = build_model(tiny_config(3), 1);
    const Tensor sharp = synth_image(24, 24, 0.0);
    Tensor blur({24, 24, 3});
    for (std::int64_t y = 0; y < 24; ++y) {
        for (std::int64_t x = 0; x < 24; ++x) {
            for (std::int64_t c = 0; c < 3; ++c) {
                double acc = 0.0;
                int n = 0;
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        const std::int64_t yy = y + dy, xx = x + dx;
                        if (yy >= 0 && yy < 24 && xx >= 0 && xx < 24) {
                            acc += sharp.at(yy, xx, c);
                            ++n;
                        }
                    }
                }
                blur.at(y, x, c) = acc / n;
            }
        }
    }
    TrainOptions opts;
    opts.steps = 120;
    opts.lr = 5e-3;
    const auto curve = train_toy(m, {TrainSample{blur, sharp, std::nullopt}}, opts);
    CHECK(curve.back() < 0.5 * curve.front());
    for (double v : curve) REQUIRE(std::isfinite(v));
}

TEST_CASE("a non-finite loss aborts with a diagnostic") {
    std::mt19937_64 rng(513);
    Model m = build_model(tiny_config(3), 2);
    Tensor bad = Tensor::uniform({8, 8, 3}, rng);
    bad[0] = std::numeric_limits<double>::quiet_NaN();
    TrainOptions opts;
    opts.steps = 3;
    CHECK_THROWS_WITH_AS(train_toy(m, {TrainSample{bad, bad, std::nullopt}}, opts),
                         doctest::Contains("non-finite"), ValueError);
}

TEST_CASE("training with a prior channel works") {
    std::mt19937_64 rng(510);
    Model m = build_model(tiny_config(6), 2);
    TrainSample s{Tensor::uniform({8, 8, 3}, rng), Tensor::uniform({8, 8, 3}, rng),
                  Tensor::uniform({8, 8, 3}, rng)};
    TrainOptions opts;
    opts.steps = 4;
    opts.lr = 1e-3;
    const auto curve = train_toy(m, {s}, opts);
    CHECK(curve.size() == 4);
}

TEST_SUITE_END();
