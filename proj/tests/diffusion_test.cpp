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

#include "swt/gradcheck.hpp"
#include "swt/pipeline.hpp"

using namespace swt;

TEST_SUITE_BEGIN("diffusion");

namespace {

DenoiserConfig tiny_denoiser_config() {
    DenoiserConfig cfg;
    cfg.base_width = 4;
    cfg.blocks = {1, 1};
    cfg.window = 2;
    cfg.time_dim = 4;
    return cfg;
}

}  // namespace

TEST_CASE("two-step constant schedule has the hand-computed alpha bars") {
    const DiffusionSchedule s = make_schedule(2, 0.1, 0.1);
    CHECK(s.beta(1) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.beta(2) == doctest::Approx(0.1).epsilon(1e-15));
    CHECK(s.alpha_bar(1) == doctest::Approx(0.9).epsilon(1e-15));
    CHECK(s.alpha_bar(2) == doctest::Approx(0.81).epsilon(1e-15));
    CHECK(s.alpha_bar(0) == 1.0);
}

TEST_CASE("tilde beta starts at exactly zero and stays within its bounds") {
    for (const auto& s : {make_schedule(7, 1e-4, 0.2), default_schedule(50), default_schedule(5)}) {
        CHECK(s.tilde_beta(1) == 0.0);
        for (std::int64_t t = 2; t <= s.steps(); ++t) {
            CHECK(s.tilde_beta(t) > 0.0);
            CHECK(s.tilde_beta(t) <= s.beta(t));
        }
        CHECK(s.alpha_bar(s.steps()) < s.alpha_bar(1));
    }
}

TEST_CASE("schedule invariants hold over random valid parameters") {
    std::mt19937_64 rng(300);
    for (int i = 0; i < 40; ++i) {
        const std::int64_t t_count = 1 + static_cast<std::int64_t>(rng() % 64);
        std::uniform_real_distribution<double> lo(1e-5, 0.05), hi(0.05, 0.5);
        const double b0 = lo(rng), b1 = hi(rng);
        const DiffusionSchedule s = make_schedule(t_count, b0, b1);
        double prev_beta = 0.0, prev_abar = 1.0;
        for (std::int64_t t = 1; t <= t_count; ++t) {
            REQUIRE(s.beta(t) > 0.0);
            REQUIRE(s.beta(t) < 1.0);
            REQUIRE(s.beta(t) >= prev_beta);  // linear schedule is nondecreasing
            REQUIRE(s.alpha_bar(t) < prev_abar);
            prev_beta = s.beta(t);
            prev_abar = s.alpha_bar(t);
        }
    }
    CHECK_THROWS_AS(make_schedule(0, 1e-4, 0.02), ValueError);
    CHECK_THROWS_AS(make_schedule(10, 0.0, 0.02), ValueError);
    CHECK_THROWS_AS(make_schedule(10, 0.3, 0.2), ValueError);
}

TEST_CASE("q_sample at t=0 returns z0; out-of-range steps are rejected") {
    std::mt19937_64 rng(301);
    const DiffusionSchedule s = default_schedule(10);
    const Tensor z0 = Tensor::randn({3, 3, 2}, rng);
    const Tensor eps = Tensor::randn({3, 3, 2}, rng);
    CHECK(tensors_equal(q_sample(z0, 0, eps, s), z0));
    CHECK_THROWS_AS(q_sample(z0, 11, eps, s), ValueError);
    CHECK_THROWS_AS(q_sample(z0, 3, Tensor::randn({2, 2, 2}, rng), s), ShapeError);
}

TEST_CASE("q_sample matches its closed-form moments over 1e5 draws") {
    std::mt19937_64 rng(302);
    const DiffusionSchedule s = default_schedule(20);
    const std::int64_t t = 12;
    const double z0v = 0.7;
    const Tensor z0 = Tensor({1}, {z0v});
    const int n = 100000;
    double sum = 0.0, sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const Tensor eps = Tensor::randn({1}, rng);
        const double z = q_sample(z0, t, eps, s)[0];
        sum += z;
        sumsq += z * z;
    }
    const double mean = sum / n;
    const double var = sumsq / n - mean * mean;
    const double want_mean = std::sqrt(s.alpha_bar(t)) * z0v;
    const double want_var = 1.0 - s.alpha_bar(t);
    // 3-sigma Monte-Carlo bounds
    CHECK(std::fabs(mean - want_mean) < 3.0 * std::sqrt(want_var / n));
    CHECK(std::fabs(var - want_var) < 3.0 * want_var * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("composing single-step Gaussians reproduces the closed-form marginal") {
    const DiffusionSchedule s = default_schedule(50);
    const double z0 = 1.37;
    double mean = z0, var = 0.0;
    for (std::int64_t t = 1; t <= s.steps(); ++t) {
        // one forward step: z_t = sqrt(1-beta) z_{t-1} + sqrt(beta) eps
        mean *= std::sqrt(1.0 - s.beta(t));
        var = (1.0 - s.beta(t)) * var + s.beta(t);
        REQUIRE(std::fabs(mean - std::sqrt(s.alpha_bar(t)) * z0) < 1e-12);
        REQUIRE(std::fabs(var - (1.0 - s.alpha_bar(t))) < 1e-12);
    }
}

TEST_CASE("posterior moments") {
    std::mt19937_64 rng(303);
    const DiffusionSchedule s = default_schedule(25);
    const Tensor z0 = Tensor::randn({2, 2, 1}, rng);
    const Tensor z1 = Tensor::randn({2, 2, 1}, rng);

    const PosteriorMoments pm1 = posterior(z1, z0, 1, s);
    CHECK(pm1.variance == 0.0);  // deterministic first step
    CHECK(pm1.mean.all_finite());

    const PosteriorMoments zero = posterior(Tensor({2}), Tensor({2}), 5, s);
    CHECK(zero.mean.vec() == std::vector<double>{0.0, 0.0});

    // plugging the noise-free z_t = sqrt(abar_t) z0 must return sqrt(abar_{t-1}) z0
    for (std::int64_t t = 1; t <= s.steps(); t += 6) {
        const Tensor zt = q_sample(z0, t, Tensor(z0.shape()), s);
        const PosteriorMoments pm = posterior(zt, z0, t, s);
        for (std::int64_t i = 0; i < z0.size(); ++i) {
            REQUIRE(std::fabs(pm.mean[i] - std::sqrt(s.alpha_bar(t - 1)) * z0[i]) < 1e-12);
        }
    }
    CHECK_THROWS_AS(posterior(z1, z0, 26, s), ValueError);
}

TEST_CASE("one reverse step with the true noise inverts a one-step schedule") {
    std::mt19937_64 rng(304);
    const DiffusionSchedule s = make_schedule(1, 0.02, 0.02);
    const Tensor z0 = Tensor::randn({3, 2, 1}, rng);
    const Tensor eps = Tensor::randn({3, 2, 1}, rng);
    const Tensor z1 = q_sample(z0, 1, eps, s);
    const Tensor back = ddpm_step(z1, 1, eps, Tensor(z0.shape()), s);
    CHECK(max_abs_diff(back, z0) < 1e-12);
}

TEST_CASE("ddpm step with zero inputs is a pure rescale") {
    const DiffusionSchedule s = default_schedule(10);
    const Tensor zt = Tensor({4}, 0.5);
    const Tensor out = ddpm_step(zt, 4, Tensor({4}), Tensor({4}), s);
    const double k = 1.0 / std::sqrt(s.alpha(4));
    for (std::int64_t i = 0; i < 4; ++i) CHECK(out[i] == doctest::Approx(0.5 * k).epsilon(1e-15));
}

TEST_CASE("injected reverse noise has variance beta_t over 1e5 draws") {
    std::mt19937_64 rng(305);
    const DiffusionSchedule s = default_schedule(10);
    const std::int64_t t = 7;
    const Tensor zt = Tensor({1}, 0.3);
    const Tensor eps_hat = Tensor({1}, 0.1);
    const Tensor base = ddpm_step(zt, t, eps_hat, Tensor({1}), s);
    const int n = 100000;
    double sumsq = 0.0;
    for (int i = 0; i < n; ++i) {
        const Tensor out = ddpm_step(zt, t, eps_hat, Tensor::randn({1}, rng), s);
        const double d = out[0] - base[0];
        sumsq += d * d;
    }
    const double var = sumsq / n;
    const double want = 1.0 - s.alpha(t);  // beta_t
    CHECK(std::fabs(var - want) < 3.0 * want * std::sqrt(2.0 / (n - 1)));
}

TEST_CASE("ddim at eta 0 is bit-deterministic regardless of the generator") {
    std::mt19937_64 rng(306);
    const DiffusionSchedule s = default_schedule(16);
    const Tensor z_start = Tensor::randn({4, 4, 3}, rng);
    const Tensor cond = Tensor::randn({4, 4, 3}, rng);
    const DenoiseFn fn = [](const Tensor& z, std::int64_t, const Tensor&) {
        Tensor out = z;
        for (std::int64_t i = 0; i < out.size(); ++i) out[i] = 0.1 * out[i];
        return out;
    };
    std::mt19937_64 r1(1), r2(999);
    const Tensor a = ddim_sample(z_start, fn, cond, s, 8, 0.0, r1);
    const Tensor b = ddim_sample(z_start, fn, cond, s, 8, 0.0, r2);
    CHECK(tensors_equal(a, b));
    CHECK(a.shape() == z_start.shape());
    CHECK_THROWS_AS(ddim_sample(z_start, fn, cond, s, 17, 0.0, r1), ValueError);
    CHECK_THROWS_AS(ddim_sample(z_start, fn, cond, s, 8, 1.5, r1), ValueError);
}

TEST_CASE("single ddim step with an oracle noise model recovers z0 exactly") {
    std::mt19937_64 rng(307);
    const DiffusionSchedule s = default_schedule(12);
    const Tensor z0 = Tensor::randn({3, 3, 1}, rng);
    const Tensor eps = Tensor::randn({3, 3, 1}, rng);
    const Tensor z_t = q_sample(z0, s.steps(), eps, s);
    const DenoiseFn oracle = [&eps](const Tensor&, std::int64_t, const Tensor&) { return eps; };
    std::mt19937_64 r(0);
    const Tensor out = ddim_sample(z_t, oracle, Tensor(z0.shape()), s, 1, 0.0, r);
    CHECK(max_abs_diff(out, z0) < 1e-12);
}

TEST_CASE("multi-step ddim stays on an analytic trajectory") {
    std::mt19937_64 rng(308);
    const DiffusionSchedule s = default_schedule(20);
    const Tensor z0 = Tensor::randn({2, 2, 3}, rng);
    const Tensor eps = Tensor::randn({2, 2, 3}, rng);
    const Tensor z_t = q_sample(z0, s.steps(), eps, s);
    // predicts the exact noise for any point on the closed-form trajectory
    const DenoiseFn oracle = [&](const Tensor& z, std::int64_t t, const Tensor&) {
        Tensor e(z.shape());
        const double sa = std::sqrt(s.alpha_bar(t));
        const double se = std::sqrt(1.0 - s.alpha_bar(t));
        for (std::int64_t i = 0; i < z.size(); ++i) e[i] = (z[i] - sa * z0[i]) / se;
        return e;
    };
    std::mt19937_64 r(0);
    const Tensor out = ddim_sample(z_t, oracle, Tensor(z0.shape()), s, 20, 0.0, r);
    CHECK(max_abs_diff(out, z0) < 1e-6);
}

TEST_CASE("ddpm sampling with the trajectory oracle lands near z0") {
    std::mt19937_64 rng(309);
    const DiffusionSchedule s = default_schedule(30);
    const Tensor z0 = Tensor::randn({2, 2, 1}, rng);
    const DenoiseFn oracle = [&](const Tensor& z, std::int64_t t, const Tensor&) {
        Tensor e(z.shape());
        const double sa = std::sqrt(s.alpha_bar(t));
        const double se = std::sqrt(1.0 - s.alpha_bar(t));
        for (std::int64_t i = 0; i < z.size(); ++i) e[i] = (z[i] - sa * z0[i]) / se;
        return e;
    };
    std::mt19937_64 r(5);
    const Tensor z_start = Tensor::randn(z0.shape(), rng);
    const Tensor out = ddpm_sample(z_start, oracle, Tensor(z0.shape()), s, r);
    // ancestral noise keeps a small stochastic residue
    CHECK(max_abs_diff(out, z0) < 1.0);
    CHECK(out.all_finite());
}

TEST_CASE("fresh denoiser predicts zero noise; the conditional loss starts near one") {
    std::mt19937_64 rng(310);
    const DenoiserConfig cfg = tiny_denoiser_config();
    const Denoiser d = build_denoiser(cfg, 17);
    const DiffusionSchedule s = default_schedule(8);

    const Tensor z0 = Tensor::randn({4, 4, 3}, rng);
    const Tensor cond = Tensor::randn({4, 4, 3}, rng);
    const Tensor pred = denoiser_apply(d, z0, 3, cond);
    CHECK(pred.shape() == z0.shape());
    CHECK(max_abs_diff(pred, Tensor(z0.shape())) == 0.0);  // zero-initialized head

    // eps = 0 and a zero prediction: loss is exactly zero
    {
        Graph g;
        BoundParams bp(g, d.weights);
        Var loss = ldm_loss(g, cfg, bp, z0, cond, 3, Tensor(z0.shape()), s);
        CHECK(loss.val()[0] == 0.0);
    }
    // random eps: loss == mean(eps^2), close to 1 for a large draw
    {
        const Tensor big = Tensor::randn({16, 16, 3}, rng);
        const Tensor eps = Tensor::randn({16, 16, 3}, rng);
        Graph g;
        BoundParams bp(g, d.weights);
        Var loss = ldm_loss(g, cfg, bp, big, eps, 5, eps, s);
        double want = 0.0;
        for (std::int64_t i = 0; i < eps.size(); ++i) want += eps[i] * eps[i];
        want /= static_cast<double>(eps.size());
        CHECK(loss.val()[0] == doctest::Approx(want).epsilon(1e-12));
        CHECK(std::fabs(loss.val()[0] - 1.0) < 0.2);
    }
}

TEST_CASE("ldm loss gradcheck through a tiny denoiser") {
    std::mt19937_64 rng(311);
    DenoiserConfig cfg = tiny_denoiser_config();
    Denoiser d = build_denoiser(cfg, 3);
    // non-zero head so every parameter sees gradient
    fill_trunc_normal(d.weights.at("out.pw.w"), 0.3, rng);
    const DiffusionSchedule s = default_schedule(6);
    const Tensor z0 = Tensor::randn({2, 2, 3}, rng);
    const Tensor cond = Tensor::randn({2, 2, 3}, rng);
    const Tensor eps = Tensor::randn({2, 2, 3}, rng);

    std::vector<Tensor> leaves;
    std::vector<std::string> names;
    for (const auto& e : d.weights.entries()) {
        leaves.push_back(e.tensor);
        names.push_back(e.name);
    }
    GradCheckOptions opts;
    opts.tolerance = 1e-5;
    opts.max_elements_per_leaf = 6;
    auto r = gradcheck(
        [&](Graph& g, const std::vector<Var>& v) {
            std::vector<std::pair<std::string, Var>> bound;
            for (std::size_t i = 0; i < v.size(); ++i) bound.emplace_back(names[i], v[i]);
            const BoundParams bp{std::move(bound)};
            return ldm_loss(g, cfg, bp, z0, cond, 4, eps, s);
        },
        leaves, opts, names);
    CHECK(r.passed);
    CHECK(r.worst_rel_err < 1e-5);
}

TEST_CASE("toy denoiser training on a two-sample distribution converges") {
    std::mt19937_64 rng(312);
    DenoiserConfig cfg;
    cfg.base_width = 8;
    cfg.blocks = {1, 1};
    cfg.window = 2;
    cfg.time_dim = 8;
    Denoiser d = build_denoiser(cfg, 5);
    const DiffusionSchedule s = default_schedule(8);

    const Tensor a({2, 2, 3}, 0.8);
    const Tensor b({2, 2, 3}, 0.2);
    const std::vector<std::pair<Tensor, Tensor>> pairs = {{a, a}, {b, b}};
    const auto curve = train_denoiser_toy(d, pairs, s, 2000, 1e-2, 9);
    REQUIRE(curve.size() == 2000);

    auto window_mean = [&](std::size_t from, std::size_t count) {
        double m = 0.0;
        for (std::size_t i = from; i < from + count; ++i) m += curve[i];
        return m / static_cast<double>(count);
    };
    const double early = window_mean(0, 100);
    const double mid = window_mean(950, 100);
    const double late = window_mean(1900, 100);
    CHECK(late < mid);
    CHECK(mid < early);
    CHECK(late < 0.5);
    for (double v : curve) REQUIRE(std::isfinite(v));
}

TEST_SUITE_END();
