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

#include "swt/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace swt {

namespace {

Tensor concat_channels(const Tensor& a, const Tensor& b) {
    if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0) || a.extent(1) != b.extent(1)) {
        throw ShapeError("channel concat needs matching spatial extents: " + a.shape_str() +
                         " vs " + b.shape_str());
    }
    const std::int64_t h = a.extent(0), w = a.extent(1), ca = a.extent(2), cb = b.extent(2);
    Tensor out({h, w, ca + cb});
    for (std::int64_t p = 0; p < h * w; ++p) {
        std::copy_n(a.data() + p * ca, ca, out.data() + p * (ca + cb));
        std::copy_n(b.data() + p * cb, cb, out.data() + p * (ca + cb) + ca);
    }
    return out;
}

// Static chunking; results land in caller-owned slots so the output cannot
// depend on scheduling.
void parallel_for(std::int64_t n, int threads, const std::function<void(std::int64_t)>& fn) {
    threads = std::max(1, threads);
    if (threads == 1 || n <= 1) {
        for (std::int64_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::atomic<std::int64_t> next{0};
    const int workers = static_cast<int>(std::min<std::int64_t>(threads, n));
    for (int t = 0; t < workers; ++t) {
        pool.emplace_back([&]() {
            for (std::int64_t i = next.fetch_add(1); i < n; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& th : pool) th.join();
}

}  // namespace

Tensor extract_prior(const Tensor& image, const Denoiser& denoiser, const DiffusionSchedule& sched,
                     const SamplerConfig& sampler, std::uint64_t seed, const Encoder& encoder) {
    // condition-shape mismatches surface from the denoiser's own checks
    return extract_prior(image, as_denoise_fn(denoiser), denoiser.config.data_channels, sched,
                         sampler, seed, encoder);
}

Tensor extract_prior(const Tensor& image, const DenoiseFn& eps_model, std::int64_t data_channels,
                     const DiffusionSchedule& sched, const SamplerConfig& sampler,
                     std::uint64_t seed, const Encoder& encoder) {
    if (image.rank() != 3) throw ShapeError("extract_prior expects an H x W x C image");
    const Tensor cond = encoder.encode(image);
    std::mt19937_64 rng(seed);
    Tensor z = Tensor::randn({image.extent(0), image.extent(1), data_channels}, rng);
    Tensor z0;
    if (sampler.kind == SamplerConfig::Kind::Ddim) {
        z0 = ddim_sample(z, eps_model, cond, sched, sampler.steps, sampler.eta, rng);
    } else {
        z0 = ddpm_sample(z, eps_model, cond, sched, rng);
    }
    require_finite(z0, "extract_prior");
    return z0;
}

Tensor deblur(const Model& model, const DeblurJob& job) {
    const Tensor& image = job.image;
    if (image.rank() != 3 || image.extent(2) != 3) {
        throw ShapeError("deblur expects an H x W x 3 image, got " + image.shape_str());
    }
    if (job.prior) {
        if (job.prior->rank() != 3 || job.prior->extent(0) != image.extent(0) ||
            job.prior->extent(1) != image.extent(1)) {
            throw ShapeError("prior extents " + job.prior->shape_str() +
                             " do not match the image " + image.shape_str());
        }
    }
    const std::int64_t expected_in = 3 + (job.prior ? job.prior->extent(2) : 0);
    if (model.config.in_channels != expected_in) {
        throw ShapeError("model expects " + std::to_string(model.config.in_channels) +
                         " input channels but the job provides " + std::to_string(expected_in));
    }
    if (job.batch < 1) throw ValueError("batch size must be >= 1");

    const Tensor input = job.prior ? concat_channels(image, *job.prior) : image;
    const TileGrid grid = make_tile_grid(image.extent(0), image.extent(1), job.tile, job.stride);
    std::vector<Tensor> outputs(static_cast<std::size_t>(grid.num_tiles()));

    // One iteration = one batch of tiles; tiles inside a batch may run on
    // separate threads, results keyed by tile index.
    for (std::int64_t base = 0; base < grid.num_tiles(); base += job.batch) {
        const std::int64_t count = std::min<std::int64_t>(job.batch, grid.num_tiles() - base);
        parallel_for(count, job.threads, [&](std::int64_t i) {
            const std::int64_t idx = base + i;
            const Tensor tile = extract_tile(input, grid, idx);
            outputs[static_cast<std::size_t>(idx)] = model_apply(model, tile);
        });
    }
    Tensor merged = merge_tiles(outputs, grid);
    for (std::int64_t i = 0; i < merged.size(); ++i) {
        merged[i] = std::min(1.0, std::max(0.0, merged[i]));
    }
    require_finite(merged, "deblur");
    return merged;
}

Var l1_loss(Graph& g, const Var& pred, const Var& target) {
    return ops::mean_all(g, ops::abs(g, ops::sub(g, pred, target)));
}

FeatureExtractor make_feature_extractor(std::uint64_t seed, std::int64_t in_channels,
                                        std::int64_t width, int depth) {
    if (depth < 1) throw ValueError("feature extractor needs at least one layer");
    std::mt19937_64 rng(seed);
    FeatureExtractor fe;
    std::int64_t cin = in_channels;
    for (int l = 0; l < depth; ++l) {
        FeatureExtractor::Layer layer;
        layer.dw_w = Tensor({3, 3, cin});
        fill_trunc_normal(layer.dw_w, projection_init_std(9), rng);
        layer.pw_w = Tensor({cin, width});
        fill_trunc_normal(layer.pw_w, projection_init_std(cin), rng);
        layer.pw_b = Tensor({width});
        fe.layers.push_back(std::move(layer));
        cin = width;
    }
    return fe;
}

Var feature_forward(Graph& g, const FeatureExtractor& fe, const Var& x) {
    Var h = x;
    for (const auto& layer : fe.layers) {
        h = ops::dwconv3x3(g, h, g.constant(layer.dw_w));
        h = ops::conv1x1(g, h, g.constant(layer.pw_w), g.constant(layer.pw_b));
        h = ops::gelu(g, h);
    }
    return h;
}

Var perceptual_loss(Graph& g, const Var& pred, const Var& target, const FeatureExtractor& fe) {
    require_same_shape(pred.val(), target.val(), "perceptual_loss");
    Var fp = feature_forward(g, fe, pred);
    Var ft = feature_forward(g, fe, target);
    Var diff = ops::sub(g, fp, ft);
    return ops::mean_all(g, ops::mul(g, diff, diff));
}

AdamOptimizer::AdamOptimizer(double lr, double beta1, double beta2, double eps)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamOptimizer::step(WeightStore& store, Graph& g, const BoundParams& bp) {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (const auto& [name, var] : bp.vars()) {
        const Tensor grad = g.grad(var);
        Tensor& param = store.at(name);
        auto& slot = state_[name];
        if (slot.m.empty()) {
            slot.m = Tensor(param.shape());
            slot.v = Tensor(param.shape());
        }
        for (std::int64_t i = 0; i < param.size(); ++i) {
            const double gi = grad[i];
            slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * gi;
            slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * gi * gi;
            const double mhat = slot.m[i] / bc1;
            const double vhat = slot.v[i] / bc2;
            param[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

std::vector<double> train_toy(Model& model, const std::vector<TrainSample>& samples,
                              const TrainOptions& opts) {
    if (samples.empty()) throw ValueError("train_toy needs at least one sample");
    for (const auto& s : samples) {
        require_same_shape(s.blurry, s.sharp, "train_toy sample");
        const std::int64_t expected = 3 + (s.prior ? s.prior->extent(2) : 0);
        if (model.config.in_channels != expected) {
            throw ShapeError("model in_channels " + std::to_string(model.config.in_channels) +
                             " do not match sample channels " + std::to_string(expected));
        }
    }
    const FeatureExtractor fe = make_feature_extractor(opts.seed);
    AdamOptimizer adam(opts.lr);
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(opts.steps));
    for (std::int64_t step = 0; step < opts.steps; ++step) {
        if (opts.cosine_decay) {
            adam.set_lr(opts.lr * 0.5 *
                        (1.0 + std::cos(M_PI * static_cast<double>(step) /
                                        static_cast<double>(opts.steps))));
        }
        const TrainSample& s = samples[static_cast<std::size_t>(step) % samples.size()];
        Graph g(Graph::Mode::Train);
        BoundParams bp(g, model.weights);
        const Tensor input = s.prior ? concat_channels(s.blurry, *s.prior) : s.blurry;
        Var out = model_forward(g, model.config, bp, g.constant(input));
        Var target = g.constant(s.sharp);
        Var loss = opts.loss == LossKind::L1 ? l1_loss(g, out, target)
                                             : perceptual_loss(g, out, target, fe);
        const double value = loss.val()[0];
        if (!std::isfinite(value)) {
            throw ValueError("non-finite loss " + std::to_string(value) + " at training step " +
                             std::to_string(step));
        }
        curve.push_back(value);
        g.backward(loss);
        adam.step(model.weights, g, bp);
    }
    return curve;
}

std::vector<double> train_denoiser_toy(Denoiser& denoiser,
                                       const std::vector<std::pair<Tensor, Tensor>>& pairs,
                                       const DiffusionSchedule& sched, std::int64_t steps,
                                       double lr, std::uint64_t seed) {
    if (pairs.empty()) throw ValueError("denoiser training needs at least one (z0, cond) pair");
    std::mt19937_64 rng(seed);
    AdamOptimizer adam(lr);
    std::vector<double> curve;
    curve.reserve(static_cast<std::size_t>(steps));
    std::uniform_int_distribution<std::int64_t> pick_t(1, sched.steps());
    for (std::int64_t step = 0; step < steps; ++step) {
        const auto& [z0, cond] = pairs[static_cast<std::size_t>(step) % pairs.size()];
        const std::int64_t t = pick_t(rng);
        const Tensor eps = Tensor::randn(z0.shape(), rng);
        Graph g(Graph::Mode::Train);
        BoundParams bp(g, denoiser.weights);
        Var loss = ldm_loss(g, denoiser.config, bp, z0, cond, t, eps, sched);
        const double value = loss.val()[0];
        if (!std::isfinite(value)) {
            throw ValueError("non-finite denoiser loss at training step " + std::to_string(step));
        }
        curve.push_back(value);
        g.backward(loss);
        adam.step(denoiser.weights, g, bp);
    }
    return curve;
}

}  // namespace swt
