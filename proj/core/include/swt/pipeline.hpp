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

#include <optional>

#include "swt/diffusion.hpp"
#include "swt/metrics.hpp"

namespace swt {

/// Pluggable latent encoder standing in for a pretrained autoencoder.
/// Default is the identity: diffusion runs directly in image space.
struct Encoder {
    std::function<Tensor(const Tensor&)> encode = [](const Tensor& t) { return t; };
    std::function<Tensor(const Tensor&)> decode = [](const Tensor& t) { return t; };
};

struct SamplerConfig {
    enum class Kind { Ddim, Ddpm };
    Kind kind = Kind::Ddim;
    std::int64_t steps = 50;
    double eta = 0.0;
};

/// Stage one: sample the prior feature z_0 conditioned on the blurry image.
/// Deterministic for eta = 0 and a fixed seed.
Tensor extract_prior(const Tensor& image, const Denoiser& denoiser, const DiffusionSchedule& sched,
                     const SamplerConfig& sampler, std::uint64_t seed, const Encoder& encoder = {});

/// Same, with an arbitrary noise model (tests substitute closed-form oracles).
Tensor extract_prior(const Tensor& image, const DenoiseFn& eps_model, std::int64_t data_channels,
                     const DiffusionSchedule& sched, const SamplerConfig& sampler,
                     std::uint64_t seed, const Encoder& encoder = {});

struct DeblurJob {
    Tensor image;                 // H x W x 3, [0,1]
    std::optional<Tensor> prior;  // H x W x 3 when present
    std::int64_t tile = 512;
    std::int64_t stride = 220;
    std::int64_t batch = 1;
    int threads = 1;
};

/// Stage two: concatenate the prior, run the model tile-by-tile over the
/// overlapping grid, average the overlaps, clip to [0,1]. Output is
/// independent of batch size, thread count and tile order.
Tensor deblur(const Model& model, const DeblurJob& job);

// --- training losses ----------------------------------------------------

Var l1_loss(Graph& g, const Var& pred, const Var& target);

/// Frozen, seeded 3-layer separable conv stack used as the perceptual
/// feature map. Weights never train; only its input gradient matters.
struct FeatureExtractor {
    struct Layer {
        Tensor dw_w;  // 3 x 3 x Cin
        Tensor pw_w;  // Cin x Cout
        Tensor pw_b;  // Cout
    };
    std::vector<Layer> layers;
};

FeatureExtractor make_feature_extractor(std::uint64_t seed, std::int64_t in_channels = 3,
                                        std::int64_t width = 8, int depth = 3);

Var feature_forward(Graph& g, const FeatureExtractor& fe, const Var& x);

/// Mean squared error between feature maps of pred and target.
Var perceptual_loss(Graph& g, const Var& pred, const Var& target, const FeatureExtractor& fe);

// --- toy trainer ----------------------------------------------------------

/// Moment-based optimizer over a WeightStore, keyed by parameter name.
class AdamOptimizer {
public:
    explicit AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

    /// Pulls each bound parameter's gradient from the graph (after backward)
    /// and updates the store in place.
    void step(WeightStore& store, Graph& g, const BoundParams& bp);

    void set_lr(double lr) { lr_ = lr; }

private:
    struct Slot {
        Tensor m, v;
    };
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::unordered_map<std::string, Slot> state_;
};

enum class LossKind { L1, Perceptual };

struct TrainSample {
    Tensor blurry, sharp;          // H x W x 3
    std::optional<Tensor> prior;   // H x W x 3
};

struct TrainOptions {
    LossKind loss = LossKind::L1;
    std::int64_t steps = 500;
    double lr = 5e-3;
    bool cosine_decay = false;  // lr * 0.5 * (1 + cos(pi * step / steps))
    std::uint64_t seed = 0;
};

/// Overfit-scale trainer; returns the per-step loss curve. Deterministic per
/// seed. Aborts with a diagnostic if the loss goes non-finite.
std::vector<double> train_toy(Model& model, const std::vector<TrainSample>& samples,
                              const TrainOptions& opts);

/// Same loop for the denoiser: samples (z0, cond) pairs from the provided
/// list, draws (t, eps) from the seed, minimizes the conditional noise loss.
std::vector<double> train_denoiser_toy(Denoiser& denoiser,
                                       const std::vector<std::pair<Tensor, Tensor>>& pairs,
                                       const DiffusionSchedule& sched, std::int64_t steps,
                                       double lr, std::uint64_t seed);

}  // namespace swt
