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

#include <functional>

#include "swt/model.hpp"

namespace swt {

/// Variance schedule plus the derived alpha / alpha-bar / posterior tables.
/// Steps are 1-based; alpha_bar(0) == 1 by convention, which makes
/// tilde_beta(1) exactly zero.
class DiffusionSchedule {
public:
    DiffusionSchedule(std::vector<double> betas);

    std::int64_t steps() const { return static_cast<std::int64_t>(beta_.size()); }
    double beta(std::int64_t t) const { return beta_[check(t) - 1]; }
    double alpha(std::int64_t t) const { return 1.0 - beta(t); }
    double alpha_bar(std::int64_t t) const { return t == 0 ? 1.0 : alpha_bar_[check(t) - 1]; }
    double tilde_beta(std::int64_t t) const { return tilde_beta_[check(t) - 1]; }
    double posterior_coef_z0(std::int64_t t) const { return coef_z0_[check(t) - 1]; }
    double posterior_coef_zt(std::int64_t t) const { return coef_zt_[check(t) - 1]; }

private:
    std::int64_t check(std::int64_t t) const;

    std::vector<double> beta_, alpha_bar_, tilde_beta_, coef_z0_, coef_zt_;
};

enum class ScheduleKind {
    Linear,            // betas linearly spaced from beta_start to beta_end over T steps
    LinearSubsampled,  // T steps subsampled from a 1000-step linear base grid
};

DiffusionSchedule make_schedule(std::int64_t steps, double beta_start, double beta_end,
                                ScheduleKind kind = ScheduleKind::Linear);

/// The default schedule: 1e-4 -> 0.02 over a 1000-step base grid subsampled
/// to T, so alpha-bar endpoints stay comparable across small T.
DiffusionSchedule default_schedule(std::int64_t steps);

/// Forward marginal: sqrt(abar_t) z0 + sqrt(1 - abar_t) eps. t = 0 returns z0.
Tensor q_sample(const Tensor& z0, std::int64_t t, const Tensor& eps, const DiffusionSchedule& s);

struct PosteriorMoments {
    Tensor mean;
    double variance = 0.0;
};

/// Forward-process posterior q(z_{t-1} | z_t, z_0).
PosteriorMoments posterior(const Tensor& zt, const Tensor& z0, std::int64_t t,
                           const DiffusionSchedule& s);

/// One reverse step: (z_t - (1-a_t)/sqrt(1-abar_t) eps_hat)/sqrt(a_t)
/// + sqrt(1-a_t) noise. The caller chooses the noise (zero at t = 1).
Tensor ddpm_step(const Tensor& zt, std::int64_t t, const Tensor& eps_hat, const Tensor& noise,
                 const DiffusionSchedule& s);

using DenoiseFn = std::function<Tensor(const Tensor& z_t, std::int64_t t, const Tensor& cond)>;

/// Ancestral sampling from z_T down to z_0; noise is dropped at t = 1.
Tensor ddpm_sample(const Tensor& z_start, const DenoiseFn& eps_model, const Tensor& cond,
                   const DiffusionSchedule& s, std::mt19937_64& rng);

/// Deterministic at eta = 0. `steps` <= T timesteps are taken, evenly spaced.
Tensor ddim_sample(const Tensor& z_start, const DenoiseFn& eps_model, const Tensor& cond,
                   const DiffusionSchedule& s, std::int64_t steps, double eta,
                   std::mt19937_64& rng);

/// Small time-conditioned U-shaped noise predictor. The condition is
/// concatenated channel-wise at the input; the sinusoidal time embedding is
/// added to the features after a learned projection.
struct DenoiserConfig {
    std::int64_t data_channels = 3;
    std::int64_t cond_channels = 3;
    std::int64_t base_width = 16;
    std::vector<std::int64_t> blocks = {1, 1};
    std::int64_t window = 8;
    std::int64_t time_dim = 16;  // even
    double ffn_expansion = 2.66;

    std::int64_t levels() const { return static_cast<std::int64_t>(blocks.size()); }
    std::int64_t width(std::int64_t level) const { return base_width << level; }
    std::int64_t spatial_multiple() const { return std::int64_t{1} << (levels() - 1); }
    void validate() const;
    BlockConfig block_config(std::int64_t level, std::int64_t block_index) const;
};

struct Denoiser {
    DenoiserConfig config;
    WeightStore weights;
};

Denoiser build_denoiser(const DenoiserConfig& cfg, std::uint64_t seed);
std::uint64_t count_denoiser_params(const DenoiserConfig& cfg);

Var denoiser_forward(Graph& g, const DenoiserConfig& cfg, const BoundParams& bp,
                     const Var& z_t, std::int64_t t, const Var& cond);

Tensor denoiser_apply(const Denoiser& d, const Tensor& z_t, std::int64_t t, const Tensor& cond);

/// Wrap a denoiser as a DenoiseFn for the samplers.
DenoiseFn as_denoise_fn(const Denoiser& d);

/// Conditional noise-prediction loss: mean((eps - eps_theta(q_sample(z0,t,eps), t, cond))^2),
/// differentiable through the denoiser parameters.
Var ldm_loss(Graph& g, const DenoiserConfig& cfg, const BoundParams& bp, const Tensor& z0,
             const Tensor& cond, std::int64_t t, const Tensor& eps, const DiffusionSchedule& s);

}  // namespace swt
