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

#include "swt/diffusion.hpp"

#include <cmath>

namespace swt {

DiffusionSchedule::DiffusionSchedule(std::vector<double> betas) : beta_(std::move(betas)) {
    if (beta_.empty()) throw ValueError("schedule needs at least one step");
    const std::int64_t t_count = static_cast<std::int64_t>(beta_.size());
    alpha_bar_.resize(beta_.size());
    tilde_beta_.resize(beta_.size());
    coef_z0_.resize(beta_.size());
    coef_zt_.resize(beta_.size());
    double abar = 1.0;
    for (std::int64_t t = 1; t <= t_count; ++t) {
        const double b = beta_[t - 1];
        if (!(b > 0.0 && b < 1.0)) {
            throw ValueError("beta[" + std::to_string(t) + "] = " + std::to_string(b) +
                             " outside (0, 1)");
        }
        const double abar_prev = abar;
        abar *= 1.0 - b;
        alpha_bar_[t - 1] = abar;
        tilde_beta_[t - 1] = (1.0 - abar_prev) / (1.0 - abar) * b;
        coef_z0_[t - 1] = std::sqrt(abar_prev) * b / (1.0 - abar);
        coef_zt_[t - 1] = std::sqrt(1.0 - b) * (1.0 - abar_prev) / (1.0 - abar);
    }
}

std::int64_t DiffusionSchedule::check(std::int64_t t) const {
    if (t < 1 || t > steps()) {
        throw ValueError("time step " + std::to_string(t) + " outside [1, " +
                         std::to_string(steps()) + "]");
    }
    return t;
}

DiffusionSchedule make_schedule(std::int64_t steps, double beta_start, double beta_end,
                                ScheduleKind kind) {
    if (steps < 1) throw ValueError("schedule needs at least one step");
    if (!(beta_start > 0.0) || !(beta_end < 1.0) || beta_start > beta_end) {
        throw ValueError("invalid beta range [" + std::to_string(beta_start) + ", " +
                         std::to_string(beta_end) + "]");
    }
    if (kind == ScheduleKind::Linear) {
        std::vector<double> betas(static_cast<std::size_t>(steps));
        for (std::int64_t t = 0; t < steps; ++t) {
            betas[static_cast<std::size_t>(t)] =
                steps == 1 ? beta_start
                           : beta_start + (beta_end - beta_start) * static_cast<double>(t) /
                                 static_cast<double>(steps - 1);
        }
        return DiffusionSchedule(std::move(betas));
    }
    // Subsample a 1000-step linear base grid: alpha-bar is taken at evenly
    // spaced base indices and per-step betas recovered from the ratios.
    constexpr std::int64_t kBase = 1000;
    if (steps > kBase) throw ValueError("subsampled schedule supports at most 1000 steps");
    std::vector<double> abar_base(kBase);
    double abar = 1.0;
    for (std::int64_t i = 0; i < kBase; ++i) {
        const double b = beta_start + (beta_end - beta_start) * static_cast<double>(i) /
                                          static_cast<double>(kBase - 1);
        abar *= 1.0 - b;
        abar_base[static_cast<std::size_t>(i)] = abar;
    }
    std::vector<double> betas(static_cast<std::size_t>(steps));
    double prev = 1.0;
    for (std::int64_t t = 1; t <= steps; ++t) {
        const std::int64_t idx = (t * kBase) / steps;  // 1..kBase
        const double a = abar_base[static_cast<std::size_t>(idx - 1)];
        betas[static_cast<std::size_t>(t - 1)] = 1.0 - a / prev;
        prev = a;
    }
    return DiffusionSchedule(std::move(betas));
}

DiffusionSchedule default_schedule(std::int64_t steps) {
    return make_schedule(steps, 1e-4, 0.02, ScheduleKind::LinearSubsampled);
}

Tensor q_sample(const Tensor& z0, std::int64_t t, const Tensor& eps, const DiffusionSchedule& s) {
    require_same_shape(z0, eps, "q_sample");
    if (t == 0) return z0;
    const double sa = std::sqrt(s.alpha_bar(t));
    const double se = std::sqrt(1.0 - s.alpha_bar(t));
    Tensor out = z0;
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = sa * out[i] + se * eps[i];
    return out;
}

PosteriorMoments posterior(const Tensor& zt, const Tensor& z0, std::int64_t t,
                           const DiffusionSchedule& s) {
    require_same_shape(zt, z0, "posterior");
    const double c0 = s.posterior_coef_z0(t);
    const double ct = s.posterior_coef_zt(t);
    PosteriorMoments pm;
    pm.mean = Tensor(zt.shape());
    for (std::int64_t i = 0; i < zt.size(); ++i) pm.mean[i] = c0 * z0[i] + ct * zt[i];
    pm.variance = s.tilde_beta(t);
    return pm;
}

Tensor ddpm_step(const Tensor& zt, std::int64_t t, const Tensor& eps_hat, const Tensor& noise,
                 const DiffusionSchedule& s) {
    require_same_shape(zt, eps_hat, "ddpm_step");
    require_same_shape(zt, noise, "ddpm_step noise");
    const double a = s.alpha(t);
    const double inv_sqrt_a = 1.0 / std::sqrt(a);
    const double k = (1.0 - a) / std::sqrt(1.0 - s.alpha_bar(t));
    const double noise_coef = std::sqrt(1.0 - a);  // sqrt(beta_t)
    Tensor out(zt.shape());
    for (std::int64_t i = 0; i < zt.size(); ++i) {
        out[i] = inv_sqrt_a * (zt[i] - k * eps_hat[i]) + noise_coef * noise[i];
    }
    return out;
}

Tensor ddpm_sample(const Tensor& z_start, const DenoiseFn& eps_model, const Tensor& cond,
                   const DiffusionSchedule& s, std::mt19937_64& rng) {
    Tensor z = z_start;
    for (std::int64_t t = s.steps(); t >= 1; --t) {
        const Tensor eps_hat = eps_model(z, t, cond);
        const Tensor noise = t > 1 ? Tensor::randn(z.shape(), rng) : Tensor(z.shape());
        z = ddpm_step(z, t, eps_hat, noise, s);
        require_finite(z, "ddpm_sample");
    }
    return z;
}

Tensor ddim_sample(const Tensor& z_start, const DenoiseFn& eps_model, const Tensor& cond,
                   const DiffusionSchedule& s, std::int64_t steps, double eta,
                   std::mt19937_64& rng) {
    const std::int64_t t_total = s.steps();
    if (steps < 1 || steps > t_total) {
        throw ValueError("ddim steps " + std::to_string(steps) + " outside [1, " +
                         std::to_string(t_total) + "]");
    }
    if (eta < 0.0 || eta > 1.0) throw ValueError("eta must lie in [0, 1]");
    // Evenly spaced timesteps from T down to 1.
    std::vector<std::int64_t> taus(static_cast<std::size_t>(steps));
    if (steps == 1) {
        taus[0] = t_total;
    } else {
        for (std::int64_t i = 0; i < steps; ++i) {
            taus[static_cast<std::size_t>(i)] =
                1 + std::llround(static_cast<double>(steps - 1 - i) *
                                 static_cast<double>(t_total - 1) /
                                 static_cast<double>(steps - 1));
        }
    }
    Tensor z = z_start;
    for (std::int64_t i = 0; i < steps; ++i) {
        const std::int64_t t = taus[static_cast<std::size_t>(i)];
        const std::int64_t t_prev = (i + 1 < steps) ? taus[static_cast<std::size_t>(i + 1)] : 0;
        const Tensor eps_hat = eps_model(z, t, cond);
        const double a_t = s.alpha_bar(t);
        const double a_p = s.alpha_bar(t_prev);
        const double sqrt_one_minus_at = std::sqrt(1.0 - a_t);
        const double inv_sqrt_at = 1.0 / std::sqrt(a_t);
        const double tb_pair = (1.0 - a_p) / (1.0 - a_t) * (1.0 - a_t / a_p);
        const double sigma = eta * std::sqrt(std::max(0.0, tb_pair));
        const double dir = std::sqrt(std::max(0.0, 1.0 - a_p - sigma * sigma));
        const double sqrt_ap = std::sqrt(a_p);
        Tensor next(z.shape());
        for (std::int64_t j = 0; j < z.size(); ++j) {
            const double z0_hat = (z[j] - sqrt_one_minus_at * eps_hat[j]) * inv_sqrt_at;
            next[j] = sqrt_ap * z0_hat + dir * eps_hat[j];
        }
        if (sigma > 0.0) {
            const Tensor noise = Tensor::randn(z.shape(), rng);
            for (std::int64_t j = 0; j < z.size(); ++j) next[j] += sigma * noise[j];
        }
        z = std::move(next);
        require_finite(z, "ddim_sample");
    }
    return z;
}

void DenoiserConfig::validate() const {
    if (data_channels < 1 || cond_channels < 0) throw ShapeError("bad denoiser channel counts");
    if (base_width < 2 || base_width % 2 != 0) throw ShapeError("denoiser width must be even");
    if (blocks.empty()) throw ShapeError("denoiser needs at least one level");
    for (auto b : blocks) {
        if (b < 1) throw ShapeError("every denoiser level needs at least one block");
    }
    if (time_dim <= 0 || time_dim % 2 != 0) throw ValueError("time embedding dim must be even");
    if (window <= 0) throw ValueError("attention window must be positive");
}

BlockConfig DenoiserConfig::block_config(std::int64_t level, std::int64_t block_index) const {
    BlockConfig bc;
    bc.channels = width(level);
    bc.window = window;
    bc.shift = (block_index % 2 == 1) ? window / 2 : 0;
    bc.heads_channel = default_head_count(bc.channels);
    bc.heads_spatial = default_head_count(bc.channels);
    bc.ffn_expansion = ffn_expansion;
    return bc;
}

namespace {

void add_block_params(WeightStore& ws, const std::string& prefix, const BlockConfig& bc,
                      std::mt19937_64& rng) {
    SwdaParams p = init_swda_params(bc, rng);
    p.for_each([&](const char* n, Tensor& t) { ws.add(prefix + "." + n, std::move(t)); });
}

SwdaParamVars block_vars(const BoundParams& bp, const std::string& prefix) {
    SwdaParamVars v;
    v.ln1_gamma = bp.at(prefix + ".ln1.gamma");
    v.ln1_beta = bp.at(prefix + ".ln1.beta");
    v.qkv_pw_w = bp.at(prefix + ".qkv.pw.w");
    v.qkv_pw_b = bp.at(prefix + ".qkv.pw.b");
    v.qkv_dw_w = bp.at(prefix + ".qkv.dw.w");
    v.alpha = bp.at(prefix + ".attn.alpha");
    v.bias_table = bp.at(prefix + ".attn.bias_table");
    v.proj_w = bp.at(prefix + ".proj.w");
    v.proj_b = bp.at(prefix + ".proj.b");
    v.ln2_gamma = bp.at(prefix + ".ln2.gamma");
    v.ln2_beta = bp.at(prefix + ".ln2.beta");
    v.ffn_in_w = bp.at(prefix + ".ffn.in.w");
    v.ffn_in_b = bp.at(prefix + ".ffn.in.b");
    v.ffn_out_w = bp.at(prefix + ".ffn.out.w");
    v.ffn_out_b = bp.at(prefix + ".ffn.out.b");
    return v;
}

std::int64_t round_up(std::int64_t v, std::int64_t m) { return ((v + m - 1) / m) * m; }

}  // namespace

Denoiser build_denoiser(const DenoiserConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    Denoiser d{cfg, {}};
    WeightStore& ws = d.weights;
    const std::int64_t L = cfg.levels();
    const std::int64_t c0 = cfg.base_width;
    const std::int64_t in_ch = cfg.data_channels + cfg.cond_channels;

    {
        Tensor w({in_ch, c0});
        fill_trunc_normal(w, projection_init_std(in_ch), rng);
        ws.add("embed.pw.w", std::move(w));
        ws.add("embed.pw.b", Tensor({c0}));
        Tensor dw({3, 3, c0});
        fill_trunc_normal(dw, projection_init_std(9), rng);
        ws.add("embed.dw.w", std::move(dw));
        Tensor tw({cfg.time_dim, c0});
        fill_trunc_normal(tw, projection_init_std(cfg.time_dim), rng);
        ws.add("time.proj.w", std::move(tw));
        ws.add("time.proj.b", Tensor({c0}));
    }
    for (std::int64_t l = 0; l < L; ++l) {
        const std::string where = (l == L - 1) ? "latent" : ("enc" + std::to_string(l));
        for (std::int64_t b = 0; b < cfg.blocks[static_cast<std::size_t>(l)]; ++b) {
            add_block_params(ws, where + ".block" + std::to_string(b), cfg.block_config(l, b), rng);
        }
        if (l < L - 1) {
            const std::int64_t w = cfg.width(l);
            Tensor down({4 * w, 2 * w});
            fill_trunc_normal(down, projection_init_std(4 * w), rng);
            ws.add("down" + std::to_string(l) + ".w", std::move(down));
        }
    }
    for (std::int64_t l = L - 2; l >= 0; --l) {
        const std::int64_t w = cfg.width(l);
        Tensor up({2 * w, 4 * w});
        fill_trunc_normal(up, projection_init_std(2 * w), rng);
        ws.add("up" + std::to_string(l) + ".w", std::move(up));
        Tensor fuse({2 * w, w});
        fill_trunc_normal(fuse, projection_init_std(2 * w), rng);
        ws.add("fuse" + std::to_string(l) + ".w", std::move(fuse));
        for (std::int64_t b = 0; b < cfg.blocks[static_cast<std::size_t>(l)]; ++b) {
            add_block_params(ws, "dec" + std::to_string(l) + ".block" + std::to_string(b),
                             cfg.block_config(l, b), rng);
        }
    }
    {
        // zero-initialized head: a fresh denoiser predicts zero noise
        ws.add("out.pw.w", Tensor({c0, cfg.data_channels}));
        ws.add("out.pw.b", Tensor({cfg.data_channels}));
    }
    return d;
}

std::uint64_t count_denoiser_params(const DenoiserConfig& cfg) {
    Denoiser d = build_denoiser(cfg, 0);
    return d.weights.total_params();
}

Var denoiser_forward(Graph& g, const DenoiserConfig& cfg, const BoundParams& bp,
                     const Var& z_t, std::int64_t t, const Var& cond) {
    cfg.validate();
    const Tensor& zv = z_t.val();
    if (zv.rank() != 3 || zv.extent(2) != cfg.data_channels) {
        throw ShapeError("denoiser input " + zv.shape_str() + " does not match data channels " +
                         std::to_string(cfg.data_channels));
    }
    const Tensor& cv = cond.val();
    if (cv.rank() != 3 || cv.extent(0) != zv.extent(0) || cv.extent(1) != zv.extent(1) ||
        cv.extent(2) != cfg.cond_channels) {
        throw ShapeError("condition " + cv.shape_str() + " does not match denoiser input " +
                         zv.shape_str());
    }
    const std::int64_t h = zv.extent(0), w = zv.extent(1);
    const std::int64_t mult = cfg.spatial_multiple();
    const std::int64_t L = cfg.levels();

    Var x = ops::concat(g, z_t, cond, 2);
    x = ops::pad_hw(g, x, round_up(h, mult), round_up(w, mult));
    Var feat = ops::conv1x1(g, x, bp.at("embed.pw.w"), bp.at("embed.pw.b"));
    feat = ops::dwconv3x3(g, feat, bp.at("embed.dw.w"));

    Var temb = g.constant(ops::sinusoidal_embed(static_cast<double>(t), cfg.time_dim));
    temb = ops::reshape(g, temb, {1, cfg.time_dim});
    temb = ops::conv1x1(g, temb, bp.at("time.proj.w"), bp.at("time.proj.b"));
    temb = ops::reshape(g, temb, {cfg.base_width});
    feat = ops::add_channels(g, feat, temb);

    std::vector<Var> skips;
    for (std::int64_t l = 0; l < L; ++l) {
        const std::string where = (l == L - 1) ? "latent" : ("enc" + std::to_string(l));
        for (std::int64_t b = 0; b < cfg.blocks[static_cast<std::size_t>(l)]; ++b) {
            feat = swda_block(g, feat, block_vars(bp, where + ".block" + std::to_string(b)),
                              cfg.block_config(l, b));
        }
        if (l < L - 1) {
            skips.push_back(feat);
            feat = ops::pixel_unshuffle(g, feat, 2);
            feat = ops::conv1x1(g, feat, bp.at("down" + std::to_string(l) + ".w"));
        }
    }
    for (std::int64_t l = L - 2; l >= 0; --l) {
        feat = ops::conv1x1(g, feat, bp.at("up" + std::to_string(l) + ".w"));
        feat = ops::pixel_shuffle(g, feat, 2);
        feat = ops::concat(g, feat, skips[static_cast<std::size_t>(l)], 2);
        feat = ops::conv1x1(g, feat, bp.at("fuse" + std::to_string(l) + ".w"));
        for (std::int64_t b = 0; b < cfg.blocks[static_cast<std::size_t>(l)]; ++b) {
            feat = swda_block(g, feat,
                              block_vars(bp, "dec" + std::to_string(l) + ".block" + std::to_string(b)),
                              cfg.block_config(l, b));
        }
    }
    Var out = ops::conv1x1(g, feat, bp.at("out.pw.w"), bp.at("out.pw.b"));
    return ops::crop_hw(g, out, h, w);
}

Tensor denoiser_apply(const Denoiser& d, const Tensor& z_t, std::int64_t t, const Tensor& cond) {
    Graph g(Graph::Mode::NoGrad);
    BoundParams bp(g, d.weights);
    return denoiser_forward(g, d.config, bp, g.constant(z_t), t, g.constant(cond)).val();
}

DenoiseFn as_denoise_fn(const Denoiser& d) {
    return [&d](const Tensor& z_t, std::int64_t t, const Tensor& cond) {
        return denoiser_apply(d, z_t, t, cond);
    };
}

Var ldm_loss(Graph& g, const DenoiserConfig& cfg, const BoundParams& bp, const Tensor& z0,
             const Tensor& cond, std::int64_t t, const Tensor& eps, const DiffusionSchedule& s) {
    require_same_shape(z0, eps, "ldm_loss");
    const Tensor zt = q_sample(z0, t, eps, s);
    Var pred = denoiser_forward(g, cfg, bp, g.constant(zt), t, g.constant(cond));
    Var diff = ops::sub(g, g.constant(eps), pred);
    return ops::mean_all(g, ops::mul(g, diff, diff));
}

}  // namespace swt
