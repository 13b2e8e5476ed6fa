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

#include "swt/swda.hpp"

#include <cmath>

namespace swt {

void BlockConfig::validate() const {
    if (channels <= 0) throw ShapeError("block channels must be positive");
    if (heads_channel < 1 || heads_spatial < 1) throw ValueError("head counts must be >= 1");
    if (channels % (2 * heads_channel) != 0 || channels % (2 * heads_spatial) != 0) {
        throw ShapeError("channels " + std::to_string(channels) +
                         " must be divisible by 2x each head count");
    }
    if (channel_split > channels) throw ShapeError("channel split exceeds channel count");
    const std::int64_t cc = channel_channels();
    const std::int64_t cs = spatial_channels();
    if (cc > 0 && cc % heads_channel != 0) {
        throw ShapeError("channel-attention width not divisible by its head count");
    }
    if (cs <= 0) throw ShapeError("spatial-attention branch needs at least one channel");
    if (cs % heads_spatial != 0) {
        throw ShapeError("spatial-attention width not divisible by its head count");
    }
    if (window <= 0) throw ValueError("window size must be positive");
    if (shift < 0 || shift >= window) throw ValueError("shift must lie in [0, window)");
    if (ffn_expansion <= 0.0) throw ValueError("ffn expansion must be positive");
}

std::int64_t default_head_count(std::int64_t channels) {
    return std::max<std::int64_t>(channels / 64, 1);
}

std::int64_t ffn_hidden_channels(std::int64_t channels, double expansion) {
    return std::max<std::int64_t>(1, std::llround(expansion * static_cast<double>(channels)));
}

void fill_trunc_normal(Tensor& t, double std, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std);
    for (std::int64_t i = 0; i < t.size(); ++i) {
        double v = dist(rng);
        while (std::fabs(v) > 2.0 * std) v = dist(rng);
        t[i] = v;
    }
}

double projection_init_std(std::int64_t fan_in) {
    return std::sqrt(1.0 / static_cast<double>(fan_in));
}

namespace {
double proj_std(std::int64_t fan_in) { return projection_init_std(fan_in); }
}  // namespace

SwdaParams init_swda_params(const BlockConfig& cfg, std::mt19937_64& rng) {
    cfg.validate();
    const std::int64_t c = cfg.channels;
    const std::int64_t m = cfg.window;
    const std::int64_t hidden = ffn_hidden_channels(c, cfg.ffn_expansion);

    SwdaParams p;
    p.ln1_gamma = Tensor({c}, 1.0);
    p.ln1_beta = Tensor({c});
    p.qkv_pw_w = Tensor({c, 3 * c});
    fill_trunc_normal(p.qkv_pw_w, proj_std(c), rng);
    p.qkv_pw_b = Tensor({3 * c});
    p.qkv_dw_w = Tensor({3, 3, 3 * c});
    fill_trunc_normal(p.qkv_dw_w, proj_std(9), rng);
    p.alpha = Tensor({cfg.heads_channel}, 1.0);
    p.bias_table = Tensor({(2 * m - 1) * (2 * m - 1), cfg.heads_spatial});
    fill_trunc_normal(p.bias_table, 0.02, rng);
    p.proj_w = Tensor({c, c});
    fill_trunc_normal(p.proj_w, proj_std(c), rng);
    p.proj_b = Tensor({c});
    p.ln2_gamma = Tensor({c}, 1.0);
    p.ln2_beta = Tensor({c});
    p.ffn_in_w = Tensor({c, 2 * hidden});
    fill_trunc_normal(p.ffn_in_w, proj_std(c), rng);
    p.ffn_in_b = Tensor({2 * hidden});
    p.ffn_out_w = Tensor({hidden, c});
    fill_trunc_normal(p.ffn_out_w, proj_std(hidden), rng);
    p.ffn_out_b = Tensor({c});
    return p;
}

SwdaParamVars bind_swda_params(Graph& g, SwdaParams& p) {
    SwdaParamVars v;
    v.ln1_gamma = g.leaf(p.ln1_gamma);
    v.ln1_beta = g.leaf(p.ln1_beta);
    v.qkv_pw_w = g.leaf(p.qkv_pw_w);
    v.qkv_pw_b = g.leaf(p.qkv_pw_b);
    v.qkv_dw_w = g.leaf(p.qkv_dw_w);
    v.alpha = g.leaf(p.alpha);
    v.bias_table = g.leaf(p.bias_table);
    v.proj_w = g.leaf(p.proj_w);
    v.proj_b = g.leaf(p.proj_b);
    v.ln2_gamma = g.leaf(p.ln2_gamma);
    v.ln2_beta = g.leaf(p.ln2_beta);
    v.ffn_in_w = g.leaf(p.ffn_in_w);
    v.ffn_in_b = g.leaf(p.ffn_in_b);
    v.ffn_out_w = g.leaf(p.ffn_out_w);
    v.ffn_out_b = g.leaf(p.ffn_out_b);
    return v;
}

QkvWindows make_qkv(Graph& g, const Var& y, const Var& pw_w, const Var& pw_b,
                    const Var& dw_w, const WindowLayout& layout) {
    const std::int64_t c = y.val().extent(2);
    if (c % 2 != 0) throw ShapeError("make_qkv needs an even channel count");
    Var qkv = ops::conv1x1(g, y, pw_w, pw_b);
    qkv = ops::dwconv3x3(g, qkv, dw_w);
    Var wins = window_partition(g, qkv, layout);
    auto [q, kv] = ops::split(g, wins, 2, c);
    auto [k, v] = ops::split(g, kv, 2, c);
    return {q, k, v};
}

Var channel_attention(Graph& g, const Var& q, const Var& k, const Var& v,
                      const Var& alpha, int heads, Tensor* probs_out) {
    const Tensor& qv = q.val();
    if (qv.rank() != 3) throw ShapeError("channel_attention expects nWin x tokens x C inputs");
    const std::int64_t nw = qv.extent(0), t = qv.extent(1), cc = qv.extent(2);
    if (cc % heads != 0) throw ShapeError("channel width not divisible by head count");
    const std::int64_t ch = cc / heads;

    auto to_heads = [&](const Var& x) {
        Var xt = ops::permute(g, x, {0, 2, 1});              // nW x Cc x t
        return ops::reshape(g, xt, {nw * heads, ch, t});     // channel rows per head
    };
    Var qn = ops::l2_normalize_last(g, to_heads(q));
    Var kn = ops::l2_normalize_last(g, to_heads(k));
    Var scores = ops::bmm(g, qn, ops::permute(g, kn, {0, 2, 1}));  // (nW*h) x ch x ch
    scores = ops::temperature_scale(g, scores, alpha, heads);
    Var probs = ops::softmax_last(g, scores);
    if (probs_out) *probs_out = probs.val();
    Var out = ops::bmm(g, probs, to_heads(v));               // (nW*h) x ch x t
    out = ops::reshape(g, out, {nw, cc, t});
    return ops::permute(g, out, {0, 2, 1});                  // nW x t x Cc
}

Var spatial_attention(Graph& g, const Var& q, const Var& k, const Var& v,
                      const Var& bias_table, const WindowLayout& layout, int heads,
                      Tensor* probs_out) {
    const Tensor& qv = q.val();
    if (qv.rank() != 3) throw ShapeError("spatial_attention expects nWin x tokens x C inputs");
    const std::int64_t nw = qv.extent(0), t = qv.extent(1), cs = qv.extent(2);
    if (t != layout.tokens() || nw != layout.num_windows()) {
        throw ShapeError("spatial_attention operands do not match the window layout");
    }
    if (cs % heads != 0) throw ShapeError("spatial width not divisible by head count");
    const std::int64_t d = cs / heads;
    const std::int64_t m = layout.window;
    const Tensor& table = bias_table.val();
    if (table.rank() != 2 || table.extent(0) != (2 * m - 1) * (2 * m - 1) ||
        table.extent(1) != heads) {
        throw ShapeError("bias table must be (2M-1)^2 x heads, got " + table.shape_str());
    }

    auto to_heads = [&](const Var& x) {
        Var x4 = ops::reshape(g, x, {nw, t, heads, d});
        Var xp = ops::permute(g, x4, {0, 2, 1, 3});          // nW x h x t x d
        return ops::reshape(g, xp, {nw * heads, t, d});
    };
    Var qb = to_heads(q);
    Var kb = to_heads(k);
    Var vb = to_heads(v);
    Var scores = ops::bmm(g, qb, ops::permute(g, kb, {0, 2, 1}));  // (nW*h) x t x t
    scores = ops::scale(g, scores, 1.0 / std::sqrt(static_cast<double>(d)));
    Var bias = ops::gather_rows(g, bias_table, layout.bias_index); // t*t x h
    bias = ops::reshape(g, bias, {t, t, static_cast<std::int64_t>(heads)});
    bias = ops::permute(g, bias, {2, 0, 1});                       // h x t x t
    scores = ops::add_per_head(g, scores, bias, heads);
    Var probs = ops::masked_softmax_last(g, scores, layout.masks, heads);
    if (probs_out) *probs_out = probs.val();
    Var out = ops::bmm(g, probs, vb);                              // (nW*h) x t x d
    out = ops::reshape(g, out, {nw, static_cast<std::int64_t>(heads), t, d});
    out = ops::permute(g, out, {0, 2, 1, 3});
    return ops::reshape(g, out, {nw, t, cs});
}

Var swda_block(Graph& g, const Var& x, const SwdaParamVars& p, const BlockConfig& cfg) {
    cfg.validate();
    const Tensor& xv = x.val();
    if (xv.rank() != 3 || xv.extent(2) != cfg.channels) {
        throw ShapeError("swda_block input " + xv.shape_str() + " does not match config channels " +
                         std::to_string(cfg.channels));
    }
    const WindowLayout layout =
        make_window_layout(xv.extent(0), xv.extent(1), cfg.window, cfg.shift);

    // Attention half: x + W_p concat(channel, spatial) over windows.
    Var y = ops::layernorm_last(g, x, p.ln1_gamma, p.ln1_beta);
    QkvWindows qkv = make_qkv(g, y, p.qkv_pw_w, p.qkv_pw_b, p.qkv_dw_w, layout);

    const std::int64_t cc = cfg.channel_channels();
    Var att;
    if (cc > 0) {
        auto [qc, qs] = ops::split(g, qkv.q, 2, cc);
        auto [kc, ks] = ops::split(g, qkv.k, 2, cc);
        auto [vc, vs] = ops::split(g, qkv.v, 2, cc);
        Var ch_out = channel_attention(g, qc, kc, vc, p.alpha,
                                       static_cast<int>(cfg.heads_channel));
        Var sp_out = spatial_attention(g, qs, ks, vs, p.bias_table, layout,
                                       static_cast<int>(cfg.heads_spatial));
        att = ops::concat(g, ch_out, sp_out, 2);
    } else {
        att = spatial_attention(g, qkv.q, qkv.k, qkv.v, p.bias_table, layout,
                                static_cast<int>(cfg.heads_spatial));
    }
    att = ops::conv1x1(g, att, p.proj_w, p.proj_b);
    Var x1 = ops::add(g, x, window_reverse(g, att, layout));

    // Gated feed-forward half: x + W2 (a . gelu(b)), [a b] = W1 LN(x).
    const std::int64_t hidden = ffn_hidden_channels(cfg.channels, cfg.ffn_expansion);
    Var z = ops::layernorm_last(g, x1, p.ln2_gamma, p.ln2_beta);
    Var h = ops::conv1x1(g, z, p.ffn_in_w, p.ffn_in_b);
    auto [h1, h2] = ops::split(g, h, 2, hidden);
    Var gated = ops::mul(g, h1, ops::gelu(g, h2));
    Var ffn = ops::conv1x1(g, gated, p.ffn_out_w, p.ffn_out_b);
    return ops::add(g, x1, ffn);
}

}  // namespace swt
