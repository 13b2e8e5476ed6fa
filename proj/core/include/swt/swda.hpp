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

#include <random>
#include <string>

#include "swt/graph.hpp"
#include "swt/windowing.hpp"

namespace swt {

/// Hyperparameters of one attention+FFN block.
///
/// Channels are split between a transposed channel-attention branch and a
/// windowed spatial-attention branch. channel_split = -1 selects the default
/// even split; 0 disables the channel branch (pure windowed attention).
struct BlockConfig {
    std::int64_t channels = 0;     // C
    std::int64_t window = 16;      // M
    std::int64_t shift = 0;        // 0 or floor(M/2)
    std::int64_t heads_channel = 1;
    std::int64_t heads_spatial = 1;
    double ffn_expansion = 2.66;
    std::int64_t channel_split = -1;

    std::int64_t channel_channels() const { return channel_split < 0 ? channels / 2 : channel_split; }
    std::int64_t spatial_channels() const { return channels - channel_channels(); }
    void validate() const;
};

/// heads = max(C/64, 1)
std::int64_t default_head_count(std::int64_t channels);
std::int64_t ffn_hidden_channels(std::int64_t channels, double expansion);

/// Truncated normal init (resamples beyond two standard deviations).
void fill_trunc_normal(Tensor& t, double std, std::mt19937_64& rng);
/// Projection-weight standard deviation: sqrt(1 / fan_in).
double projection_init_std(std::int64_t fan_in);

/// Learnable tensors of one block.
struct SwdaParams {
    Tensor ln1_gamma, ln1_beta;
    Tensor qkv_pw_w, qkv_pw_b;   // C x 3C, 3C
    Tensor qkv_dw_w;             // 3 x 3 x 3C, bias-free
    Tensor alpha;                // per channel-attention head temperature
    Tensor bias_table;           // (2M-1)^2 x heads_spatial
    Tensor proj_w, proj_b;       // C x C, C
    Tensor ln2_gamma, ln2_beta;
    Tensor ffn_in_w, ffn_in_b;   // C x 2*hidden
    Tensor ffn_out_w, ffn_out_b; // hidden x C

    /// Deterministic iteration over (name, tensor) pairs.
    template <typename Fn>
    void for_each(Fn&& fn) {
        fn("ln1.gamma", ln1_gamma); fn("ln1.beta", ln1_beta);
        fn("qkv.pw.w", qkv_pw_w); fn("qkv.pw.b", qkv_pw_b);
        fn("qkv.dw.w", qkv_dw_w);
        fn("attn.alpha", alpha);
        fn("attn.bias_table", bias_table);
        fn("proj.w", proj_w); fn("proj.b", proj_b);
        fn("ln2.gamma", ln2_gamma); fn("ln2.beta", ln2_beta);
        fn("ffn.in.w", ffn_in_w); fn("ffn.in.b", ffn_in_b);
        fn("ffn.out.w", ffn_out_w); fn("ffn.out.b", ffn_out_b);
    }
};

SwdaParams init_swda_params(const BlockConfig& cfg, std::mt19937_64& rng);

/// Graph handles to the same tensors.
struct SwdaParamVars {
    Var ln1_gamma, ln1_beta;
    Var qkv_pw_w, qkv_pw_b, qkv_dw_w;
    Var alpha, bias_table;
    Var proj_w, proj_b;
    Var ln2_gamma, ln2_beta;
    Var ffn_in_w, ffn_in_b, ffn_out_w, ffn_out_b;
};

SwdaParamVars bind_swda_params(Graph& g, SwdaParams& p);

struct QkvWindows {
    Var q, k, v;  // each nWin x M^2 x C
};

/// Pointwise then depthwise projection on the full (unpartitioned) feature
/// map, partitioned into windows afterwards so the 3x3 taps see cross-window
/// context.
QkvWindows make_qkv(Graph& g, const Var& y, const Var& pw_w, const Var& pw_b,
                    const Var& dw_w, const WindowLayout& layout);

/// Transposed attention over channels: SoftMax(alpha * Qn Kn^T) V with
/// L2-normalized per-head channel rows. q/k/v are nWin x M^2 x Cc.
/// probs_out, when given, receives the (nWin*heads) x ch x ch attention maps.
Var channel_attention(Graph& g, const Var& q, const Var& k, const Var& v,
                      const Var& alpha, int heads, Tensor* probs_out = nullptr);

/// Windowed attention over tokens: SoftMax(Q K^T / sqrt(d) + B + mask) V.
/// q/k/v are nWin x M^2 x Cs; the relative-position bias is gathered from
/// the (2M-1)^2 x heads table through the layout's offset index.
Var spatial_attention(Graph& g, const Var& q, const Var& k, const Var& v,
                      const Var& bias_table, const WindowLayout& layout, int heads,
                      Tensor* probs_out = nullptr);

/// Full pre-norm block: x + Attention(LN(x)), then x + FFN(LN(x)).
Var swda_block(Graph& g, const Var& x, const SwdaParamVars& p, const BlockConfig& cfg);

}  // namespace swt
