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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "swt/gradcheck.hpp"
#include "swt/swda.hpp"

using namespace swt;

TEST_SUITE_BEGIN("swda");

namespace {

BlockConfig tiny_block() {
    BlockConfig bc;
    bc.channels = 4;
    bc.window = 4;
    bc.shift = 2;
    return bc;
}

std::vector<Tensor> block_leaves(SwdaParams& p, const Tensor& input,
                                 std::vector<std::string>* names) {
    std::vector<Tensor> leaves{input};
    if (names) names->push_back("input");
    p.for_each([&](const char* n, Tensor& t) {
        leaves.push_back(t);
        if (names) names->push_back(n);
    });
    return leaves;
}

SwdaParamVars vars_from(const std::vector<Var>& v) {
    SwdaParamVars pv;
    std::size_t i = 1;
    pv.ln1_gamma = v[i++]; pv.ln1_beta = v[i++];
    pv.qkv_pw_w = v[i++]; pv.qkv_pw_b = v[i++]; pv.qkv_dw_w = v[i++];
    pv.alpha = v[i++]; pv.bias_table = v[i++];
    pv.proj_w = v[i++]; pv.proj_b = v[i++];
    pv.ln2_gamma = v[i++]; pv.ln2_beta = v[i++];
    pv.ffn_in_w = v[i++]; pv.ffn_in_b = v[i++];
    pv.ffn_out_w = v[i++]; pv.ffn_out_b = v[i++];
    return pv;
}

}  // namespace

TEST_CASE("make_qkv with identity projections reproduces the windows") {
    std::mt19937_64 rng(200);
    const std::int64_t c = 4;
    const WindowLayout lo = make_window_layout(8, 8, 4, 0);
    const Tensor y = Tensor::randn({8, 8, c}, rng);

    Tensor pw({c, 3 * c});
    for (std::int64_t i = 0; i < c; ++i) {
        pw.at(i, i) = 1.0;
        pw.at(i, c + i) = 1.0;
        pw.at(i, 2 * c + i) = 1.0;
    }
    Tensor dw({3, 3, 3 * c});
    for (std::int64_t ch = 0; ch < 3 * c; ++ch) dw.at(1, 1, ch) = 1.0;

    Graph g;
    auto qkv = make_qkv(g, g.leaf(y), g.leaf(pw), g.leaf(Tensor({3 * c})), g.leaf(dw), lo);
    const Tensor expected = window_partition_tensor(y, lo);
    CHECK(tensors_equal(qkv.q.val(), expected));
    CHECK(tensors_equal(qkv.k.val(), expected));
    CHECK(tensors_equal(qkv.v.val(), expected));
}

TEST_CASE("make_qkv shape contract and odd-channel rejection") {
    std::mt19937_64 rng(201);
    const WindowLayout lo = make_window_layout(6, 10, 4, 0);
    Graph g;
    Var y = g.leaf(Tensor::randn({6, 10, 4}, rng));
    auto qkv = make_qkv(g, y, g.leaf(Tensor::randn({4, 12}, rng)), g.leaf(Tensor::randn({12}, rng)),
                        g.leaf(Tensor::randn({3, 3, 12}, rng)), lo);
    for (const Var* v : {&qkv.q, &qkv.k, &qkv.v}) {
        CHECK(v->val().shape() == std::vector<std::int64_t>{lo.num_windows(), 16, 4});
    }

    Var odd = g.leaf(Tensor::randn({6, 10, 3}, rng));
    CHECK_THROWS_AS(make_qkv(g, odd, g.leaf(Tensor::randn({3, 9}, rng)),
                             g.leaf(Tensor::randn({9}, rng)),
                             g.leaf(Tensor::randn({3, 3, 9}, rng)), lo),
                    ShapeError);
}

TEST_CASE("make_qkv gradcheck") {
    std::mt19937_64 rng(202);
    const WindowLayout lo = make_window_layout(4, 6, 4, 0);
    auto r = gradcheck(
        [&lo](Graph& g, const std::vector<Var>& v) {
            auto qkv = make_qkv(g, v[0], v[1], v[2], v[3], lo);
            Var s = ops::add(g, qkv.q, ops::mul(g, qkv.k, qkv.v));
            return ops::mean_all(g, ops::abs(g, s));
        },
        {Tensor::randn({4, 6, 2}, rng), Tensor::randn({2, 6}, rng), Tensor::randn({6}, rng),
         Tensor::randn({3, 3, 6}, rng)},
        GradCheckOptions{1e-5, 1e-5, 0, 1});
    CHECK(r.passed);
}

TEST_CASE("channel attention with zero keys averages the value channels") {
    std::mt19937_64 rng(203);
    const std::int64_t t = 16, cc = 4;
    Graph g;
    Var q = g.leaf(Tensor::randn({1, t, cc}, rng));
    Var k = g.leaf(Tensor({1, t, cc}));  // zero keys -> uniform attention rows
    Var v = g.leaf(Tensor::randn({1, t, cc}, rng));
    Var alpha = g.leaf(Tensor({1}, 1.0));
    const Tensor out = channel_attention(g, q, k, v, alpha, 1).val();
    for (std::int64_t tok = 0; tok < t; ++tok) {
        double mean = 0.0;
        for (std::int64_t c = 0; c < cc; ++c) mean += v.val().at(0, tok, c);
        mean /= static_cast<double>(cc);
        for (std::int64_t c = 0; c < cc; ++c) {
            REQUIRE(out.at(0, tok, c) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("channel attention is equivariant to token permutations") {
    std::mt19937_64 rng(204);
    const std::int64_t t = 16, cc = 6;
    const Tensor q = Tensor::randn({1, t, cc}, rng);
    const Tensor k = Tensor::randn({1, t, cc}, rng);
    const Tensor v = Tensor::randn({1, t, cc}, rng);
    const Tensor alpha({2}, 1.3);

    std::vector<std::int64_t> perm(t);
    std::iota(perm.begin(), perm.end(), 0);
    for (int trial = 0; trial < 5; ++trial) {
        std::shuffle(perm.begin(), perm.end(), rng);
        auto permute_tokens = [&](const Tensor& x) {
            Tensor y({1, t, cc});
            for (std::int64_t i = 0; i < t; ++i) {
                for (std::int64_t c = 0; c < cc; ++c) y.at(0, i, c) = x.at(0, perm[static_cast<std::size_t>(i)], c);
            }
            return y;
        };
        Graph g;
        Tensor probs_base, probs_perm;
        const Tensor base = channel_attention(g, g.leaf(q), g.leaf(k), g.leaf(v),
                                              g.leaf(alpha), 2, &probs_base).val();
        const Tensor perm_out =
            channel_attention(g, g.leaf(permute_tokens(q)), g.leaf(permute_tokens(k)),
                              g.leaf(permute_tokens(v)), g.leaf(alpha), 2, &probs_perm)
                .val();
        // attention map unchanged, output tokens permuted identically
        CHECK(max_abs_diff(probs_base, probs_perm) < 1e-12);
        CHECK(max_abs_diff(permute_tokens(base), perm_out) < 1e-12);
    }
}

TEST_CASE("both attention maps are row-stochastic") {
    std::mt19937_64 rng(205);
    const WindowLayout lo = make_window_layout(8, 8, 4, 2);
    const std::int64_t nw = lo.num_windows(), t = lo.tokens();
    Graph g;
    Tensor cp, sp;
    channel_attention(g, g.leaf(Tensor::randn({nw, t, 4}, rng)),
                      g.leaf(Tensor::randn({nw, t, 4}, rng)),
                      g.leaf(Tensor::randn({nw, t, 4}, rng)), g.leaf(Tensor({2}, 0.7)), 2, &cp);
    spatial_attention(g, g.leaf(Tensor::randn({nw, t, 4}, rng)),
                      g.leaf(Tensor::randn({nw, t, 4}, rng)),
                      g.leaf(Tensor::randn({nw, t, 4}, rng)),
                      g.leaf(Tensor::randn({49, 2}, rng)), lo, 2, &sp);
    for (const Tensor* probs : {&cp, &sp}) {
        const std::int64_t rows = probs->extent(0) * probs->extent(1);
        const std::int64_t n = probs->extent(2);
        for (std::int64_t r = 0; r < rows; ++r) {
            double s = 0.0;
            for (std::int64_t j = 0; j < n; ++j) s += (*probs)[r * n + j];
            REQUIRE(std::fabs(s - 1.0) < 1e-12);
        }
    }
}

TEST_CASE("spatial attention with zero queries and bias averages the value rows") {
    std::mt19937_64 rng(206);
    const WindowLayout lo = make_window_layout(4, 4, 4, 0);
    const std::int64_t t = 16;
    Graph g;
    Var q = g.leaf(Tensor({1, t, 2}));
    Var k = g.leaf(Tensor::randn({1, t, 2}, rng));
    Var v = g.leaf(Tensor::randn({1, t, 2}, rng));
    Var table = g.leaf(Tensor({49, 1}));
    const Tensor out = spatial_attention(g, q, k, v, table, lo, 1).val();
    for (std::int64_t c = 0; c < 2; ++c) {
        double mean = 0.0;
        for (std::int64_t tok = 0; tok < t; ++tok) mean += v.val().at(0, tok, c);
        mean /= static_cast<double>(t);
        for (std::int64_t tok = 0; tok < t; ++tok) {
            REQUIRE(out.at(0, tok, c) == doctest::Approx(mean).epsilon(1e-12));
        }
    }
}

TEST_CASE("constant shifts of the bias table leave the output unchanged") {
    std::mt19937_64 rng(207);
    const WindowLayout lo = make_window_layout(8, 4, 4, 0);
    const std::int64_t nw = lo.num_windows(), t = lo.tokens();
    const Tensor q = Tensor::randn({nw, t, 4}, rng);
    const Tensor k = Tensor::randn({nw, t, 4}, rng);
    const Tensor v = Tensor::randn({nw, t, 4}, rng);
    const Tensor table = Tensor::randn({49, 2}, rng);
    Tensor shifted = table;
    for (std::int64_t i = 0; i < shifted.size(); ++i) shifted[i] += 0.37;

    Graph g;
    const Tensor a = spatial_attention(g, g.leaf(q), g.leaf(k), g.leaf(v), g.leaf(table), lo, 2).val();
    const Tensor b =
        spatial_attention(g, g.leaf(q), g.leaf(k), g.leaf(v), g.leaf(shifted), lo, 2).val();
    CHECK(max_abs_diff(a, b) < 1e-12);
}

TEST_CASE("identical window contents give bit-identical outputs") {
    std::mt19937_64 rng(208);
    const WindowLayout lo = make_window_layout(4, 8, 4, 0);  // two windows side by side
    REQUIRE(lo.num_windows() == 2);
    const std::int64_t t = lo.tokens();
    Tensor q({2, t, 4}), k({2, t, 4}), v({2, t, 4});
    for (Tensor* x : {&q, &k, &v}) {
        const Tensor one = Tensor::randn({t, 4}, rng);
        std::copy_n(one.data(), one.size(), x->data());
        std::copy_n(one.data(), one.size(), x->data() + one.size());
    }
    Graph g;
    const Tensor out = spatial_attention(g, g.leaf(q), g.leaf(k), g.leaf(v),
                                         g.leaf(Tensor::randn({49, 2}, rng)), lo, 2).val();
    for (std::int64_t i = 0; i < t * 4; ++i) REQUIRE(out[i] == out[t * 4 + i]);
}

TEST_CASE("masked pairs receive attention weight exactly zero") {
    std::mt19937_64 rng(209);
    const WindowLayout lo = make_window_layout(8, 8, 8, 4);  // one window, corner mask
    REQUIRE(lo.num_windows() == 1);
    const std::int64_t t = lo.tokens();
    Graph g;
    Tensor probs;
    spatial_attention(g, g.leaf(Tensor::randn({1, t, 2}, rng)),
                      g.leaf(Tensor::randn({1, t, 2}, rng)),
                      g.leaf(Tensor::randn({1, t, 2}, rng)),
                      g.leaf(Tensor::randn({(2 * 8 - 1) * (2 * 8 - 1), 1}, rng)), lo, 1, &probs);
    const auto& pat = (*lo.masks.patterns)[static_cast<std::size_t>(lo.masks.pattern_of_window[0])];
    std::int64_t masked = 0;
    for (std::int64_t i = 0; i < t; ++i) {
        for (std::int64_t j = 0; j < t; ++j) {
            if (!pat[static_cast<std::size_t>(i * t + j)]) {
                REQUIRE(probs.at(0, i, j) == 0.0);
                ++masked;
            }
        }
    }
    CHECK(masked > 0);
}

TEST_CASE("zeroed projection and ffn output make the block an identity") {
    std::mt19937_64 rng(210);
    BlockConfig bc = tiny_block();
    SwdaParams p = init_swda_params(bc, rng);
    p.proj_w = Tensor({bc.channels, bc.channels});
    p.proj_b = Tensor({bc.channels});
    const std::int64_t hidden = ffn_hidden_channels(bc.channels, bc.ffn_expansion);
    p.ffn_out_w = Tensor({hidden, bc.channels});
    p.ffn_out_b = Tensor({bc.channels});

    Graph g;
    Var x = g.leaf(Tensor::randn({7, 9, bc.channels}, rng));
    SwdaParamVars pv = bind_swda_params(g, p);
    CHECK(tensors_equal(swda_block(g, x, pv, bc).val(), x.val()));
}

TEST_CASE("block output shape equals input shape for awkward extents") {
    std::mt19937_64 rng(211);
    BlockConfig bc = tiny_block();
    SwdaParams p = init_swda_params(bc, rng);
    for (auto [h, w] : {std::pair<int, int>{5, 3}, {4, 4}, {9, 13}, {1, 1}}) {
        Graph g;
        Var x = g.leaf(Tensor::randn({h, w, bc.channels}, rng));
        SwdaParamVars pv = bind_swda_params(g, p);
        CHECK(swda_block(g, x, pv, bc).val().shape() ==
              std::vector<std::int64_t>{h, w, bc.channels});
    }
}

TEST_CASE("full block gradcheck on 8x8x4") {
    std::mt19937_64 rng(212);
    BlockConfig bc = tiny_block();
    SwdaParams p = init_swda_params(bc, rng);
    std::vector<std::string> names;
    auto leaves = block_leaves(p, Tensor::randn({8, 8, 4}, rng), &names);
    GradCheckOptions opts;
    opts.tolerance = 1e-5;
    auto r = gradcheck(
        [&bc](Graph& g, const std::vector<Var>& v) {
            return ops::mean_all(g, ops::abs(g, swda_block(g, v[0], vars_from(v), bc)));
        },
        leaves, opts, names);
    CHECK(r.passed);
    CHECK(r.worst_rel_err < 1e-5);
}

TEST_CASE("all-spatial variant (channel split zero) works end to end") {
    std::mt19937_64 rng(213);
    BlockConfig bc = tiny_block();
    bc.channel_split = 0;
    SwdaParams p = init_swda_params(bc, rng);
    Graph g;
    Var x = g.leaf(Tensor::randn({6, 6, bc.channels}, rng));
    SwdaParamVars pv = bind_swda_params(g, p);
    Var out = swda_block(g, x, pv, bc);
    CHECK(out.val().shape() == x.val().shape());
    Var loss = ops::mean_all(g, ops::abs(g, out));
    g.backward(loss);  // gradients flow without the channel branch
    CHECK(g.grad(pv.bias_table).size() == 49 * 1);
}

TEST_CASE("block config validation") {
    BlockConfig bc;
    bc.channels = 6;
    bc.heads_channel = 2;  // 6 % 4 != 0
    CHECK_THROWS_AS(bc.validate(), ShapeError);
    bc = tiny_block();
    bc.shift = 4;
    CHECK_THROWS_AS(bc.validate(), ValueError);
    bc = tiny_block();
    bc.channel_split = 5;
    CHECK_THROWS_AS(bc.validate(), ShapeError);
}

TEST_SUITE_END();
