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

#include "swt/cost.hpp"

#include <algorithm>

#include "swt/windowing.hpp"

namespace swt {

namespace {

std::int64_t round_up(std::int64_t v, std::int64_t m) { return ((v + m - 1) / m) * m; }

// Symbolic tensor trace mirroring the forward schedule: every node is an
// activation allocation, freed once its last consumer has run.
class SymTrace {
public:
    int emit(std::int64_t elems, std::uint64_t macs, std::initializer_list<int> parents) {
        const int id = static_cast<int>(elems_.size());
        elems_.push_back(elems);
        macs_ += macs;
        for (int p : parents) last_use_[static_cast<std::size_t>(p)] = id;
        last_use_.push_back(id);
        return id;
    }

    std::uint64_t total_macs() const { return macs_; }

    std::uint64_t peak_bytes(int bytes_per_element) const {
        std::uint64_t live = 0, peak = 0;
        std::vector<char> freed(elems_.size(), 0);
        for (std::size_t i = 0; i < elems_.size(); ++i) {
            live += static_cast<std::uint64_t>(elems_[i]) * bytes_per_element;
            peak = std::max(peak, live);
            // free every earlier node whose last use is this op
            for (std::size_t j = 0; j < i; ++j) {
                if (!freed[j] && last_use_[j] == static_cast<int>(i)) {
                    live -= static_cast<std::uint64_t>(elems_[j]) * bytes_per_element;
                    freed[j] = 1;
                }
            }
        }
        return peak;
    }

private:
    std::vector<std::int64_t> elems_;
    std::vector<int> last_use_;
    std::uint64_t macs_ = 0;
};

// Shapes of one attention+FFN block at the given extents; op order follows
// the block implementation.
int trace_block(SymTrace& tr, int x, std::int64_t he, std::int64_t we, const BlockConfig& bc) {
    const std::int64_t c = bc.channels;
    const std::int64_t m = bc.window;
    const std::int64_t p = he * we;
    const std::int64_t hp = round_up(he, m), wp = round_up(we, m);
    const std::int64_t pw = hp * wp;        // window-padded pixel count
    const std::int64_t nwin = (hp / m) * (wp / m);
    const std::int64_t cc = bc.channel_channels();
    const std::int64_t cs = bc.spatial_channels();
    const std::int64_t hidden = ffn_hidden_channels(c, bc.ffn_expansion);

    const int ln1 = tr.emit(p * c, 0, {x});
    const int qkv_pw = tr.emit(p * 3 * c, static_cast<std::uint64_t>(p) * c * 3 * c, {ln1});
    const int qkv_dw = tr.emit(p * 3 * c, 9ull * p * 3 * c, {qkv_pw});
    const int wins = tr.emit(pw * 3 * c, 0, {qkv_dw});
    const int q = tr.emit(pw * c, 0, {wins});
    const int k = tr.emit(pw * c, 0, {wins});
    const int v = tr.emit(pw * c, 0, {wins});

    auto attention_branch = [&](int qi, int ki, int vi, std::int64_t width, std::int64_t heads,
                                bool channel) -> int {
        const std::int64_t bw = pw * width;  // branch tensor elements
        if (channel) {
            const std::int64_t ch = width / heads;
            const int qh = tr.emit(bw, 0, {qi});           // permute
            const int qn = tr.emit(bw, 0, {qh});           // reshape+normalize
            const int kh = tr.emit(bw, 0, {ki});
            const int kn = tr.emit(bw, 0, {kh});
            const int kt = tr.emit(bw, 0, {kn});           // transpose
            const std::uint64_t mm = static_cast<std::uint64_t>(nwin) * heads * ch * ch * (m * m);
            const int scores = tr.emit(nwin * heads * ch * ch, mm, {qn, kt});
            const int scaled = tr.emit(nwin * heads * ch * ch, 0, {scores});
            const int probs = tr.emit(nwin * heads * ch * ch, 0, {scaled});
            const int vh = tr.emit(bw, 0, {vi});
            const int out = tr.emit(bw, mm, {probs, vh});
            return tr.emit(bw, 0, {out});                  // back to tokens x channels
        }
        const std::int64_t d = width / heads;
        const int qh = tr.emit(bw, 0, {qi});
        const int kh = tr.emit(bw, 0, {ki});
        const int vh = tr.emit(bw, 0, {vi});
        const int kt = tr.emit(bw, 0, {kh});
        const std::uint64_t mm =
            static_cast<std::uint64_t>(nwin) * heads * (m * m) * d * (m * m);
        const std::int64_t score_elems = nwin * heads * (m * m) * (m * m);
        const int scores = tr.emit(score_elems, mm, {qh, kt});
        const int scaled = tr.emit(score_elems, 0, {scores});
        const int bias = tr.emit((m * m) * (m * m) * heads, 0, {});
        const int biased = tr.emit(score_elems, 0, {scaled, bias});
        const int probs = tr.emit(score_elems, 0, {biased});
        const int out = tr.emit(bw, mm, {probs, vh});
        return tr.emit(bw, 0, {out});
    };

    int att;
    if (cc > 0) {
        const int qc = tr.emit(pw * cc, 0, {q});
        const int qs = tr.emit(pw * cs, 0, {q});
        const int kc = tr.emit(pw * cc, 0, {k});
        const int ks = tr.emit(pw * cs, 0, {k});
        const int vc = tr.emit(pw * cc, 0, {v});
        const int vs = tr.emit(pw * cs, 0, {v});
        const int ch_out = attention_branch(qc, kc, vc, cc, bc.heads_channel, true);
        const int sp_out = attention_branch(qs, ks, vs, cs, bc.heads_spatial, false);
        att = tr.emit(pw * c, 0, {ch_out, sp_out});
    } else {
        att = attention_branch(q, k, v, c, bc.heads_spatial, false);
    }
    const int proj = tr.emit(pw * c, static_cast<std::uint64_t>(pw) * c * c, {att});
    const int back = tr.emit(p * c, 0, {proj});
    const int x1 = tr.emit(p * c, 0, {x, back});

    const int ln2 = tr.emit(p * c, 0, {x1});
    const int ff = tr.emit(p * 2 * hidden, static_cast<std::uint64_t>(p) * c * 2 * hidden, {ln2});
    const int h1 = tr.emit(p * hidden, 0, {ff});
    const int h2 = tr.emit(p * hidden, 0, {ff});
    const int act = tr.emit(p * hidden, 0, {h2});
    const int gated = tr.emit(p * hidden, 0, {h1, act});
    const int ffo = tr.emit(p * c, static_cast<std::uint64_t>(p) * hidden * c, {gated});
    return tr.emit(p * c, 0, {x1, ffo});
}

SymTrace trace_model(const ModelConfig& cfg, std::int64_t h, std::int64_t w) {
    cfg.validate();
    SymTrace tr;
    const std::int64_t mult = cfg.spatial_multiple();
    const std::int64_t hp = round_up(h, mult), wp = round_up(w, mult);
    const std::int64_t L = cfg.levels();
    const std::int64_t c0 = cfg.base_width;

    const int input = tr.emit(h * w * cfg.in_channels, 0, {});
    const int padded = tr.emit(hp * wp * cfg.in_channels, 0, {input});
    int feat = tr.emit(hp * wp * c0,
                       static_cast<std::uint64_t>(hp * wp) * cfg.in_channels * c0, {padded});
    feat = tr.emit(hp * wp * c0, 9ull * hp * wp * c0, {feat});

    std::vector<int> skips;
    for (std::int64_t l = 0; l < L; ++l) {
        const std::int64_t he = hp >> l, we = wp >> l, c = cfg.width(l);
        for (std::int64_t b = 0; b < cfg.blocks[static_cast<std::size_t>(l)]; ++b) {
            feat = trace_block(tr, feat, he, we, cfg.block_config(l, b));
        }
        if (l < L - 1) {
            skips.push_back(feat);
            const int un = tr.emit((he / 2) * (we / 2) * 4 * c, 0, {feat});
            feat = tr.emit((he / 2) * (we / 2) * 2 * c,
                           static_cast<std::uint64_t>((he / 2) * (we / 2)) * 4 * c * 2 * c, {un});
        }
    }
    for (std::int64_t l = L - 2; l >= 0; --l) {
        const std::int64_t he = hp >> l, we = wp >> l, c = cfg.width(l);
        const int up = tr.emit((he / 2) * (we / 2) * 4 * c,
                               static_cast<std::uint64_t>((he / 2) * (we / 2)) * 2 * c * 4 * c,
                               {feat});
        const int shuf = tr.emit(he * we * c, 0, {up});
        const int cat = tr.emit(he * we * 2 * c, 0, {shuf, skips[static_cast<std::size_t>(l)]});
        feat = tr.emit(he * we * c, static_cast<std::uint64_t>(he * we) * 2 * c * c, {cat});
        for (std::int64_t b = 0; b < cfg.blocks[static_cast<std::size_t>(l)]; ++b) {
            feat = trace_block(tr, feat, he, we, cfg.block_config(l, b));
        }
    }
    for (std::int64_t r = 0; r < cfg.refinement_blocks; ++r) {
        feat = trace_block(tr, feat, hp, wp, cfg.block_config(0, r));
    }
    int delta = tr.emit(hp * wp * c0, 9ull * hp * wp * c0, {feat});
    delta = tr.emit(hp * wp * 3, static_cast<std::uint64_t>(hp * wp) * c0 * 3, {delta});
    delta = tr.emit(h * w * 3, 0, {delta});
    const int image = tr.emit(h * w * 3, 0, {input});
    tr.emit(h * w * 3, 0, {image, delta});
    return tr;
}

}  // namespace

std::uint64_t model_forward_macs(const ModelConfig& cfg, std::int64_t height, std::int64_t width) {
    return trace_model(cfg, height, width).total_macs();
}

std::uint64_t model_forward_peak_bytes(const ModelConfig& cfg, std::int64_t height,
                                       std::int64_t width, int bytes_per_element) {
    return trace_model(cfg, height, width).peak_bytes(bytes_per_element);
}

CostReport estimate(const ModelConfig& cfg, std::int64_t height, std::int64_t width,
                    std::int64_t tile, std::int64_t stride, int bytes_per_element,
                    std::int64_t batch) {
    if (batch < 1) throw ValueError("batch must be >= 1");
    const TileGrid grid = make_tile_grid(height, width, tile, stride);
    CostReport r;
    r.tile_h = grid.tile_h;
    r.tile_w = grid.tile_w;
    r.tiles = static_cast<std::uint64_t>(grid.num_tiles());
    r.macs_per_tile = model_forward_macs(cfg, grid.tile_h, grid.tile_w);
    r.macs_total = r.macs_per_tile * r.tiles;
    r.macs_per_iteration = r.macs_per_tile * static_cast<std::uint64_t>(batch);
    r.peak_activation_bytes =
        model_forward_peak_bytes(cfg, grid.tile_h, grid.tile_w, bytes_per_element) *
        static_cast<std::uint64_t>(batch);
    r.params = count_model_params(cfg);
    r.notes = "multiply-accumulate pairs only; softmax, normalization and elementwise "
              "scaling excluded; depthwise convs count 9 taps per output";
    return r;
}

}  // namespace swt
