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

#include "swt/model.hpp"

#include <cstring>
#include <fstream>

namespace swt {

void WeightStore::add(const std::string& name, Tensor t, DType dtype) {
    if (index_.count(name)) throw ValueError("duplicate weight name: " + name);
    index_[name] = entries_.size();
    entries_.push_back(Entry{name, std::move(t), dtype});
}

bool WeightStore::contains(const std::string& name) const { return index_.count(name) != 0; }

const Tensor& WeightStore::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValueError("missing weight: " + name);
    return entries_[it->second].tensor;
}

Tensor& WeightStore::at(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValueError("missing weight: " + name);
    return entries_[it->second].tensor;
}

std::uint64_t WeightStore::total_params() const {
    std::uint64_t n = 0;
    for (const auto& e : entries_) n += static_cast<std::uint64_t>(e.tensor.size());
    return n;
}

std::uint64_t WeightStore::fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ull;
    auto mix = [&h](std::uint64_t v) {
        for (int i = 0; i < 8; ++i) {
            h ^= (v >> (i * 8)) & 0xff;
            h *= 0x100000001b3ull;
        }
    };
    for (const auto& e : entries_) {
        for (unsigned char c : e.name) {
            h ^= c;
            h *= 0x100000001b3ull;
        }
        mix(static_cast<std::uint64_t>(e.dtype));
        mix(static_cast<std::uint64_t>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) mix(static_cast<std::uint64_t>(d));
    }
    return h;
}

namespace {

constexpr char kMagic[4] = {'S', 'W', 'T', 'W'};
constexpr std::uint32_t kVersion = 1;

void put_u16(std::string& out, std::uint16_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
}

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (i * 8)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (i * 8)) & 0xff));
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw FormatError("weight file truncated");
    }
    std::uint16_t u16() {
        need(2);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 2;
        return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
    }
    std::uint32_t u32() {
        need(4);
        const auto* p = reinterpret_cast<const unsigned char*>(buf.data() + pos);
        pos += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
    }
    std::uint64_t u64() {
        std::uint64_t lo = u32();
        std::uint64_t hi = u32();
        return lo | (hi << 32);
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_weights(const WeightStore& store, const std::string& path) {
    std::string out;
    out.append(kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(store.size()));
    for (const auto& e : store.entries()) {
        if (e.name.size() > 0xffff) throw ValueError("weight name too long: " + e.name);
        put_u16(out, static_cast<std::uint16_t>(e.name.size()));
        out.append(e.name);
        out.push_back(static_cast<char>(e.dtype));
        out.push_back(static_cast<char>(e.tensor.rank()));
        for (auto d : e.tensor.shape()) put_u32(out, static_cast<std::uint32_t>(d));
        if (e.dtype == DType::F64) {
            for (std::int64_t i = 0; i < e.tensor.size(); ++i) {
                std::uint64_t bits;
                const double v = e.tensor[i];
                std::memcpy(&bits, &v, 8);
                put_u64(out, bits);
            }
        } else {
            for (std::int64_t i = 0; i < e.tensor.size(); ++i) {
                const float v = static_cast<float>(e.tensor[i]);
                std::uint32_t bits;
                std::memcpy(&bits, &v, 4);
                put_u32(out, bits);
            }
        }
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw Error("write failed: " + path);
}

WeightStore load_weights(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    Reader r{buf};
    if (r.bytes(4) != std::string(kMagic, 4)) throw FormatError("bad magic in weight file " + path);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError("unsupported weight file version " + std::to_string(version));
    }
    const std::uint32_t count = r.u32();
    WeightStore store;
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint16_t name_len = r.u16();
        const std::string name = r.bytes(name_len);
        const std::uint8_t dtype_raw = static_cast<std::uint8_t>(r.bytes(1)[0]);
        if (dtype_raw > 1) throw FormatError("unknown dtype in weight file");
        const std::uint8_t rank = static_cast<std::uint8_t>(r.bytes(1)[0]);
        if (rank == 0 || rank > 4) throw FormatError("bad tensor rank in weight file");
        std::vector<std::int64_t> shape(rank);
        for (auto& d : shape) {
            d = static_cast<std::int64_t>(r.u32());
            if (d <= 0) throw FormatError("bad extent in weight file");
        }
        Tensor t(shape);
        if (dtype_raw == static_cast<std::uint8_t>(DType::F64)) {
            for (std::int64_t j = 0; j < t.size(); ++j) {
                const std::uint64_t bits = r.u64();
                double v;
                std::memcpy(&v, &bits, 8);
                t[j] = v;
            }
        } else {
            for (std::int64_t j = 0; j < t.size(); ++j) {
                const std::uint32_t bits = r.u32();
                float v;
                std::memcpy(&v, &bits, 4);
                t[j] = static_cast<double>(v);
            }
        }
        if (store.contains(name)) throw FormatError("duplicate weight name in file: " + name);
        store.add(name, std::move(t), static_cast<DType>(dtype_raw));
    }
    if (r.pos != buf.size()) throw FormatError("trailing bytes in weight file");
    return store;
}

void ModelConfig::validate() const {
    if (in_channels < 3) throw ShapeError("model needs at least the 3 image channels");
    if (base_width < 2 || base_width % 2 != 0) throw ShapeError("base width must be even and >= 2");
    if (blocks.empty()) throw ShapeError("at least one level required");
    for (auto b : blocks) {
        if (b < 1) throw ShapeError("every level needs at least one block");
    }
    if (refinement_blocks < 0) throw ValueError("negative refinement block count");
    if (window <= 0) throw ValueError("attention window must be positive");
    if (channel_split != -1 && channel_split != 0) {
        throw ValueError("model-level channel split must be -1 (even) or 0 (spatial only)");
    }
}

BlockConfig ModelConfig::block_config(std::int64_t level, std::int64_t block_index) const {
    BlockConfig bc;
    bc.channels = width(level);
    bc.window = window;
    bc.shift = (block_index % 2 == 1) ? window / 2 : 0;  // alternate 0 / M/2
    bc.heads_channel = default_head_count(bc.channels);
    bc.heads_spatial = default_head_count(bc.channels);
    bc.ffn_expansion = ffn_expansion;
    bc.channel_split = channel_split;
    return bc;
}

namespace {

void add_block_params(WeightStore& ws, const std::string& prefix, const BlockConfig& bc,
                      std::mt19937_64& rng) {
    SwdaParams p = init_swda_params(bc, rng);
    p.for_each([&](const char* n, Tensor& t) { ws.add(prefix + "." + n, std::move(t)); });
}

}  // namespace

Model build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    std::mt19937_64 rng(seed);
    Model m{cfg, {}};
    WeightStore& ws = m.weights;
    const std::int64_t L = cfg.levels();
    const std::int64_t c0 = cfg.base_width;

    {
        Tensor w({cfg.in_channels, c0});
        fill_trunc_normal(w, projection_init_std(cfg.in_channels), rng);
        ws.add("embed.pw.w", std::move(w));
        ws.add("embed.pw.b", Tensor({c0}));
        Tensor dw({3, 3, c0});
        fill_trunc_normal(dw, projection_init_std(9), rng);
        ws.add("embed.dw.w", std::move(dw));
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
    for (std::int64_t r = 0; r < cfg.refinement_blocks; ++r) {
        add_block_params(ws, "refine.block" + std::to_string(r), cfg.block_config(0, r), rng);
    }
    {
        Tensor dw({3, 3, c0});
        fill_trunc_normal(dw, projection_init_std(9), rng);
        ws.add("out.dw.w", std::move(dw));
        // zero-initialized final projection: the fresh model is the identity
        ws.add("out.pw.w", Tensor({c0, 3}));
        ws.add("out.pw.b", Tensor({3}));
    }
    return m;
}

std::uint64_t count_model_params(const ModelConfig& cfg) {
    cfg.validate();
    auto block_params = [&cfg](std::int64_t c) -> std::uint64_t {
        const std::int64_t m = cfg.window;
        const std::int64_t hc = default_head_count(c);
        const std::int64_t hs = default_head_count(c);
        const std::int64_t hidden = ffn_hidden_channels(c, cfg.ffn_expansion);
        std::uint64_t n = 0;
        n += 2 * c;                       // ln1
        n += c * 3 * c + 3 * c;           // qkv pointwise
        n += 9 * 3 * c;                   // qkv depthwise
        n += hc;                          // temperatures
        n += (2 * m - 1) * (2 * m - 1) * hs;  // bias table
        n += c * c + c;                   // projection
        n += 2 * c;                       // ln2
        n += c * 2 * hidden + 2 * hidden; // ffn in
        n += hidden * c + c;              // ffn out
        return n;
    };
    const std::int64_t L = cfg.levels();
    const std::int64_t c0 = cfg.base_width;
    std::uint64_t n = 0;
    n += cfg.in_channels * c0 + c0 + 9 * c0;  // embed
    for (std::int64_t l = 0; l < L; ++l) {
        n += static_cast<std::uint64_t>(cfg.blocks[static_cast<std::size_t>(l)]) *
             block_params(cfg.width(l));
        if (l < L - 1) {
            n += 4 * cfg.width(l) * 2 * cfg.width(l);  // down
            n += 2 * cfg.width(l) * 4 * cfg.width(l);  // up
            n += 2 * cfg.width(l) * cfg.width(l);      // fuse
            n += static_cast<std::uint64_t>(cfg.blocks[static_cast<std::size_t>(l)]) *
                 block_params(cfg.width(l));           // decoder blocks
        }
    }
    n += static_cast<std::uint64_t>(cfg.refinement_blocks) * block_params(c0);
    n += 9 * c0 + c0 * 3 + 3;  // output head
    return n;
}

BoundParams::BoundParams(Graph& g, const WeightStore& store) {
    vars_.reserve(store.size());
    for (const auto& e : store.entries()) {
        index_[e.name] = vars_.size();
        vars_.emplace_back(e.name, g.leaf(e.tensor));
    }
}

BoundParams::BoundParams(std::vector<std::pair<std::string, Var>> vars) : vars_(std::move(vars)) {
    for (std::size_t i = 0; i < vars_.size(); ++i) index_[vars_[i].first] = i;
}

const Var& BoundParams::at(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw ValueError("unbound parameter: " + name);
    return vars_[it->second].second;
}

namespace {

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

Var model_forward(Graph& g, const ModelConfig& cfg, const BoundParams& bp, const Var& input) {
    cfg.validate();
    const Tensor& xv = input.val();
    if (xv.rank() != 3 || xv.extent(2) != cfg.in_channels) {
        throw ShapeError("model input " + xv.shape_str() + " does not match in_channels " +
                         std::to_string(cfg.in_channels));
    }
    const std::int64_t h = xv.extent(0), w = xv.extent(1);
    const std::int64_t mult = cfg.spatial_multiple();
    const std::int64_t L = cfg.levels();

    Var x = ops::pad_hw(g, input, round_up(h, mult), round_up(w, mult));
    Var feat = ops::conv1x1(g, x, bp.at("embed.pw.w"), bp.at("embed.pw.b"));
    feat = ops::dwconv3x3(g, feat, bp.at("embed.dw.w"));

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
            feat = swda_block(g, feat, block_vars(bp, "dec" + std::to_string(l) + ".block" + std::to_string(b)),
                              cfg.block_config(l, b));
        }
    }
    for (std::int64_t r = 0; r < cfg.refinement_blocks; ++r) {
        feat = swda_block(g, feat, block_vars(bp, "refine.block" + std::to_string(r)),
                          cfg.block_config(0, r));
    }
    Var delta = ops::dwconv3x3(g, feat, bp.at("out.dw.w"));
    delta = ops::conv1x1(g, delta, bp.at("out.pw.w"), bp.at("out.pw.b"));
    delta = ops::crop_hw(g, delta, h, w);

    Var image = (cfg.in_channels > 3) ? ops::split(g, input, 2, 3).first : input;
    return ops::add(g, image, delta);
}

Tensor model_apply(const Model& model, const Tensor& input, std::uint64_t* macs_out) {
    Graph g(Graph::Mode::NoGrad);
    BoundParams bp(g, model.weights);
    Var out = model_forward(g, model.config, bp, g.constant(input));
    if (macs_out) *macs_out = g.macs();
    return out.val();
}

}  // namespace swt
