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

#include "swt/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace swt {

bool AttnMaskSet::any_masked() const {
    if (!patterns) return false;
    for (int p : pattern_of_window) {
        const auto& pat = (*patterns)[static_cast<std::size_t>(p)];
        for (std::uint8_t a : pat) {
            if (!a) return true;
        }
    }
    return false;
}

Var Graph::leaf(Tensor value) {
    if (mode_ == Mode::NoGrad) {
        return Var{Var::kNoId, std::make_shared<const Tensor>(std::move(value))};
    }
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{});
    return Var{id, std::make_shared<const Tensor>(std::move(value))};
}

Var Graph::constant(Tensor value) {
    return Var{Var::kNoId, std::make_shared<const Tensor>(std::move(value))};
}

Var Graph::node(Tensor value, bool requires_grad, BackwardFn bw) {
    return node(std::make_shared<const Tensor>(std::move(value)), requires_grad, std::move(bw));
}

Var Graph::node(std::shared_ptr<const Tensor> value, bool requires_grad, BackwardFn bw) {
    if (mode_ == Mode::NoGrad || !requires_grad) {
        return Var{Var::kNoId, std::move(value)};
    }
    const auto id = static_cast<std::uint32_t>(nodes_.size());
    nodes_.push_back(Node{std::move(bw)});
    return Var{id, std::move(value)};
}

void Graph::backward(const Var& loss) {
    if (mode_ != Mode::Train) {
        throw ValueError("backward() on a no-grad graph");
    }
    if (loss.id == Var::kNoId) {
        throw ValueError("backward() from a constant; loss does not depend on any leaf");
    }
    if (loss.val().size() != 1) {
        throw ShapeError("backward() needs a scalar loss, got " + loss.val().shape_str());
    }
    grads_.assign(nodes_.size(), Tensor{});
    grads_[loss.id] = Tensor({1}, {1.0});
    for (std::int64_t id = loss.id; id >= 0; --id) {
        auto& g = grads_[static_cast<std::size_t>(id)];
        if (g.empty()) continue;
        auto& bw = nodes_[static_cast<std::size_t>(id)].backward;
        if (bw) {
            bw(*this, g);
            g = Tensor{};  // intermediate gradients are dead once propagated
        }
    }
}

Tensor Graph::grad(const Var& v) const {
    if (v.id == Var::kNoId || v.id >= grads_.size() || grads_[v.id].empty()) {
        return Tensor(v.val().shape());
    }
    return grads_[v.id];
}

void Graph::accum(const Var& v, const Tensor& contribution) {
    if (!needs_grad(v)) return;
    auto& g = grads_[v.id];
    if (g.empty()) {
        g = contribution;
        return;
    }
    require_same_shape(g, contribution, "gradient accumulation");
    double* gp = g.data();
    const double* cp = contribution.data();
    for (std::int64_t i = 0; i < g.size(); ++i) gp[i] += cp[i];
}

void Graph::accum(const Var& v, Tensor&& contribution) {
    if (!needs_grad(v)) return;
    auto& g = grads_[v.id];
    if (g.empty()) {
        g = std::move(contribution);
        return;
    }
    accum(v, static_cast<const Tensor&>(contribution));
}

namespace ops {
namespace {

bool any_grad(Graph& g, const Var& a) { return g.needs_grad(a); }
bool any_grad(Graph& g, const Var& a, const Var& b) { return g.needs_grad(a) || g.needs_grad(b); }
bool any_grad(Graph& g, const Var& a, const Var& b, const Var& c) {
    return g.needs_grad(a) || g.needs_grad(b) || g.needs_grad(c);
}

// r x k . k x c with the inner sum accumulated in ascending k per element.
void matmul_acc(const double* a, const double* b, double* out,
                std::int64_t r, std::int64_t k, std::int64_t c) {
    for (std::int64_t i = 0; i < r; ++i) {
        double* orow = out + i * c;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = a[i * k + kk];
            const double* brow = b + kk * c;
            for (std::int64_t j = 0; j < c; ++j) orow[j] += av * brow[j];
        }
    }
}

// out += a . b^T where a is r x c and b is k x c (result r x k).
void matmul_bt_acc(const double* a, const double* b, double* out,
                   std::int64_t r, std::int64_t c, std::int64_t k) {
    for (std::int64_t i = 0; i < r; ++i) {
        const double* arow = a + i * c;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double* brow = b + kk * c;
            double acc = 0.0;
            for (std::int64_t j = 0; j < c; ++j) acc += arow[j] * brow[j];
            out[i * k + kk] += acc;
        }
    }
}

// out += a^T . b where a is r x k and b is r x c (result k x c).
void matmul_at_acc(const double* a, const double* b, double* out,
                   std::int64_t r, std::int64_t k, std::int64_t c) {
    for (std::int64_t i = 0; i < r; ++i) {
        const double* brow = b + i * c;
        for (std::int64_t kk = 0; kk < k; ++kk) {
            const double av = a[i * k + kk];
            double* orow = out + kk * c;
            for (std::int64_t j = 0; j < c; ++j) orow[j] += av * brow[j];
        }
    }
}

std::vector<std::int64_t> flat2(const Tensor& x) {
    // Collapse all leading axes: P x C with C the last extent.
    const auto& s = x.shape();
    if (s.empty()) throw ShapeError("expected rank >= 1");
    std::int64_t c = s.back();
    return {x.size() / c, c};
}

}  // namespace

Var add(Graph& g, const Var& a, const Var& b) {
    require_same_shape(a.val(), b.val(), "add");
    Tensor out = a.val();
    const double* bp = b.val().data();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += bp[i];
    return g.node(std::move(out), any_grad(g, a, b), [a, b](Graph& gr, const Tensor& go) {
        gr.accum(a, go);
        gr.accum(b, go);
    });
}

Var sub(Graph& g, const Var& a, const Var& b) {
    require_same_shape(a.val(), b.val(), "sub");
    Tensor out = a.val();
    const double* bp = b.val().data();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] -= bp[i];
    return g.node(std::move(out), any_grad(g, a, b), [a, b](Graph& gr, const Tensor& go) {
        gr.accum(a, go);
        if (gr.needs_grad(b)) {
            Tensor gb = go;
            for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] = -gb[i];
            gr.accum(b, std::move(gb));
        }
    });
}

Var mul(Graph& g, const Var& a, const Var& b) {
    require_same_shape(a.val(), b.val(), "mul");
    Tensor out = a.val();
    const double* bp = b.val().data();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= bp[i];
    return g.node(std::move(out), any_grad(g, a, b), [a, b](Graph& gr, const Tensor& go) {
        if (gr.needs_grad(a)) {
            Tensor ga = go;
            const double* bv = b.val().data();
            for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] *= bv[i];
            gr.accum(a, std::move(ga));
        }
        if (gr.needs_grad(b)) {
            Tensor gb = go;
            const double* av = a.val().data();
            for (std::int64_t i = 0; i < gb.size(); ++i) gb[i] *= av[i];
            gr.accum(b, std::move(gb));
        }
    });
}

Var scale(Graph& g, const Var& a, double s) {
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] *= s;
    return g.node(std::move(out), any_grad(g, a), [a, s](Graph& gr, const Tensor& go) {
        Tensor ga = go;
        for (std::int64_t i = 0; i < ga.size(); ++i) ga[i] *= s;
        gr.accum(a, std::move(ga));
    });
}

Var add_scalar(Graph& g, const Var& a, double c) {
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] += c;
    return g.node(std::move(out), any_grad(g, a),
                  [a](Graph& gr, const Tensor& go) { gr.accum(a, go); });
}

Var abs(Graph& g, const Var& a) {
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.size(); ++i) out[i] = std::fabs(out[i]);
    return g.node(std::move(out), any_grad(g, a), [a](Graph& gr, const Tensor& go) {
        Tensor ga = go;
        const double* av = a.val().data();
        for (std::int64_t i = 0; i < ga.size(); ++i) {
            ga[i] *= (av[i] > 0.0) ? 1.0 : (av[i] < 0.0 ? -1.0 : 0.0);
        }
        gr.accum(a, std::move(ga));
    });
}

namespace {
constexpr double kGeluC0 = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluC1 = 0.044715;
}  // namespace

Var gelu(Graph& g, const Var& a) {
    Tensor out = a.val();
    for (std::int64_t i = 0; i < out.size(); ++i) {
        const double x = out[i];
        out[i] = 0.5 * x * (1.0 + std::tanh(kGeluC0 * (x + kGeluC1 * x * x * x)));
    }
    return g.node(std::move(out), any_grad(g, a), [a](Graph& gr, const Tensor& go) {
        Tensor ga = go;
        const double* av = a.val().data();
        for (std::int64_t i = 0; i < ga.size(); ++i) {
            const double x = av[i];
            const double t = std::tanh(kGeluC0 * (x + kGeluC1 * x * x * x));
            const double du = kGeluC0 * (1.0 + 3.0 * kGeluC1 * x * x);
            ga[i] *= 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * du;
        }
        gr.accum(a, std::move(ga));
    });
}

Var matmul(Graph& g, const Var& a, const Var& b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rank() != 2 || bv.rank() != 2) {
        throw ShapeError("matmul expects rank-2 operands, got " + av.shape_str() + " and " + bv.shape_str());
    }
    const std::int64_t r = av.extent(0), k = av.extent(1), c = bv.extent(1);
    if (bv.extent(0) != k) {
        throw ShapeError("matmul inner extents differ: " + av.shape_str() + " . " + bv.shape_str());
    }
    Tensor out({r, c});
    matmul_acc(av.data(), bv.data(), out.data(), r, k, c);
    g.add_macs(static_cast<std::uint64_t>(r) * static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(c));
    return g.node(std::move(out), any_grad(g, a, b), [a, b, r, k, c](Graph& gr, const Tensor& go) {
        if (gr.needs_grad(a)) {
            Tensor ga(a.val().shape());
            matmul_bt_acc(go.data(), b.val().data(), ga.data(), r, c, k);
            gr.accum(a, std::move(ga));
        }
        if (gr.needs_grad(b)) {
            Tensor gb(b.val().shape());
            matmul_at_acc(a.val().data(), go.data(), gb.data(), r, k, c);
            gr.accum(b, std::move(gb));
        }
    });
}

Var bmm(Graph& g, const Var& a, const Var& b) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rank() != 3 || bv.rank() != 3) {
        throw ShapeError("bmm expects rank-3 operands, got " + av.shape_str() + " and " + bv.shape_str());
    }
    const std::int64_t n = av.extent(0), r = av.extent(1), k = av.extent(2), c = bv.extent(2);
    if (bv.extent(0) != n || bv.extent(1) != k) {
        throw ShapeError("bmm operand shapes incompatible: " + av.shape_str() + " . " + bv.shape_str());
    }
    Tensor out({n, r, c});
    for (std::int64_t i = 0; i < n; ++i) {
        matmul_acc(av.data() + i * r * k, bv.data() + i * k * c, out.data() + i * r * c, r, k, c);
    }
    g.add_macs(static_cast<std::uint64_t>(n) * static_cast<std::uint64_t>(r) *
               static_cast<std::uint64_t>(k) * static_cast<std::uint64_t>(c));
    return g.node(std::move(out), any_grad(g, a, b), [a, b, n, r, k, c](Graph& gr, const Tensor& go) {
        if (gr.needs_grad(a)) {
            Tensor ga(a.val().shape());
            for (std::int64_t i = 0; i < n; ++i) {
                matmul_bt_acc(go.data() + i * r * c, b.val().data() + i * k * c,
                              ga.data() + i * r * k, r, c, k);
            }
            gr.accum(a, std::move(ga));
        }
        if (gr.needs_grad(b)) {
            Tensor gb(b.val().shape());
            for (std::int64_t i = 0; i < n; ++i) {
                matmul_at_acc(a.val().data() + i * r * k, go.data() + i * r * c,
                              gb.data() + i * k * c, r, k, c);
            }
            gr.accum(b, std::move(gb));
        }
    });
}

namespace {

Var conv1x1_impl(Graph& g, const Var& x, const Var& w, const Var* bias) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    if (wv.rank() != 2) throw ShapeError("conv1x1 weight must be Cin x Cout, got " + wv.shape_str());
    const auto pc = flat2(xv);
    const std::int64_t p = pc[0], cin = pc[1], cout = wv.extent(1);
    if (wv.extent(0) != cin) {
        throw ShapeError("conv1x1 channel mismatch: input " + xv.shape_str() + ", weight " + wv.shape_str());
    }
    if (bias && (bias->val().rank() != 1 || bias->val().extent(0) != cout)) {
        throw ShapeError("conv1x1 bias must have extent " + std::to_string(cout));
    }
    std::vector<std::int64_t> out_shape = xv.shape();
    out_shape.back() = cout;
    Tensor out(out_shape);
    matmul_acc(xv.data(), wv.data(), out.data(), p, cin, cout);
    if (bias) {
        const double* bp = bias->val().data();
        double* op = out.data();
        for (std::int64_t i = 0; i < p; ++i) {
            for (std::int64_t o = 0; o < cout; ++o) op[i * cout + o] += bp[o];
        }
    }
    g.add_macs(static_cast<std::uint64_t>(p) * static_cast<std::uint64_t>(cin) *
               static_cast<std::uint64_t>(cout));
    const bool rg = bias ? any_grad(g, x, w, *bias) : any_grad(g, x, w);
    Var bvar = bias ? *bias : Var{};
    const bool has_bias = bias != nullptr;
    return g.node(std::move(out), rg,
                  [x, w, bvar, has_bias, p, cin, cout](Graph& gr, const Tensor& go) {
        if (gr.needs_grad(x)) {
            Tensor gx(x.val().shape());
            matmul_bt_acc(go.data(), w.val().data(), gx.data(), p, cout, cin);
            gr.accum(x, std::move(gx));
        }
        if (gr.needs_grad(w)) {
            Tensor gw(w.val().shape());
            matmul_at_acc(x.val().data(), go.data(), gw.data(), p, cin, cout);
            gr.accum(w, std::move(gw));
        }
        if (has_bias && gr.needs_grad(bvar)) {
            Tensor gb({cout});
            const double* gp = go.data();
            for (std::int64_t i = 0; i < p; ++i) {
                for (std::int64_t o = 0; o < cout; ++o) gb[o] += gp[i * cout + o];
            }
            gr.accum(bvar, std::move(gb));
        }
    });
}

}  // namespace

Var conv1x1(Graph& g, const Var& x, const Var& w, const Var& b) { return conv1x1_impl(g, x, w, &b); }
Var conv1x1(Graph& g, const Var& x, const Var& w) { return conv1x1_impl(g, x, w, nullptr); }

Var dwconv3x3(Graph& g, const Var& x, const Var& w) {
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    if (xv.rank() != 3) throw ShapeError("dwconv3x3 expects H x W x C input, got " + xv.shape_str());
    if (wv.rank() != 3 || wv.extent(0) != 3 || wv.extent(1) != 3) {
        throw ShapeError("dwconv3x3 kernel must be 3 x 3 x C, got " + wv.shape_str());
    }
    const std::int64_t h = xv.extent(0), wd = xv.extent(1), c = xv.extent(2);
    if (wv.extent(2) != c) {
        throw ShapeError("dwconv3x3 channel mismatch: input " + xv.shape_str() + ", kernel " + wv.shape_str());
    }
    Tensor out({h, wd, c});
    const double* xp = xv.data();
    const double* wp = wv.data();
    double* op = out.data();
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t xx = 0; xx < wd; ++xx) {
            double* orow = op + (y * wd + xx) * c;
            for (std::int64_t dy = 0; dy < 3; ++dy) {
                const std::int64_t sy = y + dy - 1;
                if (sy < 0 || sy >= h) continue;
                for (std::int64_t dx = 0; dx < 3; ++dx) {
                    const std::int64_t sx = xx + dx - 1;
                    if (sx < 0 || sx >= wd) continue;
                    const double* xrow = xp + (sy * wd + sx) * c;
                    const double* wrow = wp + (dy * 3 + dx) * c;
                    for (std::int64_t ch = 0; ch < c; ++ch) orow[ch] += xrow[ch] * wrow[ch];
                }
            }
        }
    }
    // Nominal tap count: 9 per output element, the convention the cost model uses.
    g.add_macs(9ull * static_cast<std::uint64_t>(h) * static_cast<std::uint64_t>(wd) *
               static_cast<std::uint64_t>(c));
    return g.node(std::move(out), any_grad(g, x, w), [x, w, h, wd, c](Graph& gr, const Tensor& go) {
        const double* gp = go.data();
        if (gr.needs_grad(x)) {
            Tensor gx(x.val().shape());
            double* gxp = gx.data();
            const double* wp2 = w.val().data();
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t xx = 0; xx < wd; ++xx) {
                    const double* grow = gp + (y * wd + xx) * c;
                    for (std::int64_t dy = 0; dy < 3; ++dy) {
                        const std::int64_t sy = y + dy - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (std::int64_t dx = 0; dx < 3; ++dx) {
                            const std::int64_t sx = xx + dx - 1;
                            if (sx < 0 || sx >= wd) continue;
                            double* xrow = gxp + (sy * wd + sx) * c;
                            const double* wrow = wp2 + (dy * 3 + dx) * c;
                            for (std::int64_t ch = 0; ch < c; ++ch) xrow[ch] += grow[ch] * wrow[ch];
                        }
                    }
                }
            }
            gr.accum(x, std::move(gx));
        }
        if (gr.needs_grad(w)) {
            Tensor gw(w.val().shape());
            double* gwp = gw.data();
            const double* xp2 = x.val().data();
            for (std::int64_t y = 0; y < h; ++y) {
                for (std::int64_t xx = 0; xx < wd; ++xx) {
                    const double* grow = gp + (y * wd + xx) * c;
                    for (std::int64_t dy = 0; dy < 3; ++dy) {
                        const std::int64_t sy = y + dy - 1;
                        if (sy < 0 || sy >= h) continue;
                        for (std::int64_t dx = 0; dx < 3; ++dx) {
                            const std::int64_t sx = xx + dx - 1;
                            if (sx < 0 || sx >= wd) continue;
                            const double* xrow = xp2 + (sy * wd + sx) * c;
                            double* wrow = gwp + (dy * 3 + dx) * c;
                            for (std::int64_t ch = 0; ch < c; ++ch) wrow[ch] += grow[ch] * xrow[ch];
                        }
                    }
                }
            }
            gr.accum(w, std::move(gw));
        }
    });
}

namespace {

void softmax_row(const double* x, double* out, std::int64_t n) {
    double mx = x[0];
    for (std::int64_t i = 1; i < n; ++i) mx = std::max(mx, x[i]);
    double z = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        out[i] = std::exp(x[i] - mx);
        z += out[i];
    }
    const double inv = 1.0 / z;
    for (std::int64_t i = 0; i < n; ++i) out[i] *= inv;
}

// dx = p * (g - sum(p*g)) per row; exact zeros stay zero.
void softmax_row_backward(const double* p, const double* gout, double* gx, std::int64_t n) {
    double dot = 0.0;
    for (std::int64_t i = 0; i < n; ++i) dot += p[i] * gout[i];
    for (std::int64_t i = 0; i < n; ++i) gx[i] += p[i] * (gout[i] - dot);
}

}  // namespace

Var softmax_last(Graph& g, const Var& x) {
    const Tensor& xv = x.val();
    const auto pc = flat2(xv);
    const std::int64_t rows = pc[0], n = pc[1];
    Tensor out(xv.shape());
    for (std::int64_t i = 0; i < rows; ++i) {
        softmax_row(xv.data() + i * n, out.data() + i * n, n);
    }
    auto outp = std::make_shared<const Tensor>(std::move(out));
    return g.node(outp, any_grad(g, x), [x, outp, rows, n](Graph& gr, const Tensor& go) {
        Tensor gx(x.val().shape());
        for (std::int64_t i = 0; i < rows; ++i) {
            softmax_row_backward(outp->data() + i * n, go.data() + i * n, gx.data() + i * n, n);
        }
        gr.accum(x, std::move(gx));
    });
}

Var masked_softmax_last(Graph& g, const Var& x, const AttnMaskSet& masks, int heads) {
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw ShapeError("masked softmax expects B x t x t scores");
    const std::int64_t b = xv.extent(0), rows = xv.extent(1), n = xv.extent(2);
    if (rows != masks.tokens || n != masks.tokens) {
        throw ShapeError("mask token count does not match score extents");
    }
    if (b != static_cast<std::int64_t>(masks.pattern_of_window.size()) * heads) {
        throw ShapeError("mask window count does not match score batch");
    }
    Tensor out(xv.shape());
    for (std::int64_t bi = 0; bi < b; ++bi) {
        const auto& pat = (*masks.patterns)[static_cast<std::size_t>(
            masks.pattern_of_window[static_cast<std::size_t>(bi / heads)])];
        const double* xb = xv.data() + bi * rows * n;
        double* ob = out.data() + bi * rows * n;
        for (std::int64_t i = 0; i < rows; ++i) {
            const double* xr = xb + i * n;
            double* orow = ob + i * n;
            const std::uint8_t* arow = pat.data() + i * n;
            double mx = -std::numeric_limits<double>::infinity();
            for (std::int64_t j = 0; j < n; ++j) {
                if (arow[j]) mx = std::max(mx, xr[j]);
            }
            double z = 0.0;
            for (std::int64_t j = 0; j < n; ++j) {
                if (arow[j]) {
                    orow[j] = std::exp(xr[j] - mx);
                    z += orow[j];
                } else {
                    orow[j] = 0.0;
                }
            }
            const double inv = 1.0 / z;
            for (std::int64_t j = 0; j < n; ++j) orow[j] *= inv;
        }
    }
    auto outp = std::make_shared<const Tensor>(std::move(out));
    return g.node(outp, any_grad(g, x), [x, outp, b, rows, n](Graph& gr, const Tensor& go) {
        // masked entries have p == 0, so the plain softmax Jacobian already
        // routes zero gradient through them
        Tensor gx(x.val().shape());
        for (std::int64_t bi = 0; bi < b; ++bi) {
            for (std::int64_t i = 0; i < rows; ++i) {
                const std::int64_t off = (bi * rows + i) * n;
                softmax_row_backward(outp->data() + off, go.data() + off, gx.data() + off, n);
            }
        }
        gr.accum(x, std::move(gx));
    });
}

Var layernorm_last(Graph& g, const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Tensor& xv = x.val();
    const auto pc = flat2(xv);
    const std::int64_t rows = pc[0], c = pc[1];
    const Tensor& gv = gamma.val();
    const Tensor& bv = beta.val();
    if (gv.size() != c || bv.size() != c) {
        throw ShapeError("layernorm gamma/beta must have extent " + std::to_string(c));
    }
    Tensor out(xv.shape());
    Tensor xhat(xv.shape());
    Tensor rstd({rows});
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* xr = xv.data() + i * c;
        double mu = 0.0;
        for (std::int64_t j = 0; j < c; ++j) mu += xr[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::int64_t j = 0; j < c; ++j) {
            const double d = xr[j] - mu;
            var += d * d;
        }
        var /= static_cast<double>(c);
        const double rs = 1.0 / std::sqrt(var + eps);
        rstd[i] = rs;
        double* xh = xhat.data() + i * c;
        double* orow = out.data() + i * c;
        for (std::int64_t j = 0; j < c; ++j) {
            xh[j] = (xr[j] - mu) * rs;
            orow[j] = gv[j] * xh[j] + bv[j];
        }
    }
    auto xhatp = std::make_shared<const Tensor>(std::move(xhat));
    auto rstdp = std::make_shared<const Tensor>(std::move(rstd));
    return g.node(std::move(out), any_grad(g, x, gamma, beta),
                  [x, gamma, beta, xhatp, rstdp, rows, c](Graph& gr, const Tensor& go) {
        const Tensor& xh = *xhatp;
        const Tensor& rs = *rstdp;
        const double* gv2 = gamma.val().data();
        if (gr.needs_grad(x)) {
            Tensor gx(x.val().shape());
            for (std::int64_t i = 0; i < rows; ++i) {
                const double* grow = go.data() + i * c;
                const double* xhr = xh.data() + i * c;
                double* gxr = gx.data() + i * c;
                double mean_dxhat = 0.0, mean_dxhat_xhat = 0.0;
                for (std::int64_t j = 0; j < c; ++j) {
                    const double dxh = grow[j] * gv2[j];
                    mean_dxhat += dxh;
                    mean_dxhat_xhat += dxh * xhr[j];
                }
                mean_dxhat /= static_cast<double>(c);
                mean_dxhat_xhat /= static_cast<double>(c);
                for (std::int64_t j = 0; j < c; ++j) {
                    const double dxh = grow[j] * gv2[j];
                    gxr[j] = (dxh - mean_dxhat - xhr[j] * mean_dxhat_xhat) * rs[i];
                }
            }
            gr.accum(x, std::move(gx));
        }
        if (gr.needs_grad(gamma)) {
            Tensor gg({c});
            for (std::int64_t i = 0; i < rows; ++i) {
                const double* grow = go.data() + i * c;
                const double* xhr = xh.data() + i * c;
                for (std::int64_t j = 0; j < c; ++j) gg[j] += grow[j] * xhr[j];
            }
            gr.accum(gamma, std::move(gg));
        }
        if (gr.needs_grad(beta)) {
            Tensor gb({c});
            for (std::int64_t i = 0; i < rows; ++i) {
                const double* grow = go.data() + i * c;
                for (std::int64_t j = 0; j < c; ++j) gb[j] += grow[j];
            }
            gr.accum(beta, std::move(gb));
        }
    });
}

Var l2_normalize_last(Graph& g, const Var& x, double eps) {
    const Tensor& xv = x.val();
    const auto pc = flat2(xv);
    const std::int64_t rows = pc[0], n = pc[1];
    Tensor out(xv.shape());
    Tensor rnorm({rows});
    for (std::int64_t i = 0; i < rows; ++i) {
        const double* xr = xv.data() + i * n;
        double ss = 0.0;
        for (std::int64_t j = 0; j < n; ++j) ss += xr[j] * xr[j];
        const double inv = 1.0 / std::sqrt(ss + eps);
        rnorm[i] = inv;
        double* orow = out.data() + i * n;
        for (std::int64_t j = 0; j < n; ++j) orow[j] = xr[j] * inv;
    }
    auto rn = std::make_shared<const Tensor>(std::move(rnorm));
    return g.node(std::move(out), any_grad(g, x), [x, rn, rows, n](Graph& gr, const Tensor& go) {
        Tensor gx(x.val().shape());
        const double* xp = x.val().data();
        for (std::int64_t i = 0; i < rows; ++i) {
            const double* xr = xp + i * n;
            const double* grow = go.data() + i * n;
            double* gxr = gx.data() + i * n;
            const double inv = (*rn)[i];
            double dot = 0.0;
            for (std::int64_t j = 0; j < n; ++j) dot += grow[j] * xr[j];
            const double inv3dot = inv * inv * inv * dot;
            for (std::int64_t j = 0; j < n; ++j) gxr[j] = grow[j] * inv - xr[j] * inv3dot;
        }
        gr.accum(x, std::move(gx));
    });
}

Var temperature_scale(Graph& g, const Var& x, const Var& alpha, int heads) {
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw ShapeError("temperature_scale expects B x r x c scores");
    const Tensor& av = alpha.val();
    if (av.size() != heads) throw ShapeError("temperature vector must have one entry per head");
    const std::int64_t b = xv.extent(0), slice = xv.extent(1) * xv.extent(2);
    if (b % heads != 0) throw ShapeError("score batch not divisible by head count");
    Tensor out(xv.shape());
    for (std::int64_t bi = 0; bi < b; ++bi) {
        const double s = av[bi % heads];
        const double* xs = xv.data() + bi * slice;
        double* os = out.data() + bi * slice;
        for (std::int64_t i = 0; i < slice; ++i) os[i] = xs[i] * s;
    }
    return g.node(std::move(out), any_grad(g, x, alpha),
                  [x, alpha, heads, b, slice](Graph& gr, const Tensor& go) {
        if (gr.needs_grad(x)) {
            Tensor gx(x.val().shape());
            const double* ap = alpha.val().data();
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const double s = ap[bi % heads];
                const double* gs = go.data() + bi * slice;
                double* gxs = gx.data() + bi * slice;
                for (std::int64_t i = 0; i < slice; ++i) gxs[i] = gs[i] * s;
            }
            gr.accum(x, std::move(gx));
        }
        if (gr.needs_grad(alpha)) {
            Tensor ga({static_cast<std::int64_t>(heads)});
            const double* xp = x.val().data();
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const double* gs = go.data() + bi * slice;
                const double* xs = xp + bi * slice;
                double acc = 0.0;
                for (std::int64_t i = 0; i < slice; ++i) acc += gs[i] * xs[i];
                ga[bi % heads] += acc;
            }
            gr.accum(alpha, std::move(ga));
        }
    });
}

Var add_per_head(Graph& g, const Var& x, const Var& bias, int heads) {
    const Tensor& xv = x.val();
    const Tensor& bv = bias.val();
    if (xv.rank() != 3 || bv.rank() != 3) throw ShapeError("add_per_head expects rank-3 operands");
    const std::int64_t b = xv.extent(0), slice = xv.extent(1) * xv.extent(2);
    if (bv.extent(0) != heads || bv.extent(1) != xv.extent(1) || bv.extent(2) != xv.extent(2)) {
        throw ShapeError("per-head bias shape mismatch: " + bv.shape_str());
    }
    if (b % heads != 0) throw ShapeError("score batch not divisible by head count");
    Tensor out(xv.shape());
    for (std::int64_t bi = 0; bi < b; ++bi) {
        const double* xs = xv.data() + bi * slice;
        const double* bs = bv.data() + (bi % heads) * slice;
        double* os = out.data() + bi * slice;
        for (std::int64_t i = 0; i < slice; ++i) os[i] = xs[i] + bs[i];
    }
    return g.node(std::move(out), any_grad(g, x, bias),
                  [x, bias, heads, b, slice](Graph& gr, const Tensor& go) {
        gr.accum(x, go);
        if (gr.needs_grad(bias)) {
            Tensor gb(bias.val().shape());
            for (std::int64_t bi = 0; bi < b; ++bi) {
                const double* gs = go.data() + bi * slice;
                double* gbs = gb.data() + (bi % heads) * slice;
                for (std::int64_t i = 0; i < slice; ++i) gbs[i] += gs[i];
            }
            gr.accum(bias, std::move(gb));
        }
    });
}

Var reshape(Graph& g, const Var& x, std::vector<std::int64_t> shape) {
    Tensor out = x.val().reshaped(std::move(shape));
    return g.node(std::move(out), any_grad(g, x), [x](Graph& gr, const Tensor& go) {
        gr.accum(x, go.reshaped(x.val().shape()));
    });
}

namespace {

Tensor permute_tensor(const Tensor& x, const std::vector<int>& order) {
    const auto& s = x.shape();
    const int rank = static_cast<int>(s.size());
    if (static_cast<int>(order.size()) != rank) {
        throw ShapeError("permute order length does not match rank");
    }
    std::vector<std::int64_t> os(order.size());
    for (int i = 0; i < rank; ++i) os[static_cast<std::size_t>(i)] = s[static_cast<std::size_t>(order[i])];
    Tensor out(os);
    // source strides
    std::vector<std::int64_t> sstr(s.size(), 1);
    for (int i = rank - 2; i >= 0; --i) sstr[i] = sstr[i + 1] * s[i + 1];
    std::vector<std::int64_t> step(order.size());
    for (int i = 0; i < rank; ++i) step[i] = sstr[static_cast<std::size_t>(order[i])];
    std::vector<std::int64_t> idx(s.size(), 0);
    const std::int64_t n = x.size();
    std::int64_t src = 0;
    for (std::int64_t flat = 0; flat < n; ++flat) {
        out[flat] = x[src];
        for (int ax = rank - 1; ax >= 0; --ax) {
            idx[ax]++;
            src += step[ax];
            if (idx[ax] < os[ax]) break;
            src -= step[ax] * os[ax];
            idx[ax] = 0;
        }
    }
    return out;
}

std::vector<int> inverse_order(const std::vector<int>& order) {
    std::vector<int> inv(order.size());
    for (std::size_t i = 0; i < order.size(); ++i) inv[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    return inv;
}

}  // namespace

Var permute(Graph& g, const Var& x, const std::vector<int>& order) {
    Tensor out = permute_tensor(x.val(), order);
    return g.node(std::move(out), any_grad(g, x), [x, order](Graph& gr, const Tensor& go) {
        gr.accum(x, permute_tensor(go, inverse_order(order)));
    });
}

namespace {

struct AxisSplit {
    std::int64_t outer, mid, inner;
};

AxisSplit axis_split(const std::vector<std::int64_t>& shape, int axis) {
    if (axis < 0 || axis >= static_cast<int>(shape.size())) {
        throw ShapeError("axis " + std::to_string(axis) + " out of range for rank " +
                         std::to_string(shape.size()));
    }
    AxisSplit s{1, shape[static_cast<std::size_t>(axis)], 1};
    for (int i = 0; i < axis; ++i) s.outer *= shape[static_cast<std::size_t>(i)];
    for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < shape.size(); ++i) s.inner *= shape[i];
    return s;
}

}  // namespace

Var concat(Graph& g, const Var& a, const Var& b, int axis) {
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rank() != bv.rank()) throw ShapeError("concat rank mismatch");
    for (int i = 0; i < av.rank(); ++i) {
        if (i != axis && av.extent(i) != bv.extent(i)) {
            throw ShapeError("concat: non-concat extents differ, " + av.shape_str() + " vs " + bv.shape_str());
        }
    }
    const auto sa = axis_split(av.shape(), axis);
    const auto sb = axis_split(bv.shape(), axis);
    std::vector<std::int64_t> os = av.shape();
    os[static_cast<std::size_t>(axis)] = sa.mid + sb.mid;
    Tensor out(os);
    const std::int64_t arow = sa.mid * sa.inner, brow = sb.mid * sb.inner, orow = arow + brow;
    for (std::int64_t i = 0; i < sa.outer; ++i) {
        std::copy_n(av.data() + i * arow, arow, out.data() + i * orow);
        std::copy_n(bv.data() + i * brow, brow, out.data() + i * orow + arow);
    }
    return g.node(std::move(out), any_grad(g, a, b),
                  [a, b, sa, arow, brow, orow](Graph& gr, const Tensor& go) {
        if (gr.needs_grad(a)) {
            Tensor ga(a.val().shape());
            for (std::int64_t i = 0; i < sa.outer; ++i) {
                std::copy_n(go.data() + i * orow, arow, ga.data() + i * arow);
            }
            gr.accum(a, std::move(ga));
        }
        if (gr.needs_grad(b)) {
            Tensor gb(b.val().shape());
            for (std::int64_t i = 0; i < sa.outer; ++i) {
                std::copy_n(go.data() + i * orow + arow, brow, gb.data() + i * brow);
            }
            gr.accum(b, std::move(gb));
        }
    });
}

std::pair<Var, Var> split(Graph& g, const Var& x, int axis, std::int64_t point) {
    const Tensor& xv = x.val();
    const auto s = axis_split(xv.shape(), axis);
    if (point <= 0 || point >= s.mid) {
        throw ShapeError("split point " + std::to_string(point) + " outside axis extent " +
                         std::to_string(s.mid));
    }
    std::vector<std::int64_t> s1 = xv.shape(), s2 = xv.shape();
    s1[static_cast<std::size_t>(axis)] = point;
    s2[static_cast<std::size_t>(axis)] = s.mid - point;
    Tensor t1(s1), t2(s2);
    const std::int64_t row1 = point * s.inner, row2 = (s.mid - point) * s.inner, xrow = row1 + row2;
    for (std::int64_t i = 0; i < s.outer; ++i) {
        std::copy_n(xv.data() + i * xrow, row1, t1.data() + i * row1);
        std::copy_n(xv.data() + i * xrow + row1, row2, t2.data() + i * row2);
    }
    const bool rg = g.needs_grad(x);
    Var v1 = g.node(std::move(t1), rg, [x, s, row1, xrow](Graph& gr, const Tensor& go) {
        Tensor gx(x.val().shape());  // zeros outside this slice
        for (std::int64_t i = 0; i < s.outer; ++i) {
            std::copy_n(go.data() + i * row1, row1, gx.data() + i * xrow);
        }
        gr.accum(x, std::move(gx));
    });
    Var v2 = g.node(std::move(t2), rg, [x, s, row1, row2, xrow](Graph& gr, const Tensor& go) {
        Tensor gx(x.val().shape());
        for (std::int64_t i = 0; i < s.outer; ++i) {
            std::copy_n(go.data() + i * row2, row2, gx.data() + i * xrow + row1);
        }
        gr.accum(x, std::move(gx));
    });
    return {v1, v2};
}

Var gather_rows(Graph& g, const Var& table, std::shared_ptr<const std::vector<std::int64_t>> idx) {
    const Tensor& tv = table.val();
    if (tv.rank() != 2) throw ShapeError("gather_rows expects an N x F table");
    const std::int64_t n = tv.extent(0), f = tv.extent(1);
    const std::int64_t k = static_cast<std::int64_t>(idx->size());
    Tensor out({k, f});
    for (std::int64_t i = 0; i < k; ++i) {
        const std::int64_t r = (*idx)[static_cast<std::size_t>(i)];
        if (r < 0 || r >= n) throw ShapeError("gather_rows index out of range");
        std::copy_n(tv.data() + r * f, f, out.data() + i * f);
    }
    return g.node(std::move(out), any_grad(g, table), [table, idx, f, k](Graph& gr, const Tensor& go) {
        Tensor gt(table.val().shape());
        for (std::int64_t i = 0; i < k; ++i) {
            const std::int64_t r = (*idx)[static_cast<std::size_t>(i)];
            double* trow = gt.data() + r * f;
            const double* grow = go.data() + i * f;
            for (std::int64_t j = 0; j < f; ++j) trow[j] += grow[j];
        }
        gr.accum(table, std::move(gt));
    });
}

Var add_channels(Graph& g, const Var& x, const Var& v) {
    const Tensor& xv = x.val();
    const Tensor& vv = v.val();
    const auto pc = flat2(xv);
    const std::int64_t p = pc[0], c = pc[1];
    if (vv.size() != c) throw ShapeError("channel vector extent mismatch");
    Tensor out = xv;
    for (std::int64_t i = 0; i < p; ++i) {
        double* orow = out.data() + i * c;
        for (std::int64_t j = 0; j < c; ++j) orow[j] += vv[j];
    }
    return g.node(std::move(out), any_grad(g, x, v), [x, v, p, c](Graph& gr, const Tensor& go) {
        gr.accum(x, go);
        if (gr.needs_grad(v)) {
            Tensor gv(v.val().shape());
            for (std::int64_t i = 0; i < p; ++i) {
                const double* grow = go.data() + i * c;
                for (std::int64_t j = 0; j < c; ++j) gv[j] += grow[j];
            }
            gr.accum(v, std::move(gv));
        }
    });
}

Var pad_hw(Graph& g, const Var& x, std::int64_t hp, std::int64_t wp) {
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw ShapeError("pad_hw expects H x W x C input");
    const std::int64_t h = xv.extent(0), w = xv.extent(1), c = xv.extent(2);
    if (hp < h || wp < w) throw ShapeError("pad_hw target smaller than input");
    if (hp == h && wp == w) return x;
    Tensor out({hp, wp, c});
    for (std::int64_t y = 0; y < h; ++y) {
        std::copy_n(xv.data() + y * w * c, w * c, out.data() + y * wp * c);
    }
    return g.node(std::move(out), any_grad(g, x), [x, h, w, wp, c](Graph& gr, const Tensor& go) {
        Tensor gx(x.val().shape());
        for (std::int64_t y = 0; y < h; ++y) {
            std::copy_n(go.data() + y * wp * c, w * c, gx.data() + y * w * c);
        }
        gr.accum(x, std::move(gx));
    });
}

Var crop_hw(Graph& g, const Var& x, std::int64_t h, std::int64_t w) {
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw ShapeError("crop_hw expects H x W x C input");
    const std::int64_t hp = xv.extent(0), wp = xv.extent(1), c = xv.extent(2);
    if (h > hp || w > wp) throw ShapeError("crop_hw target larger than input");
    if (hp == h && wp == w) return x;
    Tensor out({h, w, c});
    for (std::int64_t y = 0; y < h; ++y) {
        std::copy_n(xv.data() + y * wp * c, w * c, out.data() + y * w * c);
    }
    return g.node(std::move(out), any_grad(g, x), [x, h, w, hp, wp, c](Graph& gr, const Tensor& go) {
        (void)hp;
        Tensor gx(x.val().shape());
        for (std::int64_t y = 0; y < h; ++y) {
            std::copy_n(go.data() + y * w * c, w * c, gx.data() + y * wp * c);
        }
        gr.accum(x, std::move(gx));
    });
}

Var pixel_unshuffle(Graph& g, const Var& x, int r) {
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw ShapeError("pixel_unshuffle expects H x W x C input");
    const std::int64_t h = xv.extent(0), w = xv.extent(1), c = xv.extent(2), rr = r;
    if (h % rr != 0 || w % rr != 0) {
        throw ShapeError("pixel_unshuffle extents " + xv.shape_str() + " not divisible by " + std::to_string(r));
    }
    const std::int64_t ho = h / rr, wo = w / rr, co = c * rr * rr;
    Tensor out({ho, wo, co});
    for (std::int64_t y = 0; y < ho; ++y) {
        for (std::int64_t xx = 0; xx < wo; ++xx) {
            double* orow = out.data() + (y * wo + xx) * co;
            for (std::int64_t ch = 0; ch < c; ++ch) {
                for (std::int64_t dy = 0; dy < rr; ++dy) {
                    for (std::int64_t dx = 0; dx < rr; ++dx) {
                        orow[ch * rr * rr + dy * rr + dx] =
                            xv[( (y * rr + dy) * w + (xx * rr + dx) ) * c + ch];
                    }
                }
            }
        }
    }
    return g.node(std::move(out), any_grad(g, x), [x, ho, wo, c, rr, w](Graph& gr, const Tensor& go) {
        Tensor gx(x.val().shape());
        const std::int64_t co = c * rr * rr;
        for (std::int64_t y = 0; y < ho; ++y) {
            for (std::int64_t xx = 0; xx < wo; ++xx) {
                const double* grow = go.data() + (y * wo + xx) * co;
                for (std::int64_t ch = 0; ch < c; ++ch) {
                    for (std::int64_t dy = 0; dy < rr; ++dy) {
                        for (std::int64_t dx = 0; dx < rr; ++dx) {
                            gx[((y * rr + dy) * w + (xx * rr + dx)) * c + ch] =
                                grow[ch * rr * rr + dy * rr + dx];
                        }
                    }
                }
            }
        }
        gr.accum(x, std::move(gx));
    });
}

Var pixel_shuffle(Graph& g, const Var& x, int r) {
    const Tensor& xv = x.val();
    if (xv.rank() != 3) throw ShapeError("pixel_shuffle expects H x W x C input");
    const std::int64_t h = xv.extent(0), w = xv.extent(1), c = xv.extent(2), rr = r;
    if (c % (rr * rr) != 0) {
        throw ShapeError("pixel_shuffle channels " + std::to_string(c) + " not divisible by r^2");
    }
    const std::int64_t co = c / (rr * rr), ho = h * rr, wo = w * rr;
    Tensor out({ho, wo, co});
    for (std::int64_t y = 0; y < h; ++y) {
        for (std::int64_t xx = 0; xx < w; ++xx) {
            const double* xrow = xv.data() + (y * w + xx) * c;
            for (std::int64_t ch = 0; ch < co; ++ch) {
                for (std::int64_t dy = 0; dy < rr; ++dy) {
                    for (std::int64_t dx = 0; dx < rr; ++dx) {
                        out[((y * rr + dy) * wo + (xx * rr + dx)) * co + ch] =
                            xrow[ch * rr * rr + dy * rr + dx];
                    }
                }
            }
        }
    }
    return g.node(std::move(out), any_grad(g, x), [x, h, w, c, rr](Graph& gr, const Tensor& go) {
        Tensor gx(x.val().shape());
        const std::int64_t co = c / (rr * rr), wo = w * rr;
        for (std::int64_t y = 0; y < h; ++y) {
            for (std::int64_t xx = 0; xx < w; ++xx) {
                double* gxrow = gx.data() + (y * w + xx) * c;
                for (std::int64_t ch = 0; ch < co; ++ch) {
                    for (std::int64_t dy = 0; dy < rr; ++dy) {
                        for (std::int64_t dx = 0; dx < rr; ++dx) {
                            gxrow[ch * rr * rr + dy * rr + dx] =
                                go[((y * rr + dy) * wo + (xx * rr + dx)) * co + ch];
                        }
                    }
                }
            }
        }
        gr.accum(x, std::move(gx));
    });
}

Var mean_all(Graph& g, const Var& x) {
    const Tensor& xv = x.val();
    const double n = static_cast<double>(xv.size());
    double acc = 0.0;
    for (std::int64_t i = 0; i < xv.size(); ++i) acc += xv[i];
    Tensor out({1}, {acc / n});
    return g.node(std::move(out), any_grad(g, x), [x, n](Graph& gr, const Tensor& go) {
        Tensor gx(x.val().shape(), go[0] / n);
        gr.accum(x, std::move(gx));
    });
}

Tensor sinusoidal_embed(double t, std::int64_t dim) {
    if (dim <= 0 || dim % 2 != 0) {
        throw ValueError("sinusoidal embedding dimension must be positive and even");
    }
    Tensor out({dim});
    const std::int64_t half = dim / 2;
    for (std::int64_t i = 0; i < half; ++i) {
        const double w = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(dim));
        out[i] = std::sin(t * w);
        out[half + i] = std::cos(t * w);
    }
    return out;
}

}  // namespace ops
}  // namespace swt
