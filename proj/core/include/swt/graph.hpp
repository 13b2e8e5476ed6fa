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

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "swt/tensor.hpp"

namespace swt {

/// Handle to a value in a computation graph. Holds shared ownership of the
/// tensor, so in no-grad mode intermediate values are freed as soon as the
/// last handle goes out of scope.
struct Var {
    static constexpr std::uint32_t kNoId = 0xffffffffu;

    std::uint32_t id = kNoId;
    std::shared_ptr<const Tensor> value;

    const Tensor& val() const { return *value; }
    bool valid() const { return value != nullptr; }
};

/// Reverse-mode tape. A graph is confined to one thread; independent graphs
/// may run in parallel. In NoGrad mode no tape is recorded and memory usage
/// is bounded by the live Var handles.
class Graph {
public:
    enum class Mode { Train, NoGrad };

    using BackwardFn = std::function<void(Graph&, const Tensor& gout)>;

    explicit Graph(Mode mode = Mode::Train) : mode_(mode) {}

    Graph(const Graph&) = delete;
    Graph& operator=(const Graph&) = delete;

    bool recording() const { return mode_ == Mode::Train; }

    /// Differentiable input (parameter or checked input).
    Var leaf(Tensor value);
    /// Non-differentiable input.
    Var constant(Tensor value);

    /// Backpropagate from a scalar loss. Populates gradients for every
    /// reachable leaf; intermediate gradients are released as soon as they
    /// have been consumed.
    void backward(const Var& loss);

    /// Gradient of a leaf after backward(); zeros if the leaf was unreachable.
    Tensor grad(const Var& v) const;

    /// True when gradient information must be propagated through `v`.
    bool needs_grad(const Var& v) const { return recording() && v.id != Var::kNoId; }

    /// Multiply-accumulate count of every matmul/conv executed on this graph.
    std::uint64_t macs() const { return macs_; }
    void reset_macs() { macs_ = 0; }
    void add_macs(std::uint64_t n) { macs_ += n; }

    // --- op plumbing ------------------------------------------------------

    /// Record a node. `requires_grad` should be the OR over the parents;
    /// the backward fn is dropped in NoGrad mode or when nothing upstream
    /// needs gradients.
    Var node(Tensor value, bool requires_grad, BackwardFn bw);

    /// Same, for ops whose backward needs the output value: create the
    /// shared tensor first, capture it in the closure, then register it.
    Var node(std::shared_ptr<const Tensor> value, bool requires_grad, BackwardFn bw);

    /// Accumulate a gradient contribution into `v` (no-op for constants).
    void accum(const Var& v, const Tensor& contribution);
    void accum(const Var& v, Tensor&& contribution);

private:
    struct Node {
        BackwardFn backward;  // empty for leaves
    };

    Mode mode_;
    std::vector<Node> nodes_;
    std::vector<Tensor> grads_;
    std::uint64_t macs_ = 0;
};

/// Boolean attention-mask patterns shared across the windows of one layout.
/// `pattern_of_window[w]` selects the tokens x tokens pattern for window w
/// (1 = pair allowed). Kept behind a shared_ptr so layouts copy cheaply.
struct AttnMaskSet {
    std::int64_t tokens = 0;
    std::shared_ptr<const std::vector<std::vector<std::uint8_t>>> patterns;
    std::vector<int> pattern_of_window;

    bool any_masked() const;
};

namespace ops {

// Elementwise
Var add(Graph& g, const Var& a, const Var& b);
Var sub(Graph& g, const Var& a, const Var& b);
Var mul(Graph& g, const Var& a, const Var& b);
Var scale(Graph& g, const Var& a, double s);
Var add_scalar(Graph& g, const Var& a, double c);
Var abs(Graph& g, const Var& a);
Var gelu(Graph& g, const Var& a);

// Contractions. These are the only ops that count MACs.
Var matmul(Graph& g, const Var& a, const Var& b);           // r x k . k x c
Var bmm(Graph& g, const Var& a, const Var& b);              // B x r x k . B x k x c
Var conv1x1(Graph& g, const Var& x, const Var& w, const Var& b);  // last axis Cin -> Cout
Var conv1x1(Graph& g, const Var& x, const Var& w);
Var dwconv3x3(Graph& g, const Var& x, const Var& w);        // H x W x C, w 3x3xC, pad 1

// Normalization / attention pieces
Var softmax_last(Graph& g, const Var& x);
Var masked_softmax_last(Graph& g, const Var& x, const AttnMaskSet& masks, int heads);
Var layernorm_last(Graph& g, const Var& x, const Var& gamma, const Var& beta, double eps = 1e-6);
Var l2_normalize_last(Graph& g, const Var& x, double eps = 1e-12);
Var temperature_scale(Graph& g, const Var& x, const Var& alpha, int heads);
Var add_per_head(Graph& g, const Var& x, const Var& bias, int heads);

// Layout
Var reshape(Graph& g, const Var& x, std::vector<std::int64_t> shape);
Var permute(Graph& g, const Var& x, const std::vector<int>& order);
Var concat(Graph& g, const Var& a, const Var& b, int axis);
std::pair<Var, Var> split(Graph& g, const Var& x, int axis, std::int64_t point);
Var gather_rows(Graph& g, const Var& table, std::shared_ptr<const std::vector<std::int64_t>> idx);
Var add_channels(Graph& g, const Var& x, const Var& v);
Var pad_hw(Graph& g, const Var& x, std::int64_t hp, std::int64_t wp);
Var crop_hw(Graph& g, const Var& x, std::int64_t h, std::int64_t w);
Var pixel_unshuffle(Graph& g, const Var& x, int r = 2);
Var pixel_shuffle(Graph& g, const Var& x, int r = 2);

// Reductions
Var mean_all(Graph& g, const Var& x);  // scalar {1}

/// Time-step embedding: [sin(t*w_i)..., cos(t*w_i)...], w_i = 10000^(-2i/dim).
Tensor sinusoidal_embed(double t, std::int64_t dim);

}  // namespace ops
}  // namespace swt
