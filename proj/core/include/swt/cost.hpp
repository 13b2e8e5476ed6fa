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

#include "swt/model.hpp"

namespace swt {

/// Compute/memory accounting for one sliding-window inference pass.
///
/// MACs count multiply-accumulate pairs of the convolution and attention
/// contractions only (softmax, normalization and elementwise scaling are
/// excluded); depthwise convolutions count nominal 9 taps per output. The
/// figures match the engine's instrumented counter exactly.
///
/// Peak activation bytes simulate the forward tensor schedule with values
/// freed at their last use, at the stated element width.
struct CostReport {
    std::uint64_t macs_per_tile = 0;
    std::uint64_t tiles = 0;
    std::uint64_t macs_total = 0;          // macs_per_tile * tiles
    std::uint64_t macs_per_iteration = 0;  // one batch of tiles
    std::uint64_t peak_activation_bytes = 0;
    std::uint64_t params = 0;
    std::int64_t tile_h = 0, tile_w = 0;
    std::string notes;
};

CostReport estimate(const ModelConfig& cfg, std::int64_t height, std::int64_t width,
                    std::int64_t tile, std::int64_t stride, int bytes_per_element = 8,
                    std::int64_t batch = 1);

/// MACs of a single forward pass at the given extents; the quantity the
/// instrumented graph counter reports for model_forward.
std::uint64_t model_forward_macs(const ModelConfig& cfg, std::int64_t height, std::int64_t width);

/// Peak live activation bytes of that same pass.
std::uint64_t model_forward_peak_bytes(const ModelConfig& cfg, std::int64_t height,
                                       std::int64_t width, int bytes_per_element = 8);

}  // namespace swt
