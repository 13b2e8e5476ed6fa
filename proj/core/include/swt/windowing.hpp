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

#include <utility>
#include <vector>

#include "swt/graph.hpp"
#include "swt/tensor.hpp"

namespace swt {

/// Non-overlapping M x M attention windows over a feature map, with optional
/// cyclic shift toward the top-left. The padded canvas is rolled by
/// (-shift, -shift); windows that straddle the wrap seam carry a mask that
/// forbids attention between tokens from different pre-roll regions.
struct WindowLayout {
    std::int64_t height = 0, width = 0;   // unpadded extents
    std::int64_t window = 0;              // M
    std::int64_t shift = 0;               // 0 or floor(M/2)
    std::int64_t padded_height = 0, padded_width = 0;
    std::int64_t windows_y = 0, windows_x = 0;

    AttnMaskSet masks;  // tokens = M*M, one pattern index per window

    /// Relative-position index map: entry i*M*M+j is the row of the
    /// (2M-1)^2 bias table for token pair (i, j).
    std::shared_ptr<const std::vector<std::int64_t>> bias_index;

    std::int64_t tokens() const { return window * window; }
    std::int64_t num_windows() const { return windows_y * windows_x; }
};

WindowLayout make_window_layout(std::int64_t height, std::int64_t width,
                                std::int64_t window, std::int64_t shift);

/// H x W x C -> nWin x M^2 x C (pad, roll, cut, flatten). Pure function.
Tensor window_partition_tensor(const Tensor& x, const WindowLayout& layout);
/// Exact inverse of window_partition_tensor, including un-roll and crop.
Tensor window_reverse_tensor(const Tensor& wins, const WindowLayout& layout);

// Autograd wrappers; partition and reverse are adjoint linear maps.
Var window_partition(Graph& g, const Var& x, const WindowLayout& layout);
Var window_reverse(Graph& g, const Var& wins, const WindowLayout& layout);

/// Overlapping inference tiles. Origins advance by `stride`; the final
/// origin per axis is clamped so the far edge meets the image edge, which
/// keeps every tile exactly tile_h x tile_w.
struct TileGrid {
    std::int64_t height = 0, width = 0;
    std::int64_t tile_h = 0, tile_w = 0;   // requested tile clamped per axis
    std::int64_t stride = 0;
    std::vector<std::pair<std::int64_t, std::int64_t>> origins;  // row-major

    std::int64_t num_tiles() const { return static_cast<std::int64_t>(origins.size()); }
};

TileGrid make_tile_grid(std::int64_t height, std::int64_t width,
                        std::int64_t tile, std::int64_t stride);

/// Per-pixel number of covering tiles; >= 1 everywhere by construction.
struct CoverageMap {
    std::int64_t height = 0, width = 0;
    std::vector<std::int32_t> count;

    std::int32_t at(std::int64_t y, std::int64_t x) const {
        return count[static_cast<std::size_t>(y * width + x)];
    }
};

CoverageMap coverage_map(const TileGrid& grid);

Tensor extract_tile(const Tensor& image, const TileGrid& grid, std::int64_t index);

/// Average overlapping tiles back into an H x W x C image. The mean is
/// computed as first-contribution + mean(deviations), which reproduces the
/// input bit-exactly when all covering tiles agree.
Tensor merge_tiles(const std::vector<Tensor>& tiles, const TileGrid& grid);

}  // namespace swt
