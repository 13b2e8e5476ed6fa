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

#include "swt/windowing.hpp"

#include <algorithm>

namespace swt {

namespace {

std::int64_t round_up(std::int64_t v, std::int64_t m) { return ((v + m - 1) / m) * m; }

// Attention pattern for one window: tokens are allowed to interact iff they
// lie on the same side of the wrap seam along both axes. seam_y/seam_x give
// the in-window token coordinate where wrapped content starts (window = no
// seam on that axis).
std::vector<std::uint8_t> build_pattern(std::int64_t m, std::int64_t seam_y, std::int64_t seam_x) {
    const std::int64_t t = m * m;
    std::vector<std::uint8_t> pat(static_cast<std::size_t>(t * t), 0);
    for (std::int64_t i = 0; i < t; ++i) {
        const bool iy = (i / m) >= seam_y;
        const bool ix = (i % m) >= seam_x;
        for (std::int64_t j = 0; j < t; ++j) {
            const bool jy = (j / m) >= seam_y;
            const bool jx = (j % m) >= seam_x;
            pat[static_cast<std::size_t>(i * t + j)] = (iy == jy && ix == jx) ? 1 : 0;
        }
    }
    return pat;
}

}  // namespace

WindowLayout make_window_layout(std::int64_t height, std::int64_t width,
                                std::int64_t window, std::int64_t shift) {
    if (window <= 0) throw ValueError("window size must be positive");
    if (shift < 0 || shift >= window) {
        throw ValueError("shift " + std::to_string(shift) + " must lie in [0, window)");
    }
    if (height <= 0 || width <= 0) throw ShapeError("window layout needs positive extents");

    WindowLayout lo;
    lo.height = height;
    lo.width = width;
    lo.window = window;
    lo.shift = shift;
    lo.padded_height = round_up(height, window);
    lo.padded_width = round_up(width, window);
    lo.windows_y = lo.padded_height / window;
    lo.windows_x = lo.padded_width / window;

    const std::int64_t m = window;
    auto patterns = std::make_shared<std::vector<std::vector<std::uint8_t>>>();
    lo.masks.tokens = m * m;
    lo.masks.pattern_of_window.assign(static_cast<std::size_t>(lo.num_windows()), 0);
    if (shift == 0) {
        patterns->push_back(build_pattern(m, m, m));  // all-true
    } else {
        // The wrap seam sits at token coordinate m - shift, and only inside
        // the last window row / column.
        const std::int64_t seam = m - shift;
        patterns->push_back(build_pattern(m, m, m));      // 0: interior
        patterns->push_back(build_pattern(m, seam, m));   // 1: last row
        patterns->push_back(build_pattern(m, m, seam));   // 2: last column
        patterns->push_back(build_pattern(m, seam, seam));// 3: corner
        for (std::int64_t wy = 0; wy < lo.windows_y; ++wy) {
            for (std::int64_t wx = 0; wx < lo.windows_x; ++wx) {
                int p = 0;
                if (wy == lo.windows_y - 1) p += 1;
                if (wx == lo.windows_x - 1) p += 2;
                lo.masks.pattern_of_window[static_cast<std::size_t>(wy * lo.windows_x + wx)] = p;
            }
        }
    }
    lo.masks.patterns = patterns;

    auto idx = std::make_shared<std::vector<std::int64_t>>();
    idx->resize(static_cast<std::size_t>(m * m * m * m));
    for (std::int64_t i = 0; i < m * m; ++i) {
        const std::int64_t yi = i / m, xi = i % m;
        for (std::int64_t j = 0; j < m * m; ++j) {
            const std::int64_t yj = j / m, xj = j % m;
            const std::int64_t ry = yi - yj + m - 1;
            const std::int64_t rx = xi - xj + m - 1;
            (*idx)[static_cast<std::size_t>(i * m * m + j)] = ry * (2 * m - 1) + rx;
        }
    }
    lo.bias_index = idx;
    return lo;
}

Tensor window_partition_tensor(const Tensor& x, const WindowLayout& lo) {
    if (x.rank() != 3 || x.extent(0) != lo.height || x.extent(1) != lo.width) {
        throw ShapeError("window_partition: input " + x.shape_str() + " does not match layout " +
                         std::to_string(lo.height) + "x" + std::to_string(lo.width));
    }
    const std::int64_t c = x.extent(2), m = lo.window;
    Tensor out({lo.num_windows(), m * m, c});
    for (std::int64_t wy = 0; wy < lo.windows_y; ++wy) {
        for (std::int64_t wx = 0; wx < lo.windows_x; ++wx) {
            const std::int64_t win = wy * lo.windows_x + wx;
            for (std::int64_t ty = 0; ty < m; ++ty) {
                const std::int64_t sy = (wy * m + ty + lo.shift) % lo.padded_height;
                for (std::int64_t tx = 0; tx < m; ++tx) {
                    const std::int64_t sx = (wx * m + tx + lo.shift) % lo.padded_width;
                    double* orow = out.data() + ((win * m * m) + ty * m + tx) * c;
                    if (sy < lo.height && sx < lo.width) {
                        const double* xrow = x.data() + (sy * lo.width + sx) * c;
                        std::copy_n(xrow, c, orow);
                    }
                    // pad positions stay zero
                }
            }
        }
    }
    return out;
}

Tensor window_reverse_tensor(const Tensor& wins, const WindowLayout& lo) {
    const std::int64_t m = lo.window;
    if (wins.rank() != 3 || wins.extent(0) != lo.num_windows() || wins.extent(1) != m * m) {
        throw ShapeError("window_reverse: windows " + wins.shape_str() + " do not match layout");
    }
    const std::int64_t c = wins.extent(2);
    Tensor out({lo.height, lo.width, c});
    for (std::int64_t sy = 0; sy < lo.height; ++sy) {
        const std::int64_t r = (sy - lo.shift + lo.padded_height) % lo.padded_height;
        const std::int64_t wy = r / m, ty = r % m;
        for (std::int64_t sx = 0; sx < lo.width; ++sx) {
            const std::int64_t cc = (sx - lo.shift + lo.padded_width) % lo.padded_width;
            const std::int64_t wx = cc / m, tx = cc % m;
            const std::int64_t win = wy * lo.windows_x + wx;
            const double* wrow = wins.data() + ((win * m * m) + ty * m + tx) * c;
            std::copy_n(wrow, c, out.data() + (sy * lo.width + sx) * c);
        }
    }
    return out;
}

Var window_partition(Graph& g, const Var& x, const WindowLayout& layout) {
    Tensor out = window_partition_tensor(x.val(), layout);
    return g.node(std::move(out), g.needs_grad(x), [x, layout](Graph& gr, const Tensor& go) {
        gr.accum(x, window_reverse_tensor(go, layout));
    });
}

Var window_reverse(Graph& g, const Var& wins, const WindowLayout& layout) {
    Tensor out = window_reverse_tensor(wins.val(), layout);
    return g.node(std::move(out), g.needs_grad(wins), [wins, layout](Graph& gr, const Tensor& go) {
        gr.accum(wins, window_partition_tensor(go, layout));
    });
}

TileGrid make_tile_grid(std::int64_t height, std::int64_t width,
                        std::int64_t tile, std::int64_t stride) {
    if (stride <= 0) throw ValueError("tile stride must be positive");
    if (tile <= 0) throw ValueError("tile size must be positive");
    if (stride > tile) {
        throw ValueError("stride " + std::to_string(stride) + " exceeds tile size " +
                         std::to_string(tile) + "; tiles would leave gaps");
    }
    if (height <= 0 || width <= 0) throw ShapeError("tile grid needs positive extents");

    TileGrid grid;
    grid.height = height;
    grid.width = width;
    grid.tile_h = std::min(tile, height);
    grid.tile_w = std::min(tile, width);
    grid.stride = stride;

    auto axis_origins = [stride](std::int64_t extent, std::int64_t t) {
        std::vector<std::int64_t> o;
        if (extent <= t) {
            o.push_back(0);
            return o;
        }
        const std::int64_t last = extent - t;
        const std::int64_t n = (last + stride - 1) / stride + 1;  // ceil((extent-t)/stride) + 1
        for (std::int64_t i = 0; i < n; ++i) o.push_back(std::min(i * stride, last));
        return o;
    };

    const auto ys = axis_origins(height, grid.tile_h);
    const auto xs = axis_origins(width, grid.tile_w);
    for (std::int64_t y : ys) {
        for (std::int64_t x : xs) grid.origins.emplace_back(y, x);
    }
    return grid;
}

CoverageMap coverage_map(const TileGrid& grid) {
    CoverageMap cm;
    cm.height = grid.height;
    cm.width = grid.width;
    cm.count.assign(static_cast<std::size_t>(grid.height * grid.width), 0);
    for (const auto& [oy, ox] : grid.origins) {
        for (std::int64_t y = oy; y < oy + grid.tile_h; ++y) {
            for (std::int64_t x = ox; x < ox + grid.tile_w; ++x) {
                cm.count[static_cast<std::size_t>(y * grid.width + x)]++;
            }
        }
    }
    return cm;
}

Tensor extract_tile(const Tensor& image, const TileGrid& grid, std::int64_t index) {
    if (image.rank() != 3 || image.extent(0) != grid.height || image.extent(1) != grid.width) {
        throw ShapeError("extract_tile: image " + image.shape_str() + " does not match grid");
    }
    if (index < 0 || index >= grid.num_tiles()) throw ValueError("tile index out of range");
    const std::int64_t c = image.extent(2);
    const auto [oy, ox] = grid.origins[static_cast<std::size_t>(index)];
    Tensor tile({grid.tile_h, grid.tile_w, c});
    for (std::int64_t y = 0; y < grid.tile_h; ++y) {
        std::copy_n(image.data() + ((oy + y) * grid.width + ox) * c,
                    grid.tile_w * c, tile.data() + y * grid.tile_w * c);
    }
    return tile;
}

Tensor merge_tiles(const std::vector<Tensor>& tiles, const TileGrid& grid) {
    if (static_cast<std::int64_t>(tiles.size()) != grid.num_tiles()) {
        throw ShapeError("merge_tiles: expected " + std::to_string(grid.num_tiles()) +
                         " tiles, got " + std::to_string(tiles.size()));
    }
    if (tiles.empty()) throw ShapeError("merge_tiles: no tiles");
    const std::int64_t c = tiles[0].extent(2);
    for (const auto& t : tiles) {
        if (t.rank() != 3 || t.extent(0) != grid.tile_h || t.extent(1) != grid.tile_w ||
            t.extent(2) != c) {
            throw ShapeError("merge_tiles: tile " + t.shape_str() + " does not match grid tile " +
                             std::to_string(grid.tile_h) + "x" + std::to_string(grid.tile_w));
        }
    }

    Tensor out({grid.height, grid.width, c});
    Tensor dev({grid.height, grid.width, c});
    std::vector<std::int32_t> count(static_cast<std::size_t>(grid.height * grid.width), 0);
    for (std::int64_t i = 0; i < grid.num_tiles(); ++i) {
        const auto [oy, ox] = grid.origins[static_cast<std::size_t>(i)];
        const Tensor& tile = tiles[static_cast<std::size_t>(i)];
        for (std::int64_t y = 0; y < grid.tile_h; ++y) {
            for (std::int64_t x = 0; x < grid.tile_w; ++x) {
                const std::int64_t p = (oy + y) * grid.width + (ox + x);
                const double* trow = tile.data() + (y * grid.tile_w + x) * c;
                auto& n = count[static_cast<std::size_t>(p)];
                if (n == 0) {
                    std::copy_n(trow, c, out.data() + p * c);
                } else {
                    double* drow = dev.data() + p * c;
                    const double* orow = out.data() + p * c;
                    for (std::int64_t ch = 0; ch < c; ++ch) drow[ch] += trow[ch] - orow[ch];
                }
                ++n;
            }
        }
    }
    for (std::int64_t p = 0; p < grid.height * grid.width; ++p) {
        const std::int32_t n = count[static_cast<std::size_t>(p)];
        if (n > 1) {
            double* orow = out.data() + p * c;
            const double* drow = dev.data() + p * c;
            for (std::int64_t ch = 0; ch < c; ++ch) orow[ch] += drow[ch] / static_cast<double>(n);
        }
    }
    return out;
}

}  // namespace swt
