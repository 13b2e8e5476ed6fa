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

#include <string>
#include <vector>

#include "swt/tensor.hpp"

namespace swt {

/// Integer image, 1 or 3 channels, 8- or 16-bit samples.
struct ImageBuffer {
    std::int64_t height = 0, width = 0, channels = 0;
    int bit_depth = 8;
    std::vector<std::uint16_t> samples;  // row-major H x W x C

    std::int64_t max_value() const { return (std::int64_t{1} << bit_depth) - 1; }
    std::int64_t sample_count() const { return height * width * channels; }
};

// Binary PNM: P5 (grayscale) and P6 (RGB), maxval 255 or 65535; 16-bit
// samples are big-endian per the PNM convention. Roundtrips are lossless.
ImageBuffer read_image(const std::string& path);
void write_image(const ImageBuffer& img, const std::string& path);

/// [0,1]-normalized H x W x C tensor (divide by maxval).
Tensor image_to_tensor(const ImageBuffer& img);
/// Clip to [0,1], scale to the bit depth, round to nearest.
ImageBuffer tensor_to_image(const Tensor& t, int bit_depth = 8);

}  // namespace swt
