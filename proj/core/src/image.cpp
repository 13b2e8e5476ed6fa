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

#include "swt/image.hpp"

#include <cmath>
#include <fstream>

namespace swt {

namespace {

// Header tokens are separated by whitespace; '#' starts a comment that runs
// to the end of the line.
std::string next_token(std::istream& in) {
    std::string tok;
    int c;
    while ((c = in.get()) != EOF) {
        if (c == '#') {
            while ((c = in.get()) != EOF && c != '\n') {
            }
            continue;
        }
        if (std::isspace(c)) {
            if (!tok.empty()) return tok;
            continue;
        }
        tok.push_back(static_cast<char>(c));
    }
    if (tok.empty()) throw FormatError("truncated PNM header");
    return tok;
}

std::int64_t parse_positive(const std::string& tok, const char* what) {
    std::int64_t v = 0;
    for (char ch : tok) {
        if (ch < '0' || ch > '9') throw FormatError(std::string("bad ") + what + " in PNM header");
        v = v * 10 + (ch - '0');
        if (v > 1 << 30) throw FormatError(std::string(what) + " out of range in PNM header");
    }
    if (v <= 0) throw FormatError(std::string("bad ") + what + " in PNM header");
    return v;
}

}  // namespace

ImageBuffer read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw Error("cannot open image: " + path);

    char m0 = 0, m1 = 0;
    f.get(m0);
    f.get(m1);
    if (!f || m0 != 'P' || (m1 != '5' && m1 != '6')) {
        throw FormatError("bad magic in PNM file " + path + " (expected P5 or P6)");
    }
    ImageBuffer img;
    img.channels = (m1 == '6') ? 3 : 1;
    img.width = parse_positive(next_token(f), "width");
    img.height = parse_positive(next_token(f), "height");
    const std::int64_t maxval = parse_positive(next_token(f), "maxval");
    if (maxval == 255) {
        img.bit_depth = 8;
    } else if (maxval == 65535) {
        img.bit_depth = 16;
    } else {
        throw FormatError("unsupported maxval " + std::to_string(maxval) + " in " + path +
                          " (expected 255 or 65535)");
    }
    // exactly one whitespace byte separates the header from the raster
    const std::int64_t n = img.sample_count();
    img.samples.resize(static_cast<std::size_t>(n));
    if (img.bit_depth == 8) {
        std::vector<unsigned char> raw(static_cast<std::size_t>(n));
        f.read(reinterpret_cast<char*>(raw.data()), n);
        if (f.gcount() != n) throw FormatError("truncated PNM raster in " + path);
        for (std::int64_t i = 0; i < n; ++i) img.samples[static_cast<std::size_t>(i)] = raw[static_cast<std::size_t>(i)];
    } else {
        std::vector<unsigned char> raw(static_cast<std::size_t>(2 * n));
        f.read(reinterpret_cast<char*>(raw.data()), 2 * n);
        if (f.gcount() != 2 * n) throw FormatError("truncated PNM raster in " + path);
        for (std::int64_t i = 0; i < n; ++i) {
            img.samples[static_cast<std::size_t>(i)] = static_cast<std::uint16_t>(
                (raw[static_cast<std::size_t>(2 * i)] << 8) | raw[static_cast<std::size_t>(2 * i + 1)]);
        }
    }
    return img;
}

void write_image(const ImageBuffer& img, const std::string& path) {
    if (img.channels != 1 && img.channels != 3) {
        throw ValueError("PNM supports 1 or 3 channels, got " + std::to_string(img.channels));
    }
    if (img.bit_depth != 8 && img.bit_depth != 16) {
        throw ValueError("PNM bit depth must be 8 or 16");
    }
    if (static_cast<std::int64_t>(img.samples.size()) != img.sample_count()) {
        throw ShapeError("image sample count does not match extents");
    }
    for (auto s : img.samples) {
        if (s > img.max_value()) throw ValueError("sample exceeds bit-depth range");
    }
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw Error("cannot open image for writing: " + path);
    f << (img.channels == 3 ? "P6" : "P5") << "\n"
      << img.width << " " << img.height << "\n"
      << img.max_value() << "\n";
    const std::int64_t n = img.sample_count();
    if (img.bit_depth == 8) {
        std::vector<unsigned char> raw(static_cast<std::size_t>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            raw[static_cast<std::size_t>(i)] = static_cast<unsigned char>(img.samples[static_cast<std::size_t>(i)]);
        }
        f.write(reinterpret_cast<const char*>(raw.data()), n);
    } else {
        std::vector<unsigned char> raw(static_cast<std::size_t>(2 * n));
        for (std::int64_t i = 0; i < n; ++i) {
            const std::uint16_t s = img.samples[static_cast<std::size_t>(i)];
            raw[static_cast<std::size_t>(2 * i)] = static_cast<unsigned char>(s >> 8);
            raw[static_cast<std::size_t>(2 * i + 1)] = static_cast<unsigned char>(s & 0xff);
        }
        f.write(reinterpret_cast<const char*>(raw.data()), 2 * n);
    }
    if (!f) throw Error("write failed: " + path);
}

Tensor image_to_tensor(const ImageBuffer& img) {
    Tensor t({img.height, img.width, img.channels});
    const double inv = 1.0 / static_cast<double>(img.max_value());
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t[i] = static_cast<double>(img.samples[static_cast<std::size_t>(i)]) * inv;
    }
    return t;
}

ImageBuffer tensor_to_image(const Tensor& t, int bit_depth) {
    if (t.rank() != 3) throw ShapeError("tensor_to_image expects H x W x C");
    if (bit_depth != 8 && bit_depth != 16) throw ValueError("bit depth must be 8 or 16");
    ImageBuffer img;
    img.height = t.extent(0);
    img.width = t.extent(1);
    img.channels = t.extent(2);
    img.bit_depth = bit_depth;
    const double maxv = static_cast<double>(img.max_value());
    img.samples.resize(static_cast<std::size_t>(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const double clipped = std::min(1.0, std::max(0.0, t[i]));
        img.samples[static_cast<std::size_t>(i)] =
            static_cast<std::uint16_t>(std::llround(clipped * maxv));
    }
    return img;
}

}  // namespace swt
