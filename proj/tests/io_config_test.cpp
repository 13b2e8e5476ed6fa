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

#include <cstdio>
#include <fstream>
#include <unistd.h>

#include "swt/config.hpp"
#include "swt/image.hpp"

using namespace swt;

TEST_SUITE_BEGIN("io_config");

namespace {

std::string temp_path(const char* name) {
    return std::string("/tmp/swt_io_") + name + "_" + std::to_string(::getpid());
}

std::string slurp(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
}

void spit(const std::string& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << bytes;
}

}  // namespace

TEST_CASE("a byte-level P6 fixture parses to 2x2x3") {
    const std::string path = temp_path("p6");
    spit(path, std::string("P6\n2 2\n255\n") +
                   std::string("\x01\x02\x03\x04\x05\x06\x07\x08\x09\x0a\x0b\x0c", 12));
    const ImageBuffer img = read_image(path);
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.channels == 3);
    CHECK(img.bit_depth == 8);
    CHECK(img.samples[0] == 1);
    CHECK(img.samples[11] == 12);
    std::remove(path.c_str());
}

TEST_CASE("write/read roundtrips are lossless and byte-identical for both depths") {
    std::mt19937_64 rng(800);
    for (int depth : {8, 16}) {
        for (std::int64_t channels : {1, 3}) {
            ImageBuffer img;
            img.height = 5;
            img.width = 7;
            img.channels = channels;
            img.bit_depth = depth;
            img.samples.resize(static_cast<std::size_t>(img.sample_count()));
            for (auto& s : img.samples) {
                s = static_cast<std::uint16_t>(rng() % (img.max_value() + 1));
            }
            const std::string path = temp_path("rt");
            write_image(img, path);
            const std::string bytes1 = slurp(path);
            const ImageBuffer back = read_image(path);
            CHECK(back.bit_depth == depth);
            CHECK(back.samples == img.samples);
            write_image(back, path);
            CHECK(slurp(path) == bytes1);
            std::remove(path.c_str());
        }
    }
}

TEST_CASE("maxval 65535 selects the 16-bit big-endian path") {
    const std::string path = temp_path("p5deep");
    spit(path, std::string("P5\n1 1\n65535\n") + std::string("\x12\x34", 2));
    const ImageBuffer img = read_image(path);
    CHECK(img.bit_depth == 16);
    CHECK(img.samples[0] == 0x1234);
    std::remove(path.c_str());
}

TEST_CASE("codec failure modes are distinct") {
    const std::string path = temp_path("bad");
    spit(path, "P7\n1 1\n255\nxxx");
    CHECK_THROWS_WITH_AS(read_image(path), doctest::Contains("bad magic"), FormatError);
    spit(path, "P6\n1 1\n254\nxxx");
    CHECK_THROWS_WITH_AS(read_image(path), doctest::Contains("maxval"), FormatError);
    spit(path, "P6\n2 2\n255\nxxx");
    CHECK_THROWS_WITH_AS(read_image(path), doctest::Contains("truncated"), FormatError);
    spit(path, "P6\n# comment\n2 2\n255\n" + std::string(12, 'a'));
    CHECK(read_image(path).width == 2);  // comments are fine
    std::remove(path.c_str());
}

TEST_CASE("tensor conversion preserves integer samples") {
    std::mt19937_64 rng(801);
    ImageBuffer img;
    img.height = 4;
    img.width = 6;
    img.channels = 3;
    img.bit_depth = 16;
    img.samples.resize(static_cast<std::size_t>(img.sample_count()));
    for (auto& s : img.samples) s = static_cast<std::uint16_t>(rng() % 65536);
    const ImageBuffer back = tensor_to_image(image_to_tensor(img), 16);
    CHECK(back.samples == img.samples);
}

TEST_CASE("tensor_to_image clips out-of-range values") {
    Tensor t({1, 2, 1}, {-0.4, 1.7});
    const ImageBuffer img = tensor_to_image(t, 8);
    CHECK(img.samples[0] == 0);
    CHECK(img.samples[1] == 255);
}

TEST_CASE("run config rejects unknown keys and parses files") {
    RunConfig rc;
    CHECK_THROWS_AS(rc.set("no-such-key", "1"), ValueError);
    rc.set("tile", "512");
    CHECK(rc.get_int("tile", 0) == 512);
    CHECK(rc.get_int("shift", 220) == 220);
    CHECK_FALSE(rc.get_flag("diffuse"));
    rc.set("diffuse", "true");
    CHECK(rc.get_flag("diffuse"));

    const std::string path = temp_path("cfg");
    spit(path, "# comment line\ntile = 256\nshift=96   # trailing comment\n\nseed=7\n");
    RunConfig from_file;
    from_file.load_file(path);
    CHECK(from_file.get_int("tile", 0) == 256);
    CHECK(from_file.get_int("shift", 0) == 96);
    CHECK(from_file.get_int("seed", 0) == 7);

    spit(path, "bogus-key=1\n");
    RunConfig bad;
    CHECK_THROWS_AS(bad.load_file(path), FormatError);
    spit(path, "just a line without equals\n");
    CHECK_THROWS_AS(bad.load_file(path), FormatError);
    std::remove(path.c_str());
}

TEST_CASE("config file and flags produce identical settings") {
    const std::string path = temp_path("cfg2");
    spit(path, "tile=128\nshift=64\nseed=3\n");
    RunConfig from_file;
    from_file.load_file(path);

    RunConfig from_flags;
    from_flags.set("tile", "128");
    from_flags.set("shift", "64");
    from_flags.set("seed", "3");
    CHECK(from_file.values() == from_flags.values());
    CHECK(from_file.serialize() == from_flags.serialize());

    // flags override file values
    from_file.set("tile", "32");
    CHECK(from_file.get_int("tile", 0) == 32);
    std::remove(path.c_str());
}

TEST_CASE("serialize emits parseable key=value text") {
    RunConfig rc;
    rc.set("tile", "48");
    rc.set("input", "a.ppm");
    const std::string text = rc.serialize();
    CHECK(text == "input=a.ppm\ntile=48\n");

    const std::string path = temp_path("cfg3");
    spit(path, text);
    RunConfig back;
    back.load_file(path);
    CHECK(back.values() == rc.values());
    std::remove(path.c_str());
}

TEST_CASE("typed getters validate their input") {
    RunConfig rc;
    rc.set("tile", "abc");
    CHECK_THROWS_AS(rc.get_int("tile", 0), ValueError);
    rc.set("eta", "0.5x");
    CHECK_THROWS_AS(rc.get_double("eta", 0.0), ValueError);
    rc.set("eta", "0.25");
    CHECK(rc.get_double("eta", 0.0) == 0.25);
}

TEST_SUITE_END();
