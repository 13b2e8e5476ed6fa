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

#include "swt/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

namespace swt {

const std::vector<std::string>& RunConfig::known_keys() {
    static const std::vector<std::string> keys = {
        // io
        "input", "output", "weights", "denoiser", "prior", "out", "ref", "test",
        "blurry", "sharp", "out-weights",
        // tiling / attention
        "tile", "shift", "attn-window",
        // diffusion
        "diffuse", "steps", "sampler", "eta",
        // execution
        "seed", "batch", "threads",
        // metrics / cost
        "bit-depth", "height", "width", "csv",
        // training
        "loss", "lr", "train-steps",
        // model architecture
        "model-width", "model-blocks", "model-refinement", "model-in-channels",
        // gradcheck
        "suite",
        // nested config file
        "config",
    };
    return keys;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    const auto& keys = known_keys();
    if (std::find(keys.begin(), keys.end(), key) == keys.end()) {
        throw ValueError("unknown setting: " + key);
    }
    values_[key] = value;
}

bool RunConfig::has(const std::string& key) const { return values_.count(key) != 0; }

std::string RunConfig::get(const std::string& key, const std::string& fallback) const {
    auto it = values_.find(key);
    return it == values_.end() ? fallback : it->second;
}

std::int64_t RunConfig::get_int(const std::string& key, std::int64_t fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const std::int64_t v = std::stoll(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValueError("setting " + key + " needs an integer, got '" + it->second + "'");
    }
}

double RunConfig::get_double(const std::string& key, double fallback) const {
    auto it = values_.find(key);
    if (it == values_.end()) return fallback;
    try {
        std::size_t pos = 0;
        const double v = std::stod(it->second, &pos);
        if (pos != it->second.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (const std::exception&) {
        throw ValueError("setting " + key + " needs a number, got '" + it->second + "'");
    }
}

bool RunConfig::get_flag(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) return false;
    return it->second != "false" && it->second != "0";
}

void RunConfig::load_file(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw Error("cannot open config file: " + path);
    std::string line;
    std::int64_t lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        // trim
        const auto b = line.find_first_not_of(" \t\r");
        if (b == std::string::npos) continue;
        const auto e = line.find_last_not_of(" \t\r");
        line = line.substr(b, e - b + 1);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": expected key=value");
        }
        std::string key = line.substr(0, eq);
        std::string value = line.substr(eq + 1);
        const auto kb = key.find_last_not_of(" \t");
        key = key.substr(0, kb == std::string::npos ? 0 : kb + 1);
        const auto vb = value.find_first_not_of(" \t");
        value = vb == std::string::npos ? "" : value.substr(vb);
        try {
            set(key, value);
        } catch (const ValueError& err) {
            throw FormatError(path + ":" + std::to_string(lineno) + ": " + err.what());
        }
    }
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";
    return os.str();
}

}  // namespace swt
