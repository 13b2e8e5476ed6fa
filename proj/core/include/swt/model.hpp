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
#include <string>
#include <unordered_map>
#include <vector>

#include "swt/swda.hpp"

namespace swt {

enum class DType : std::uint8_t { F32 = 0, F64 = 1 };

/// Insertion-ordered name -> tensor container. Values are held as f64 in
/// memory; each entry remembers its on-disk dtype so load/save round-trips
/// byte-identically.
class WeightStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
        DType dtype = DType::F64;
    };

    void add(const std::string& name, Tensor t, DType dtype = DType::F64);
    bool contains(const std::string& name) const;
    const Tensor& at(const std::string& name) const;
    Tensor& at(const std::string& name);

    const std::vector<Entry>& entries() const { return entries_; }
    std::vector<Entry>& entries() { return entries_; }
    std::size_t size() const { return entries_.size(); }
    std::uint64_t total_params() const;

    /// FNV-1a over names, dtypes and shapes; a cheap architecture hash.
    std::uint64_t fingerprint() const;

private:
    std::vector<Entry> entries_;
    std::unordered_map<std::string, std::size_t> index_;
};

// File format: magic "SWTW", u32 version = 1, u32 entry count; per entry
// u16 name length, name bytes, u8 dtype (0 = f32, 1 = f64), u8 rank,
// u32 per-axis extents, raw little-endian sample data.
void save_weights(const WeightStore& store, const std::string& path);
WeightStore load_weights(const std::string& path);

/// Architecture of the deblurring network: a U-shaped stack of swda blocks
/// with pixel-unshuffle transitions, skip fusion, and a global residual
/// from the first three input channels.
struct ModelConfig {
    std::int64_t in_channels = 6;   // image (3) + prior (3)
    std::int64_t base_width = 32;   // C, doubles per level
    std::vector<std::int64_t> blocks = {2, 3, 3, 4};
    std::int64_t window = 16;       // attention window M
    std::int64_t refinement_blocks = 2;
    double ffn_expansion = 2.66;
    /// -1: even channel/spatial split. 0: pure windowed attention (the
    /// parity configuration for attention-ablation experiments).
    std::int64_t channel_split = -1;

    std::int64_t levels() const { return static_cast<std::int64_t>(blocks.size()); }
    std::int64_t width(std::int64_t level) const { return base_width << level; }
    /// Input extents are padded internally to a multiple of this.
    std::int64_t spatial_multiple() const { return std::int64_t{1} << (levels() - 1); }
    void validate() const;

    BlockConfig block_config(std::int64_t level, std::int64_t block_index) const;
};

struct Model {
    ModelConfig config;
    WeightStore weights;
};

/// Deterministic per seed: identical seeds give bit-identical parameters.
Model build_model(const ModelConfig& cfg, std::uint64_t seed);

/// Analytic parameter count for a config; matches build_model's store.
std::uint64_t count_model_params(const ModelConfig& cfg);

/// Graph handles for a store's tensors, bound once per graph.
class BoundParams {
public:
    BoundParams(Graph& g, const WeightStore& store);
    /// Adopt existing graph handles (used when the parameters themselves are
    /// gradcheck leaves).
    explicit BoundParams(std::vector<std::pair<std::string, Var>> vars);

    const Var& at(const std::string& name) const;
    const std::vector<std::pair<std::string, Var>>& vars() const { return vars_; }

private:
    std::vector<std::pair<std::string, Var>> vars_;
    std::unordered_map<std::string, std::size_t> index_;
};

/// Forward pass; input is H x W x in_channels, output H x W x 3.
Var model_forward(Graph& g, const ModelConfig& cfg, const BoundParams& params, const Var& input);

/// Convenience wrapper running on a fresh no-grad graph. `macs_out`, when
/// given, receives the instrumented multiply-accumulate count.
Tensor model_apply(const Model& model, const Tensor& input, std::uint64_t* macs_out = nullptr);

}  // namespace swt
