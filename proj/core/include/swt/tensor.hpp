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
#include <random>
#include <string>
#include <vector>

#include "swt/errors.hpp"

namespace swt {

/// Dense row-major tensor of 64-bit floats, up to 4 axes, channels-last.
///
/// This is the single value type the whole engine works on. 64-bit storage is
/// deliberate: finite-difference gradient checks need the headroom. Ops never
/// mutate their inputs.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::int64_t> shape, double fill = 0.0);
    Tensor(std::vector<std::int64_t> shape, std::vector<double> values);

    static Tensor zeros(std::vector<std::int64_t> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<std::int64_t> shape, double v) { return Tensor(std::move(shape), v); }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    /// i.i.d. N(0,1) draws from an explicit generator.
    static Tensor randn(std::vector<std::int64_t> shape, std::mt19937_64& rng);
    /// i.i.d. U(lo,hi) draws from an explicit generator.
    static Tensor uniform(std::vector<std::int64_t> shape, std::mt19937_64& rng,
                          double lo = 0.0, double hi = 1.0);

    const std::vector<std::int64_t>& shape() const { return shape_; }
    std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
    std::int64_t extent(std::int64_t axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
    std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::vector<double>& vec() { return data_; }
    const std::vector<double>& vec() const { return data_; }

    double& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    double operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    double& at(std::int64_t i, std::int64_t j);
    double at(std::int64_t i, std::int64_t j) const;
    double& at(std::int64_t i, std::int64_t j, std::int64_t k);
    double at(std::int64_t i, std::int64_t j, std::int64_t k) const;
    double& at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l);
    double at(std::int64_t i, std::int64_t j, std::int64_t k, std::int64_t l) const;

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    /// Reinterpret the flat buffer under a new shape with the same element count.
    Tensor reshaped(std::vector<std::int64_t> shape) const;

    bool all_finite() const;

    /// Human-readable "2x3x4" string for error messages.
    std::string shape_str() const;

private:
    std::vector<std::int64_t> shape_;
    std::vector<double> data_;
};

std::int64_t shape_product(const std::vector<std::int64_t>& shape);
std::string shape_to_string(const std::vector<std::int64_t>& shape);

/// Throws ShapeError unless the two tensors have identical shapes.
void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

/// Throws ValueError if any element is NaN or Inf.
void require_finite(const Tensor& t, const char* what);

/// Exact element-wise equality (bit-identical up to -0.0 == 0.0).
bool tensors_equal(const Tensor& a, const Tensor& b);

/// Largest absolute element-wise difference; shapes must match.
double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace swt
