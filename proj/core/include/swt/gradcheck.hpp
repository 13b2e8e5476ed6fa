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

#include <functional>
#include <string>
#include <vector>

#include "swt/graph.hpp"

namespace swt {

/// Builds a scalar loss from the given leaf Vars. Must be a pure function of
/// the leaf values so central differences are meaningful.
using ScalarGraphFn = std::function<Var(Graph&, const std::vector<Var>&)>;

struct GradCheckOptions {
    double step = 1e-5;
    double tolerance = 1e-6;
    /// 0 checks every element. Larger leaves can be spot-checked with a
    /// seeded random subset; every leaf is always touched.
    std::int64_t max_elements_per_leaf = 0;
    std::uint64_t seed = 0x5eed;
};

struct GradCheckReport {
    struct LeafResult {
        std::string name;
        double max_rel_err = 0.0;
        std::int64_t checked_elements = 0;
    };
    std::vector<LeafResult> leaves;
    double worst_rel_err = 0.0;
    double tolerance = 0.0;
    bool passed = false;

    std::string to_string() const;
};

/// Compares reverse-mode gradients against central finite differences,
/// per leaf. The error is |analytic - numeric| / max(1, |analytic|, |numeric|),
/// so it reads as a relative error for O(1) gradients and an absolute one
/// for vanishing gradients.
GradCheckReport gradcheck(const ScalarGraphFn& f, const std::vector<Tensor>& leaves,
                          const GradCheckOptions& opts = {},
                          const std::vector<std::string>& leaf_names = {});

}  // namespace swt
