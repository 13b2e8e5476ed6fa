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

#include "swt/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace swt {

namespace {

double eval_scalar(const ScalarGraphFn& f, const std::vector<Tensor>& leaves) {
    Graph g(Graph::Mode::NoGrad);
    std::vector<Var> vars;
    vars.reserve(leaves.size());
    for (const auto& t : leaves) vars.push_back(g.leaf(t));
    Var out = f(g, vars);
    if (out.val().size() != 1) {
        throw ShapeError("gradcheck needs a scalar-valued function, got " + out.val().shape_str());
    }
    return out.val()[0];
}

std::vector<std::int64_t> pick_elements(std::int64_t n, std::int64_t cap, std::mt19937_64& rng) {
    std::vector<std::int64_t> idx(static_cast<std::size_t>(n));
    std::iota(idx.begin(), idx.end(), 0);
    if (cap <= 0 || n <= cap) return idx;
    for (std::int64_t i = 0; i < cap; ++i) {
        std::uniform_int_distribution<std::int64_t> pick(i, n - 1);
        std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(pick(rng))]);
    }
    idx.resize(static_cast<std::size_t>(cap));
    std::sort(idx.begin(), idx.end());
    return idx;
}

}  // namespace

std::string GradCheckReport::to_string() const {
    std::ostringstream os;
    os << (passed ? "PASS" : "FAIL") << " worst rel err " << worst_rel_err
       << " (tol " << tolerance << ")\n";
    for (const auto& l : leaves) {
        os << "  " << l.name << ": max rel err " << l.max_rel_err
           << " over " << l.checked_elements << " elements\n";
    }
    return os.str();
}

GradCheckReport gradcheck(const ScalarGraphFn& f, const std::vector<Tensor>& leaves,
                          const GradCheckOptions& opts, const std::vector<std::string>& leaf_names) {
    GradCheckReport report;
    report.tolerance = opts.tolerance;

    // Analytic gradients in one reverse pass.
    Graph g(Graph::Mode::Train);
    std::vector<Var> vars;
    vars.reserve(leaves.size());
    for (const auto& t : leaves) vars.push_back(g.leaf(t));
    Var loss = f(g, vars);
    if (loss.val().size() != 1) {
        throw ShapeError("gradcheck needs a scalar-valued function, got " + loss.val().shape_str());
    }
    require_finite(loss.val(), "gradcheck loss");
    g.backward(loss);
    std::vector<Tensor> analytic;
    analytic.reserve(vars.size());
    for (const auto& v : vars) analytic.push_back(g.grad(v));

    std::mt19937_64 rng(opts.seed);
    std::vector<Tensor> probe = leaves;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        GradCheckReport::LeafResult lr;
        lr.name = li < leaf_names.size() ? leaf_names[li] : ("leaf" + std::to_string(li));
        const auto elems = pick_elements(leaves[li].size(), opts.max_elements_per_leaf, rng);
        lr.checked_elements = static_cast<std::int64_t>(elems.size());
        for (std::int64_t e : elems) {
            const double orig = probe[li][e];
            probe[li][e] = orig + opts.step;
            const double fp = eval_scalar(f, probe);
            probe[li][e] = orig - opts.step;
            const double fm = eval_scalar(f, probe);
            probe[li][e] = orig;
            const double numeric = (fp - fm) / (2.0 * opts.step);
            const double a = analytic[li][e];
            const double err = std::fabs(a - numeric) /
                               std::max({1.0, std::fabs(a), std::fabs(numeric)});
            lr.max_rel_err = std::max(lr.max_rel_err, err);
        }
        report.worst_rel_err = std::max(report.worst_rel_err, lr.max_rel_err);
        report.leaves.push_back(std::move(lr));
    }
    report.passed = report.worst_rel_err < opts.tolerance;
    return report;
}

}  // namespace swt
