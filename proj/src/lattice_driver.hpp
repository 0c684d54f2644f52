// Copyright 2026 The qmejump Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

// Internal helpers shared by the pair unraveling and the standard MCWF.

#include <algorithm>
#include <cmath>
#include <string>

#include "qme/engine.hpp"
#include "qme/error.hpp"

namespace qme::detail {

inline void check_initial_state(const ComplexVec& chi, int dim, const std::vector<ComplexMat>& observables) {
    if (chi.size() != dim) {
        throw Error(ErrorCode::InvalidDimension, "initial state does not match the spec dimension");
    }
    if (!all_finite(chi) || !(std::abs(chi.squaredNorm() - 1.0) < 1e-12)) {
        throw Error(ErrorCode::InvalidInput, "initial state must be normalized");
    }
    for (const auto& o : observables) {
        if (o.rows() != dim || o.cols() != dim) {
            throw Error(ErrorCode::InvalidDimension, "observable does not match the spec dimension");
        }
    }
}

inline double real_checked(Complex z) {
    if (!(std::abs(z.imag()) <= 1e-8 * std::max(1.0, std::abs(z.real())))) {
        throw Error(ErrorCode::InvalidInput,
                    "observable expectation has imaginary part " + std::to_string(z.imag()) +
                        "; observables must be Hermitian",
                    z.imag());
    }
    return z.real();
}

// Lattice driver shared by both unravelings. A step whose rate guard fails is
// split in halves until it holds; the split never changes the output grid.
// After a jump the rest of the step is a fresh step for the new state, so a
// post-jump state with large rates is split again and may jump again.
template <class Model>
class LatticeDriver {
public:
    LatticeDriver(Model& model, const PropagationConfig& config, UniformStream& rng, TrajectoryRecord& record)
        : model_(model), config_(config), rng_(rng), record_(record) {}

    void advance(double t, double h, int depth = 0) {
        if (!within_guard(t, h, depth)) return;
        const double u1 = rng_.next();
        const double u2 = rng_.next();
        if (model_.try_jump(t, h, u1, u2) && !within_guard(t, h, depth)) return;
        model_.drift(t, h);
    }

private:
    // False when the step was violating the guard and has been done as two halves.
    bool within_guard(double t, double h, int depth) {
        if (h * model_.abs_rate(t) <= config_.max_total_rate_dt) return true;
        split(depth);
        advance(t, 0.5 * h, depth + 1);
        advance(t + 0.5 * h, 0.5 * h, depth + 1);
        return false;
    }

    void split(int depth) {
        if (depth >= config_.max_step_halvings) {
            throw Error(ErrorCode::StepSize, "rate guard still violated after " + std::to_string(depth) +
                                                 " step halvings; reduce dt");
        }
        ++record_.refined_steps;
    }

    Model& model_;
    const PropagationConfig& config_;
    UniformStream& rng_;
    TrajectoryRecord& record_;
};

}  // namespace qme::detail
