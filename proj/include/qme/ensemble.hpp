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

#include <cstdint>
#include <functional>
#include <vector>

#include "qme/engine.hpp"

namespace qme {

struct EnsembleOptions {
    long n_traj = 1;
    std::uint64_t master_seed = 0;
    int workers = 1;
    /// Trajectories are accumulated in fixed blocks merged in index order, so
    /// the result does not depend on the number of workers.
    long block_size = 32;
    /// Keep per-trajectory records (observables only, no density matrices).
    bool keep_records = true;
};

struct EnsembleResult {
    EnsembleAccumulator acc;
    std::vector<TrajectoryRecord> records;
    long restarts = 0;
    long norm_warnings = 0;
    long refined_steps = 0;
    double max_norm_drift = 0.0;
    double max_hermiticity_defect = 0.0;
};

/// Trajectory `index` receives the stream derive_seed(master_seed, index).
using TrajectoryFn = std::function<TrajectoryRecord(long index, std::uint64_t seed)>;

EnsembleResult run_ensemble(int dim, std::size_t n_times, std::size_t n_observables, bool track_rdm,
                            const TrajectoryFn& trajectory, const EnsembleOptions& options);

EnsembleResult run_pair_ensemble(const TimeDependentSpec& spec, const ComplexVec& chi,
                                 const PropagationConfig& config, const std::vector<ComplexMat>& observables,
                                 const EnsembleOptions& options);

/// Mixed initial state: each trajectory starts from a pure component drawn with its eigenvalue weight.
EnsembleResult run_pair_ensemble(const TimeDependentSpec& spec, const MixedStateSampler& initial,
                                 const PropagationConfig& config, const std::vector<ComplexMat>& observables,
                                 const EnsembleOptions& options);

EnsembleResult run_mcwf_ensemble(const ComplexMat& h, const std::vector<ComplexMat>& lindblad_ops,
                                 const ComplexVec& chi, const PropagationConfig& config,
                                 const std::vector<ComplexMat>& observables, const EnsembleOptions& options,
                                 double hbar = 1.0);

}  // namespace qme
