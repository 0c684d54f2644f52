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

#include "qme/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

#include "qme/error.hpp"

namespace qme {

EnsembleResult run_ensemble(int dim, std::size_t n_times, std::size_t n_observables, bool track_rdm,
                            const TrajectoryFn& trajectory, const EnsembleOptions& options) {
    if (options.n_traj < 1) {
        throw Error(ErrorCode::InvalidParameter, "n_traj must be at least 1");
    }
    if (options.workers < 1 || options.block_size < 1) {
        throw Error(ErrorCode::InvalidParameter, "workers and block_size must be positive");
    }
    const long n = options.n_traj;
    const long n_blocks = (n + options.block_size - 1) / options.block_size;

    std::vector<std::optional<EnsembleAccumulator>> blocks(static_cast<std::size_t>(n_blocks));
    std::vector<TrajectoryRecord> records(options.keep_records ? static_cast<std::size_t>(n) : 0);
    std::vector<long> restarts(static_cast<std::size_t>(n), 0);
    std::vector<char> warned(static_cast<std::size_t>(n), 0);
    std::vector<long> refined(static_cast<std::size_t>(n), 0);
    std::vector<double> drift(static_cast<std::size_t>(n), 0.0);
    std::vector<double> herm(static_cast<std::size_t>(n), 0.0);

    std::atomic<long> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;

    auto worker = [&]() {
        for (;;) {
            const long b = next.fetch_add(1);
            if (b >= n_blocks) return;
            try {
                EnsembleAccumulator acc(dim, n_times, n_observables, track_rdm);
                const long begin = b * options.block_size;
                const long end = std::min(n, begin + options.block_size);
                for (long i = begin; i < end; ++i) {
                    TrajectoryRecord rec =
                        trajectory(i, derive_seed(options.master_seed, static_cast<std::uint64_t>(i)));
                    acc.add(rec);
                    const auto idx = static_cast<std::size_t>(i);
                    restarts[idx] = rec.restarts;
                    warned[idx] = rec.norm_warning ? 1 : 0;
                    refined[idx] = rec.refined_steps;
                    drift[idx] = rec.max_norm_drift;
                    herm[idx] = rec.max_hermiticity_defect;
                    if (options.keep_records) {
                        rec.rho.clear();
                        records[idx] = std::move(rec);
                    }
                }
                blocks[static_cast<std::size_t>(b)] = std::move(acc);
            } catch (...) {
                std::lock_guard<std::mutex> lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next.store(n_blocks);
                return;
            }
        }
    };

    const int n_workers = static_cast<int>(std::min<long>(options.workers, n_blocks));
    if (n_workers <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    if (failure) std::rethrow_exception(failure);

    EnsembleResult result{EnsembleAccumulator(dim, n_times, n_observables, track_rdm), std::move(records)};
    for (auto& block : blocks) result.acc.merge(*block);
    for (long i = 0; i < n; ++i) {
        const auto idx = static_cast<std::size_t>(i);
        result.restarts += restarts[idx];
        result.norm_warnings += warned[idx];
        result.refined_steps += refined[idx];
        result.max_norm_drift = std::max(result.max_norm_drift, drift[idx]);
        result.max_hermiticity_defect = std::max(result.max_hermiticity_defect, herm[idx]);
    }
    return result;
}

EnsembleResult run_pair_ensemble(const TimeDependentSpec& spec, const ComplexVec& chi,
                                 const PropagationConfig& config, const std::vector<ComplexMat>& observables,
                                 const EnsembleOptions& options) {
    auto trajectory = [&](long, std::uint64_t seed) {
        PropagationConfig local = config;
        local.rng_seed = seed;
        return propagate(spec, chi, local, observables);
    };
    return run_ensemble(spec.dim(), config.t_grid.size(), observables.size(), config.record_rdm, trajectory,
                        options);
}

EnsembleResult run_pair_ensemble(const TimeDependentSpec& spec, const MixedStateSampler& initial,
                                 const PropagationConfig& config, const std::vector<ComplexMat>& observables,
                                 const EnsembleOptions& options) {
    auto trajectory = [&](long, std::uint64_t seed) {
        // The component choice uses its own stream so it does not shift the jump draws.
        UniformStream pick(derive_seed(seed, 0x5eedULL));
        PropagationConfig local = config;
        local.rng_seed = seed;
        return propagate(spec, initial.sample(pick.next()), local, observables);
    };
    return run_ensemble(spec.dim(), config.t_grid.size(), observables.size(), config.record_rdm, trajectory,
                        options);
}

EnsembleResult run_mcwf_ensemble(const ComplexMat& h, const std::vector<ComplexMat>& lindblad_ops,
                                 const ComplexVec& chi, const PropagationConfig& config,
                                 const std::vector<ComplexMat>& observables, const EnsembleOptions& options,
                                 double hbar) {
    auto trajectory = [&](long, std::uint64_t seed) {
        PropagationConfig local = config;
        local.rng_seed = seed;
        return mcwf_standard(h, lindblad_ops, chi, local, observables, hbar);
    };
    return run_ensemble(static_cast<int>(h.rows()), config.t_grid.size(), observables.size(), config.record_rdm,
                        trajectory, options);
}

}  // namespace qme
