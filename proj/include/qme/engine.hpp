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

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <random>
#include <vector>

#include "qme/linalg.hpp"
#include "qme/spec.hpp"

namespace qme {

/// Stochastic state of one realization in the doubled Hilbert space. Its
/// contribution to the density matrix is weight * (|psi><phi| + |phi><psi|).
struct TrajectoryPair {
    ComplexVec psi;
    ComplexVec phi;
    int weight = 1;
    double t = 0.0;
    /// n_jumps[k] = {count of term-1 jumps, count of term-2 jumps} in channel k.
    std::vector<std::array<long, 2>> n_jumps;

    /// psi = phi = chi / sqrt(2), so the contribution is |chi><chi| with unit trace.
    static TrajectoryPair from_pure_state(const ComplexVec& chi, int num_channels);
};

/// <phi|psi> + <psi|phi>.
double pair_trace(const ComplexVec& psi, const ComplexVec& phi);
double pair_trace(const TrajectoryPair& pair);

/// weight * (|psi><phi| + |phi><psi|), Hermitian by construction.
ComplexMat pair_contribution(const TrajectoryPair& pair);

/// Signed partial rates for both terms of every channel and the total rate
/// from the norm-preservation condition.
struct JumpRates {
    std::vector<std::array<double, 2>> partial;
    double total = 0.0;

    double signed_sum() const;
    double abs_sum() const;
};

/// Operator products needed for the rates, computed once per spec.
class PreparedSpec {
public:
    explicit PreparedSpec(std::shared_ptr<const QmeSpec> spec);
    explicit PreparedSpec(const QmeSpec& spec);

    const QmeSpec& spec() const { return *spec_; }
    const ComplexMat& hermitian_part_of_a() const { return a_plus_adj_; }
    /// C_k^+ E_k; its adjoint E_k^+ C_k governs the second term.
    const ComplexMat& c_adj_e(int k) const { return c_adj_e_[k]; }

private:
    std::shared_ptr<const QmeSpec> spec_;
    ComplexMat a_plus_adj_;
    std::vector<ComplexMat> c_adj_e_;
};

inline constexpr double kDefaultTauFloor = 1e-12;

/// p1_k = [<phi|C^+E|psi> + <psi|E^+C|phi>] / tau, p2_k with C and E swapped,
/// total = -[<phi|A+A^+|psi> + c.c.] / tau. Throws DegeneratePair if |tau| < tau_floor.
JumpRates jump_rates(const PreparedSpec& spec, const ComplexVec& psi, const ComplexVec& phi,
                     double tau_floor = kDefaultTauFloor);
JumpRates jump_rates(const QmeSpec& spec, const TrajectoryPair& pair, double tau_floor = kDefaultTauFloor);

/// Which rates compensate the jump loss in the deterministic drift. Only
/// `absolute` reproduces the master equation when rates go negative; `signed`
/// exists to demonstrate the resulting bias.
enum class DriftRates { absolute, signed_rates };

struct PropagationConfig {
    double dt = 1e-2;
    std::vector<double> t_grid;
    /// After each jump, rebalance |psi| = |phi| (the contribution is unchanged).
    bool renormalize_each_jump = true;
    std::uint64_t rng_seed = 0;
    /// Stability guard: dt * sum |p| must not exceed this.
    double max_total_rate_dt = 0.1;
    double tau_floor = kDefaultTauFloor;
    double norm_drift_budget = 0.05;
    int max_restarts = 100;
    /// A lattice step that violates the guard is split into 2^m equal substeps, m <= this.
    int max_step_halvings = 16;
    DriftRates drift_rates = DriftRates::absolute;
    /// Keep the full density-matrix contribution at each grid time.
    bool record_rdm = false;
};

/// RK4 step of d psi = (A + sum_k (|p_k^1| + |p_k^2|)/2) psi dt (same for phi), rates
/// re-evaluated at every stage. `start_rates` are the rates at the current state.
/// Throws StepSize if dt * sum |p| exceeds max_total_rate_dt.
void drift_step(const PreparedSpec& spec, TrajectoryPair& pair, const JumpRates& start_rates, double dt,
                const PropagationConfig& config);
void drift_step(const QmeSpec& spec, TrajectoryPair& pair, double dt, const PropagationConfig& config);

struct JumpOutcome {
    bool jumped = false;
    int channel = -1;
    int term = 0;  // 1 or 2
    double rate = 0.0;
};

/// One jump fires when u1 < dt * sum |p|; u2 picks the (channel, term) with
/// probability proportional to |p|. A negative selected rate flips the weight
/// (and psi's sign, so the contribution is the one the jump operator produced).
/// Throws TrajectoryDeath if both vectors vanish.
JumpOutcome maybe_jump(const QmeSpec& spec, TrajectoryPair& pair, const JumpRates& rates, double u1, double u2,
                       double dt, const PropagationConfig& config);

/// Apply the jump of `term` in `channel` unconditionally.
void apply_jump(const QmeSpec& spec, TrajectoryPair& pair, const JumpRates& rates, int channel, int term,
                bool renormalize);

struct TrajectoryRecord {
    /// values[i][j] = w (<phi|O_j|psi> + <psi|O_j|phi>) at t_grid[i].
    std::vector<std::vector<double>> values;
    /// Contribution traces w * tau at each grid time.
    std::vector<double> traces;
    std::vector<int> weights;
    /// Only filled when PropagationConfig::record_rdm is set.
    std::vector<ComplexMat> rho;
    std::vector<std::array<long, 2>> n_jumps;
    int final_weight = 1;
    int restarts = 0;
    long refined_steps = 0;
    double max_norm_drift = 0.0;
    double max_hermiticity_defect = 0.0;
    bool norm_warning = false;

    long total_jumps() const;
};

/// Lattice step index of every grid time; throws on unsorted or off-lattice grids.
std::vector<long> grid_lattice_steps(const std::vector<double>& t_grid, double dt);

/// One trajectory of the pair unraveling starting from the pure state chi.
TrajectoryRecord propagate(const TimeDependentSpec& spec, const ComplexVec& chi, const PropagationConfig& config,
                           const std::vector<ComplexMat>& observables);
TrajectoryRecord propagate(const QmeSpec& spec, const ComplexVec& chi, const PropagationConfig& config,
                           const std::vector<ComplexMat>& observables);

/// Standard normalized Monte Carlo wave function trajectory for a Lindblad
/// equation: rates <L^+L>, drift -iH/hbar - 1/2 sum L^+L plus norm restoration.
TrajectoryRecord mcwf_standard(const ComplexMat& h, const std::vector<ComplexMat>& lindblad_ops,
                               const ComplexVec& chi, const PropagationConfig& config,
                               const std::vector<ComplexMat>& observables, double hbar = 1.0);

/// Running sums over trajectories for every grid time.
class EnsembleAccumulator {
public:
    EnsembleAccumulator(int dim, std::size_t n_times, std::size_t n_observables, bool track_rdm);

    void add(const TrajectoryRecord& record);
    /// Associative and commutative up to floating-point summation order.
    void merge(const EnsembleAccumulator& other);

    int dim() const { return dim_; }
    long n_traj() const { return n_traj_; }
    std::size_t n_times() const { return n_times_; }
    std::size_t n_observables() const { return n_obs_; }
    bool tracks_rdm() const { return track_rdm_; }

    const ComplexMat& sum_rho(std::size_t time) const { return sum_rho_.at(time); }
    double sum_observable(std::size_t time, std::size_t obs) const { return sum_obs_.at(time * n_obs_ + obs); }
    double sum_observable_sq(std::size_t time, std::size_t obs) const {
        return sum_obs_sq_.at(time * n_obs_ + obs);
    }
    long negative_weight_count(std::size_t time) const { return negative_.at(time); }

    struct Estimate {
        double mean = 0.0;
        double std_error = 0.0;
    };
    Estimate observable(std::size_t time, std::size_t obs) const;
    Estimate trace(std::size_t time) const;

    const Eigen::MatrixXd& sum_re_sq(std::size_t time) const { return sum_re_sq_.at(time); }
    const Eigen::MatrixXd& sum_im_sq(std::size_t time) const { return sum_im_sq_.at(time); }

private:
    void check_compatible(int dim, std::size_t n_times, std::size_t n_obs) const;

    int dim_;
    std::size_t n_times_;
    std::size_t n_obs_;
    bool track_rdm_;
    long n_traj_ = 0;
    std::vector<ComplexMat> sum_rho_;
    std::vector<Eigen::MatrixXd> sum_re_sq_;
    std::vector<Eigen::MatrixXd> sum_im_sq_;
    std::vector<double> sum_obs_;
    std::vector<double> sum_obs_sq_;
    std::vector<double> sum_trace_;
    std::vector<double> sum_trace_sq_;
    std::vector<long> negative_;
};

void accumulate(EnsembleAccumulator& acc, const TrajectoryRecord& record);

struct RdmEstimate {
    ComplexMat rho;
    Eigen::MatrixXd stderr_re;
    Eigen::MatrixXd stderr_im;
    double trace = 0.0;
    double trace_deviation = 0.0;
};

/// rho = sum_rho / n_traj with per-entry standard errors.
RdmEstimate reconstruct_rdm(const EnsembleAccumulator& acc, std::size_t time);

/// Standard error of a mean from sums of x and x^2 over n samples (0 for n < 2).
double standard_error(double sum, double sum_sq, long n);

/// Independent stream per (seed, index) pair.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

/// Uniform doubles in [0, 1) from a 64-bit Mersenne twister.
class UniformStream {
public:
    explicit UniformStream(std::uint64_t seed) : engine_(seed) {}
    double next() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

private:
    std::mt19937_64 engine_;
};

/// Samples pure components of a positive semi-definite density matrix with
/// probability equal to their eigenvalues.
class MixedStateSampler {
public:
    explicit MixedStateSampler(const ComplexMat& rho);
    ComplexVec sample(double u) const;
    const RealVec& probabilities() const { return probs_; }

private:
    RealVec probs_;
    ComplexMat vectors_;
};

}  // namespace qme
