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

#include <algorithm>
#include <cmath>
#include <string>

#include "qme/engine.hpp"
#include "qme/error.hpp"

namespace qme {

double standard_error(double sum, double sum_sq, long n) {
    if (n < 2) return 0.0;
    const double nd = static_cast<double>(n);
    const double var = std::max(0.0, (sum_sq - sum * sum / nd) / (nd - 1.0));
    return std::sqrt(var / nd);
}

EnsembleAccumulator::EnsembleAccumulator(int dim, std::size_t n_times, std::size_t n_observables, bool track_rdm)
    : dim_(dim), n_times_(n_times), n_obs_(n_observables), track_rdm_(track_rdm) {
    if (dim <= 0) {
        throw Error(ErrorCode::InvalidDimension, "accumulator dimension must be positive");
    }
    if (track_rdm_) {
        sum_rho_.assign(n_times, ComplexMat::Zero(dim, dim));
        sum_re_sq_.assign(n_times, Eigen::MatrixXd::Zero(dim, dim));
        sum_im_sq_.assign(n_times, Eigen::MatrixXd::Zero(dim, dim));
    }
    sum_obs_.assign(n_times * n_observables, 0.0);
    sum_obs_sq_.assign(n_times * n_observables, 0.0);
    sum_trace_.assign(n_times, 0.0);
    sum_trace_sq_.assign(n_times, 0.0);
    negative_.assign(n_times, 0);
}

void EnsembleAccumulator::check_compatible(int dim, std::size_t n_times, std::size_t n_obs) const {
    if (dim != dim_ || n_times != n_times_ || n_obs != n_obs_) {
        throw Error(ErrorCode::InvalidInput, "accumulator shapes do not match");
    }
}

void EnsembleAccumulator::add(const TrajectoryRecord& rec) {
    if (rec.values.size() != n_times_ || rec.traces.size() != n_times_) {
        throw Error(ErrorCode::InvalidInput, "trajectory record has " + std::to_string(rec.values.size()) +
                                                 " grid times, accumulator expects " + std::to_string(n_times_));
    }
    if (track_rdm_ && rec.rho.size() != n_times_) {
        throw Error(ErrorCode::InvalidInput, "trajectory record carries no density-matrix snapshots");
    }
    for (std::size_t t = 0; t < n_times_; ++t) {
        if (rec.values[t].size() != n_obs_) {
            throw Error(ErrorCode::InvalidInput, "observable count mismatch");
        }
        if (track_rdm_) {
            const ComplexMat& r = rec.rho[t];
            if (r.rows() != dim_ || r.cols() != dim_) {
                throw Error(ErrorCode::InvalidDimension, "density-matrix snapshot dimension mismatch");
            }
            sum_rho_[t] += r;
            sum_re_sq_[t] += r.real().cwiseAbs2();
            sum_im_sq_[t] += r.imag().cwiseAbs2();
        }
        for (std::size_t j = 0; j < n_obs_; ++j) {
            const double v = rec.values[t][j];
            sum_obs_[t * n_obs_ + j] += v;
            sum_obs_sq_[t * n_obs_ + j] += v * v;
        }
        sum_trace_[t] += rec.traces[t];
        sum_trace_sq_[t] += rec.traces[t] * rec.traces[t];
        if (!rec.weights.empty() && rec.weights[t] < 0) ++negative_[t];
    }
    ++n_traj_;
}

void EnsembleAccumulator::merge(const EnsembleAccumulator& other) {
    check_compatible(other.dim_, other.n_times_, other.n_obs_);
    if (track_rdm_ != other.track_rdm_) {
        throw Error(ErrorCode::InvalidInput, "cannot merge accumulators with and without density matrices");
    }
    for (std::size_t t = 0; t < n_times_; ++t) {
        if (track_rdm_) {
            sum_rho_[t] += other.sum_rho_[t];
            sum_re_sq_[t] += other.sum_re_sq_[t];
            sum_im_sq_[t] += other.sum_im_sq_[t];
        }
        sum_trace_[t] += other.sum_trace_[t];
        sum_trace_sq_[t] += other.sum_trace_sq_[t];
        negative_[t] += other.negative_[t];
    }
    for (std::size_t i = 0; i < sum_obs_.size(); ++i) {
        sum_obs_[i] += other.sum_obs_[i];
        sum_obs_sq_[i] += other.sum_obs_sq_[i];
    }
    n_traj_ += other.n_traj_;
}

EnsembleAccumulator::Estimate EnsembleAccumulator::observable(std::size_t time, std::size_t obs) const {
    if (n_traj_ == 0) throw Error(ErrorCode::EmptyEnsemble, "no trajectories accumulated");
    const std::size_t i = time * n_obs_ + obs;
    return {sum_obs_.at(i) / static_cast<double>(n_traj_), standard_error(sum_obs_[i], sum_obs_sq_[i], n_traj_)};
}

EnsembleAccumulator::Estimate EnsembleAccumulator::trace(std::size_t time) const {
    if (n_traj_ == 0) throw Error(ErrorCode::EmptyEnsemble, "no trajectories accumulated");
    return {sum_trace_.at(time) / static_cast<double>(n_traj_),
            standard_error(sum_trace_[time], sum_trace_sq_[time], n_traj_)};
}

void accumulate(EnsembleAccumulator& acc, const TrajectoryRecord& record) {
    acc.add(record);
}

RdmEstimate reconstruct_rdm(const EnsembleAccumulator& acc, std::size_t time) {
    if (acc.n_traj() == 0) throw Error(ErrorCode::EmptyEnsemble, "no trajectories accumulated");
    if (!acc.tracks_rdm()) throw Error(ErrorCode::InvalidInput, "accumulator does not track density matrices");
    const double n = static_cast<double>(acc.n_traj());
    RdmEstimate est;
    est.rho = acc.sum_rho(time) / n;
    const int d = acc.dim();
    est.stderr_re.resize(d, d);
    est.stderr_im.resize(d, d);
    for (int i = 0; i < d; ++i) {
        for (int j = 0; j < d; ++j) {
            const Complex s = acc.sum_rho(time)(i, j);
            est.stderr_re(i, j) = standard_error(s.real(), acc.sum_re_sq(time)(i, j), acc.n_traj());
            est.stderr_im(i, j) = standard_error(s.imag(), acc.sum_im_sq(time)(i, j), acc.n_traj());
        }
    }
    est.trace = est.rho.trace().real();
    est.trace_deviation = std::abs(est.trace - 1.0);
    return est;
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index) {
    // Two rounds of SplitMix64 over (seed, index).
    auto mix = [](std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    };
    return mix(mix(seed) ^ (index * 0xd1b54a32d192ed03ULL + 0x632be59bd9b4e019ULL));
}

MixedStateSampler::MixedStateSampler(const ComplexMat& rho) {
    const auto eig = hermitian_eigen(rho, 1e-10);
    if (eig.values.minCoeff() < -1e-12) {
        throw Error(ErrorCode::InvalidInput, "initial density matrix has negative eigenvalues",
                    eig.values.minCoeff());
    }
    probs_ = eig.values.cwiseMax(0.0);
    const double total = probs_.sum();
    if (!(std::abs(total - 1.0) < 1e-8)) {
        throw Error(ErrorCode::InvalidInput, "initial density matrix must have unit trace");
    }
    probs_ /= total;
    vectors_ = eig.vectors;
}

ComplexVec MixedStateSampler::sample(double u) const {
    double acc = 0.0;
    Eigen::Index last = 0;
    for (Eigen::Index i = 0; i < probs_.size(); ++i) {
        if (probs_(i) <= 0.0) continue;
        last = i;
        acc += probs_(i);
        if (u < acc) break;
    }
    ComplexVec v = vectors_.col(last);
    return v / v.norm();
}

}  // namespace qme
