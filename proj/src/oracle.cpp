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

#include "qme/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "qme/error.hpp"

namespace qme {

DensityMatrix generator_apply(const QmeSpec& spec, const DensityMatrix& rho) {
    if (rho.rows() != spec.dim || rho.cols() != spec.dim) {
        throw Error(ErrorCode::InvalidDimension, "density matrix does not match spec dimension");
    }
    DensityMatrix out = spec.a * rho;
    out.noalias() += rho * spec.a.adjoint();
    for (const auto& ch : spec.channels) {
        out.noalias() += ch.c * rho * ch.e.adjoint();
        out.noalias() += ch.e * rho * ch.c.adjoint();
    }
    return out;
}

long lattice_index(double t, double dt) {
    const double x = t / dt;
    const double n = std::round(x);
    if (!(std::abs(x - n) <= 1e-9 * std::max(1.0, std::abs(x))) || n < 0) {
        throw Error(ErrorCode::InvalidInput,
                    "time " + std::to_string(t) + " is not a non-negative multiple of dt = " + std::to_string(dt));
    }
    return static_cast<long>(n);
}

namespace {

std::vector<long> grid_steps(const std::vector<double>& t_grid, double dt) {
    if (!(dt > 0.0)) {
        throw Error(ErrorCode::InvalidParameter, "dt must be positive");
    }
    std::vector<long> steps;
    steps.reserve(t_grid.size());
    for (double t : t_grid) {
        const long n = lattice_index(t, dt);
        if (!steps.empty() && n <= steps.back()) {
            throw Error(ErrorCode::InvalidInput, "output grid must be strictly ascending");
        }
        steps.push_back(n);
    }
    return steps;
}

DensityMatrix apply_at(const TimeDependentSpec& spec, double t, const DensityMatrix& rho) {
    return generator_apply(*spec.at(t), rho);
}

std::vector<DensityMatrix> run_rk4(const TimeDependentSpec& spec, const DensityMatrix& rho0,
                                   const std::vector<long>& steps, double dt, double blow_up) {
    std::vector<DensityMatrix> out;
    out.reserve(steps.size());
    DensityMatrix rho = rho0;
    long n = 0;
    for (long target : steps) {
        for (; n < target; ++n) {
            const double t = static_cast<double>(n) * dt;
            const DensityMatrix k1 = apply_at(spec, t, rho);
            const DensityMatrix k2 = apply_at(spec, t + 0.5 * dt, rho + (0.5 * dt) * k1);
            const DensityMatrix k3 = apply_at(spec, t + 0.5 * dt, rho + (0.5 * dt) * k2);
            const DensityMatrix k4 = apply_at(spec, t + dt, rho + dt * k3);
            rho += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
            const double mag = max_abs(rho);
            if (!(mag <= blow_up)) {
                throw Error(ErrorCode::BlowUp,
                            "density matrix entry magnitude " + std::to_string(mag) + " at t = " +
                                std::to_string(t + dt) + "; reduce dt",
                            mag);
            }
        }
        out.push_back(rho);
    }
    return out;
}

}  // namespace

OracleResult integrate(const TimeDependentSpec& spec, const DensityMatrix& rho0,
                       const std::vector<double>& t_grid, const OracleOptions& options) {
    if (rho0.rows() != spec.dim() || rho0.cols() != spec.dim()) {
        throw Error(ErrorCode::InvalidDimension, "initial density matrix does not match spec dimension");
    }
    const double herm = hermiticity_residual(rho0);
    if (!(herm < 1e-10)) {
        throw Error(ErrorCode::HermiticityViolation, "initial density matrix is not Hermitian", herm);
    }
    if (!(std::abs(rho0.trace() - 1.0) < 1e-8)) {
        throw Error(ErrorCode::InvalidInput, "initial density matrix must have unit trace");
    }
    const auto steps = grid_steps(t_grid, options.dt);

    OracleResult result;
    result.times = t_grid;
    result.rhos = run_rk4(spec, rho0, steps, options.dt, options.blow_up_threshold);
    if (options.step_halving_estimate) {
        std::vector<long> fine_steps(steps.size());
        std::transform(steps.begin(), steps.end(), fine_steps.begin(), [](long n) { return 2 * n; });
        const auto fine = run_rk4(spec, rho0, fine_steps, 0.5 * options.dt, options.blow_up_threshold);
        double err = 0.0;
        for (std::size_t i = 0; i < fine.size(); ++i) {
            err = std::max(err, max_abs(fine[i] - result.rhos[i]));
        }
        result.step_halving_error = err;
    }
    return result;
}

OracleResult integrate(const QmeSpec& spec, const DensityMatrix& rho0, const std::vector<double>& t_grid,
                       const OracleOptions& options) {
    return integrate(TimeDependentSpec::constant(spec), rho0, t_grid, options);
}

double default_oracle_dt(const ComplexMat& h, double hbar) {
    const auto eig = hermitian_eigen(h, 1e-9);
    const double gap = (eig.values.maxCoeff() - eig.values.minCoeff()) / hbar;
    if (!(gap > 1e-12)) {
        return 1e-2;
    }
    return (2.0 * std::numbers::pi / gap) / 200.0;
}

PositivityReport positivity_report(const std::vector<DensityMatrix>& rhos, double negative_tolerance) {
    PositivityReport report;
    for (const auto& rho : rhos) {
        const auto eig = hermitian_eigen(rho, 1e-8);
        const double lo = eig.values.size() > 0 ? eig.values.minCoeff() : 0.0;
        report.min_eigenvalue.push_back(lo);
        report.trace_deviation.push_back(std::abs(rho.trace() - 1.0));
        report.most_negative = std::min(report.most_negative, lo);
        if (lo < -negative_tolerance) report.any_negative = true;
    }
    return report;
}

}  // namespace qme
