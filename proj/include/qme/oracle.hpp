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

#include <vector>

#include "qme/linalg.hpp"
#include "qme/spec.hpp"

namespace qme {

/// Density matrix of the reduced system. Positivity is not an invariant here;
/// see positivity_report.
using DensityMatrix = ComplexMat;

/// A rho + rho A^+ + sum_k (C_k rho E_k^+ + E_k rho C_k^+).
DensityMatrix generator_apply(const QmeSpec& spec, const DensityMatrix& rho);

/// Output times must be non-negative, ascending and multiples of dt.
struct OracleOptions {
    double dt = 0.0;
    /// Re-run at dt/2 and report the largest entrywise difference at grid times.
    bool step_halving_estimate = true;
    double blow_up_threshold = 1e6;
};

struct OracleResult {
    std::vector<double> times;
    std::vector<DensityMatrix> rhos;
    /// max |rho_dt - rho_dt/2| over grid times and entries; negative when not computed.
    double step_halving_error = -1.0;
};

/// Classical fixed-step RK4 on generator_apply.
OracleResult integrate(const TimeDependentSpec& spec, const DensityMatrix& rho0,
                       const std::vector<double>& t_grid, const OracleOptions& options);
OracleResult integrate(const QmeSpec& spec, const DensityMatrix& rho0, const std::vector<double>& t_grid,
                       const OracleOptions& options);

/// (1/200) * 2 pi / (largest eigenfrequency gap of H). Falls back to 1e-2 for a flat spectrum.
double default_oracle_dt(const ComplexMat& h, double hbar = 1.0);

struct PositivityReport {
    std::vector<double> min_eigenvalue;
    std::vector<double> trace_deviation;
    bool any_negative = false;  // some min eigenvalue below -tolerance
    double most_negative = 0.0;
};

PositivityReport positivity_report(const std::vector<DensityMatrix>& rhos, double negative_tolerance = 1e-8);

/// Grid index of t as a multiple of dt; throws InvalidInput if t is not on the lattice.
long lattice_index(double t, double dt);

}  // namespace qme
