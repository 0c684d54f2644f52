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

#include <complex>
#include <utility>

#include <Eigen/Dense>

namespace qme {

using Complex = std::complex<double>;
using ComplexVec = Eigen::VectorXcd;
using ComplexMat = Eigen::MatrixXcd;
using RealVec = Eigen::VectorXd;

inline constexpr Complex kI{0.0, 1.0};

/// Eigenvalues ascending; eigenvectors are the columns of `vectors`.
struct EigenSystem {
    RealVec values;
    ComplexMat vectors;
};

struct LadderOps {
    ComplexMat lower;
    ComplexMat raise;
};

struct PositionMomentum {
    ComplexMat q;
    ComplexMat p;
};

/// Truncated Fock-basis annihilation/creation operators: lower(m-1, m) = sqrt(m).
LadderOps ladder_ops(int n_levels);

/// q = sqrt(hbar/2 m w)(a + a^+), p = i sqrt(m hbar w/2)(a^+ - a).
PositionMomentum position_momentum(int n_levels, double mass, double omega, double hbar);

/// Throws HermiticityViolation (carrying the residual) when max|M - M^+| >= tol.
EigenSystem hermitian_eigen(const ComplexMat& m, double tol = 1e-10);

double max_abs(const ComplexMat& m);
double hermiticity_residual(const ComplexMat& m);
bool all_finite(const ComplexMat& m);
bool all_finite(const ComplexVec& v);

ComplexMat commutator(const ComplexMat& a, const ComplexMat& b);
ComplexMat anticommutator(const ComplexMat& a, const ComplexMat& b);

/// Kronecker product a (x) b with b the fast index.
ComplexMat kron(const ComplexMat& a, const ComplexMat& b);

}  // namespace qme
