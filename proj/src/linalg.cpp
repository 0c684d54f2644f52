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

#include "qme/linalg.hpp"

#include <cmath>
#include <string>

#include "qme/error.hpp"

namespace qme {

const char* to_string(ErrorCode code) {
    switch (code) {
        case ErrorCode::InvalidDimension: return "invalid-dimension";
        case ErrorCode::InvalidParameter: return "invalid-parameter";
        case ErrorCode::HermiticityViolation: return "hermiticity-violation";
        case ErrorCode::InvalidSpec: return "invalid-spec";
        case ErrorCode::OutOfRange: return "out-of-range";
        case ErrorCode::DegeneratePair: return "degenerate-pair";
        case ErrorCode::StepSize: return "step-size";
        case ErrorCode::TrajectoryDeath: return "trajectory-death";
        case ErrorCode::EmptyEnsemble: return "empty-ensemble";
        case ErrorCode::BlowUp: return "blow-up";
        case ErrorCode::Truncation: return "truncation";
        case ErrorCode::InvalidInput: return "invalid-input";
        case ErrorCode::Config: return "config";
        case ErrorCode::GridMismatch: return "grid-mismatch";
    }
    return "unknown";
}

LadderOps ladder_ops(int n_levels) {
    if (n_levels < 2) {
        throw Error(ErrorCode::InvalidDimension,
                    "ladder operators need at least 2 levels, got " + std::to_string(n_levels));
    }
    ComplexMat lower = ComplexMat::Zero(n_levels, n_levels);
    for (int m = 1; m < n_levels; ++m) {
        lower(m - 1, m) = std::sqrt(static_cast<double>(m));
    }
    ComplexMat raise = lower.adjoint();
    return {std::move(lower), std::move(raise)};
}

PositionMomentum position_momentum(int n_levels, double mass, double omega, double hbar) {
    if (!(mass > 0.0) || !(omega > 0.0) || !(hbar > 0.0)) {
        throw Error(ErrorCode::InvalidParameter, "mass, omega and hbar must be positive");
    }
    const auto [a, ad] = ladder_ops(n_levels);
    const double q_scale = std::sqrt(hbar / (2.0 * mass * omega));
    const double p_scale = std::sqrt(mass * hbar * omega / 2.0);
    ComplexMat q = q_scale * (a + ad);
    ComplexMat p = (kI * p_scale) * (ad - a);
    return {std::move(q), std::move(p)};
}

double max_abs(const ComplexMat& m) {
    return m.size() == 0 ? 0.0 : m.cwiseAbs().maxCoeff();
}

double hermiticity_residual(const ComplexMat& m) {
    if (m.rows() != m.cols()) {
        throw Error(ErrorCode::InvalidDimension, "matrix is not square");
    }
    return max_abs(m - m.adjoint());
}

bool all_finite(const ComplexMat& m) {
    return m.allFinite();
}

bool all_finite(const ComplexVec& v) {
    return v.allFinite();
}

EigenSystem hermitian_eigen(const ComplexMat& m, double tol) {
    const double residual = hermiticity_residual(m);
    if (!(residual < tol)) {
        throw Error(ErrorCode::HermiticityViolation,
                    "matrix is not Hermitian (residual " + std::to_string(residual) + ")", residual);
    }
    // Symmetrize so the solver sees an exactly Hermitian input.
    const ComplexMat h = 0.5 * (m + m.adjoint());
    Eigen::SelfAdjointEigenSolver<ComplexMat> solver(h);
    if (solver.info() != Eigen::Success) {
        throw Error(ErrorCode::InvalidInput, "eigendecomposition did not converge");
    }
    return {solver.eigenvalues(), solver.eigenvectors()};
}

ComplexMat commutator(const ComplexMat& a, const ComplexMat& b) {
    return a * b - b * a;
}

ComplexMat anticommutator(const ComplexMat& a, const ComplexMat& b) {
    return a * b + b * a;
}

ComplexMat kron(const ComplexMat& a, const ComplexMat& b) {
    ComplexMat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

}  // namespace qme
