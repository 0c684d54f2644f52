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

#include "qme/models.hpp"

#include <cmath>
#include <string>

#include "qme/error.hpp"

namespace qme {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw Error(ErrorCode::InvalidParameter, what);
}

}  // namespace

std::vector<std::string> check_qbm_params(const QbmParams& p) {
    require(p.mass > 0.0 && std::isfinite(p.mass), "QBM mass must be positive");
    require(p.omega > 0.0 && std::isfinite(p.omega), "QBM omega must be positive");
    require(p.hbar > 0.0 && std::isfinite(p.hbar), "QBM hbar must be positive");
    require(p.gamma >= 0.0 && std::isfinite(p.gamma), "QBM gamma must be non-negative");
    require(p.kT > 0.0 && std::isfinite(p.kT), "QBM kT must be positive");
    if (p.n_levels < 4) {
        throw Error(ErrorCode::InvalidDimension, "QBM needs at least 4 Fock levels");
    }
    std::vector<std::string> warnings;
    if (p.kT < 2.0 * p.hbar * p.omega) {
        warnings.push_back("kT is not large compared with hbar*omega/2; the high-temperature QME is questionable");
    }
    return warnings;
}

ComplexMat oscillator_hamiltonian(int n_levels, double omega, double hbar) {
    ComplexMat h = ComplexMat::Zero(n_levels, n_levels);
    for (int n = 0; n < n_levels; ++n) {
        h(n, n) = hbar * omega * (n + 0.5);
    }
    return h;
}

QmeSpec build_qbm(const QbmParams& p) {
    check_qbm_params(p);
    const int n = p.n_levels;
    const auto [q, mom] = position_momentum(n, p.mass, p.omega, p.hbar);
    const double friction = std::sqrt(p.gamma / (2.0 * p.hbar));
    const double diffusion = p.mass * p.gamma * p.kT / (p.hbar * p.hbar);
    const double sign = p.friction == FrictionSign::damping ? 1.0 : -1.0;

    QmeSpec spec;
    spec.dim = n;
    spec.a = (-kI / p.hbar) * oscillator_hamiltonian(n, p.omega, p.hbar) -
             (sign * kI * p.gamma / (2.0 * p.hbar)) * (q * mom) - diffusion * (q * q);
    spec.channels.push_back({(sign * kI * friction) * mom, friction * q});
    const ComplexMat thermal = std::sqrt(diffusion) * q;
    spec.channels.push_back({thermal, thermal});
    spec.constraint_mask = IndexRange{0, n - 2};
    return spec;
}

ComplexVec fock_state(int n_levels, int n) {
    if (n_levels < 1 || n < 0 || n >= n_levels) {
        throw Error(ErrorCode::OutOfRange,
                    "Fock level " + std::to_string(n) + " outside [0, " + std::to_string(n_levels) + ")");
    }
    ComplexVec v = ComplexVec::Zero(n_levels);
    v(n) = 1.0;
    return v;
}

ComplexMat fock_projector(int n_levels, int n) {
    const ComplexVec v = fock_state(n_levels, n);
    return v * v.adjoint();
}

void check_et_params(const RedfieldEtParams& p) {
    require(p.omega > 0.0 && std::isfinite(p.omega), "omega must be positive");
    require(std::isfinite(p.delta_E), "delta_E must be finite");
    require(p.lambda_reorg > 0.0 && std::isfinite(p.lambda_reorg), "lambda_reorg must be positive");
    require(p.v12 >= 0.0 && std::isfinite(p.v12), "v12 must be non-negative");
    require(p.omega_c > 0.0 && std::isfinite(p.omega_c), "omega_c must be positive");
    require(p.kT >= 0.0 && std::isfinite(p.kT), "kT must be non-negative");
    require(p.Gamma >= 0.0 && std::isfinite(p.Gamma), "Gamma must be non-negative");
    require(std::isfinite(p.packet_energy_offset), "packet_energy_offset must be finite");
    if (p.n_vib < 2) {
        throw Error(ErrorCode::InvalidDimension, "n_vib must be at least 2");
    }
}

double OhmicBath::spectral_density(double w) const {
    return w <= 0.0 ? 0.0 : eta * w * std::exp(-w / omega_c);
}

double OhmicBath::bose(double w) const {
    if (kT <= 0.0) return 0.0;
    return 1.0 / std::expm1(hbar * w / kT);
}

double OhmicBath::spectrum(double w) const {
    if (w > 0.0) return spectral_density(w) * (bose(w) + 1.0);
    if (w < 0.0) return spectral_density(-w) * bose(-w);
    return eta * kT / hbar;
}

OhmicBath et_bath(const RedfieldEtParams& p) {
    // Downhill 1 -> 0 rate of the bare oscillator is 2 |q_01|^2 S(omega) = S(omega) / omega
    // with S(omega) = eta omega exp(-omega/omega_c) (n + 1); setting it to Gamma (n + 1)
    // gives eta = Gamma exp(omega / omega_c).
    return OhmicBath{p.Gamma * std::exp(p.omega / p.omega_c), p.omega_c, p.kT, 1.0};
}

EtSystem build_et_system(const RedfieldEtParams& p) {
    check_et_params(p);
    const int nv = p.n_vib;
    const auto [q, mom] = position_momentum(nv, 1.0, p.omega, 1.0);
    const double w2 = p.omega * p.omega;
    const double shift = std::sqrt(2.0 * p.lambda_reorg / w2);

    const ComplexMat h1 = oscillator_hamiltonian(nv, p.omega);
    // omega^2 (q - shift)^2 / 2 - delta_E expanded on the donor oscillator basis.
    const ComplexMat h2 = h1 - (w2 * shift) * q +
                          ComplexMat::Identity(nv, nv) * (p.lambda_reorg - p.delta_E);

    ComplexMat p1 = ComplexMat::Zero(2, 2);
    p1(0, 0) = 1.0;
    ComplexMat p2 = ComplexMat::Zero(2, 2);
    p2(1, 1) = 1.0;
    ComplexMat sx = ComplexMat::Zero(2, 2);
    sx(0, 1) = sx(1, 0) = 1.0;
    const ComplexMat id_vib = ComplexMat::Identity(nv, nv);

    EtSystem sys;
    sys.h = kron(p1, h1) + kron(p2, h2) + p.v12 * kron(sx, id_vib);
    sys.k = kron(ComplexMat::Identity(2, 2), q);
    sys.donor = kron(p1, id_vib);
    sys.acceptor = kron(p2, id_vib);
    sys.displacement = shift;
    return sys;
}

ComplexMat relaxation_operator(const ComplexMat& h, const ComplexMat& k, const OhmicBath& bath) {
    const auto eig = hermitian_eigen(h, 1e-9);
    const ComplexMat& v = eig.vectors;
    ComplexMat lambda = v.adjoint() * k * v;
    const Eigen::Index n = lambda.rows();
    for (Eigen::Index mu = 0; mu < n; ++mu) {
        for (Eigen::Index nu = 0; nu < n; ++nu) {
            lambda(mu, nu) *= bath.spectrum((eig.values(nu) - eig.values(mu)) / bath.hbar);
        }
    }
    return v * lambda * v.adjoint();
}

QmeSpec build_redfield_et(const RedfieldEtParams& p) {
    const EtSystem sys = build_et_system(p);
    const ComplexMat lambda = relaxation_operator(sys.h, sys.k, et_bath(p));
    QmeSpec spec;
    spec.dim = static_cast<int>(sys.h.rows());
    spec.a = -kI * sys.h - sys.k * lambda;
    spec.channels.push_back({sys.k, lambda});
    return spec;
}

LindbladModel build_lindblad_dd(const RedfieldEtParams& p) {
    const EtSystem sys = build_et_system(p);
    const int nv = p.n_vib;
    const auto [a, ad] = ladder_ops(nv);
    const double nbar = et_bath(p).bose(p.omega);
    const double down = std::sqrt(p.Gamma * (nbar + 1.0));
    const double up = std::sqrt(p.Gamma * nbar);
    // Surface 2 is the same oscillator displaced by `shift` in position.
    const Complex a_shift = sys.displacement * std::sqrt(p.omega / 2.0);
    const ComplexMat a2 = a - a_shift * ComplexMat::Identity(nv, nv);

    ComplexMat p1 = ComplexMat::Zero(2, 2);
    p1(0, 0) = 1.0;
    ComplexMat p2 = ComplexMat::Zero(2, 2);
    p2(1, 1) = 1.0;

    LindbladModel model;
    model.h = sys.h;
    model.ops.push_back(down * kron(p1, a));
    model.ops.push_back(up * kron(p1, ComplexMat(a.adjoint())));
    model.ops.push_back(down * kron(p2, a2));
    model.ops.push_back(up * kron(p2, ComplexMat(a2.adjoint())));
    return model;
}

double crossing_energy(const RedfieldEtParams& p) {
    check_et_params(p);
    // omega^2 q^2 / 2 = omega^2 (q - shift)^2 / 2 - delta_E  =>  E = (lambda - delta_E)^2 / (4 lambda)
    const double diff = p.lambda_reorg - p.delta_E;
    return diff * diff / (4.0 * p.lambda_reorg);
}

ComplexVec donor_wavepacket(const RedfieldEtParams& p) {
    const double e_cross = crossing_energy(p);
    const double alpha2 = (e_cross + p.packet_energy_offset * p.omega) / p.omega - 0.5;
    if (alpha2 < 0.0) {
        throw Error(ErrorCode::InvalidParameter,
                    "packet energy lies below the donor zero-point energy; raise packet_energy_offset");
    }
    // Displace toward the crossing point.
    const double alpha = (p.lambda_reorg >= p.delta_E ? 1.0 : -1.0) * std::sqrt(alpha2);
    const int nv = p.n_vib;
    ComplexVec vib(nv);
    double weight = 0.0;
    double amp = std::exp(-0.5 * alpha2);
    for (int n = 0; n < nv; ++n) {
        if (n > 0) amp *= alpha / std::sqrt(static_cast<double>(n));
        vib(n) = amp;
        weight += amp * amp;
    }
    const double tail = 1.0 - weight;
    if (tail > 1e-3) {
        throw Error(ErrorCode::Truncation,
                    "wave packet loses " + std::to_string(tail) + " of its norm beyond " +
                        std::to_string(nv) + " vibrational levels; increase n_vib",
                    tail);
    }
    vib /= std::sqrt(weight);
    ComplexVec out = ComplexVec::Zero(2 * nv);
    out.head(nv) = vib;
    return out;
}

}  // namespace qme
