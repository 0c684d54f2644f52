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

#include <string>
#include <vector>

#include "qme/linalg.hpp"
#include "qme/spec.hpp"

namespace qme {

// ---------------------------------------------------------------------------
// Quantum Brownian motion of a harmonic oscillator (high-temperature
// Caldeira-Leggett form):
//   d rho/dt = -(i/hbar)[H, rho] - s (i gamma / 2 hbar)[q, {p, rho}]
//              - (m gamma kT / hbar^2)[q, [q, rho]]
// with s = +1 for FrictionSign::damping. FrictionSign::antidamping flips the
// friction term; it is the sign obtained from the channel operators
//   E1 = sqrt(gamma/2hbar) q,  C1 = -i sqrt(gamma/2hbar) p.
// ---------------------------------------------------------------------------

enum class FrictionSign { damping, antidamping };

struct QbmParams {
    double mass = 1.0;
    double omega = 1.0;
    double gamma = 1e-3;
    double kT = 4.5;
    double hbar = 1.0;
    int n_levels = 12;
    FrictionSign friction = FrictionSign::antidamping;
};

/// Throws InvalidParameter; returns advisory warnings (e.g. kT not >> hbar omega / 2).
std::vector<std::string> check_qbm_params(const QbmParams& params);

/// hbar omega (n + 1/2) on the truncated Fock basis.
ComplexMat oscillator_hamiltonian(int n_levels, double omega, double hbar = 1.0);

/// Two channels (friction, thermal diffusion); the constraint mask drops the top two Fock levels.
QmeSpec build_qbm(const QbmParams& params);

/// Unit vector on Fock level n.
ComplexVec fock_state(int n_levels, int n);

/// |n><n| on the truncated Fock basis.
ComplexMat fock_projector(int n_levels, int n);

// ---------------------------------------------------------------------------
// Electron transfer between two displaced harmonic surfaces with Redfield
// relaxation. Units hbar = m = 1. Basis index = electronic * n_vib + vibrational,
// electronic 0 is the donor.
// ---------------------------------------------------------------------------

struct RedfieldEtParams {
    double omega = 1.0;
    double delta_E = 2.0;
    double lambda_reorg = 3.0;
    double v12 = 1.0;
    double omega_c = 1.0;
    double kT = 0.25;
    double Gamma = 0.1;
    int n_vib = 10;
    /// Mean energy of the initial packet above the diabatic crossing, in units of omega.
    double packet_energy_offset = 0.5;
};

void check_et_params(const RedfieldEtParams& params);

/// Ohmic bath J(w) = eta w exp(-w / w_c) and the real one-sided correlation
/// spectrum used for the relaxation operator:
///   S(w) = J(w) (n(w) + 1)  for w > 0   (system gives energy w to the bath)
///   S(w) = J(|w|) n(|w|)    for w < 0
///   S(0) = eta kT / hbar
struct OhmicBath {
    double eta = 0.0;
    double omega_c = 1.0;
    double kT = 0.0;
    double hbar = 1.0;

    double spectral_density(double w) const;
    double bose(double w) const;
    double spectrum(double w) const;
};

/// eta chosen so the one-phonon downhill rate of the bare oscillator at
/// frequency omega is Gamma (n(omega) + 1).
OhmicBath et_bath(const RedfieldEtParams& params);

/// Diabatic surfaces and operators of the electron-transfer system.
struct EtSystem {
    ComplexMat h;           // system Hamiltonian
    ComplexMat k;           // system part of the bath coupling: q on both surfaces
    ComplexMat donor;       // projector on electronic state 1
    ComplexMat acceptor;    // projector on electronic state 2
    double displacement = 0.0;
};

EtSystem build_et_system(const RedfieldEtParams& params);

/// Lambda_{mu nu} = K_{mu nu} S(e_nu - e_mu) in the eigenbasis of h, returned in the site basis.
ComplexMat relaxation_operator(const ComplexMat& h, const ComplexMat& k, const OhmicBath& bath);

/// M = 1 with C = K, E = Lambda, A = -i H - K Lambda.
QmeSpec build_redfield_et(const RedfieldEtParams& params);

struct LindbladModel {
    ComplexMat h;
    std::vector<ComplexMat> ops;
};

/// Thermal damped oscillator on each diabatic surface:
/// sqrt(Gamma (n + 1)) a_i and sqrt(Gamma n) a_i^+ restricted to surface i.
LindbladModel build_lindblad_dd(const RedfieldEtParams& params);

/// Potential energy of the diabatic crossing, measured from the donor minimum.
double crossing_energy(const RedfieldEtParams& params);

/// Coherent state on the donor surface whose mean energy is the crossing
/// energy plus packet_energy_offset * omega. Acceptor amplitudes are zero.
ComplexVec donor_wavepacket(const RedfieldEtParams& params);

}  // namespace qme
