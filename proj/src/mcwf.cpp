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

#include <cmath>
#include <string>

#include "lattice_driver.hpp"
#include "qme/engine.hpp"
#include "qme/error.hpp"

namespace qme {

namespace {

class McwfModel {
public:
    McwfModel(const ComplexMat& h, const std::vector<ComplexMat>& ops, double hbar, ComplexVec& psi,
              std::vector<std::array<long, 2>>& counts)
        : ops_(ops), psi_(psi), counts_(counts) {
        a_eff_ = (-kI / hbar) * h;
        for (const auto& l : ops_) {
            ComplexMat ldl = l.adjoint() * l;
            a_eff_ -= 0.5 * ldl;
            ldl_.push_back(std::move(ldl));
        }
        rates_.resize(ops_.size());
    }

    double abs_rate(double) {
        refresh();
        return total_;
    }

    bool try_jump(double, double h, double u1, double u2) {
        refresh();
        if (!(u1 < h * total_)) return false;
        const double target = u2 * total_;
        double acc = 0.0;
        int chosen = -1;
        for (std::size_t k = 0; k < rates_.size(); ++k) {
            if (rates_[k] <= 0.0) continue;
            chosen = static_cast<int>(k);
            acc += rates_[k];
            if (target < acc) break;
        }
        if (chosen < 0) return false;
        ComplexVec next = ops_[chosen] * psi_;
        const double norm = next.norm();
        if (norm < 1e-14) {
            throw Error(ErrorCode::TrajectoryDeath, "wave function vanished after a jump");
        }
        psi_ = next / norm;
        ++counts_[chosen][0];
        fresh_ = false;
        return true;
    }

    void drift(double, double h) {
        refresh();
        auto deriv = [this](const ComplexVec& v, double shift) {
            ComplexVec d = a_eff_ * v;
            d += shift * v;
            return d;
        };
        const ComplexVec k1 = deriv(psi_, 0.5 * total_);
        ComplexVec y = psi_ + (0.5 * h) * k1;
        const ComplexVec k2 = deriv(y, 0.5 * rate_sum(y));
        y = psi_ + (0.5 * h) * k2;
        const ComplexVec k3 = deriv(y, 0.5 * rate_sum(y));
        y = psi_ + h * k3;
        const ComplexVec k4 = deriv(y, 0.5 * rate_sum(y));
        psi_ += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        psi_.normalize();
        fresh_ = false;
    }

private:
    double rate_sum(const ComplexVec& v) const {
        const double n2 = v.squaredNorm();
        double s = 0.0;
        for (const auto& ldl : ldl_) s += v.dot(ldl * v).real() / n2;
        return s;
    }

    void refresh() {
        if (fresh_) return;
        total_ = 0.0;
        const double n2 = psi_.squaredNorm();
        for (std::size_t k = 0; k < ldl_.size(); ++k) {
            rates_[k] = psi_.dot(ldl_[k] * psi_).real() / n2;
            total_ += rates_[k];
        }
        fresh_ = true;
    }

    const std::vector<ComplexMat>& ops_;
    ComplexVec& psi_;
    std::vector<std::array<long, 2>>& counts_;
    ComplexMat a_eff_;
    std::vector<ComplexMat> ldl_;
    std::vector<double> rates_;
    double total_ = 0.0;
    bool fresh_ = false;
};

}  // namespace

TrajectoryRecord mcwf_standard(const ComplexMat& h, const std::vector<ComplexMat>& lindblad_ops,
                               const ComplexVec& chi, const PropagationConfig& config,
                               const std::vector<ComplexMat>& observables, double hbar) {
    if (!(hbar > 0.0)) {
        throw Error(ErrorCode::InvalidParameter, "hbar must be positive");
    }
    if (h.rows() != h.cols()) {
        throw Error(ErrorCode::InvalidDimension, "Hamiltonian is not square");
    }
    const int dim = static_cast<int>(h.rows());
    for (const auto& l : lindblad_ops) {
        if (l.rows() != dim || l.cols() != dim) {
            throw Error(ErrorCode::InvalidDimension, "Lindblad operator dimension mismatch");
        }
    }
    detail::check_initial_state(chi, dim, observables);
    const auto steps = grid_lattice_steps(config.t_grid, config.dt);

    for (int attempt = 0;; ++attempt) {
        try {
            ComplexVec psi = chi;
            TrajectoryRecord rec;
            rec.n_jumps.assign(lindblad_ops.size(), {0, 0});
            UniformStream rng(attempt == 0 ? config.rng_seed : derive_seed(config.rng_seed, attempt));
            McwfModel model(h, lindblad_ops, hbar, psi, rec.n_jumps);
            detail::LatticeDriver<McwfModel> driver(model, config, rng, rec);
            long n = 0;
            for (long target : steps) {
                for (; n < target; ++n) {
                    driver.advance(static_cast<double>(n) * config.dt, config.dt);
                }
                std::vector<double> values;
                for (const auto& o : observables) {
                    values.push_back(detail::real_checked(psi.dot(o * psi)));
                }
                rec.values.push_back(std::move(values));
                rec.traces.push_back(psi.squaredNorm());
                rec.weights.push_back(1);
                if (config.record_rdm) rec.rho.push_back(psi * psi.adjoint());
            }
            rec.restarts = attempt;
            return rec;
        } catch (const Error& e) {
            if (e.code() != ErrorCode::TrajectoryDeath || attempt >= config.max_restarts) throw;
        }
    }
}

}  // namespace qme
