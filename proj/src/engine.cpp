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

#include "qme/engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "qme/error.hpp"
#include "lattice_driver.hpp"

namespace qme {

TrajectoryPair TrajectoryPair::from_pure_state(const ComplexVec& chi, int num_channels) {
    TrajectoryPair pair;
    pair.psi = chi / std::sqrt(2.0);
    pair.phi = pair.psi;
    pair.n_jumps.assign(static_cast<std::size_t>(num_channels), {0, 0});
    return pair;
}

double pair_trace(const ComplexVec& psi, const ComplexVec& phi) {
    return 2.0 * phi.dot(psi).real();
}

double pair_trace(const TrajectoryPair& pair) {
    return pair_trace(pair.psi, pair.phi);
}

ComplexMat pair_contribution(const TrajectoryPair& pair) {
    const ComplexMat x = static_cast<double>(pair.weight) * (pair.psi * pair.phi.adjoint());
    return x + x.adjoint();
}

double JumpRates::signed_sum() const {
    double s = 0.0;
    for (const auto& p : partial) s += p[0] + p[1];
    return s;
}

double JumpRates::abs_sum() const {
    double s = 0.0;
    for (const auto& p : partial) s += std::abs(p[0]) + std::abs(p[1]);
    return s;
}

PreparedSpec::PreparedSpec(std::shared_ptr<const QmeSpec> spec) : spec_(std::move(spec)) {
    check_dimensions(*spec_);
    a_plus_adj_ = spec_->a + spec_->a.adjoint();
    c_adj_e_.reserve(spec_->channels.size());
    for (const auto& ch : spec_->channels) {
        c_adj_e_.push_back(ch.c.adjoint() * ch.e);
    }
}

PreparedSpec::PreparedSpec(const QmeSpec& spec) : PreparedSpec(std::make_shared<const QmeSpec>(spec)) {}

namespace {

// Fills `out` in place; `tmp` is scratch of the spec dimension.
void eval_rates(const PreparedSpec& prepared, const ComplexVec& psi, const ComplexVec& phi, double tau_floor,
                JumpRates& out, ComplexVec& tmp) {
    const double tau = pair_trace(psi, phi);
    if (!(std::abs(tau) >= tau_floor)) {
        throw Error(ErrorCode::DegeneratePair, "pair trace " + std::to_string(tau) + " below floor", tau);
    }
    const int m = prepared.spec().num_channels();
    out.partial.resize(static_cast<std::size_t>(m));
    // <phi|C^+E|psi> + <psi|E^+C|phi> = 2 Re <phi|C^+E|psi>; the second term swaps C and E.
    for (int k = 0; k < m; ++k) {
        const ComplexMat& ce = prepared.c_adj_e(k);
        tmp.noalias() = ce * psi;
        out.partial[k][0] = 2.0 * phi.dot(tmp).real() / tau;
        tmp.noalias() = ce * phi;
        out.partial[k][1] = 2.0 * psi.dot(tmp).real() / tau;
    }
    tmp.noalias() = prepared.hermitian_part_of_a() * psi;
    out.total = -2.0 * phi.dot(tmp).real() / tau;
}

}  // namespace

JumpRates jump_rates(const PreparedSpec& prepared, const ComplexVec& psi, const ComplexVec& phi,
                     double tau_floor) {
    JumpRates rates;
    ComplexVec tmp(psi.size());
    eval_rates(prepared, psi, phi, tau_floor, rates, tmp);
    return rates;
}

JumpRates jump_rates(const QmeSpec& spec, const TrajectoryPair& pair, double tau_floor) {
    return jump_rates(PreparedSpec(spec), pair.psi, pair.phi, tau_floor);
}

namespace {

double drift_shift(const JumpRates& rates, DriftRates mode) {
    return 0.5 * (mode == DriftRates::absolute ? rates.abs_sum() : rates.signed_sum());
}

void check_guard(double h, double abs_rate, const PropagationConfig& config) {
    if (h * abs_rate > config.max_total_rate_dt) {
        throw Error(ErrorCode::StepSize,
                    "dt * sum|p| = " + std::to_string(h * abs_rate) + " exceeds " +
                        std::to_string(config.max_total_rate_dt) + "; reduce dt",
                    h * abs_rate);
    }
}

// Stage-wise specs for RK4: the same prepared spec for static generators,
// a fresh evaluation otherwise.
class SpecProvider {
public:
    explicit SpecProvider(const TimeDependentSpec& tds) : tds_(tds) {
        if (tds_.is_static()) cached_ = std::make_shared<const PreparedSpec>(tds_.at(0.0));
    }

    const PreparedSpec* cached() const { return cached_.get(); }

    std::shared_ptr<const PreparedSpec> at(double t) const {
        if (cached_) return cached_;
        return std::make_shared<const PreparedSpec>(tds_.at(t));
    }

private:
    const TimeDependentSpec& tds_;
    std::shared_ptr<const PreparedSpec> cached_;
};

struct DriftWorkspace {
    explicit DriftWorkspace(Eigen::Index n)
        : k1a(n), k1b(n), k2a(n), k2b(n), k3a(n), k3b(n), k4a(n), k4b(n), ya(n), yb(n), tmp(n) {}

    ComplexVec k1a, k1b, k2a, k2b, k3a, k3b, k4a, k4b, ya, yb, tmp;
    JumpRates rates;
};

template <class SpecAt>
void drift_rk4(const SpecAt& spec_at_time, TrajectoryPair& pair, const JumpRates& start_rates, double dt,
               const PropagationConfig& config, DriftWorkspace& w) {
    check_guard(dt, start_rates.abs_sum(), config);
    if (dt == 0.0) return;
    const double t = pair.t;

    auto deriv = [&](const PreparedSpec& ps, const ComplexVec& psi, const ComplexVec& phi, double shift,
                     ComplexVec& dpsi, ComplexVec& dphi) {
        dpsi.noalias() = ps.spec().a * psi;
        dpsi += shift * psi;
        dphi.noalias() = ps.spec().a * phi;
        dphi += shift * phi;
    };
    auto shift_at = [&](const PreparedSpec& ps, const ComplexVec& psi, const ComplexVec& phi) {
        eval_rates(ps, psi, phi, config.tau_floor, w.rates, w.tmp);
        return drift_shift(w.rates, config.drift_rates);
    };

    const auto s0 = spec_at_time(t);
    const auto s_mid = spec_at_time(t + 0.5 * dt);
    const auto s1 = spec_at_time(t + dt);

    deriv(*s0, pair.psi, pair.phi, drift_shift(start_rates, config.drift_rates), w.k1a, w.k1b);

    w.ya = pair.psi + (0.5 * dt) * w.k1a;
    w.yb = pair.phi + (0.5 * dt) * w.k1b;
    deriv(*s_mid, w.ya, w.yb, shift_at(*s_mid, w.ya, w.yb), w.k2a, w.k2b);

    w.ya = pair.psi + (0.5 * dt) * w.k2a;
    w.yb = pair.phi + (0.5 * dt) * w.k2b;
    deriv(*s_mid, w.ya, w.yb, shift_at(*s_mid, w.ya, w.yb), w.k3a, w.k3b);

    w.ya = pair.psi + dt * w.k3a;
    w.yb = pair.phi + dt * w.k3b;
    deriv(*s1, w.ya, w.yb, shift_at(*s1, w.ya, w.yb), w.k4a, w.k4b);

    pair.psi += (dt / 6.0) * (w.k1a + 2.0 * w.k2a + 2.0 * w.k3a + w.k4a);
    pair.phi += (dt / 6.0) * (w.k1b + 2.0 * w.k2b + 2.0 * w.k3b + w.k4b);
    pair.t = t + dt;
}

}  // namespace

void drift_step(const PreparedSpec& spec, TrajectoryPair& pair, const JumpRates& start_rates, double dt,
                const PropagationConfig& config) {
    DriftWorkspace w(pair.psi.size());
    auto same = [&spec](double) { return &spec; };
    drift_rk4(same, pair, start_rates, dt, config, w);
}

void drift_step(const QmeSpec& spec, TrajectoryPair& pair, double dt, const PropagationConfig& config) {
    const PreparedSpec prepared(spec);
    drift_step(prepared, pair, jump_rates(prepared, pair.psi, pair.phi, config.tau_floor), dt, config);
}

void apply_jump(const QmeSpec& spec, TrajectoryPair& pair, const JumpRates& rates, int channel, int term,
                bool renormalize) {
    if (channel < 0 || channel >= spec.num_channels() || (term != 1 && term != 2)) {
        throw Error(ErrorCode::InvalidInput, "no such jump (channel " + std::to_string(channel) + ", term " +
                                                 std::to_string(term) + ")");
    }
    const double p = rates.partial[channel][term - 1];
    if (p == 0.0) {
        throw Error(ErrorCode::InvalidInput, "cannot jump through a zero rate");
    }
    const Channel& ch = spec.channels[channel];
    const double scale = 1.0 / std::sqrt(std::abs(p));
    // term 1: psi <- E psi, phi <- C phi; term 2 swaps the operators.
    const ComplexMat& to_psi = term == 1 ? ch.e : ch.c;
    const ComplexMat& to_phi = term == 1 ? ch.c : ch.e;
    ComplexVec psi = scale * (to_psi * pair.psi);
    ComplexVec phi = scale * (to_phi * pair.phi);
    if (p < 0.0) {
        // The new pair trace is sign(p) times the old one; move the sign into the weight.
        pair.weight = -pair.weight;
        psi = -psi;
    }
    const double norm_psi = psi.norm();
    const double norm_phi = phi.norm();
    if (norm_psi < 1e-14 && norm_phi < 1e-14) {
        throw Error(ErrorCode::TrajectoryDeath, "both vectors vanished after a jump");
    }
    if (renormalize && norm_psi > 0.0 && norm_phi > 0.0) {
        const double balance = std::sqrt(norm_phi / norm_psi);
        psi *= balance;
        phi /= balance;
    }
    pair.psi = std::move(psi);
    pair.phi = std::move(phi);
    ++pair.n_jumps[channel][term - 1];
}

namespace {

// Returns (channel, term) picked with probability proportional to |p|.
std::pair<int, int> select_jump(const JumpRates& rates, double u2) {
    const double total = rates.abs_sum();
    const double target = u2 * total;
    double acc = 0.0;
    std::pair<int, int> last{-1, 0};
    for (std::size_t k = 0; k < rates.partial.size(); ++k) {
        for (int i = 0; i < 2; ++i) {
            const double a = std::abs(rates.partial[k][i]);
            if (a == 0.0) continue;
            last = {static_cast<int>(k), i + 1};
            acc += a;
            if (target < acc) return last;
        }
    }
    return last;
}

}  // namespace

JumpOutcome maybe_jump(const QmeSpec& spec, TrajectoryPair& pair, const JumpRates& rates, double u1, double u2,
                       double dt, const PropagationConfig& config) {
    const double total = rates.abs_sum();
    check_guard(dt, total, config);
    if (!(u1 < dt * total)) {
        return {};
    }
    const auto [k, term] = select_jump(rates, u2);
    if (k < 0) return {};
    const double p = rates.partial[k][term - 1];
    apply_jump(spec, pair, rates, k, term, config.renormalize_each_jump);
    return {true, k, term, p};
}

long TrajectoryRecord::total_jumps() const {
    long n = 0;
    for (const auto& c : n_jumps) n += c[0] + c[1];
    return n;
}

std::vector<long> grid_lattice_steps(const std::vector<double>& t_grid, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw Error(ErrorCode::InvalidParameter, "dt must be positive");
    }
    std::vector<long> steps;
    steps.reserve(t_grid.size());
    for (double t : t_grid) {
        const double x = t / dt;
        const double n = std::round(x);
        if (!(std::abs(x - n) <= 1e-9 * std::max(1.0, std::abs(x))) || n < 0) {
            throw Error(ErrorCode::InvalidInput, "grid time " + std::to_string(t) +
                                                     " is not a non-negative multiple of dt = " +
                                                     std::to_string(dt));
        }
        const long step = static_cast<long>(n);
        if (!steps.empty() && step <= steps.back()) {
            throw Error(ErrorCode::InvalidInput, "output grid must be strictly ascending");
        }
        steps.push_back(step);
    }
    return steps;
}

using detail::LatticeDriver;
using detail::real_checked;
using detail::check_initial_state;

namespace {

class PairModel {
public:
    PairModel(const SpecProvider& provider, TrajectoryPair& pair, const PropagationConfig& config)
        : provider_(provider), pair_(pair), config_(config), work_(pair.psi.size()) {}

    double abs_rate(double t) {
        refresh(t);
        return rates_.abs_sum();
    }

    bool try_jump(double t, double h, double u1, double u2) {
        refresh(t);
        const JumpOutcome out = maybe_jump(current().spec(), pair_, rates_, u1, u2, h, config_);
        if (out.jumped) valid_ = false;
        return out.jumped;
    }

    void drift(double t, double h) {
        refresh(t);
        if (const PreparedSpec* fixed = provider_.cached()) {
            auto spec_at_time = [fixed](double) { return fixed; };
            drift_rk4(spec_at_time, pair_, rates_, h, config_, work_);
        } else {
            auto spec_at_time = [this](double s) { return provider_.at(s); };
            drift_rk4(spec_at_time, pair_, rates_, h, config_, work_);
        }
        valid_ = false;
    }

private:
    const PreparedSpec& current() const { return provider_.cached() ? *provider_.cached() : *spec_; }

    void refresh(double t) {
        pair_.t = t;
        if (valid_ && rates_t_ == t) return;
        if (!provider_.cached()) spec_ = provider_.at(t);
        eval_rates(current(), pair_.psi, pair_.phi, config_.tau_floor, rates_, work_.tmp);
        rates_t_ = t;
        valid_ = true;
    }

    const SpecProvider& provider_;
    TrajectoryPair& pair_;
    const PropagationConfig& config_;
    DriftWorkspace work_;
    std::shared_ptr<const PreparedSpec> spec_;
    JumpRates rates_;
    bool valid_ = false;
    double rates_t_ = 0.0;
};

void record_pair(const TrajectoryPair& pair, const std::vector<ComplexMat>& observables,
                 const PropagationConfig& config, TrajectoryRecord& rec) {
    std::vector<double> values;
    values.reserve(observables.size());
    const double w = pair.weight;
    for (const auto& o : observables) {
        const Complex z = pair.phi.dot(o * pair.psi) + pair.psi.dot(o * pair.phi);
        values.push_back(real_checked(w * z));
    }
    rec.values.push_back(std::move(values));
    rec.traces.push_back(w * pair_trace(pair));
    rec.weights.push_back(pair.weight);
    const ComplexMat contribution = pair_contribution(pair);
    rec.max_hermiticity_defect =
        std::max(rec.max_hermiticity_defect, max_abs(contribution - contribution.adjoint()));
    if (config.record_rdm) rec.rho.push_back(contribution);
}

TrajectoryRecord propagate_once(const TimeDependentSpec& tds, const ComplexVec& chi,
                                const PropagationConfig& config, const std::vector<ComplexMat>& observables,
                                const std::vector<long>& steps, std::uint64_t seed) {
    const SpecProvider provider(tds);
    TrajectoryPair pair = TrajectoryPair::from_pure_state(chi, tds.num_channels());
    UniformStream rng(seed);
    TrajectoryRecord rec;
    PairModel model(provider, pair, config);
    LatticeDriver<PairModel> driver(model, config, rng, rec);

    long n = 0;
    for (long target : steps) {
        for (; n < target; ++n) {
            driver.advance(static_cast<double>(n) * config.dt, config.dt);
            const double drift = std::abs(pair_trace(pair) - 1.0);
            rec.max_norm_drift = std::max(rec.max_norm_drift, drift);
        }
        pair.t = static_cast<double>(n) * config.dt;
        record_pair(pair, observables, config, rec);
    }
    rec.n_jumps = pair.n_jumps;
    rec.final_weight = pair.weight;
    rec.norm_warning = rec.max_norm_drift > config.norm_drift_budget;
    return rec;
}

}  // namespace

TrajectoryRecord propagate(const TimeDependentSpec& spec, const ComplexVec& chi, const PropagationConfig& config,
                           const std::vector<ComplexMat>& observables) {
    check_initial_state(chi, spec.dim(), observables);
    const auto steps = grid_lattice_steps(config.t_grid, config.dt);
    for (int attempt = 0;; ++attempt) {
        const std::uint64_t seed = attempt == 0 ? config.rng_seed : derive_seed(config.rng_seed, attempt);
        try {
            TrajectoryRecord rec = propagate_once(spec, chi, config, observables, steps, seed);
            rec.restarts = attempt;
            return rec;
        } catch (const Error& e) {
            const bool restartable =
                e.code() == ErrorCode::DegeneratePair || e.code() == ErrorCode::TrajectoryDeath;
            if (!restartable || attempt >= config.max_restarts) throw;
        }
    }
}

TrajectoryRecord propagate(const QmeSpec& spec, const ComplexVec& chi, const PropagationConfig& config,
                           const std::vector<ComplexMat>& observables) {
    return propagate(TimeDependentSpec::constant(spec), chi, config, observables);
}

}  // namespace qme
