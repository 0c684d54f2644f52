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
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <ostream>
#include <sstream>

#include "qme/cli.hpp"
#include "qme/ensemble.hpp"
#include "qme/error.hpp"
#include "qme/oracle.hpp"

namespace qme::cli {

namespace {

bool parse_index(const std::string& text, int& out) {
    const char* end = text.data() + text.size();
    const auto res = std::from_chars(text.data(), end, out);
    return res.ec == std::errc() && res.ptr == end && !text.empty();
}

ComplexMat basis_projector(int dim, int i) {
    ComplexMat p = ComplexMat::Zero(dim, dim);
    p(i, i) = 1.0;
    return p;
}

// Recognized names: P<n> (Fock level, qbm), P1/P2 (electronic state, electron
// transfer models) and basis:<i> (any model).
ComplexMat make_observable(const RunConfig& config, const ResolvedModel& model, const std::string& name,
                           const EtSystem* et) {
    const int dim = model.spec.dim;
    int index = 0;
    if (name.rfind("basis:", 0) == 0 && parse_index(name.substr(6), index)) {
        if (index < 0 || index >= dim) {
            throw Error(ErrorCode::Config, "observable '" + name + "': basis index outside [0, " +
                                               std::to_string(dim) + ")");
        }
        return basis_projector(dim, index);
    }
    if (name.size() > 1 && name[0] == 'P' && parse_index(name.substr(1), index)) {
        if (config.model == ModelKind::qbm) {
            if (index < 0 || index >= dim) {
                throw Error(ErrorCode::Config, "observable '" + name + "': Fock level outside [0, " +
                                                   std::to_string(dim) + ")");
            }
            return fock_projector(dim, index);
        }
        if (et != nullptr && (index == 1 || index == 2)) {
            return index == 1 ? et->donor : et->acceptor;
        }
    }
    std::string expected = "basis:<i>";
    if (config.model == ModelKind::qbm) expected = "P<n> or basis:<i>";
    if (et != nullptr) expected = "P1, P2 or basis:<i>";
    throw Error(ErrorCode::Config, "unknown observable '" + name + "' for model " + to_string(config.model) +
                                       " (expected " + expected + ")");
}

ComplexMat top_levels_et(const RedfieldEtParams& p) {
    const int n = p.n_vib;
    ComplexMat top = ComplexMat::Zero(2 * n, 2 * n);
    top(n - 1, n - 1) = 1.0;
    top(2 * n - 1, 2 * n - 1) = 1.0;
    return top;
}

}  // namespace

ResolvedModel resolve_model(const RunConfig& config) {
    ResolvedModel m;
    std::optional<EtSystem> et;
    switch (config.model) {
        case ModelKind::qbm: {
            m.warnings = check_qbm_params(config.qbm);
            m.spec = build_qbm(config.qbm);
            if (config.initial_level < 0 || config.initial_level >= config.qbm.n_levels) {
                throw Error(ErrorCode::Config, "initial_level outside the Fock basis");
            }
            m.initial = fock_state(config.qbm.n_levels, config.initial_level);
            m.top_level = fock_projector(config.qbm.n_levels, config.qbm.n_levels - 1);
            m.omega = config.qbm.omega;
            break;
        }
        case ModelKind::redfield_et:
        case ModelKind::lindblad_dd: {
            check_et_params(config.et);
            et = build_et_system(config.et);
            if (config.model == ModelKind::redfield_et) {
                m.spec = build_redfield_et(config.et);
            } else {
                m.lindblad = build_lindblad_dd(config.et);
                m.spec = lindblad_embed(m.lindblad->h, m.lindblad->ops);
            }
            m.initial = donor_wavepacket(config.et);
            m.top_level = top_levels_et(config.et);
            m.omega = config.et.omega;
            break;
        }
        case ModelKind::custom: {
            m.spec = read_spec_file(config.spec_file);
            if (config.initial_basis < 0 || config.initial_basis >= m.spec.dim) {
                throw Error(ErrorCode::Config, "initial_basis outside the spec dimension");
            }
            m.initial = ComplexVec::Zero(m.spec.dim);
            m.initial(config.initial_basis) = 1.0;
            // No truncated ladder to monitor.
            m.top_level = ComplexMat::Zero(m.spec.dim, m.spec.dim);
            const ConstraintReport report = validate_norm_constraint(m.spec);
            if (!report.passed) {
                m.warnings.push_back("spec violates the trace-preservation constraint (residual " +
                                     format_double(report.residual) + ")");
            }
            break;
        }
    }
    if (config.method == Method::mcwf && !m.lindblad) {
        throw Error(ErrorCode::Config, std::string("method mcwf needs a Lindblad model (lindblad_dd), not ") +
                                           to_string(config.model));
    }
    for (const auto& name : config.observables) {
        m.observable_names.push_back(name);
        m.observables.push_back(make_observable(config, m, name, et ? &*et : nullptr));
    }
    return m;
}

SeriesResult run_series(const RunConfig& config, bool keep_records) {
    const ResolvedModel model = resolve_model(config);
    const std::vector<double> grid = output_grid(config);
    std::vector<ComplexMat> observables = model.observables;
    observables.push_back(model.top_level);
    const std::size_t n_obs = model.observables.size();

    SeriesResult r;
    r.times = grid;
    r.columns = model.observable_names;
    r.columns.push_back("trace");
    r.mean.assign(grid.size(), std::vector<double>(n_obs + 1, 0.0));
    r.std_error.assign(grid.size(), std::vector<double>(n_obs + 1, 0.0));

    if (config.method == Method::oracle) {
        OracleOptions options;
        options.dt = config.dt;
        const OracleResult o = integrate(model.spec, model.initial * model.initial.adjoint(), grid, options);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            for (std::size_t j = 0; j < n_obs; ++j) {
                r.mean[i][j] = (observables[j] * o.rhos[i]).trace().real();
            }
            r.mean[i][n_obs] = o.rhos[i].trace().real();
            r.max_top_level_population =
                std::max(r.max_top_level_population, (model.top_level * o.rhos[i]).trace().real());
        }
        r.step_halving_error = o.step_halving_error;
        r.most_negative_eigenvalue = positivity_report(o.rhos).most_negative;
        return r;
    }

    PropagationConfig prop;
    prop.dt = config.dt;
    prop.t_grid = grid;
    prop.renormalize_each_jump = config.renormalize_each_jump;
    prop.drift_rates = config.drift_rates;
    EnsembleOptions ens;
    ens.n_traj = config.n_traj;
    ens.master_seed = config.master_seed;
    ens.workers = config.workers;
    ens.keep_records = keep_records;

    const EnsembleResult e =
        config.method == Method::mcwf
            ? run_mcwf_ensemble(model.lindblad->h, model.lindblad->ops, model.initial, prop, observables, ens)
            : run_pair_ensemble(TimeDependentSpec::constant(model.spec), model.initial, prop, observables, ens);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        for (std::size_t j = 0; j < n_obs; ++j) {
            const auto est = e.acc.observable(i, j);
            r.mean[i][j] = est.mean;
            r.std_error[i][j] = est.std_error;
        }
        const auto tr = e.acc.trace(i);
        r.mean[i][n_obs] = tr.mean;
        r.std_error[i][n_obs] = tr.std_error;
        r.max_top_level_population = std::max(r.max_top_level_population, e.acc.observable(i, n_obs).mean);
    }
    r.n_traj = e.acc.n_traj();
    r.restarts = e.restarts;
    r.norm_warnings = e.norm_warnings;
    r.refined_steps = e.refined_steps;
    r.negative_weights_final = e.acc.negative_weight_count(grid.size() - 1);
    r.max_hermiticity_defect = e.max_hermiticity_defect;
    r.records = e.records;
    for (auto& rec : r.records) {
        for (auto& row : rec.values) row.pop_back();
    }
    return r;
}

void write_csv(std::ostream& os, const SeriesResult& result) {
    os << "time";
    for (const auto& c : result.columns) os << ',' << c << "_mean," << c << "_stderr";
    os << '\n';
    for (std::size_t i = 0; i < result.times.size(); ++i) {
        os << format_double(result.times[i]);
        for (std::size_t j = 0; j < result.columns.size(); ++j) {
            os << ',' << format_double(result.mean[i][j]) << ',' << format_double(result.std_error[i][j]);
        }
        os << '\n';
    }
}

namespace {

void write_header(std::ostream& os, const RunConfig& config) {
    const std::string canonical = canonical_config(config);
    os << "# qmejump " << kVersion << " manifest; the sections below reproduce the run\n";
    os << canonical;
    os << "\n[result]\n";
    os << "config_sha1 = " << git_blob_sha1(canonical) << '\n';
    if (config.model == ModelKind::custom) {
        std::ifstream in(config.spec_file, std::ios::binary);
        std::ostringstream content;
        content << in.rdbuf();
        os << "spec_file_sha1 = " << git_blob_sha1(content.str()) << '\n';
    }
}

}  // namespace

void write_manifest(std::ostream& os, const RunConfig& config, const SeriesResult& result) {
    write_header(os, config);
    os << "time_points = " << result.times.size() << '\n';
    if (config.method == Method::oracle) {
        os << "step_halving_error = " << format_double(result.step_halving_error) << '\n';
        os << "most_negative_eigenvalue = " << format_double(result.most_negative_eigenvalue) << '\n';
    } else {
        os << "n_traj = " << result.n_traj << '\n';
        os << "restarts = " << result.restarts << '\n';
        os << "norm_warnings = " << result.norm_warnings << '\n';
        os << "refined_steps = " << result.refined_steps << '\n';
        os << "negative_weights_final = " << result.negative_weights_final << '\n';
        os << "max_hermiticity_defect = " << format_double(result.max_hermiticity_defect) << '\n';
    }
    os << "max_top_level_population = " << format_double(result.max_top_level_population) << '\n';
}

HistogramResult run_histogram(const RunConfig& config) {
    if (!config.histogram) {
        throw Error(ErrorCode::Config, "histogram needs a [histogram] section");
    }
    if (config.method == Method::oracle) {
        throw Error(ErrorCode::Config, "histogram needs a stochastic method (pairjump or mcwf)");
    }
    const HistogramSpec& h = *config.histogram;
    const ResolvedModel model = resolve_model(config);
    const auto it = std::find(model.observable_names.begin(), model.observable_names.end(), h.observable);
    if (it == model.observable_names.end()) {
        throw Error(ErrorCode::Config, "histogram observable '" + h.observable + "' is not listed in [observables]");
    }
    const std::size_t index = static_cast<std::size_t>(it - model.observable_names.begin());
    const double t_sample = h.sample_time * 2.0 * std::numbers::pi / model.omega;
    if (t_sample > config.t_end * (1.0 + 1e-12)) {
        throw Error(ErrorCode::OutOfRange, "histogram sample time " + format_double(t_sample) + " is beyond t_end = " +
                                               format_double(config.t_end));
    }
    HistogramResult r;
    r.sample_time = t_sample;
    // Shrink dt so the sample time falls on the lattice.
    r.dt = t_sample / std::ceil(t_sample / config.dt - 1e-9);

    PropagationConfig prop;
    prop.dt = r.dt;
    prop.t_grid = {static_cast<double>(std::lround(t_sample / r.dt)) * r.dt};
    prop.renormalize_each_jump = config.renormalize_each_jump;
    prop.drift_rates = config.drift_rates;
    EnsembleOptions ens;
    ens.n_traj = config.n_traj;
    ens.master_seed = config.master_seed;
    ens.workers = config.workers;
    const std::vector<ComplexMat> obs = {model.observables[index]};
    const EnsembleResult e =
        config.method == Method::mcwf
            ? run_mcwf_ensemble(model.lindblad->h, model.lindblad->ops, model.initial, prop, obs, ens)
            : run_pair_ensemble(TimeDependentSpec::constant(model.spec), model.initial, prop, obs, ens);

    const long n_bins = std::lround((h.range_max - h.range_min) / h.bin_width);
    r.counts.assign(static_cast<std::size_t>(n_bins), 0);
    for (long b = 0; b < n_bins; ++b) r.centers.push_back(h.range_min + (static_cast<double>(b) + 0.5) * h.bin_width);
    r.min_value = std::numeric_limits<double>::infinity();
    r.max_value = -std::numeric_limits<double>::infinity();
    for (const auto& rec : e.records) {
        const double x = rec.values.at(0).at(0);
        ++r.n;
        r.min_value = std::min(r.min_value, x);
        r.max_value = std::max(r.max_value, x);
        if (x < 0.0) ++r.below_zero;
        if (x > 1.0) ++r.above_one;
        const double pos = (x - h.range_min) / h.bin_width;
        if (pos < 0.0) {
            ++r.underflow;
        } else if (pos >= static_cast<double>(n_bins)) {
            ++r.overflow;
        } else {
            ++r.counts[static_cast<std::size_t>(pos)];
        }
    }
    return r;
}

void write_histogram_csv(std::ostream& os, const HistogramResult& result) {
    os << "bin_center,count\n";
    for (std::size_t b = 0; b < result.counts.size(); ++b) {
        os << format_double(result.centers[b]) << ',' << result.counts[b] << '\n';
    }
}

void write_histogram_manifest(std::ostream& os, const RunConfig& config, const HistogramResult& result) {
    write_header(os, config);
    os << "sample_time_absolute = " << format_double(result.sample_time) << '\n';
    os << "dt_used = " << format_double(result.dt) << '\n';
    os << "n_samples = " << result.n << '\n';
    os << "count_below_zero = " << result.below_zero << '\n';
    os << "count_above_one = " << result.above_one << '\n';
    os << "underflow = " << result.underflow << '\n';
    os << "overflow = " << result.overflow << '\n';
    os << "min_value = " << format_double(result.min_value) << '\n';
    os << "max_value = " << format_double(result.max_value) << '\n';
}

CompareReport compare(const SeriesResult& candidate, const SeriesResult& reference) {
    if (candidate.times.size() != reference.times.size()) {
        throw Error(ErrorCode::GridMismatch, "output grids have different lengths (" +
                                                 std::to_string(candidate.times.size()) + " vs " +
                                                 std::to_string(reference.times.size()) + ")");
    }
    for (std::size_t i = 0; i < candidate.times.size(); ++i) {
        const double a = candidate.times[i];
        const double b = reference.times[i];
        if (std::abs(a - b) > 1e-12 * std::max(1.0, std::abs(b))) {
            throw Error(ErrorCode::GridMismatch, "grid time " + format_double(a) + " does not match " + format_double(b));
        }
    }
    if (candidate.columns != reference.columns) {
        throw Error(ErrorCode::GridMismatch, "the two runs record different observables");
    }
    CompareReport rep;
    rep.times = candidate.times;
    // The trace column is a diagnostic, not an observable.
    const std::size_t n_obs = candidate.columns.size() - 1;
    rep.observables.assign(candidate.columns.begin(), candidate.columns.begin() + static_cast<long>(n_obs));
    bool any_error = false;
    for (std::size_t i = 0; i < rep.times.size(); ++i) {
        for (std::size_t j = 0; j < n_obs; ++j) {
            any_error = any_error || candidate.std_error[i][j] > 0.0 || reference.std_error[i][j] > 0.0;
        }
    }
    rep.exact_match_mode = !any_error;
    long below = 0;
    for (std::size_t i = 0; i < rep.times.size(); ++i) {
        std::vector<double> row;
        for (std::size_t j = 0; j < n_obs; ++j) {
            const double diff = std::abs(candidate.mean[i][j] - reference.mean[i][j]);
            rep.max_abs_diff = std::max(rep.max_abs_diff, diff);
            const double se = std::hypot(candidate.std_error[i][j], reference.std_error[i][j]);
            double z = 0.0;
            if (se > 0.0) {
                z = diff / se;
            } else if (diff > 0.0) {
                z = std::numeric_limits<double>::infinity();
            }
            row.push_back(z);
            rep.max_abs_z = std::max(rep.max_abs_z, z);
            if (z < 3.0) ++below;
            ++rep.n_points;
        }
        rep.z.push_back(std::move(row));
    }
    rep.fraction_below_3 = rep.n_points > 0 ? static_cast<double>(below) / static_cast<double>(rep.n_points) : 1.0;
    return rep;
}

void write_compare_csv(std::ostream& os, const CompareReport& report) {
    os << "time";
    for (const auto& o : report.observables) os << ',' << o << "_z";
    os << '\n';
    for (std::size_t i = 0; i < report.times.size(); ++i) {
        os << format_double(report.times[i]);
        for (double z : report.z[i]) os << ',' << format_double(z);
        os << '\n';
    }
}

void write_compare_summary(std::ostream& os, const CompareReport& report) {
    os << "mode = " << (report.exact_match_mode ? "exact" : "statistical") << '\n';
    os << "n_points = " << report.n_points << '\n';
    os << "max_abs_diff = " << format_double(report.max_abs_diff) << '\n';
    if (!report.exact_match_mode) {
        os << "max_abs_z = " << format_double(report.max_abs_z) << '\n';
        os << "fraction_abs_z_below_3 = " << format_double(report.fraction_below_3) << '\n';
    }
}

}  // namespace qme::cli
