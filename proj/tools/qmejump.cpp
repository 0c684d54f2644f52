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

#include <cstdint>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "qme/cli.hpp"
#include "qme/error.hpp"
#include "qme/spec.hpp"

namespace {

using namespace qme;
using namespace qme::cli;

struct Overrides {
    std::optional<std::uint64_t> seed;
    std::optional<long> n_traj;
    std::optional<int> workers;
    std::optional<std::string> output;
};

RunConfig load(const std::string& path, const Overrides& o) {
    RunConfig c = load_config(path);
    if (o.seed) c.master_seed = *o.seed;
    if (o.n_traj) {
        if (*o.n_traj < 1) throw Error(ErrorCode::Config, "--n-traj must be at least 1");
        c.n_traj = *o.n_traj;
    }
    if (o.workers) {
        if (*o.workers < 1) throw Error(ErrorCode::Config, "--workers must be at least 1");
        c.workers = *o.workers;
    }
    if (o.output) c.output_path = *o.output;
    return c;
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error(ErrorCode::InvalidInput, "cannot write '" + path + "'");
    out << content;
    if (!out) throw Error(ErrorCode::InvalidInput, "write to '" + path + "' failed");
}

void print_warnings(const RunConfig& c) {
    for (const auto& w : resolve_model(c).warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_run(const std::string& path, const Overrides& o) {
    const RunConfig c = load(path, o);
    print_warnings(c);
    const SeriesResult r = run_series(c);
    std::ostringstream csv, manifest;
    write_csv(csv, r);
    write_manifest(manifest, c, r);
    write_file(csv_path(c), csv.str());
    write_file(manifest_path(c), manifest.str());
    if (r.max_top_level_population > 1e-3) {
        std::cerr << "warning: top basis level reached population " << format_double(r.max_top_level_population)
                  << "; enlarge the basis\n";
    }
    if (r.norm_warnings > 0) {
        std::cerr << "note: " << r.norm_warnings << " of " << r.n_traj
                  << " trajectories exceeded the pair-trace drift budget\n";
    }
    std::cout << "wrote " << csv_path(c) << " and " << manifest_path(c) << '\n';
    return 0;
}

int cmd_histogram(const std::string& path, const Overrides& o) {
    const RunConfig c = load(path, o);
    print_warnings(c);
    const HistogramResult h = run_histogram(c);
    std::ostringstream csv, manifest;
    write_histogram_csv(csv, h);
    write_histogram_manifest(manifest, c, h);
    write_file(c.output_path + ".hist.csv", csv.str());
    write_file(c.output_path + ".hist.manifest", manifest.str());
    std::cout << "samples " << h.n << ", below 0: " << h.below_zero << ", above 1: " << h.above_one << '\n';
    std::cout << "wrote " << c.output_path << ".hist.csv and " << c.output_path << ".hist.manifest\n";
    return 0;
}

int cmd_compare(const std::string& candidate_path, const std::string& reference_path, const Overrides& o) {
    const RunConfig candidate = load(candidate_path, o);
    Overrides ref_overrides = o;
    ref_overrides.output.reset();
    const RunConfig reference = load(reference_path, ref_overrides);
    const SeriesResult a = run_series(candidate);
    const SeriesResult b = run_series(reference);
    const CompareReport rep = compare(a, b);
    std::ostringstream csv, summary;
    write_compare_csv(csv, rep);
    write_compare_summary(summary, rep);
    write_file(candidate.output_path + ".compare.csv", csv.str());
    write_file(candidate.output_path + ".compare.txt", summary.str());
    std::cout << summary.str();
    return 0;
}

int cmd_validate(const std::string& path) {
    // Accept either a run config or a bare spec file.
    QmeSpec spec;
    {
        std::ifstream in(path);
        if (!in) throw Error(ErrorCode::Config, "cannot open '" + path + "'");
        std::string first;
        while (std::getline(in, first)) {
            const auto hash = first.find('#');
            if (hash != std::string::npos) first.erase(hash);
            if (first.find_first_not_of(" \t\r") != std::string::npos) break;
        }
        std::istringstream word(first);
        std::string token;
        word >> token;
        if (token == "dim") {
            spec = read_spec_file(path);
        } else {
            const RunConfig c = load_config(path);
            print_warnings(c);
            spec = resolve_model(c).spec;
        }
    }
    const ConstraintReport rep = validate_norm_constraint(spec);
    std::cout << "dim = " << spec.dim << '\n';
    std::cout << "channels = " << spec.num_channels() << '\n';
    if (spec.constraint_mask) {
        std::cout << "mask = " << spec.constraint_mask->begin << ' ' << spec.constraint_mask->end << '\n';
    }
    std::cout << "constraint_residual = " << format_double(rep.residual) << '\n';
    std::cout << "valid = " << (rep.passed ? "true" : "false") << '\n';
    return rep.passed ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Stochastic unraveling of time-local quantum master equations"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(kVersion));

    Overrides o;
    auto add_overrides = [&o](CLI::App* sub) {
        sub->add_option_function<std::uint64_t>("--seed", [&o](const std::uint64_t& v) { o.seed = v; },
                                                "Override the master seed");
        sub->add_option_function<long>("--n-traj", [&o](const long& v) { o.n_traj = v; },
                                       "Override the number of trajectories");
        sub->add_option_function<int>("--workers", [&o](const int& v) { o.workers = v; },
                                      "Override the worker count (results do not depend on it)");
        sub->add_option_function<std::string>("--output", [&o](const std::string& v) { o.output = v; },
                                              "Override the output path prefix");
    };

    std::string config;
    std::string reference;
    auto* run = app.add_subcommand("run", "Run a simulation and write CSV plus manifest");
    run->add_option("config", config, "Config file")->required();
    add_overrides(run);
    auto* hist = app.add_subcommand("histogram", "Histogram per-trajectory values at one time");
    hist->add_option("config", config, "Config file")->required();
    add_overrides(hist);
    auto* cmp = app.add_subcommand("compare", "Compare a run against a reference run");
    cmp->add_option("config", config, "Candidate config file")->required();
    cmp->add_option("reference", reference, "Reference config file")->required();
    add_overrides(cmp);
    auto* val = app.add_subcommand("validate-spec", "Check the trace-preservation constraint");
    val->add_option("config", config, "Config or spec file")->required();

    CLI11_PARSE(app, argc, argv);
    try {
        if (run->parsed()) return cmd_run(config, o);
        if (hist->parsed()) return cmd_histogram(config, o);
        if (cmp->parsed()) return cmd_compare(config, reference, o);
        if (val->parsed()) return cmd_validate(config);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return e.code() == ErrorCode::Config ? 2 : 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
