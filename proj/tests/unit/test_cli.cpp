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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "qme/cli.hpp"
#include "qme/error.hpp"

using namespace qme;
using namespace qme::cli;

namespace {

const char* kTwoLevel = R"(# comment line
[model]
name = custom
spec_file = amplitude_damping.qme
initial_basis = 1

[method]
name = pairjump
n_traj = 200
dt = 0.01
t_end = 1
output_grid_points = 5
master_seed = 3

[observables]
names = basis:1, basis:0
)";

RunConfig parse(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in, "test.cfg", QME_CONFIG_DIR);
}

// Message of the Config error raised while parsing `text`.
std::string config_error(const std::string& text) {
    try {
        parse(text);
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Config);
        return e.what();
    }
    FAIL("expected a config error");
    return "";
}

std::string replace(std::string text, const std::string& from, const std::string& to) {
    const auto pos = text.find(from);
    REQUIRE(pos != std::string::npos);
    return text.replace(pos, from.size(), to);
}

bool contains(const std::string& haystack, const std::string& needle) {
    return haystack.find(needle) != std::string::npos;
}

std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

std::filesystem::path scratch_dir() {
    const auto dir = std::filesystem::temp_directory_path() / "qmejump_cli_test";
    std::filesystem::create_directories(dir);
    return dir;
}

int run_exe(const std::string& args) {
    const std::string cmd = std::string(QMEJUMP_EXE) + " " + args + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("config parsing") {
    const RunConfig c = parse(kTwoLevel);
    CHECK(c.model == ModelKind::custom);
    CHECK(c.initial_basis == 1);
    CHECK(c.method == Method::pairjump);
    CHECK(c.n_traj == 200);
    CHECK(c.t_end == 1.0);
    CHECK(c.master_seed == 3);
    CHECK(c.observables == std::vector<std::string>{"basis:1", "basis:0"});
    CHECK(c.workers == 1);
    CHECK(c.drift_rates == DriftRates::absolute);
    CHECK(c.renormalize_each_jump);
    CHECK_FALSE(c.histogram);
    CHECK(contains(c.spec_file, "amplitude_damping.qme"));
}

TEST_CASE("config diagnostics name the line") {
    CHECK(contains(config_error(replace(kTwoLevel, "[method]", "[methods]")), "test.cfg:7: unknown section [methods]"));
    CHECK(contains(config_error(replace(kTwoLevel, "n_traj = 200", "n_trajs = 200")),
                   "test.cfg:9: unknown key 'n_trajs' in [method]"));
    CHECK(contains(config_error(replace(kTwoLevel, "dt = 0.01", "dt = fast")), "test.cfg:10: key 'dt'"));
    CHECK(contains(config_error(replace(kTwoLevel, "dt = 0.01", "dt = nan")), "not a finite number"));
    CHECK(contains(config_error(replace(kTwoLevel, "n_traj = 200", "n_traj = 2.5")), "not an integer"));
    CHECK(contains(config_error(replace(kTwoLevel, "name = pairjump", "name = leapfrog")),
                   "not one of {pairjump, mcwf, oracle}"));
    CHECK(contains(config_error(replace(kTwoLevel, "t_end = 1\n", "")), "missing required key 't_end' in [method]"));
    CHECK(contains(config_error(replace(kTwoLevel, "dt = 0.01", "dt = 0.01\ndt = 0.02")),
                   "test.cfg:11: duplicate key 'dt'"));
    CHECK(contains(config_error(std::string("n_traj = 3\n") + kTwoLevel), "test.cfg:1: key outside of any section"));
    CHECK(contains(config_error(replace(kTwoLevel, "dt = 0.01", "dt 0.01")), "expected 'key = value'"));
    CHECK(contains(config_error(replace(kTwoLevel, "dt = 0.01", "dt = -0.01")), "must be positive"));
    CHECK(contains(config_error(replace(kTwoLevel, "n_traj = 200", "n_traj = 0")), "at least 1"));
    CHECK(contains(config_error(replace(kTwoLevel, "master_seed = 3", "master_seed = 3\nrenormalize_each_jump = yes")),
                   "expected true or false"));
}

TEST_CASE("histogram range must cover the unit interval with margin") {
    const std::string base = std::string(kTwoLevel) +
                             "\n[histogram]\nobservable = basis:1\nsample_time = 0.1\nbin_width = 0.05\n";
    CHECK_NOTHROW(parse(base));
    CHECK(contains(config_error(base + "range_min = 0\n"), "range_min"));
    CHECK(contains(config_error(base + "range_max = 1.05\n"), "range_max"));
    CHECK(contains(config_error(base + "range_min = -0.2\nrange_max = 1.23\n"), "divide the range evenly"));
}

TEST_CASE("canonical config round-trips and ignores worker count and output path") {
    RunConfig c = parse(kTwoLevel);
    const std::string text = canonical_config(c);
    const RunConfig back = parse(text);
    CHECK(canonical_config(back) == text);
    c.workers = 8;
    c.output_path = "/elsewhere/x";
    CHECK(canonical_config(c) == text);
    c.master_seed = 4;
    CHECK(canonical_config(c) != text);
}

TEST_CASE("git blob hashes") {
    CHECK(git_blob_sha1("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    CHECK(git_blob_sha1("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("property: number formatting round-trips") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> mant(-1.0, 1.0);
    std::uniform_int_distribution<int> expo(-300, 300);
    for (int i = 0; i < 2000; ++i) {
        const double x = std::ldexp(mant(rng), expo(rng));
        CHECK(std::stod(format_double(x)) == x);
    }
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(2.0) == "2");
}

TEST_CASE("output grid snaps to the lattice") {
    RunConfig c = parse(kTwoLevel);
    c.t_end = 2.0;
    c.dt = 0.001;
    c.output_grid_points = 5;
    const auto g = output_grid(c);
    REQUIRE(g.size() == 5);
    for (int i = 0; i < 5; ++i) CHECK(g[i] == doctest::Approx(0.5 * i).epsilon(1e-12));
    c.t_end = 0.03;
    c.dt = 0.01;
    c.output_grid_points = 10;
    CHECK(output_grid(c).size() == 4);
    c.t_end = 0.001;
    CHECK_THROWS_AS(output_grid(c), Error);
}

TEST_CASE("model resolution") {
    RunConfig c = parse(kTwoLevel);
    const ResolvedModel m = resolve_model(c);
    CHECK(m.spec.dim == 2);
    CHECK(m.initial(1) == Complex(1.0, 0.0));
    CHECK(m.observable_names.size() == 2);

    c.observables = {"P1"};
    CHECK_THROWS_AS(resolve_model(c), Error);
    c.observables = {"basis:2"};
    CHECK_THROWS_AS(resolve_model(c), Error);

    RunConfig q;
    q.model = ModelKind::qbm;
    q.t_end = 1.0;
    q.observables = {"P3", "P11"};
    const ResolvedModel qm = resolve_model(q);
    CHECK(qm.observables[0](3, 3) == Complex(1.0, 0.0));
    CHECK(std::abs(qm.initial(3)) == 1.0);
    q.observables = {"P12"};
    CHECK_THROWS_AS(resolve_model(q), Error);

    RunConfig et;
    et.model = ModelKind::redfield_et;
    et.t_end = 1.0;
    et.observables = {"P1", "P2"};
    const ResolvedModel em = resolve_model(et);
    CHECK((em.observables[0] + em.observables[1] - ComplexMat::Identity(em.spec.dim, em.spec.dim)).cwiseAbs().maxCoeff() ==
          0.0);
    CHECK_FALSE(em.lindblad);
    et.model = ModelKind::lindblad_dd;
    CHECK(resolve_model(et).lindblad);

    q.method = Method::mcwf;
    q.observables = {"P3"};
    try {
        run_series(q);
        FAIL("expected a config error");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::Config);
    }
}

TEST_CASE("oracle runs agree exactly with themselves") {
    RunConfig c = parse(kTwoLevel);
    c.method = Method::oracle;
    const SeriesResult a = run_series(c);
    CHECK(a.columns.back() == "trace");
    CHECK(a.mean[2][0] == doctest::Approx(std::exp(-0.5)).epsilon(1e-8));
    const CompareReport r = compare(a, a);
    CHECK(r.exact_match_mode);
    CHECK(r.max_abs_z == 0.0);
    CHECK(r.max_abs_diff == 0.0);
    CHECK(r.fraction_below_3 == 1.0);
    CHECK(r.observables == std::vector<std::string>{"basis:1", "basis:0"});

    RunConfig other = c;
    other.t_end = 2.0;
    try {
        compare(a, run_series(other));
        FAIL("expected a grid mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::GridMismatch);
    }
    other = c;
    other.observables = {"basis:0", "basis:1"};
    CHECK_THROWS_AS(compare(a, run_series(other)), Error);
}

TEST_CASE("stochastic run against the oracle") {
    RunConfig c = parse(kTwoLevel);
    c.n_traj = 2000;
    RunConfig o = c;
    o.method = Method::oracle;
    const CompareReport r = compare(run_series(c), run_series(o));
    CHECK_FALSE(r.exact_match_mode);
    CHECK(r.n_points == 10);
    CHECK(r.fraction_below_3 >= 0.75);
}

TEST_CASE("signed drift rates are detected as biased") {
    // Physical damping gives negative friction rates; compensating them with
    // signed instead of absolute values in the drift biases the estimator.
    const std::string text = R"([model]
name = qbm
gamma = 0.2
kT = 4.5
n_levels = 12
friction = damping
initial_level = 3

[method]
name = pairjump
n_traj = 400
dt = 0.01
t_end = 8
output_grid_points = 9
master_seed = 11

[observables]
names = P3
)";
    RunConfig good = parse(text);
    RunConfig bad = good;
    bad.drift_rates = DriftRates::signed_rates;
    RunConfig oracle = good;
    oracle.method = Method::oracle;
    const SeriesResult reference = run_series(oracle);
    const CompareReport g = compare(run_series(good), reference);
    const CompareReport b = compare(run_series(bad), reference);
    MESSAGE("absolute: max |z| " << g.max_abs_z << ", signed: max |z| " << b.max_abs_z);
    CHECK(g.fraction_below_3 >= 0.75);
    CHECK(b.max_abs_z > 6.0);
}

TEST_CASE("histograms") {
    RunConfig c = parse(std::string(kTwoLevel) +
                        "\n[histogram]\nobservable = basis:1\nsample_time = 0.1\nbin_width = 0.05\n");
    c.n_traj = 1;
    const HistogramResult h = run_histogram(c);
    long total = h.underflow + h.overflow;
    for (long n : h.counts) total += n;
    CHECK(total == 1);
    CHECK(h.n == 1);
    CHECK(h.sample_time == doctest::Approx(0.1 * 2.0 * std::acos(-1.0)));
    CHECK(h.centers.size() == 28);  // [-0.2, 1.2] in bins of 0.05

    c.histogram->sample_time = 1.0;  // 2 pi > t_end = 1
    try {
        run_histogram(c);
        FAIL("expected out-of-range");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::OutOfRange);
    }
}

TEST_CASE("executable: determinism and exit codes") {
    const auto dir = scratch_dir();
    const std::string cfg = std::string(QME_CONFIG_DIR) + "/two_level.cfg";
    const std::string common = cfg + " --n-traj 300 --seed 5";
    std::vector<std::string> csvs;
    std::vector<std::string> manifests;
    int index = 0;
    for (int workers : {1, 1, 4, 8}) {
        const auto out = dir / ("run" + std::to_string(index++));
        REQUIRE(run_exe("run " + common + " --workers " + std::to_string(workers) + " --output " + out.string()) ==
                0);
        csvs.push_back(slurp(out.string() + ".csv"));
        manifests.push_back(slurp(out.string() + ".manifest"));
    }
    CHECK_FALSE(csvs[0].empty());
    for (std::size_t i = 1; i < csvs.size(); ++i) {
        CHECK(csvs[i] == csvs[0]);
        CHECK(manifests[i] == manifests[0]);
    }

    const RunConfig loaded = [&] {
        RunConfig c = load_config(cfg);
        c.n_traj = 300;
        c.master_seed = 5;
        return c;
    }();
    CHECK(contains(manifests[0], "config_sha1 = " + git_blob_sha1(canonical_config(loaded))));
    CHECK(contains(manifests[0], "spec_file_sha1 = " +
                                     git_blob_sha1(slurp(std::string(QME_CONFIG_DIR) + "/amplitude_damping.qme"))));

    const auto bad = dir / "bad.cfg";
    std::ofstream(bad) << "[model]\nname = nothing\n";
    CHECK(run_exe("run " + bad.string()) == 2);
    CHECK(run_exe("run " + (dir / "missing.cfg").string()) == 2);
    CHECK(run_exe("validate-spec " + std::string(QME_CONFIG_DIR) + "/amplitude_damping.qme") == 0);
    CHECK(run_exe("validate-spec " + cfg) == 0);
    const auto broken = dir / "broken.qme";
    std::ofstream(broken) << "dim 1\nchannels 0\nA\n1,0\n";
    CHECK(run_exe("validate-spec " + broken.string()) == 1);
    CHECK(run_exe("frobnicate") != 0);
}
