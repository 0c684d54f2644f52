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

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "qme/engine.hpp"
#include "qme/models.hpp"
#include "qme/spec.hpp"

namespace qme::cli {

inline constexpr const char* kVersion = "0.1.0";

enum class ModelKind { qbm, redfield_et, lindblad_dd, custom };
enum class Method { pairjump, mcwf, oracle };

const char* to_string(ModelKind kind);
const char* to_string(Method method);

struct HistogramSpec {
    std::string observable;
    /// In units of the model period 2 pi / omega.
    double sample_time = 3.0;
    double bin_width = 0.02;
    double range_min = -0.2;
    double range_max = 1.2;
};

struct RunConfig {
    ModelKind model = ModelKind::qbm;
    QbmParams qbm;
    int initial_level = 3;
    RedfieldEtParams et;
    /// Custom model: spec file (relative paths resolve against the config file) and initial basis state.
    std::string spec_file;
    int initial_basis = 0;

    Method method = Method::pairjump;
    long n_traj = 1000;
    double dt = 0.01;
    double t_end = 0.0;
    int output_grid_points = 51;
    std::uint64_t master_seed = 0;
    int workers = 1;
    DriftRates drift_rates = DriftRates::absolute;
    bool renormalize_each_jump = true;

    std::vector<std::string> observables;
    std::string output_path = "qmejump_run";
    std::optional<HistogramSpec> histogram;
};

/// Parses the sectioned key = value format. Errors name the source, line and key.
RunConfig parse_config(std::istream& is, const std::string& source = "<config>",
                       const std::string& base_dir = ".");
RunConfig load_config(const std::string& path);

/// Every setting that influences results, in config syntax. Excludes the
/// worker count and the output path, which do not.
std::string canonical_config(const RunConfig& config);

/// Hex SHA-1 of "blob <size>\0<content>", as git computes for a file.
std::string git_blob_sha1(const std::string& content);

/// Shortest decimal text that reads back to the same double.
std::string format_double(double x);

/// Output times: output_grid_points values spread over [0, t_end], snapped to the dt lattice.
std::vector<double> output_grid(const RunConfig& config);

struct ResolvedModel {
    QmeSpec spec;
    /// Present only for Lindblad models (needed by the standard MCWF).
    std::optional<LindbladModel> lindblad;
    ComplexVec initial;
    std::vector<std::string> observable_names;
    std::vector<ComplexMat> observables;
    /// Projector on the highest basis levels, used to monitor truncation (zero for custom specs).
    ComplexMat top_level;
    /// Unit of the histogram sample time is 2 pi / omega.
    double omega = 1.0;
    std::vector<std::string> warnings;
};

ResolvedModel resolve_model(const RunConfig& config);

/// Mean and standard error per grid time and column; the last column is the trace.
struct SeriesResult {
    std::vector<double> times;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> mean;
    std::vector<std::vector<double>> std_error;

    long n_traj = 0;
    long restarts = 0;
    long norm_warnings = 0;
    long refined_steps = 0;
    long negative_weights_final = 0;
    double max_hermiticity_defect = 0.0;
    double max_top_level_population = 0.0;
    /// Oracle only.
    double step_halving_error = -1.0;
    double most_negative_eigenvalue = 0.0;
    /// Per-trajectory observable values, kept for single-trajectory inspection.
    std::vector<TrajectoryRecord> records;
};

SeriesResult run_series(const RunConfig& config, bool keep_records = false);

void write_csv(std::ostream& os, const SeriesResult& result);
void write_manifest(std::ostream& os, const RunConfig& config, const SeriesResult& result);

struct HistogramResult {
    std::vector<double> centers;
    std::vector<long> counts;
    double sample_time = 0.0;
    double dt = 0.0;
    long n = 0;
    long below_zero = 0;
    long above_one = 0;
    long underflow = 0;
    long overflow = 0;
    double min_value = 0.0;
    double max_value = 0.0;
};

HistogramResult run_histogram(const RunConfig& config);
void write_histogram_csv(std::ostream& os, const HistogramResult& result);
void write_histogram_manifest(std::ostream& os, const RunConfig& config, const HistogramResult& result);

struct CompareReport {
    /// True when neither side carries statistical error; z is then undefined.
    bool exact_match_mode = false;
    std::vector<double> times;
    std::vector<std::string> observables;
    /// z[i][j] for time i and observable j (0 where both sides agree exactly).
    std::vector<std::vector<double>> z;
    double max_abs_z = 0.0;
    double fraction_below_3 = 0.0;
    double max_abs_diff = 0.0;
    long n_points = 0;
};

/// Throws GridMismatch when times or observables differ.
CompareReport compare(const SeriesResult& candidate, const SeriesResult& reference);
void write_compare_csv(std::ostream& os, const CompareReport& report);
void write_compare_summary(std::ostream& os, const CompareReport& report);

/// Output file names derived from output_path.
std::string csv_path(const RunConfig& config);
std::string manifest_path(const RunConfig& config);

}  // namespace qme::cli
