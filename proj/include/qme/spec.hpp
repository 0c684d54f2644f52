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

#include <functional>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <vector>

#include "qme/linalg.hpp"

namespace qme {

inline constexpr double kDefaultValidationTol = 1e-9;

/// One dissipative channel: contributes C rho E^+ + E rho C^+ to the generator.
struct Channel {
    ComplexMat c;
    ComplexMat e;
};

/// Half-open range of basis indices [begin, end).
struct IndexRange {
    int begin = 0;
    int end = 0;
};

/// Generator d(rho)/dt = A rho + rho A^+ + sum_k (C_k rho E_k^+ + E_k rho C_k^+).
struct QmeSpec {
    int dim = 0;
    ComplexMat a;
    std::vector<Channel> channels;
    /// Sub-block on which the trace-preservation constraint is enforced.
    /// Unset means the whole space.
    std::optional<IndexRange> constraint_mask;

    int num_channels() const { return static_cast<int>(channels.size()); }
};

/// Throws InvalidSpec if any operator is not dim x dim, non-finite, or the mask is malformed.
void check_dimensions(const QmeSpec& spec);

/// A + A^+ + sum_k (E_k^+ C_k + C_k^+ E_k); vanishes iff the generator is trace preserving.
ComplexMat norm_constraint_matrix(const QmeSpec& spec);

struct ConstraintReport {
    double residual = 0.0;
    bool passed = false;
};

/// Max-norm of norm_constraint_matrix restricted to the constraint mask.
ConstraintReport validate_norm_constraint(const QmeSpec& spec, double tol = kDefaultValidationTol);

/// Lindblad equation embedded with C_k = E_k = L_k / sqrt(2) and
/// A = -(i/hbar) H - 1/2 sum_k L_k^+ L_k.
QmeSpec lindblad_embed(const ComplexMat& h, const std::vector<ComplexMat>& lindblad_ops,
                       double hbar = 1.0);

/// Time-local generator A(t), C_k(t), E_k(t) on a finite horizon. Dimension and
/// channel count are fixed by the first evaluation. The evaluator must be safe
/// to call concurrently.
class TimeDependentSpec {
public:
    using Evaluator = std::function<QmeSpec(double)>;

    TimeDependentSpec(Evaluator evaluate, double t_begin, double t_end);

    /// Static spec valid for every t >= 0.
    static TimeDependentSpec constant(QmeSpec spec);

    std::shared_ptr<const QmeSpec> at(double t) const;

    bool is_static() const { return static_ != nullptr; }
    int dim() const { return dim_; }
    int num_channels() const { return num_channels_; }
    double t_begin() const { return t_begin_; }
    double t_end() const { return t_end_; }

private:
    TimeDependentSpec() = default;

    Evaluator evaluate_;
    std::shared_ptr<const QmeSpec> static_;
    double t_begin_ = 0.0;
    double t_end_ = std::numeric_limits<double>::infinity();
    int dim_ = 0;
    int num_channels_ = 0;
};

/// Frozen spec at time t; throws OutOfRange outside the horizon.
std::shared_ptr<const QmeSpec> spec_at(const TimeDependentSpec& tds, double t);

/// Text form: "dim N", "channels M", optional "mask b e", then blocks headed
/// "A", "C k", "E k" (k = 1..M), each with N rows of N "re,im" tokens.
void write_spec(std::ostream& os, const QmeSpec& spec);
QmeSpec read_spec(std::istream& is);
QmeSpec read_spec_file(const std::string& path);

}  // namespace qme
