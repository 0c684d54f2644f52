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

#include "qme/spec.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "qme/error.hpp"

namespace qme {

void check_dimensions(const QmeSpec& spec) {
    const int n = spec.dim;
    if (n <= 0) {
        throw Error(ErrorCode::InvalidSpec, "dimension must be positive");
    }
    auto check = [n](const ComplexMat& m, const std::string& name) {
        if (m.rows() != n || m.cols() != n) {
            throw Error(ErrorCode::InvalidSpec,
                        name + " is " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                            ", expected " + std::to_string(n) + "x" + std::to_string(n));
        }
        if (!all_finite(m)) {
            throw Error(ErrorCode::InvalidSpec, name + " has non-finite entries");
        }
    };
    check(spec.a, "A");
    for (int k = 0; k < spec.num_channels(); ++k) {
        check(spec.channels[k].c, "C" + std::to_string(k + 1));
        check(spec.channels[k].e, "E" + std::to_string(k + 1));
    }
    if (spec.constraint_mask) {
        const auto [b, e] = *spec.constraint_mask;
        if (b < 0 || e > n || b >= e) {
            throw Error(ErrorCode::InvalidSpec, "constraint mask [" + std::to_string(b) + ", " +
                                                    std::to_string(e) + ") outside the basis");
        }
    }
}

ComplexMat norm_constraint_matrix(const QmeSpec& spec) {
    check_dimensions(spec);
    ComplexMat r = spec.a + spec.a.adjoint();
    for (const auto& ch : spec.channels) {
        r.noalias() += ch.e.adjoint() * ch.c;
        r.noalias() += ch.c.adjoint() * ch.e;
    }
    return r;
}

ConstraintReport validate_norm_constraint(const QmeSpec& spec, double tol) {
    const ComplexMat r = norm_constraint_matrix(spec);
    const IndexRange mask = spec.constraint_mask.value_or(IndexRange{0, spec.dim});
    const int len = mask.end - mask.begin;
    const double residual = max_abs(r.block(mask.begin, mask.begin, len, len));
    return {residual, residual < tol};
}

QmeSpec lindblad_embed(const ComplexMat& h, const std::vector<ComplexMat>& lindblad_ops, double hbar) {
    if (!(hbar > 0.0)) {
        throw Error(ErrorCode::InvalidParameter, "hbar must be positive");
    }
    if (h.rows() != h.cols()) {
        throw Error(ErrorCode::InvalidDimension, "Hamiltonian is not square");
    }
    const double residual = hermiticity_residual(h);
    if (!(residual < kDefaultValidationTol)) {
        throw Error(ErrorCode::HermiticityViolation, "Hamiltonian is not Hermitian", residual);
    }
    QmeSpec spec;
    spec.dim = static_cast<int>(h.rows());
    spec.a = (-kI / hbar) * h;
    const double inv_sqrt2 = 1.0 / std::sqrt(2.0);
    for (const auto& l : lindblad_ops) {
        if (l.rows() != h.rows() || l.cols() != h.cols()) {
            throw Error(ErrorCode::InvalidDimension, "Lindblad operator dimension mismatch");
        }
        spec.a.noalias() -= 0.5 * (l.adjoint() * l);
        spec.channels.push_back({inv_sqrt2 * l, inv_sqrt2 * l});
    }
    return spec;
}

TimeDependentSpec::TimeDependentSpec(Evaluator evaluate, double t_begin, double t_end)
    : evaluate_(std::move(evaluate)), t_begin_(t_begin), t_end_(t_end) {
    if (!evaluate_) {
        throw Error(ErrorCode::InvalidInput, "time-dependent spec needs an evaluator");
    }
    if (!(t_end >= t_begin)) {
        throw Error(ErrorCode::InvalidInput, "horizon end precedes its start");
    }
    const QmeSpec first = evaluate_(t_begin_);
    check_dimensions(first);
    dim_ = first.dim;
    num_channels_ = first.num_channels();
}

TimeDependentSpec TimeDependentSpec::constant(QmeSpec spec) {
    check_dimensions(spec);
    TimeDependentSpec tds;
    tds.dim_ = spec.dim;
    tds.num_channels_ = spec.num_channels();
    tds.static_ = std::make_shared<const QmeSpec>(std::move(spec));
    return tds;
}

std::shared_ptr<const QmeSpec> TimeDependentSpec::at(double t) const {
    // Lattice times are accumulated as n*dt; forgive rounding at the horizon ends.
    const double scale = std::isfinite(t_end_) ? std::abs(t_end_) : std::abs(t_begin_);
    const double slack = 1e-12 * std::max(1.0, scale);
    if (!(t >= t_begin_ - slack) || !(t <= t_end_ + slack)) {
        std::ostringstream msg;
        msg << "t = " << t << " outside horizon [" << t_begin_ << ", " << t_end_ << "]";
        throw Error(ErrorCode::OutOfRange, msg.str(), t);
    }
    if (static_) {
        return static_;
    }
    QmeSpec s = evaluate_(t);
    check_dimensions(s);
    if (s.dim != dim_ || s.num_channels() != num_channels_) {
        throw Error(ErrorCode::InvalidSpec, "time-dependent spec changed dimension or channel count");
    }
    return std::make_shared<const QmeSpec>(std::move(s));
}

std::shared_ptr<const QmeSpec> spec_at(const TimeDependentSpec& tds, double t) {
    return tds.at(t);
}

namespace {

void write_matrix(std::ostream& os, const ComplexMat& m) {
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) {
            if (j > 0) os << ' ';
            os << m(i, j).real() << ',' << m(i, j).imag();
        }
        os << '\n';
    }
}

class LineReader {
public:
    explicit LineReader(std::istream& is) : is_(is) {}

    // Next non-empty, non-comment line; false at end of input.
    bool next(std::string& line) {
        while (std::getline(is_, line)) {
            ++line_no_;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            if (line.find_first_not_of(" \t\r") != std::string::npos) return true;
        }
        return false;
    }

    std::string expect(const std::string& what) {
        std::string line;
        if (!next(line)) fail("unexpected end of input, expected " + what);
        return line;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error(ErrorCode::Config, "spec line " + std::to_string(line_no_) + ": " + msg);
    }

private:
    std::istream& is_;
    int line_no_ = 0;
};

ComplexMat read_matrix(LineReader& reader, int n, const std::string& name) {
    ComplexMat m(n, n);
    for (int i = 0; i < n; ++i) {
        std::istringstream row(reader.expect("row " + std::to_string(i) + " of " + name));
        for (int j = 0; j < n; ++j) {
            std::string token;
            if (!(row >> token)) reader.fail(name + " row " + std::to_string(i) + " has fewer than " +
                                             std::to_string(n) + " entries");
            const auto comma = token.find(',');
            if (comma == std::string::npos) reader.fail("entry '" + token + "' is not of the form re,im");
            try {
                std::size_t used_re = 0;
                std::size_t used_im = 0;
                const std::string re_str = token.substr(0, comma);
                const std::string im_str = token.substr(comma + 1);
                const double re = std::stod(re_str, &used_re);
                const double im = std::stod(im_str, &used_im);
                if (used_re != re_str.size() || used_im != im_str.size()) throw std::invalid_argument(token);
                m(i, j) = Complex(re, im);
            } catch (const std::logic_error&) {
                reader.fail("cannot parse entry '" + token + "'");
            }
        }
        std::string extra;
        if (row >> extra) reader.fail(name + " row " + std::to_string(i) + " has more than " +
                                      std::to_string(n) + " entries");
    }
    return m;
}

}  // namespace

void write_spec(std::ostream& os, const QmeSpec& spec) {
    check_dimensions(spec);
    const auto old_precision = os.precision(17);
    os << "# generalized time-local QME\n";
    os << "dim " << spec.dim << '\n';
    os << "channels " << spec.num_channels() << '\n';
    if (spec.constraint_mask) {
        os << "mask " << spec.constraint_mask->begin << ' ' << spec.constraint_mask->end << '\n';
    }
    os << "A\n";
    write_matrix(os, spec.a);
    for (int k = 0; k < spec.num_channels(); ++k) {
        os << "C " << k + 1 << '\n';
        write_matrix(os, spec.channels[k].c);
        os << "E " << k + 1 << '\n';
        write_matrix(os, spec.channels[k].e);
    }
    os.precision(old_precision);
}

QmeSpec read_spec(std::istream& is) {
    LineReader reader(is);
    QmeSpec spec;
    auto keyword_int = [&reader](const std::string& line, const std::string& key) {
        std::istringstream ss(line);
        std::string word;
        int value = 0;
        std::string extra;
        if (!(ss >> word) || word != key || !(ss >> value) || (ss >> extra)) {
            reader.fail("expected '" + key + " <integer>', got '" + line + "'");
        }
        return value;
    };
    spec.dim = keyword_int(reader.expect("dim"), "dim");
    if (spec.dim <= 0) reader.fail("dim must be positive");
    const int m = keyword_int(reader.expect("channels"), "channels");
    if (m < 0) reader.fail("channels must be non-negative");

    std::string line = reader.expect("mask or A");
    {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "mask") {
            IndexRange r;
            std::string extra;
            if (!(ss >> r.begin >> r.end) || (ss >> extra)) reader.fail("expected 'mask <begin> <end>'");
            spec.constraint_mask = r;
            line = reader.expect("A");
        }
    }
    {
        std::istringstream ss(line);
        std::string word;
        std::string extra;
        if (!(ss >> word) || word != "A" || (ss >> extra)) reader.fail("expected 'A', got '" + line + "'");
    }
    spec.a = read_matrix(reader, spec.dim, "A");
    for (int k = 1; k <= m; ++k) {
        Channel ch;
        for (const char* which : {"C", "E"}) {
            const std::string header = reader.expect(std::string(which) + " " + std::to_string(k));
            std::istringstream ss(header);
            std::string word;
            int index = 0;
            if (!(ss >> word >> index) || word != which || index != k) {
                reader.fail("expected '" + std::string(which) + " " + std::to_string(k) + "', got '" +
                            header + "'");
            }
            ComplexMat mat = read_matrix(reader, spec.dim, std::string(which) + std::to_string(k));
            (word == "C" ? ch.c : ch.e) = std::move(mat);
        }
        spec.channels.push_back(std::move(ch));
    }
    std::string trailing;
    if (reader.next(trailing)) reader.fail("unexpected trailing content '" + trailing + "'");
    check_dimensions(spec);
    return spec;
}

QmeSpec read_spec_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::Config, "cannot open spec file '" + path + "'");
    }
    return read_spec(in);
}

}  // namespace qme
