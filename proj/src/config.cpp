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

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <sstream>

#include <openssl/evp.h>

#include "qme/cli.hpp"
#include "qme/error.hpp"

namespace qme::cli {

const char* to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::qbm: return "qbm";
        case ModelKind::redfield_et: return "redfield_et";
        case ModelKind::lindblad_dd: return "lindblad_dd";
        case ModelKind::custom: return "custom";
    }
    return "?";
}

const char* to_string(Method method) {
    switch (method) {
        case Method::pairjump: return "pairjump";
        case Method::mcwf: return "mcwf";
        case Method::oracle: return "oracle";
    }
    return "?";
}

std::string format_double(double x) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), x);
    return std::string(buf, res.ptr);
}

std::string git_blob_sha1(const std::string& content) {
    const std::string header = "blob " + std::to_string(content.size()) + '\0';
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_MD_CTX* ctx = EVP_MD_CTX_new();
    if (ctx == nullptr || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 ||
        EVP_DigestUpdate(ctx, header.data(), header.size()) != 1 ||
        EVP_DigestUpdate(ctx, content.data(), content.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
        EVP_MD_CTX_free(ctx);
        throw Error(ErrorCode::InvalidInput, "SHA-1 computation failed");
    }
    EVP_MD_CTX_free(ctx);
    std::ostringstream hex;
    hex << std::hex << std::setfill('0');
    for (unsigned int i = 0; i < len; ++i) hex << std::setw(2) << static_cast<int>(digest[i]);
    return hex.str();
}

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

struct Entry {
    std::string value;
    int line = 0;
    bool used = false;
};

// Raw sections with line numbers; typed lookups mark entries as consumed so
// that leftovers can be reported as unknown keys.
class RawConfig {
public:
    RawConfig(std::istream& is, std::string source) : source_(std::move(source)) {
        std::string line;
        int line_no = 0;
        std::string section;
        while (std::getline(is, line)) {
            ++line_no;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            line = trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']') fail(line_no, "unterminated section header '" + line + "'");
                section = trim(line.substr(1, line.size() - 2));
                static const char* known[] = {"model", "method", "observables", "output", "histogram", "result"};
                if (std::find(std::begin(known), std::end(known), section) == std::end(known)) {
                    fail(line_no, "unknown section [" + section + "]");
                }
                if (sections_.count(section) != 0) fail(line_no, "duplicate section [" + section + "]");
                sections_[section];
                continue;
            }
            const auto eq = line.find('=');
            if (eq == std::string::npos) fail(line_no, "expected 'key = value', got '" + line + "'");
            if (section.empty()) fail(line_no, "key outside of any section");
            const std::string key = trim(line.substr(0, eq));
            const std::string value = trim(line.substr(eq + 1));
            if (key.empty()) fail(line_no, "empty key");
            auto& sec = sections_[section];
            if (sec.count(key) != 0) {
                fail(line_no, "duplicate key '" + key + "' in [" + section + "] (first set on line " +
                                  std::to_string(sec[key].line) + ")");
            }
            sec[key] = Entry{value, line_no, false};
        }
        // The result section of a manifest is informational.
        sections_.erase("result");
    }

    bool has_section(const std::string& section) const { return sections_.count(section) != 0; }

    const Entry* find(const std::string& section, const std::string& key) {
        auto s = sections_.find(section);
        if (s == sections_.end()) return nullptr;
        auto e = s->second.find(key);
        if (e == s->second.end()) return nullptr;
        e->second.used = true;
        return &e->second;
    }

    std::string get_string(const std::string& section, const std::string& key, const std::string& fallback) {
        const Entry* e = find(section, key);
        return e ? e->value : fallback;
    }

    std::string require_string(const std::string& section, const std::string& key) {
        const Entry* e = find(section, key);
        if (!e) fail(0, "missing required key '" + key + "' in [" + section + "]");
        return e->value;
    }

    double get_double(const std::string& section, const std::string& key, double fallback) {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        double v = 0.0;
        const char* end = e->value.data() + e->value.size();
        const auto res = std::from_chars(e->value.data(), end, v);
        if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
            fail(e->line, "key '" + key + "': '" + e->value + "' is not a finite number");
        }
        return v;
    }

    double require_double(const std::string& section, const std::string& key) {
        if (!find(section, key)) fail(0, "missing required key '" + key + "' in [" + section + "]");
        return get_double(section, key, 0.0);
    }

    template <class Int>
    Int get_int(const std::string& section, const std::string& key, Int fallback) {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        Int v = 0;
        const char* end = e->value.data() + e->value.size();
        const auto res = std::from_chars(e->value.data(), end, v);
        if (res.ec != std::errc() || res.ptr != end) {
            fail(e->line, "key '" + key + "': '" + e->value + "' is not an integer in range");
        }
        return v;
    }

    bool get_bool(const std::string& section, const std::string& key, bool fallback) {
        const Entry* e = find(section, key);
        if (!e) return fallback;
        if (e->value == "true") return true;
        if (e->value == "false") return false;
        fail(e->line, "key '" + key + "': expected true or false, got '" + e->value + "'");
    }

    int line_of(const std::string& section, const std::string& key) {
        const Entry* e = find(section, key);
        return e ? e->line : 0;
    }

    void check_all_used() const {
        for (const auto& [name, sec] : sections_) {
            for (const auto& [key, entry] : sec) {
                if (!entry.used) fail(entry.line, "unknown key '" + key + "' in [" + name + "]");
            }
        }
    }

    [[noreturn]] void fail(int line, const std::string& msg) const {
        const std::string where = line > 0 ? source_ + ":" + std::to_string(line) : source_;
        throw Error(ErrorCode::Config, where + ": " + msg);
    }

private:
    std::string source_;
    std::map<std::string, std::map<std::string, Entry>> sections_;
};

template <class T>
T parse_enum(RawConfig& raw, const std::string& section, const std::string& key, const std::string& value,
             std::initializer_list<std::pair<const char*, T>> options) {
    std::string allowed;
    for (const auto& [name, v] : options) {
        if (value == name) return v;
        allowed += allowed.empty() ? name : std::string(", ") + name;
    }
    raw.fail(raw.line_of(section, key), "key '" + key + "': '" + value + "' is not one of {" + allowed + "}");
}

std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream ss(s);
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

}  // namespace

RunConfig parse_config(std::istream& is, const std::string& source, const std::string& base_dir) {
    RawConfig raw(is, source);
    RunConfig cfg;

    const std::string model = raw.require_string("model", "name");
    cfg.model = parse_enum<ModelKind>(raw, "model", "name", model,
                                      {{"qbm", ModelKind::qbm},
                                       {"redfield_et", ModelKind::redfield_et},
                                       {"lindblad_dd", ModelKind::lindblad_dd},
                                       {"custom", ModelKind::custom}});
    switch (cfg.model) {
        case ModelKind::qbm: {
            auto& q = cfg.qbm;
            q.mass = raw.get_double("model", "mass", q.mass);
            q.omega = raw.get_double("model", "omega", q.omega);
            q.gamma = raw.get_double("model", "gamma", q.gamma);
            q.kT = raw.get_double("model", "kT", q.kT);
            q.hbar = raw.get_double("model", "hbar", q.hbar);
            q.n_levels = raw.get_int<int>("model", "n_levels", q.n_levels);
            const std::string friction = raw.get_string("model", "friction", "antidamping");
            q.friction = parse_enum<FrictionSign>(
                raw, "model", "friction", friction,
                {{"antidamping", FrictionSign::antidamping}, {"damping", FrictionSign::damping}});
            cfg.initial_level = raw.get_int<int>("model", "initial_level", cfg.initial_level);
            break;
        }
        case ModelKind::redfield_et:
        case ModelKind::lindblad_dd: {
            auto& e = cfg.et;
            e.omega = raw.get_double("model", "omega", e.omega);
            e.delta_E = raw.get_double("model", "delta_E", e.delta_E);
            e.lambda_reorg = raw.get_double("model", "lambda", e.lambda_reorg);
            e.v12 = raw.get_double("model", "v12", e.v12);
            e.omega_c = raw.get_double("model", "omega_c", e.omega_c);
            e.kT = raw.get_double("model", "kT", e.kT);
            e.Gamma = raw.get_double("model", "Gamma", e.Gamma);
            e.n_vib = raw.get_int<int>("model", "n_vib", e.n_vib);
            e.packet_energy_offset = raw.get_double("model", "packet_energy_offset", e.packet_energy_offset);
            break;
        }
        case ModelKind::custom: {
            const std::string file = raw.require_string("model", "spec_file");
            const std::filesystem::path p(file);
            cfg.spec_file = p.is_absolute() ? file : (std::filesystem::path(base_dir) / p).lexically_normal().string();
            cfg.initial_basis = raw.get_int<int>("model", "initial_basis", cfg.initial_basis);
            break;
        }
    }

    const std::string method = raw.require_string("method", "name");
    cfg.method = parse_enum<Method>(raw, "method", "name", method,
                                    {{"pairjump", Method::pairjump}, {"mcwf", Method::mcwf}, {"oracle", Method::oracle}});
    cfg.n_traj = raw.get_int<long>("method", "n_traj", cfg.n_traj);
    cfg.dt = raw.get_double("method", "dt", cfg.dt);
    cfg.t_end = raw.require_double("method", "t_end");
    cfg.output_grid_points = raw.get_int<int>("method", "output_grid_points", cfg.output_grid_points);
    cfg.master_seed = raw.get_int<std::uint64_t>("method", "master_seed", cfg.master_seed);
    cfg.workers = raw.get_int<int>("method", "workers", cfg.workers);
    const std::string drift = raw.get_string("method", "drift_rates", "absolute");
    cfg.drift_rates = parse_enum<DriftRates>(raw, "method", "drift_rates", drift,
                                             {{"absolute", DriftRates::absolute}, {"signed", DriftRates::signed_rates}});
    cfg.renormalize_each_jump = raw.get_bool("method", "renormalize_each_jump", cfg.renormalize_each_jump);

    if (cfg.method != Method::oracle && cfg.n_traj < 1) {
        raw.fail(raw.line_of("method", "n_traj"), "key 'n_traj': must be at least 1 for stochastic methods");
    }
    if (!(cfg.dt > 0.0)) raw.fail(raw.line_of("method", "dt"), "key 'dt': must be positive");
    if (!(cfg.t_end > 0.0)) raw.fail(raw.line_of("method", "t_end"), "key 't_end': must be positive");
    if (cfg.output_grid_points < 2) {
        raw.fail(raw.line_of("method", "output_grid_points"), "key 'output_grid_points': must be at least 2");
    }
    if (cfg.workers < 1) raw.fail(raw.line_of("method", "workers"), "key 'workers': must be at least 1");

    cfg.observables = split_list(raw.require_string("observables", "names"));
    if (cfg.observables.empty()) raw.fail(raw.line_of("observables", "names"), "key 'names': empty list");

    cfg.output_path = raw.get_string("output", "path", cfg.output_path);
    if (cfg.output_path.empty()) raw.fail(raw.line_of("output", "path"), "key 'path': empty");

    if (raw.has_section("histogram")) {
        HistogramSpec h;
        h.observable = raw.require_string("histogram", "observable");
        h.sample_time = raw.get_double("histogram", "sample_time", h.sample_time);
        h.bin_width = raw.get_double("histogram", "bin_width", h.bin_width);
        h.range_min = raw.get_double("histogram", "range_min", h.range_min);
        h.range_max = raw.get_double("histogram", "range_max", h.range_max);
        if (!(h.sample_time > 0.0)) raw.fail(raw.line_of("histogram", "sample_time"), "key 'sample_time': must be positive");
        if (!(h.bin_width > 0.0)) raw.fail(raw.line_of("histogram", "bin_width"), "key 'bin_width': must be positive");
        // Population histograms must show the tails on both sides of [0, 1].
        if (!(h.range_min <= -0.1) || !(h.range_max >= 1.1)) {
            const char* key = h.range_min > -0.1 ? "range_min" : "range_max";
            raw.fail(raw.line_of("histogram", key),
                     std::string("key '") + key + "': histogram range must cover at least [-0.1, 1.1]");
        }
        const double bins = (h.range_max - h.range_min) / h.bin_width;
        if (std::abs(bins - std::round(bins)) > 1e-9 * bins) {
            raw.fail(raw.line_of("histogram", "bin_width"), "key 'bin_width': must divide the range evenly");
        }
        cfg.histogram = h;
    }
    raw.check_all_used();
    return cfg;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorCode::Config, "cannot open config file '" + path + "'");
    const auto dir = std::filesystem::path(path).parent_path();
    return parse_config(in, path, dir.empty() ? "." : dir.string());
}

std::string canonical_config(const RunConfig& c) {
    std::ostringstream os;
    auto kv = [&os](const char* key, const std::string& value) { os << key << " = " << value << '\n'; };
    auto num = [&kv](const char* key, double v) { kv(key, format_double(v)); };

    os << "[model]\n";
    kv("name", to_string(c.model));
    switch (c.model) {
        case ModelKind::qbm:
            num("mass", c.qbm.mass);
            num("omega", c.qbm.omega);
            num("gamma", c.qbm.gamma);
            num("kT", c.qbm.kT);
            num("hbar", c.qbm.hbar);
            kv("n_levels", std::to_string(c.qbm.n_levels));
            kv("friction", c.qbm.friction == FrictionSign::damping ? "damping" : "antidamping");
            kv("initial_level", std::to_string(c.initial_level));
            break;
        case ModelKind::redfield_et:
        case ModelKind::lindblad_dd:
            num("omega", c.et.omega);
            num("delta_E", c.et.delta_E);
            num("lambda", c.et.lambda_reorg);
            num("v12", c.et.v12);
            num("omega_c", c.et.omega_c);
            num("kT", c.et.kT);
            num("Gamma", c.et.Gamma);
            kv("n_vib", std::to_string(c.et.n_vib));
            num("packet_energy_offset", c.et.packet_energy_offset);
            break;
        case ModelKind::custom:
            kv("spec_file", c.spec_file);
            kv("initial_basis", std::to_string(c.initial_basis));
            break;
    }
    os << "\n[method]\n";
    kv("name", to_string(c.method));
    kv("n_traj", std::to_string(c.n_traj));
    num("dt", c.dt);
    num("t_end", c.t_end);
    kv("output_grid_points", std::to_string(c.output_grid_points));
    kv("master_seed", std::to_string(c.master_seed));
    kv("drift_rates", c.drift_rates == DriftRates::absolute ? "absolute" : "signed");
    kv("renormalize_each_jump", c.renormalize_each_jump ? "true" : "false");

    os << "\n[observables]\n";
    std::string names;
    for (const auto& n : c.observables) names += (names.empty() ? "" : ", ") + n;
    kv("names", names);

    if (c.histogram) {
        os << "\n[histogram]\n";
        kv("observable", c.histogram->observable);
        num("sample_time", c.histogram->sample_time);
        num("bin_width", c.histogram->bin_width);
        num("range_min", c.histogram->range_min);
        num("range_max", c.histogram->range_max);
    }
    return os.str();
}

std::vector<double> output_grid(const RunConfig& config) {
    const long last = std::lround(config.t_end / config.dt);
    if (last < 1) {
        throw Error(ErrorCode::Config, "t_end is shorter than one time step");
    }
    std::vector<double> grid;
    long prev = -1;
    const int n = config.output_grid_points;
    for (int i = 0; i < n; ++i) {
        const long step = (last * i + (n - 1) / 2) / (n - 1);
        if (step == prev) continue;
        grid.push_back(static_cast<double>(step) * config.dt);
        prev = step;
    }
    return grid;
}

std::string csv_path(const RunConfig& config) { return config.output_path + ".csv"; }
std::string manifest_path(const RunConfig& config) { return config.output_path + ".manifest"; }

}  // namespace qme::cli
