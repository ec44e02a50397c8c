#pragma once

// Line-oriented run configuration.
//
//   # comment
//   mode = physical                 # physical | strict
//   analysis_frequency_hz = 2e6
//   input.v_corr = 0.38             # or input.r / input.r_prime
//   input.v_anti = 25.9             # or input.db_corr / input.db_anti
//   stage.1.gamma1 = 0.1
//   stage.1.gamma2 = 0.004
//   stage.1.tau = 2e-9
//   stage.1.zeta = 0.947            # default 1
//   stage.1.theta = 0.0105          # default 0
//   stage.1.kappa = 0.047           # exactly one of: kappa,
//                                   #   pump.p_pump + pump.p_threshold + pump.chi,
//                                   #   kappa_policy = fit (+ target_db) | optimal
//   measured.1.v_corr = 0.59        # optional, for fit-chain and check-duan
//   measured.1.v_anti = 13.6
//   output.format = csv
//   output.path = out.csv
//   output.precision = 10           # 6..17
//
// Stage and measured indices are 1-based and contiguous.

#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "cvenhance/cli/format.hpp"
#include "cvenhance/nopa_transfer.hpp"
#include "cvenhance/quadrature_state.hpp"

namespace cvenhance::cli {

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

enum class KappaSource { Direct, Pump, Fit, Optimal };

struct StageSpec {
    double gamma1 = 0.0;
    double gamma2 = 0.0;
    double tau = 0.0;
    double zeta = 1.0;
    double theta = 0.0;
    KappaSource source = KappaSource::Direct;
    double kappa = 0.0;      // Direct
    PumpSpec pump{};         // Pump
    double target_db = 0.0;  // Fit

    friend bool operator==(const StageSpec&, const StageSpec&) = default;
};

enum class InputForm { Variances, Squeezing, Decibels };

struct InputSpec {
    InputForm form = InputForm::Variances;
    double first = kQnl;  // v_corr | r | db_corr
    double second = kQnl; // v_anti | r_prime | db_anti

    EprState state() const {
        switch (form) {
            case InputForm::Squeezing: return variances_from_squeezing({first, second});
            case InputForm::Decibels: return {db_to_variance({first}), db_to_variance({second})};
            case InputForm::Variances: break;
        }
        return {first, second};
    }

    friend bool operator==(const InputSpec&, const InputSpec&) = default;
};

struct MeasuredSpec {
    double v_corr = 0.0;
    double v_anti = 0.0;

    friend bool operator==(const MeasuredSpec&, const MeasuredSpec&) = default;
};

struct OutputSpec {
    std::string format = "csv";
    std::string path;
    int precision = 10;

    friend bool operator==(const OutputSpec&, const OutputSpec&) = default;
};

inline constexpr int kMinPrecision = 6;
inline constexpr int kMaxPrecision = 17;

struct RunConfig {
    ModelMode mode = ModelMode::Physical;
    double analysis_frequency_hz = 0.0;
    InputSpec input;
    std::vector<StageSpec> stages;
    std::vector<MeasuredSpec> measured;
    OutputSpec output;

    MeasurementContext context(const StageSpec& s) const { return {s.zeta, s.theta, analysis_frequency_hz}; }

    friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

inline const char* mode_name(ModelMode m) { return m == ModelMode::StrictPaper ? "strict" : "physical"; }

inline std::optional<ModelMode> parse_mode(std::string_view s) {
    if (s == "physical") return ModelMode::Physical;
    if (s == "strict") return ModelMode::StrictPaper;
    return std::nullopt;
}

namespace detail {

struct Entry {
    std::string value;
    int line = 0;
};

inline std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos) return {};
    const auto e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_dots(const std::string& key) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        parts.push_back(key.substr(start, dot - start));
        if (dot == std::string::npos) break;
        start = dot + 1;
    }
    return parts;
}

class Reader {
public:
    explicit Reader(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

    bool has(const std::string& key) const { return entries_.count(key) != 0; }

    double number(const std::string& key) {
        const auto& e = at(key);
        double v = 0.0;
        if (!parse_double(e.value, v))
            throw ConfigError("line " + std::to_string(e.line) + ": " + key + ": '" + e.value + "' is not a finite number");
        return v;
    }

    double number_or(const std::string& key, double fallback) { return has(key) ? number(key) : fallback; }

    std::string text(const std::string& key) const {
        return at(key).value;
    }

    int line(const std::string& key) const { return has(key) ? entries_.at(key).line : 0; }

    void require(const std::string& key) const {
        if (!has(key)) throw ConfigError(key + ": missing required field");
    }

private:
    const Entry& at(const std::string& key) const {
        require(key);
        return entries_.at(key);
    }

    std::map<std::string, Entry> entries_;
};

inline std::size_t parse_index(const std::string& s, const std::string& key, int line) {
    std::size_t idx = 0;
    bool ok = !s.empty() && s.size() < 6;
    for (char c : s) ok = ok && c >= '0' && c <= '9';
    if (ok) idx = std::stoul(s);
    if (!ok || idx == 0) throw ConfigError("line " + std::to_string(line) + ": " + key + ": index must be a positive integer");
    return idx;
}

inline bool known_stage_field(const std::string& f) {
    static const char* fields[] = {"gamma1", "gamma2", "tau",         "zeta",      "theta",      "kappa",
                                   "pump.p_pump", "pump.p_threshold", "pump.chi", "kappa_policy", "target_db"};
    for (const char* k : fields)
        if (f == k) return true;
    return false;
}

}  // namespace detail

inline RunConfig parse_config(std::istream& in) {
    std::map<std::string, detail::Entry> entries;
    std::string raw;
    int line_no = 0;
    std::size_t max_stage = 0, max_measured = 0;

    while (std::getline(in, raw)) {
        ++line_no;
        const auto hash = raw.find('#');
        const std::string line = detail::trim(hash == std::string::npos ? raw : raw.substr(0, hash));
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("line " + std::to_string(line_no) + ": expected 'key = value', got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("line " + std::to_string(line_no) + ": empty key");
        if (value.empty()) throw ConfigError("line " + std::to_string(line_no) + ": " + key + ": empty value");

        const auto parts = detail::split_dots(key);
        bool known = false;
        if (parts.size() == 1) {
            known = key == "mode" || key == "analysis_frequency_hz";
        } else if (parts[0] == "input" && parts.size() == 2) {
            known = parts[1] == "v_corr" || parts[1] == "v_anti" || parts[1] == "r" || parts[1] == "r_prime" ||
                    parts[1] == "db_corr" || parts[1] == "db_anti";
        } else if (parts[0] == "output" && parts.size() == 2) {
            known = parts[1] == "format" || parts[1] == "path" || parts[1] == "precision";
        } else if (parts[0] == "stage" && parts.size() >= 3) {
            const auto idx = detail::parse_index(parts[1], key, line_no);
            known = detail::known_stage_field(key.substr(parts[0].size() + parts[1].size() + 2));
            if (known) max_stage = std::max(max_stage, idx);
        } else if (parts[0] == "measured" && parts.size() == 3) {
            const auto idx = detail::parse_index(parts[1], key, line_no);
            known = parts[2] == "v_corr" || parts[2] == "v_anti";
            if (known) max_measured = std::max(max_measured, idx);
        }
        if (!known) throw ConfigError("line " + std::to_string(line_no) + ": unknown key '" + key + "'");
        if (entries.count(key))
            throw ConfigError("line " + std::to_string(line_no) + ": " + key + ": duplicate (first set on line " +
                              std::to_string(entries[key].line) + ")");
        entries[key] = {value, line_no};
    }

    detail::Reader rd(std::move(entries));
    RunConfig cfg;

    if (rd.has("mode")) {
        const auto m = parse_mode(rd.text("mode"));
        if (!m) throw ConfigError("line " + std::to_string(rd.line("mode")) + ": mode: expected 'physical' or 'strict'");
        cfg.mode = *m;
    }
    cfg.analysis_frequency_hz = rd.number("analysis_frequency_hz");

    const bool var = rd.has("input.v_corr") || rd.has("input.v_anti");
    const bool sq = rd.has("input.r") || rd.has("input.r_prime");
    const bool db = rd.has("input.db_corr") || rd.has("input.db_anti");
    if (var + sq + db != 1)
        throw ConfigError("input: exactly one of {v_corr, v_anti}, {r, r_prime}, {db_corr, db_anti} must be given");
    if (var) cfg.input = {InputForm::Variances, rd.number("input.v_corr"), rd.number("input.v_anti")};
    if (sq) cfg.input = {InputForm::Squeezing, rd.number("input.r"), rd.number("input.r_prime")};
    if (db) cfg.input = {InputForm::Decibels, rd.number("input.db_corr"), rd.number("input.db_anti")};

    if (max_stage == 0) throw ConfigError("stage.1: at least one stage is required");
    for (std::size_t i = 1; i <= max_stage; ++i) {
        const std::string p = "stage." + std::to_string(i) + ".";
        StageSpec s;
        s.gamma1 = rd.number(p + "gamma1");
        s.gamma2 = rd.number(p + "gamma2");
        s.tau = rd.number(p + "tau");
        s.zeta = rd.number_or(p + "zeta", 1.0);
        s.theta = rd.number_or(p + "theta", 0.0);

        const bool direct = rd.has(p + "kappa");
        const bool pump = rd.has(p + "pump.p_pump") || rd.has(p + "pump.p_threshold") || rd.has(p + "pump.chi");
        const bool policy = rd.has(p + "kappa_policy");
        if (direct + pump + policy != 1)
            throw ConfigError(p + "kappa: exactly one of kappa, pump.*, kappa_policy must be given");
        if (direct) {
            s.source = KappaSource::Direct;
            s.kappa = rd.number(p + "kappa");
        } else if (pump) {
            s.source = KappaSource::Pump;
            s.pump = {rd.number(p + "pump.p_pump"), rd.number(p + "pump.p_threshold"), rd.number(p + "pump.chi")};
        } else {
            const std::string pol = rd.text(p + "kappa_policy");
            if (pol == "fit") {
                s.source = KappaSource::Fit;
                s.target_db = rd.number(p + "target_db");
            } else if (pol == "optimal") {
                s.source = KappaSource::Optimal;
            } else {
                throw ConfigError("line " + std::to_string(rd.line(p + "kappa_policy")) + ": " + p +
                                  "kappa_policy: expected 'fit' or 'optimal'");
            }
        }
        if (s.source != KappaSource::Fit && rd.has(p + "target_db"))
            throw ConfigError("line " + std::to_string(rd.line(p + "target_db")) + ": " + p +
                              "target_db: only valid with kappa_policy = fit");
        cfg.stages.push_back(s);
    }

    for (std::size_t i = 1; i <= max_measured; ++i) {
        const std::string p = "measured." + std::to_string(i) + ".";
        cfg.measured.push_back({rd.number(p + "v_corr"), rd.number(p + "v_anti")});
    }

    if (rd.has("output.format")) {
        cfg.output.format = rd.text("output.format");
        if (cfg.output.format != "csv")
            throw ConfigError("line " + std::to_string(rd.line("output.format")) + ": output.format: only 'csv' is supported");
    }
    if (rd.has("output.path")) cfg.output.path = rd.text("output.path");
    if (rd.has("output.precision")) {
        const double p = rd.number("output.precision");
        if (p != static_cast<int>(p) || p < kMinPrecision || p > kMaxPrecision)
            throw ConfigError("line " + std::to_string(rd.line("output.precision")) +
                              ": output.precision: must be an integer in [6, 17]");
        cfg.output.precision = static_cast<int>(p);
    }
    return cfg;
}

inline RunConfig parse_config(const std::string& text) {
    std::istringstream in(text);
    return parse_config(in);
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError(path + ": cannot open config file");
    return parse_config(in);
}

/// Canonical text form; parse_config(serialize_config(c)) == c.
inline std::string serialize_config(const RunConfig& c) {
    std::ostringstream o;
    o << "mode = " << mode_name(c.mode) << '\n';
    o << "analysis_frequency_hz = " << shortest(c.analysis_frequency_hz) << '\n';
    switch (c.input.form) {
        case InputForm::Variances:
            o << "input.v_corr = " << shortest(c.input.first) << "\ninput.v_anti = " << shortest(c.input.second) << '\n';
            break;
        case InputForm::Squeezing:
            o << "input.r = " << shortest(c.input.first) << "\ninput.r_prime = " << shortest(c.input.second) << '\n';
            break;
        case InputForm::Decibels:
            o << "input.db_corr = " << shortest(c.input.first) << "\ninput.db_anti = " << shortest(c.input.second)
              << '\n';
            break;
    }
    for (std::size_t i = 0; i < c.stages.size(); ++i) {
        const auto& s = c.stages[i];
        const std::string p = "stage." + std::to_string(i + 1) + ".";
        o << p << "gamma1 = " << shortest(s.gamma1) << '\n';
        o << p << "gamma2 = " << shortest(s.gamma2) << '\n';
        o << p << "tau = " << shortest(s.tau) << '\n';
        o << p << "zeta = " << shortest(s.zeta) << '\n';
        o << p << "theta = " << shortest(s.theta) << '\n';
        switch (s.source) {
            case KappaSource::Direct: o << p << "kappa = " << shortest(s.kappa) << '\n'; break;
            case KappaSource::Pump:
                o << p << "pump.p_pump = " << shortest(s.pump.p_pump) << '\n';
                o << p << "pump.p_threshold = " << shortest(s.pump.p_threshold) << '\n';
                o << p << "pump.chi = " << shortest(s.pump.chi) << '\n';
                break;
            case KappaSource::Fit:
                o << p << "kappa_policy = fit\n" << p << "target_db = " << shortest(s.target_db) << '\n';
                break;
            case KappaSource::Optimal: o << p << "kappa_policy = optimal\n"; break;
        }
    }
    for (std::size_t i = 0; i < c.measured.size(); ++i) {
        const std::string p = "measured." + std::to_string(i + 1) + ".";
        o << p << "v_corr = " << shortest(c.measured[i].v_corr) << '\n';
        o << p << "v_anti = " << shortest(c.measured[i].v_anti) << '\n';
    }
    o << "output.format = " << c.output.format << '\n';
    if (!c.output.path.empty()) o << "output.path = " << c.output.path << '\n';
    o << "output.precision = " << c.output.precision << '\n';
    return o.str();
}

}  // namespace cvenhance::cli
