#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unsupported/Eigen/MatrixFunctions>
#include <json.hpp>

#include "singevo/cauchy.hpp"
#include "singevo/evolution.hpp"
#include "singevo/family.hpp"
#include "singevo/semigroup.hpp"
#include "singevo/wedge.hpp"

namespace singevo {

// Configuration ------------------------------------------------------------------

inline const std::vector<std::string>& experiment_commands() {
    static const std::vector<std::string> c{"semigroup-check", "hypo-check", "evolve", "counterexample",
                                            "solve-scp",       "wedge",      "report"};
    return c;
}

/// Payload key carried by each command's config.
inline std::string payload_key(const std::string& command) {
    static const std::map<std::string, std::string> k{{"semigroup-check", "semigroup"}, {"hypo-check", "hypotheses"},
                                                      {"evolve", "evolution"},          {"counterexample", "counterexample"},
                                                      {"solve-scp", "cauchy"},          {"wedge", "wedge"},
                                                      {"report", ""}};
    const auto it = k.find(command);
    if (it == k.end()) throw ConfigError("unknown command \"" + command + "\"");
    return it->second;
}

struct ExperimentConfig {
    std::string command;
    std::string name;  // run directory under output_dir; defaults to the command
    unsigned seed = 1;
    int threads = 1;
    std::string output_dir = "out";
    std::map<std::string, double> tolerances;
    nlohmann::json payload = nlohmann::json::object();

    [[nodiscard]] double tol(const std::string& key) const { return tolerances.at(key); }

    /// The embedded copy leaves out output_dir so that artifacts do not depend on where they are written.
    [[nodiscard]] nlohmann::json to_json() const {
        nlohmann::json j{{"command", command}, {"name", name}, {"seed", seed}, {"threads", threads}, {"tolerances", tolerances}};
        if (const auto key = payload_key(command); !key.empty()) j[key] = payload;
        return j;
    }
};

namespace detail {

inline void allow_keys(const nlohmann::json& j, const std::string& where, std::initializer_list<const char*> allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ConfigError(where + ": unknown key \"" + key + "\"");
    }
}

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback) {
    if (!j.contains(key)) return fallback;
    try {
        return j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("key \"") + key + "\": " + e.what());
    }
}

// Default tolerances per command; a config may only override these names.
inline std::map<std::string, double> default_tolerances(const std::string& command) {
    if (command == "semigroup-check")
        return {{"exp_rel", 1e-8}, {"law", 1e-8}, {"contour", 1e-8}, {"frac", 1e-9}, {"frac_law", 1e-8}, {"identity", 1e-8}};
    if (command == "evolve") return {{"cocycle", 1e-8}};
    if (command == "counterexample") return {{"growth_min", 5.0}, {"envelope_factor", 2.0}};
    if (command == "solve-scp") return {{"spread", 2.0}};
    if (command == "wedge") return {{"imag", 1e-10}, {"residual_ratio", 3.5}, {"dirichlet", 1e-12}};
    return {};
}

}  // namespace detail

/// Strict parse: unknown keys and unknown tolerance names are rejected.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    if (!j.is_object()) throw ConfigError("config: expected a JSON object");
    if (!j.contains("command")) throw ConfigError("config: missing \"command\"");
    ExperimentConfig c;
    c.command = detail::get_or<std::string>(j, "command", "");
    const auto key = payload_key(c.command);
    for (const auto& [k, _] : j.items())
        if (k != "command" && k != "name" && k != "seed" && k != "threads" && k != "output_dir" && k != "tolerances" &&
            (key.empty() || k != key))
            throw ConfigError("config: unknown key \"" + k + "\"");
    c.name = detail::get_or<std::string>(j, "name", c.command);
    if (c.name.empty() || c.name.find('/') != std::string::npos || c.name == "." || c.name == "..")
        throw ConfigError("config: name must be a plain directory name");
    const auto seed = detail::get_or<long long>(j, "seed", 1);
    if (seed < 0 || seed > 0xffffffffLL) throw ConfigError("config: seed must fit in 32 bits");
    c.seed = static_cast<unsigned>(seed);
    c.threads = detail::get_or<int>(j, "threads", 1);
    if (c.threads < 1) throw ConfigError("config: threads must be >= 1");
    c.output_dir = detail::get_or<std::string>(j, "output_dir", "out");
    c.tolerances = detail::default_tolerances(c.command);
    if (j.contains("tolerances")) {
        if (!j.at("tolerances").is_object()) throw ConfigError("config: tolerances must be an object");
        for (const auto& [k, v] : j.at("tolerances").items()) {
            if (!c.tolerances.contains(k)) throw ConfigError("config: unknown tolerance \"" + k + "\"");
            if (!v.is_number()) throw ConfigError("config: tolerance \"" + k + "\" must be a number");
            c.tolerances[k] = v.get<double>();
        }
    }
    if (!key.empty()) {
        if (!j.contains(key)) throw ConfigError("config: command " + c.command + " needs a \"" + key + "\" object");
        c.payload = j.at(key);
        if (!c.payload.is_object()) throw ConfigError("config: \"" + key + "\" must be an object");
    }
    return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return parse_config(j);
}

// Artifacts ----------------------------------------------------------------------

/// CSV table whose header names each column with its unit, "name [unit]".
class CsvTable {
public:
    explicit CsvTable(std::vector<std::pair<std::string, std::string>> columns) : columns_(std::move(columns)) {}

    void row(const std::vector<double>& values) {
        if (values.size() != columns_.size()) throw Error("CsvTable: row width does not match header");
        rows_.push_back(values);
    }

    [[nodiscard]] std::size_t rows() const { return rows_.size(); }

    [[nodiscard]] std::string str() const {
        std::ostringstream os;
        for (std::size_t i = 0; i < columns_.size(); ++i)
            os << (i ? "," : "") << columns_[i].first << " [" << columns_[i].second << "]";
        os << '\n';
        char buf[32];
        for (const auto& r : rows_) {
            for (std::size_t i = 0; i < r.size(); ++i) {
                std::snprintf(buf, sizeof buf, "%.17g", r[i]);
                os << (i ? "," : "") << buf;
            }
            os << '\n';
        }
        return os.str();
    }

private:
    std::vector<std::pair<std::string, std::string>> columns_;
    std::vector<std::vector<double>> rows_;
};

struct RunResult {
    std::string command;
    std::string name;
    std::filesystem::path dir;
    nlohmann::json report;
    std::vector<std::string> failures;
    [[nodiscard]] bool pass() const { return failures.empty(); }
};

namespace detail {

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << content;
}

class Run {
public:
    explicit Run(const ExperimentConfig& cfg) : cfg_(cfg) {
        res_.command = cfg.command;
        res_.name = cfg.name;
        res_.dir = std::filesystem::path(cfg.output_dir) / cfg.name;
        std::filesystem::create_directories(res_.dir);
    }

    void csv(const std::string& file, const CsvTable& t) {
        write_file(res_.dir / file, t.str());
        artifacts_.push_back(file);
    }

    void binary(const std::string& file, const std::string& bytes) {
        write_file(res_.dir / file, bytes);
        artifacts_.push_back(file);
    }

    /// Records a check; a failed check adds a machine-readable entry.
    void check(const std::string& what, bool ok, double value, double limit) {
        checks_.push_back({{"check", what}, {"pass", ok}, {"value", value}, {"limit", limit}});
        if (!ok) {
            std::ostringstream os;
            os << what << ": " << value << " vs limit " << limit;
            res_.failures.push_back(os.str());
        }
    }

    void fail(const std::string& what) { res_.failures.push_back(what); }

    nlohmann::json& results() { return results_; }

    RunResult finish() {
        res_.report = {{"command", cfg_.command}, {"name", cfg_.name},        {"config", cfg_.to_json()},
                       {"pass", res_.pass()},     {"failures", res_.failures}, {"checks", checks_},
                       {"results", results_},     {"artifacts", artifacts_}};
        write_file(res_.dir / "report.json", res_.report.dump(2) + "\n");
        return res_;
    }

private:
    const ExperimentConfig& cfg_;
    RunResult res_;
    nlohmann::json checks_ = nlohmann::json::array();
    nlohmann::json results_ = nlohmann::json::object();
    std::vector<std::string> artifacts_;
};

inline std::vector<double> geometric_points(const nlohmann::json& spec, double lo, double hi, int n) {
    if (spec.is_array()) {
        std::vector<double> v;
        for (const auto& x : spec) v.push_back(x.get<double>());
        if (v.empty()) throw ConfigError("time list is empty");
        return v;
    }
    if (spec.is_object()) {
        allow_keys(spec, "geometric points", {"lo", "hi", "points"});
        lo = get_or(spec, "lo", lo);
        hi = get_or(spec, "hi", hi);
        n = get_or(spec, "points", n);
    }
    if (!(lo > 0.0 && hi >= lo && n >= 1)) throw ConfigError("geometric points need 0 < lo <= hi and points >= 1");
    return geometric_grid(lo, hi, n);
}

inline EvolutionMethod method_from(const std::string& s) {
    if (s == "ode") return EvolutionMethod::ode;
    if (s == "volterra") return EvolutionMethod::volterra;
    throw ConfigError("method must be \"ode\" or \"volterra\"");
}

inline EvolutionGrid build_evolution(const SingularFamily& fam, const std::vector<double>& mesh, EvolutionMethod m,
                                     double tol) {
    return m == EvolutionMethod::ode ? construct_ode(fam, mesh, tol) : construct_volterra(fam, mesh);
}

}  // namespace detail

/// Real, diagonalizable, stable matrix with eigenvalue moduli in [lo, hi] and |arg| >= 0.8 pi.
inline Matrix random_stable_matrix(int n, std::mt19937& rng, double lo = 0.05, double hi = 5.0) {
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Eigen::MatrixXd d = Eigen::MatrixXd::Zero(n, n);
    for (int k = 0; k < n;) {
        const double r = lo * std::pow(hi / lo, unit(rng));
        if (k + 1 < n && unit(rng) < 0.5) {
            const double phi = std::numbers::pi * (0.8 + 0.2 * unit(rng));
            d(k, k) = d(k + 1, k + 1) = r * std::cos(phi);
            d(k, k + 1) = r * std::sin(phi);
            d(k + 1, k) = -r * std::sin(phi);
            k += 2;
        } else {
            d(k, k) = -r;
            k += 1;
        }
    }
    std::normal_distribution<double> g(0.0, 1.0);
    Eigen::MatrixXd w = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) w(i, j) += 0.3 * g(rng) / std::sqrt(static_cast<double>(n));
    return (w * d * w.inverse()).cast<cplx>();
}

// Commands -----------------------------------------------------------------------

/// Contour exponential against Eigen's scaling-and-squaring, the semigroup law, contour invariance,
/// fractional powers and the integral identity on explicit and random matrices.
inline RunResult run_semigroup_check(const ExperimentConfig& cfg) {
    const auto& p = cfg.payload;
    detail::allow_keys(p, "semigroup", {"matrices", "random", "times", "rhos"});
    std::vector<Matrix> mats;
    if (p.contains("matrices"))
        for (const auto& m : p.at("matrices")) mats.push_back(matrix_from_json(m));
    if (p.contains("random")) {
        const auto& r = p.at("random");
        detail::allow_keys(r, "semigroup.random", {"count", "max_dim", "lo", "hi"});
        std::mt19937 rng(cfg.seed);
        const int count = detail::get_or(r, "count", 10), max_dim = detail::get_or(r, "max_dim", 8);
        if (count < 0 || max_dim < 1) throw ConfigError("semigroup.random: count >= 0 and max_dim >= 1 required");
        std::uniform_int_distribution<int> dim(1, max_dim);
        for (int i = 0; i < count; ++i)
            mats.push_back(random_stable_matrix(dim(rng), rng, detail::get_or(r, "lo", 0.05), detail::get_or(r, "hi", 5.0)));
    }
    if (mats.empty()) throw ConfigError("semigroup: give \"matrices\" or \"random\"");
    const auto times = detail::geometric_points(p.value("times", nlohmann::json()), 1e-2, 10.0, 8);
    std::vector<double> rhos = detail::get_or(p, "rhos", std::vector<double>{0.5, 1.0, 1.5});
    for (double r : rhos)
        if (!(r > 0.0)) throw ConfigError("semigroup: rhos must be positive");

    detail::Run run(cfg);
    CsvTable table({{"matrix", "index"},
                    {"dim", "count"},
                    {"t", "time"},
                    {"norm_exp_contour", "1"},
                    {"norm_exp_reference", "1"},
                    {"rel_error", "1"},
                    {"law_defect", "1"},
                    {"contour_defect", "1"}});
    double exp_rel = 0.0, law = 0.0, contour = 0.0, frac = 0.0, frac_law = 0.0, identity = 0.0;
    ContourSpec alt;
    alt.eta = 0.6 * std::numbers::pi;
    alt.radius_scale = 2.0;
    std::mt19937 xrng(cfg.seed + 1);
    std::normal_distribution<double> g(0.0, 1.0);
    for (std::size_t mi = 0; mi < mats.size(); ++mi) {
        const Matrix& a = mats[mi];
        if (!(spectral_bound(a) < 0.0)) throw DomainError("semigroup: matrix " + std::to_string(mi) + " is not stable");
        const double an = std::max(op_norm(a), 1e-300);
        for (std::size_t k = 0; k < times.size(); ++k) {
            const double t = times[k];
            const Matrix e = exp_matrix(a, t);
            const Matrix ref = (t * a).exp();
            const double err = op_norm(e - ref) / std::max(op_norm(ref), 1e-300);
            // Semigroup law with s = t / 3 and an independent contour shape.
            const Matrix es = exp_matrix(a, t / 3.0), et = exp_matrix(a, 2.0 * t / 3.0);
            const double ld = op_norm(es * et - e) / std::max(op_norm(e), 1e-300);
            const double cd = op_norm(exp_matrix(a, t, alt) - e) / std::max(op_norm(e), 1e-300);
            exp_rel = std::max(exp_rel, err);
            law = std::max(law, ld);
            contour = std::max(contour, cd);
            table.row({static_cast<double>(mi), static_cast<double>(a.rows()), t, op_norm(e), op_norm(ref), err, ld, cd});
        }
        const Matrix ainv = a.inverse();
        const auto fp = frac_power_inv(a, rhos);
        for (std::size_t r = 0; r < rhos.size(); ++r)
            if (std::abs(rhos[r] - 1.0) < 1e-15) frac = std::max(frac, op_norm(fp[r] + ainv) / op_norm(ainv));
        if (rhos.size() >= 2) {
            const Matrix sum = frac_power_inv(a, rhos[0] + rhos[1]);
            frac_law = std::max(frac_law, op_norm(fp[0] * fp[1] - sum) / std::max(op_norm(sum), 1e-300));
        }
        Vector x(a.rows());
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) = g(xrng);
        identity = std::max(identity, verify_integral_identity(a, times.back(), x) / (an * x.norm()));
    }
    run.csv("semigroup.csv", table);
    run.check("exp relative error vs reference", exp_rel <= cfg.tol("exp_rel"), exp_rel, cfg.tol("exp_rel"));
    run.check("semigroup law defect", law <= cfg.tol("law"), law, cfg.tol("law"));
    run.check("contour invariance defect", contour <= cfg.tol("contour"), contour, cfg.tol("contour"));
    if (std::find(rhos.begin(), rhos.end(), 1.0) != rhos.end())
        run.check("fractional power at rho = 1 vs -A^-1", frac <= cfg.tol("frac"), frac, cfg.tol("frac"));
    if (rhos.size() >= 2)
        run.check("fractional power composition", frac_law <= cfg.tol("frac_law"), frac_law, cfg.tol("frac_law"));
    run.check("integral identity residual (relative)", identity <= cfg.tol("identity"), identity, cfg.tol("identity"));
    run.results() = {{"matrices", mats.size()}, {"times", times},        {"exp_rel", exp_rel},     {"law", law},
                     {"contour", contour},      {"frac", frac},          {"frac_law", frac_law},   {"identity", identity}};
    return run.finish();
}

inline RunResult run_hypo_check(const ExperimentConfig& cfg) {
    const auto& p = cfg.payload;
    detail::allow_keys(p, "hypotheses", {"family", "rho", "grid", "pairs", "scan"});
    if (!p.contains("family")) throw ConfigError("hypotheses: missing \"family\"");
    const auto fam = family_from_json(p.at("family"));
    const double rho = detail::get_or(p, "rho", 1.5);
    double q = 0.8, ratio = 1e-3;
    if (p.contains("grid")) {
        detail::allow_keys(p.at("grid"), "hypotheses.grid", {"q", "t_min_ratio"});
        q = detail::get_or(p.at("grid"), "q", q);
        ratio = detail::get_or(p.at("grid"), "t_min_ratio", ratio);
    }
    if (!(q > 0.0 && q < 1.0 && ratio > 0.0 && ratio < 1.0)) throw ConfigError("hypotheses.grid: need q, t_min_ratio in (0,1)");
    HypothesisOptions opt;
    opt.pairs = detail::get_or(p, "pairs", opt.pairs);
    opt.seed = cfg.seed;
    const auto grid = hypothesis_grid(fam.horizon(), q, ratio);

    detail::Run run(cfg);
    const auto rep = check_hypotheses(fam, rho, grid, opt);
    CsvTable table({{"tau", "time"}, {"s", "time"}, {"t", "time"}, {"c1_sample", "1"}, {"c2_sample", "1/time"}});
    for (const auto& smp : rep.samples) table.row({smp.tau, smp.s, smp.t, smp.first, smp.second});
    run.csv("hypotheses.csv", table);
    run.results() = to_json(rep);
    run.results().erase("samples");
    if (detail::get_or(p, "scan", false)) {
        const auto sc = scan_rho(fam, grid, opt);
        run.results()["rho_scan"] = to_json(sc);
        CsvTable st({{"rho", "1"}, {"c2_est", "1/time"}, {"c2_refined", "1/time"}});
        for (std::size_t i = 0; i < sc.rho.size(); ++i) st.row({sc.rho[i], sc.c2_est[i], sc.c2_refined[i]});
        run.csv("rho_scan.csv", st);
    }
    run.check("first constant stable under refinement", rep.c1_stable, rep.c1_refined / std::max(rep.c1_est, 1e-300),
              opt.stability_factor);
    run.check("second constant stable under refinement", rep.c2_stable, rep.c2_refined / std::max(rep.c2_est, 1e-300),
              opt.stability_factor);
    run.check("inverse decays toward the origin", rep.inv_decay_ok, rep.inv_decay.empty() ? 0.0 : rep.inv_decay.back().second,
              0.0);
    return run.finish();
}

inline RunResult run_evolve(const ExperimentConfig& cfg) {
    const auto& p = cfg.payload;
    detail::allow_keys(p, "evolution", {"family", "method", "t_min", "intervals", "tol", "rho", "bounds"});
    if (!p.contains("family")) throw ConfigError("evolution: missing \"family\"");
    const auto fam = family_from_json(p.at("family"));
    const auto method = detail::method_from(detail::get_or<std::string>(p, "method", "ode"));
    const double t_min = detail::get_or(p, "t_min", 1e-3 * fam.horizon());
    const int intervals = detail::get_or(p, "intervals", 48);
    const double tol = detail::get_or(p, "tol", 1e-10);
    const double rho = detail::get_or(p, "rho", 1.5);
    if (!(t_min > 0.0 && t_min < fam.horizon()) || intervals < 2) throw ConfigError("evolution: need 0 < t_min < T, intervals >= 2");

    detail::Run run(cfg);
    const auto mesh = evolution_mesh(t_min, fam.horizon(), intervals);
    const auto grid = detail::build_evolution(fam, mesh, method, tol);
    const double cocycle = grid.cocycle_defect();
    run.check("cocycle defect", cocycle <= cfg.tol("cocycle"), cocycle, cfg.tol("cocycle"));
    CsvTable blocks({{"tau", "time"}, {"norm_U_T_tau", "1"}});
    for (std::size_t j = 0; j < grid.size(); ++j) blocks.row({mesh[j], op_norm(grid.block(grid.size() - 1, j))});
    run.csv("propagator.csv", blocks);
    run.results() = {{"method", to_string(method)}, {"mesh_points", mesh.size()}, {"cocycle_defect", cocycle}};
    if (detail::get_or(p, "bounds", true)) {
        const auto b = verify_singular_bounds(grid, rho);
        run.results()["bounds"] = to_json(b);
        CsvTable dec({{"tau_lo", "time"}, {"tau_hi", "time"}, {"w_sup", "1"}, {"u_sup", "1"}, {"w_fit", "1"}, {"u_fit", "1"}});
        for (const auto& d : b.decades) dec.row({d.lo, d.hi, d.w_sup, d.u_sup, d.w_fit, d.u_fit});
        run.csv("decades.csv", dec);
        run.check("fitted W constant change per decade", b.w_stable, b.w_max_change, 1.25);
        run.check("fitted U constant change per decade", b.u_stable, b.u_max_change, 1.25);
        run.check("decay of U(T, t_min) relative to U(T, T/2)", b.decay_ratio < 1e-6, b.decay_ratio, 1e-6);
    }
    return run.finish();
}

inline std::vector<double> counterexample_eigenvalues(const nlohmann::json& spec) {
    if (spec.is_array()) {
        std::vector<double> v;
        for (const auto& x : spec) v.push_back(x.get<double>());
        return v;
    }
    detail::allow_keys(spec, "counterexample.eigenvalues", {"integers", "scaled"});
    if (spec.size() != 1) throw ConfigError("counterexample.eigenvalues: give exactly one of integers, scaled");
    const bool scaled = spec.contains("scaled");
    const int n = spec.begin()->get<int>();
    if (n < 1) throw ConfigError("counterexample.eigenvalues: N must be positive");
    std::vector<double> v;
    for (int k = 1; k <= n; ++k) v.push_back(scaled ? -static_cast<double>(k) / n : -static_cast<double>(k));
    return v;
}

/// Growth of (t - tau) ||A(tau) U(t, tau)|| for A(t) = diag(eigs) / t^beta and its distance to the envelope.
inline RunResult run_counterexample(const ExperimentConfig& cfg) {
    const auto& p = cfg.payload;
    detail::allow_keys(p, "counterexample", {"beta", "eigenvalues", "t", "tau_hi", "tau_lo", "points"});
    const double beta = detail::get_or(p, "beta", 1.0), t = detail::get_or(p, "t", 1.0);
    const double hi = detail::get_or(p, "tau_hi", 0.1), lo = detail::get_or(p, "tau_lo", 1e-3);
    const int points = detail::get_or(p, "points", 21);
    if (!(lo > 0.0 && lo < hi && hi < t) || points < 2) throw ConfigError("counterexample: need 0 < tau_lo < tau_hi < t");
    const auto eigs = counterexample_eigenvalues(p.value("eigenvalues", nlohmann::json{{"integers", 1024}}));

    detail::Run run(cfg);
    auto taus = geometric_grid(lo, hi, points);
    const auto rows = counterexample_scan(eigs, beta, t, taus);
    CsvTable table({{"tau", "time"}, {"value", "1"}, {"argmax_abs_lambda", "1"}, {"envelope", "1"}, {"value_over_envelope", "1"}});
    double worst = 1.0;
    for (const auto& r : rows) {
        table.row({r.tau, r.value, r.argmax, r.envelope, r.value / r.envelope});
        worst = std::max({worst, r.value / r.envelope, r.envelope / r.value});
    }
    run.csv("counterexample.csv", table);
    const double growth = rows.front().value / rows.back().value;  // tau_lo over tau_hi
    run.check("growth from tau_hi to tau_lo", growth >= cfg.tol("growth_min"), growth, cfg.tol("growth_min"));
    run.check("envelope factor", worst <= cfg.tol("envelope_factor"), worst, cfg.tol("envelope_factor"));
    run.results() = {{"growth", growth}, {"envelope_factor", worst}, {"eigenvalues", eigs.size()}, {"rows", to_json(rows)}};
    return run.finish();
}

/// Maximal-regularity ratios over random Hölder data on successively refined meshes.
inline RunResult run_solve_scp(const ExperimentConfig& cfg) {
    const auto& p = cfg.payload;
    detail::allow_keys(p, "cauchy", {"family", "class", "alpha", "rho", "t_min", "intervals", "samples", "method", "tol"});
    if (!p.contains("family")) throw ConfigError("cauchy: missing \"family\"");
    const auto fam = family_from_json(p.at("family"));
    const auto cls_s = detail::get_or<std::string>(p, "class", "vanishing");
    if (cls_s != "vanishing" && cls_s != "weighted") throw ConfigError("cauchy.class must be vanishing or weighted");
    const auto cls = cls_s == "vanishing" ? RegularityClass::vanishing : RegularityClass::weighted;
    const double alpha = detail::get_or(p, "alpha", 0.5), rho = detail::get_or(p, "rho", 1.5);
    const double t_min = detail::get_or(p, "t_min", 1e-3 * fam.horizon());
    const auto levels = detail::get_or(p, "intervals", std::vector<int>{24, 48});
    const int samples = detail::get_or(p, "samples", 20);
    const auto method = detail::method_from(detail::get_or<std::string>(p, "method", "ode"));
    const double tol = detail::get_or(p, "tol", 1e-10);
    if (!(alpha > 0.0 && alpha < 1.0) || levels.empty() || samples < 1)
        throw ConfigError("cauchy: need alpha in (0,1), at least one mesh level and one sample");

    detail::Run run(cfg);
    std::vector<EvolutionGrid> grids;
    for (int n : levels) grids.push_back(detail::build_evolution(fam, evolution_mesh(t_min, fam.horizon(), n), method, tol));
    std::vector<const EvolutionGrid*> ptrs;
    for (const auto& g : grids) ptrs.push_back(&g);
    const auto st = maxreg_study(fam, ptrs, cls, alpha, rho, samples, cfg.seed);
    CsvTable table({{"level", "index"}, {"mesh_points", "count"}, {"sample", "index"}, {"ratio", "1"}});
    for (std::size_t l = 0; l < st.ratios.size(); ++l)
        for (std::size_t s = 0; s < st.ratios[l].size(); ++s)
            table.row({static_cast<double>(l), static_cast<double>(st.mesh_sizes[l]), static_cast<double>(s), st.ratios[l][s]});
    run.csv("ratios.csv", table);
    run.results() = to_json(st);
    run.check("ratio spread max/min", st.spread <= cfg.tol("spread"), st.spread, cfg.tol("spread"));
    run.check("ratio change under refinement", st.refinement_change < 0.25, st.refinement_change, 0.25);
    run.check("origin behaviour failures", st.origin_failures == 0, st.origin_failures, 0.0);
    return run.finish();
}

// Wedge --------------------------------------------------------------------------

/// Coefficients of a boundary datum: {"coefficients": [[re, im], ...]} for m = -M..M, or
/// {"forms": [{"form": "constant"|"cos"|"sin", "mode": m, "amplitude": a}, ...]}.
inline std::vector<cplx> wedge_datum(const nlohmann::json& j, int n_modes, const std::string& what) {
    std::vector<cplx> c(static_cast<std::size_t>(2 * n_modes + 1), 0.0);
    if (j.is_null()) return c;
    detail::allow_keys(j, what, {"coefficients", "forms"});
    if (j.contains("coefficients")) {
        const auto& a = j.at("coefficients");
        if (!a.is_array() || a.size() != c.size()) throw ConfigError(what + ": need 2 n_modes + 1 coefficients");
        for (std::size_t i = 0; i < c.size(); ++i) {
            if (a[i].is_number()) c[i] = a[i].get<double>();
            else if (a[i].is_array() && a[i].size() == 2) c[i] = {a[i][0].get<double>(), a[i][1].get<double>()};
            else throw ConfigError(what + ": coefficients are numbers or [re, im] pairs");
        }
    }
    if (j.contains("forms"))
        for (const auto& f : j.at("forms")) {
            detail::allow_keys(f, what + ".forms", {"form", "mode", "amplitude", "value"});
            const auto form = detail::get_or<std::string>(f, "form", "");
            const int m = detail::get_or(f, "mode", 0);
            const double a = detail::get_or(f, "amplitude", detail::get_or(f, "value", 1.0));
            if (m < 0 || m > n_modes) throw ConfigError(what + ": form mode outside 0..n_modes");
            auto at = [&](int k) -> cplx& { return c[static_cast<std::size_t>(k + n_modes)]; };
            if (form == "constant") {
                at(0) += a;
            } else if (form == "cos" && m > 0) {
                at(m) += a / 2.0;
                at(-m) += a / 2.0;
            } else if (form == "sin" && m > 0) {
                at(m) += cplx(0.0, -a / 2.0);
                at(-m) += cplx(0.0, a / 2.0);
            } else {
                throw ConfigError(what + ": form must be constant, or cos/sin with mode >= 1");
            }
        }
    return c;
}

inline WedgeProblem wedge_problem_from_json(const nlohmann::json& j, int threads) {
    detail::allow_keys(j, "wedge.problem", {"L", "n_modes", "n_y", "T", "t_min", "n_t", "alpha", "g", "h", "n_x", "method", "tol"});
    WedgeProblem p;
    p.L = detail::get_or(j, "L", p.L);
    p.n_modes = detail::get_or(j, "n_modes", p.n_modes);
    p.n_y = detail::get_or(j, "n_y", p.n_y);
    p.T = detail::get_or(j, "T", p.T);
    p.t_min = detail::get_or(j, "t_min", p.t_min);
    p.n_t = detail::get_or(j, "n_t", p.n_t);
    p.alpha = detail::get_or(j, "alpha", p.alpha);
    p.n_x = detail::get_or(j, "n_x", p.n_x);
    p.tol = detail::get_or(j, "tol", p.tol);
    p.method = detail::method_from(detail::get_or<std::string>(j, "method", "ode"));
    if (p.n_modes < 0) throw ConfigError("wedge.problem: n_modes must be >= 0");
    p.g = wedge_datum(j.value("g", nlohmann::json()), p.n_modes, "wedge.problem.g");
    p.h = wedge_datum(j.value("h", nlohmann::json()), p.n_modes, "wedge.problem.h");
    p.threads = threads;
    try {
        p.validate();
    } catch (const DomainError& e) {
        throw ConfigError(e.what());
    }
    return p;
}

/// Binary field layout: 8 bytes "SGVFLD01", uint64 rank (3), uint64 dims (n_t, n_x, n_y), then n_t n_x n_y
/// little-endian float64 values in row-major order (y fastest).
inline std::string wedge_field_binary(const WedgeSolution& sol) {
    std::string out = "SGVFLD01";
    auto put = [&](const void* p, std::size_t n) { out.append(static_cast<const char*>(p), n); };
    const std::uint64_t dims[4] = {3, sol.mesh.size(), sol.x.size(), sol.y.size()};
    put(dims, sizeof dims);
    for (const auto& slab : sol.field)
        for (const auto& row : slab) put(row.data(), row.size() * sizeof(double));
    return out;
}

inline RunResult run_wedge(const ExperimentConfig& cfg) {
    const auto& p = cfg.payload;
    detail::allow_keys(p, "wedge", {"problem", "field", "residual_levels", "pullback"});
    const auto prob = wedge_problem_from_json(p.value("problem", nlohmann::json::object()), cfg.threads);
    const auto field = detail::get_or<std::string>(p, "field", "csv");
    if (field != "csv" && field != "binary" && field != "none") throw ConfigError("wedge.field must be csv, binary or none");
    const auto levels = detail::get_or(p, "residual_levels", std::vector<int>{});

    detail::Run run(cfg);
    const auto sol = solve_wedge(prob);
    const auto res = residual_check(sol);
    nlohmann::json reg = nlohmann::json::array();
    for (const auto& r : wedge_regularity(sol)) reg.push_back(to_json(r));
    run.results() = {{"residual", to_json(res)}, {"max_imag", sol.max_imag}, {"regularity", reg},
                     {"mesh", sol.mesh},         {"x", sol.x},               {"y", sol.y}};
    run.check("imaginary part after synthesis", sol.max_imag <= cfg.tol("imag"), sol.max_imag, cfg.tol("imag"));
    run.check("Dirichlet boundary error", res.dirichlet <= cfg.tol("dirichlet"), res.dirichlet, cfg.tol("dirichlet"));
    for (const auto& r : wedge_regularity(sol))
        run.check("finite regularity norms, mode " + std::to_string(r.m),
                  std::isfinite(r.vdot.norm) && std::isfinite(r.av.norm), r.vdot.norm + r.av.norm, INFINITY);
    if (detail::get_or(p, "pullback", true)) run.results()["pullback"] = to_json(pullback_check(sol));
    if (!levels.empty()) {
        const auto st = residual_study(prob, levels);
        run.results()["residual_study"] = to_json(st);
        for (std::size_t l = 0; l < st.interior_ratios.size(); ++l)
            run.check("interior residual ratio, n_y " + std::to_string(levels[l]) + " -> " + std::to_string(levels[l + 1]),
                      st.interior_ratios[l] >= cfg.tol("residual_ratio"), st.interior_ratios[l], cfg.tol("residual_ratio"));
    }

    if (field == "csv") {
        CsvTable t({{"t", "time"}, {"x", "length"}, {"eta", "1"}, {"u", "1"}});
        for (std::size_t i = 0; i < sol.mesh.size(); ++i)
            for (std::size_t j = 0; j < sol.x.size(); ++j)
                for (std::size_t k = 0; k < sol.y.size(); ++k) t.row({sol.mesh[i], sol.x[j], sol.y[k], sol.field[i][j][k]});
        run.csv("field.csv", t);
    } else if (field == "binary") {
        run.binary("field.bin", wedge_field_binary(sol));
    }
    // Plot-ready slices: the final time, and x = 0 over time.
    CsvTable last({{"x", "length"}, {"eta", "1"}, {"u", "1"}});
    for (std::size_t j = 0; j < sol.x.size(); ++j)
        for (std::size_t k = 0; k < sol.y.size(); ++k) last.row({sol.x[j], sol.y[k], sol.field.back()[j][k]});
    run.csv("slice_final_time.csv", last);
    const auto j0 = static_cast<std::size_t>(
        std::min_element(sol.x.begin(), sol.x.end(), [](double a, double b) { return std::abs(a) < std::abs(b); }) - sol.x.begin());
    CsvTable mid({{"t", "time"}, {"eta", "1"}, {"y", "length"}, {"u", "1"}});
    for (std::size_t i = 0; i < sol.mesh.size(); ++i)
        for (std::size_t k = 0; k < sol.y.size(); ++k)
            mid.row({sol.mesh[i], sol.y[k], sol.mesh[i] * sol.y[k], sol.field[i][j0][k]});
    run.csv("slice_x0.csv", mid);
    return run.finish();
}

// Report -------------------------------------------------------------------------

struct SurrogateRow {
    std::string id;
    std::string title;
};

/// Verified statements, in the order of the summary.
inline const std::vector<SurrogateRow>& surrogate_rows() {
    static const std::vector<SurrogateRow> rows{
        {"semigroup", "contour semigroup, fractional powers and the integral identity"},
        {"hypotheses", "structural hypotheses on the singular family"},
        {"evolution", "evolution operator construction (cocycle law)"},
        {"singular_bounds", "singular estimates for A(tau)U(t,tau) and decay at the origin"},
        {"maxreg_vanishing", "maximal regularity, vanishing Hölder class"},
        {"maxreg_weighted", "maximal regularity, weighted Hölder class"},
        {"counterexample", "growth of (t - tau) ||A(tau)U(t,tau)|| for beta = 1"},
        {"wedge", "wedge problem: lifted solution and residuals"}};
    return rows;
}

namespace detail {

// Row ids a run report contributes to, with the pass flag of the relevant checks.
inline std::vector<std::pair<std::string, bool>> row_status(const nlohmann::json& rep) {
    const auto cmd = rep.at("command").get<std::string>();
    const bool pass = rep.at("pass").get<bool>();
    if (cmd == "semigroup-check") return {{"semigroup", pass}};
    if (cmd == "hypo-check") return {{"hypotheses", pass}};
    if (cmd == "counterexample") return {{"counterexample", pass}};
    if (cmd == "wedge") return {{"wedge", pass}};
    if (cmd == "solve-scp") {
        const auto cls = rep.at("config").at("cauchy").value("class", std::string("vanishing"));
        return {{cls == "weighted" ? "maxreg_weighted" : "maxreg_vanishing", pass}};
    }
    if (cmd == "evolve") {
        bool cocycle = true, bounds = true, has_bounds = false;
        for (const auto& c : rep.at("checks")) {
            const auto what = c.at("check").get<std::string>();
            if (what == "cocycle defect") cocycle = c.at("pass").get<bool>();
            else {
                has_bounds = true;
                bounds = bounds && c.at("pass").get<bool>();
            }
        }
        std::vector<std::pair<std::string, bool>> out{{"evolution", cocycle}};
        if (has_bounds) out.emplace_back("singular_bounds", bounds);
        return out;
    }
    return {};
}

// Headline numbers of a run for the summary.
inline nlohmann::json headline(const nlohmann::json& rep) {
    const auto& r = rep.at("results");
    const auto cmd = rep.at("command").get<std::string>();
    nlohmann::json h = nlohmann::json::object();
    auto copy = [&](const char* key) {
        if (r.contains(key)) h[key] = r.at(key);
    };
    if (cmd == "semigroup-check") for (const char* k : {"exp_rel", "law", "contour", "frac", "frac_law", "identity"}) copy(k);
    if (cmd == "hypo-check") for (const char* k : {"c1_est", "c1_refined", "c2_est", "c2_refined", "omega_est"}) copy(k);
    if (cmd == "counterexample") for (const char* k : {"growth", "envelope_factor"}) copy(k);
    if (cmd == "solve-scp") for (const char* k : {"spread", "refinement_change"}) copy(k);
    if (cmd == "evolve") {
        copy("cocycle_defect");
        if (r.contains("bounds"))
            for (const char* k : {"w_sup", "u_sup", "w_max_change", "u_max_change", "decay_ratio"}) h[k] = r.at("bounds").at(k);
    }
    if (cmd == "wedge") {
        h["residual_interior"] = r.at("residual").at("interior");
        if (r.contains("residual_study")) h["residual_ratios"] = r.at("residual_study").at("interior_ratios");
    }
    return h;
}

}  // namespace detail

/// Merges <output_dir>/*/report.json into summary.json and summary.csv.
inline RunResult run_report(const ExperimentConfig& cfg) {
    namespace fs = std::filesystem;
    const fs::path root(cfg.output_dir);
    std::vector<fs::path> files;
    if (fs::is_directory(root))
        for (const auto& e : fs::directory_iterator(root))
            if (e.is_directory() && fs::exists(e.path() / "report.json")) files.push_back(e.path() / "report.json");
    std::sort(files.begin(), files.end());
    if (files.empty()) throw MissingArtifacts("report: no run reports under " + root.string());

    std::map<std::string, nlohmann::json> rows;
    for (const auto& f : files) {
        std::ifstream in(f);
        nlohmann::json rep;
        try {
            rep = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw MissingArtifacts("report: unreadable " + f.string() + ": " + e.what());
        }
        if (rep.value("command", std::string()) == "report") continue;
        for (const auto& [id, ok] : detail::row_status(rep)) {
            auto& row = rows[id];
            if (row.is_null()) row = {{"pass", true}, {"runs", nlohmann::json::array()}};
            row["pass"] = row["pass"].get<bool>() && ok;
            row["runs"].push_back({{"name", rep.at("name")}, {"pass", ok}, {"values", detail::headline(rep)}});
        }
    }

    ExperimentConfig rc = cfg;
    rc.name = "summary";
    nlohmann::json table = nlohmann::json::array();
    CsvTable csv({{"row", "index"}, {"status", "1=pass 0=fail -1=not run"}, {"runs", "count"}});
    std::vector<std::string> failures;
    for (std::size_t i = 0; i < surrogate_rows().size(); ++i) {
        const auto& sr = surrogate_rows()[i];
        const auto it = rows.find(sr.id);
        std::string status = "not run";
        nlohmann::json runs = nlohmann::json::array();
        if (it != rows.end()) {
            status = it->second.at("pass").get<bool>() ? "pass" : "fail";
            runs = it->second.at("runs");
        }
        if (status == "fail") failures.push_back(sr.id + ": " + sr.title);
        table.push_back({{"id", sr.id}, {"statement", sr.title}, {"status", status}, {"runs", runs}});
        csv.row({static_cast<double>(i), status == "pass" ? 1.0 : status == "fail" ? 0.0 : -1.0, static_cast<double>(runs.size())});
    }
    RunResult res;
    res.command = "report";
    res.name = "summary";
    res.dir = root;
    res.failures = failures;
    res.report = {{"command", "report"}, {"config", cfg.to_json()}, {"pass", failures.empty()}, {"failures", failures},
                  {"rows", table}};
    detail::write_file(root / "summary.json", res.report.dump(2) + "\n");
    detail::write_file(root / "summary.csv", csv.str());
    return res;
}

inline RunResult run_experiment(const ExperimentConfig& cfg) {
    if (cfg.command == "semigroup-check") return run_semigroup_check(cfg);
    if (cfg.command == "hypo-check") return run_hypo_check(cfg);
    if (cfg.command == "evolve") return run_evolve(cfg);
    if (cfg.command == "counterexample") return run_counterexample(cfg);
    if (cfg.command == "solve-scp") return run_solve_scp(cfg);
    if (cfg.command == "wedge") return run_wedge(cfg);
    if (cfg.command == "report") return run_report(cfg);
    throw ConfigError("unknown command \"" + cfg.command + "\"");
}

/// Exit codes: 0 every check passed, 2 configuration or missing input, 3 numerical failure.
enum ExitCode : int { exit_pass = 0, exit_config = 2, exit_numerical = 3 };

}  // namespace singevo
