#pragma once

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "smalljump.hpp"
#include "io/csv.hpp"
#include "io/manifest.hpp"
#include "io/model_file.hpp"

namespace smalljump::cli {

using nlohmann::json;

// Parsed invocation: every field needed to reproduce a run, except the output directory.
struct Invocation {
    json config;
    std::string out;
};

namespace detail {

inline std::string sci(double v, int digits = 5) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*e", digits, v);
    return buf;
}

inline std::string fixed(double v, int digits = 6) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%.*g", digits, v);
    return buf;
}

inline double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

inline Scheme parse_scheme(const std::string& s) {
    if (s == "gaussian_substitution" || s == "gaussian") return Scheme::gaussian_substitution;
    if (s == "truncation_only" || s == "truncation") return Scheme::truncation_only;
    if (s == "reference") return Scheme::reference;
    throw ConfigError("scheme: expected gaussian_substitution, truncation_only or reference (got '" + s + "')");
}

inline Stepper parse_stepper(const std::string& s) {
    if (s == "euler") return Stepper::euler;
    if (s == "weak2") return Stepper::weak2;
    throw ConfigError("stepper: expected euler or weak2 (got '" + s + "')");
}

inline void check_eps(double e, const std::string& what = "eps") {
    if (!(e > 0.0 && e <= 1.0)) throw ConfigError(what + " out of (0,1]");
}

template <class T>
T get(const json& o, const char* key) {
    auto it = o.find(key);
    if (it == o.end()) throw ConfigError(std::string("config: missing option '") + key + "'");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError(std::string("config: option '") + key + "' has the wrong type");
    }
}

inline void precheck(const json& cfg, const LevyModel& model, const SectorSettings& sector, std::ostream& err) {
    if (cfg.value("skip_checks", false)) return;
    const auto rep = check_hypotheses(model, sector);
    if (const auto* f = rep.first_failure())
        throw HypothesisError("hypothesis check failed: " + f->condition + " (worst margin " +
                              fixed(f->worst_margin) + ", " + f->detail + ")");
    (void)err;
}

}  // namespace detail

// Command bodies. Each reads only `cfg` and writes artifacts under `out`.

inline int run_eta(const json& cfg, const std::string& out, std::ostream& os) {
    const json& o = cfg["options"];
    LevyModel model;
    if (!o["rho"].is_null()) {
        const double rho = o["rho"].get<double>();
        if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho out of [0,1)");
        model.mu = LevyMeasure::truncated_stable(rho);
        model.env.bar = PowerEnvelope{detail::get<double>(o, "sigma_bar"), 1.0};
    } else {
        model = io::model_from_json(cfg["model"]).model;
    }
    const auto ps = detail::get<std::vector<int>>(o, "p");
    const auto epss = detail::get<std::vector<double>>(o, "eps");
    for (double e : epss) detail::check_eps(e);
    for (int p : ps)
        if (p < 1) throw ConfigError("p must be >= 1");
    io::CsvTable t({"p", "eps", "eta_p"});
    const bool single = ps.size() == 1 && epss.size() == 1;
    for (int p : ps)
        for (double e : epss) {
            const double v = eta_p(model, p, e);
            t.row() << p << e << v;
            if (single)
                os << detail::sci(v) << "\n";
            else
                os << "p=" << p << " eps=" << detail::fixed(e) << " eta=" << detail::sci(v) << "\n";
        }
    if (!out.empty()) {
        io::RunManifest man(out, cfg);
        man.write("eta.csv", t);
        man.finish();
    }
    return 0;
}

inline int run_coeffs(const json& cfg, const std::string& out, std::ostream& os, std::ostream& err) {
    const json& o = cfg["options"];
    const auto spec = io::model_from_json(cfg["model"]);
    detail::precheck(cfg, spec.model, spec.sector, err);
    const auto epss = detail::get<std::vector<double>>(o, "eps");
    for (double e : epss) detail::check_eps(e);
    const double s = detail::get<double>(o, "s");
    const double x_min = detail::get<double>(o, "x_min"), x_max = detail::get<double>(o, "x_max");
    const int nx = detail::get<int>(o, "nx");
    if (nx < 1 || !(x_max >= x_min)) throw ConfigError("coeffs: need nx >= 1 and x_max >= x_min");
    io::CsvTable t({"eps", "s", "x", "b_eps", "a_eps", "c_eps"});
    os << "eps s x b_eps a_eps\n";
    for (double e : epss)
        for (int i = 0; i < nx; ++i) {
            const double x = nx == 1 ? x_min : x_min + (x_max - x_min) * i / (nx - 1);
            const double b = b_eps(spec.model, s, x, e);
            const double a = a_eps(spec.model, s, x, e);
            t.row() << e << s << x << b << a << std::sqrt(a);
            os << detail::fixed(e) << " " << detail::fixed(s) << " " << detail::fixed(x) << " " << detail::sci(b)
               << " " << detail::sci(a) << "\n";
        }
    if (!out.empty()) {
        io::RunManifest man(out, cfg);
        man.write("coeffs.csv", t);
        man.finish();
    }
    return 0;
}

inline int run_check(const json& cfg, const std::string& out, std::ostream& os) {
    const auto spec = io::model_from_json(cfg["model"]);
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = check_hypotheses(spec.model, spec.sector);
    io::CsvTable t({"condition", "worst_margin", "pass", "detail"});
    json j = json::array();
    for (const auto& c : rep.checks) {
        t.row() << c.condition << c.worst_margin << c.pass << c.detail;
        j.push_back({{"condition", c.condition},
                     {"worst_margin", std::isfinite(c.worst_margin) ? json(c.worst_margin) : json(nullptr)},
                     {"pass", c.pass},
                     {"detail", c.detail}});
        os << (c.pass ? "pass " : "FAIL ") << c.condition << " margin=" << detail::fixed(c.worst_margin) << " "
           << c.detail << "\n";
    }
    if (!out.empty()) {
        io::RunManifest man(out, cfg);
        man.write("hypotheses.csv", t);
        man.write("hypotheses.json", json{{"all_pass", rep.all_pass()}, {"checks", j}}.dump(2) + "\n");
        man.timing("check", detail::seconds_since(t0));
        man.finish();
    }
    if (const auto* f = rep.first_failure())
        throw HypothesisError("hypothesis check failed: " + f->condition + " (" + f->detail + ")");
    return 0;
}

inline int run_splitting_check(const json& cfg, const std::string& out, std::ostream& os, std::ostream& err) {
    const json& o = cfg["options"];
    const auto spec = io::model_from_json(cfg["model"]);
    detail::precheck(cfg, spec.model, spec.sector, err);
    const auto bands = detail::get<std::vector<int>>(o, "bands");
    const auto N = detail::get<std::size_t>(o, "N");
    if (N < 2) throw ConfigError("splitting-check: N must be >= 2");
    const auto seed = detail::get<std::uint64_t>(cfg, "seed");
    const int workers = detail::get<int>(cfg, "workers");
    const auto nu = spec.model.nu();
    io::CsvTable t({"band", "N", "ks_stat", "p_xi_emp", "p_xi_exact"});
    const auto t0 = std::chrono::steady_clock::now();
    for (int k : bands) {
        const auto r = split_law_check(nu, spec.sector, k, N, seed, workers);
        t.row() << k << N << r.ks_stat << r.p_xi_emp << r.p_xi_exact;
        os << "band " << k << " ks=" << detail::fixed(r.ks_stat, 4) << " p_xi=" << detail::fixed(r.p_xi_emp)
           << " exact=" << detail::fixed(r.p_xi_exact) << "\n";
    }
    io::RunManifest man(out, cfg);
    man.write("splitting.csv", t);
    man.timing("splitting", detail::seconds_since(t0));
    man.finish();
    return 0;
}

inline int run_simulate(const json& cfg, const std::string& out, std::ostream& os, std::ostream& err) {
    const json& o = cfg["options"];
    const auto spec = io::model_from_json(cfg["model"]);
    detail::precheck(cfg, spec.model, spec.sector, err);
    PathConfig pc;
    pc.x0 = detail::get<double>(o, "x0");
    pc.T = detail::get<double>(o, "T");
    pc.eps = detail::get<double>(o, "eps");
    pc.eps_ref = detail::get<double>(o, "eps_ref");
    pc.n_steps = detail::get<int>(o, "n_steps");
    pc.ref_step_factor = detail::get<int>(o, "ref_step_factor");
    pc.scheme = detail::parse_scheme(detail::get<std::string>(o, "scheme"));
    pc.stepper = detail::parse_stepper(detail::get<std::string>(o, "stepper"));
    pc.seed = detail::get<std::uint64_t>(cfg, "seed");
    detail::check_eps(pc.eps);
    pc.validate();
    const auto N = detail::get<std::size_t>(o, "N");
    const auto n_export = std::min<std::size_t>(detail::get<std::size_t>(o, "export_paths"), N);
    const bool summary_only = detail::get<bool>(o, "summary_only");
    const bool transformed = detail::get<bool>(o, "transformed");
    const int space_res = detail::get<int>(o, "space_resolution");
    const int workers = detail::get<int>(cfg, "workers");
    if (N < 1) throw ConfigError("simulate: N must be >= 1");
    if (transformed && pc.scheme != Scheme::gaussian_substitution)
        throw ConfigError("simulate: --transformed applies to gaussian_substitution only");

    const auto t0 = std::chrono::steady_clock::now();
    std::vector<double> xT(N);
    std::vector<Trajectory> shown(n_export);
    std::optional<PathSimulator> sim;
    if (!transformed) sim.emplace(spec.model, spec.sector, pc);
    parallel_for(N, workers, [&](std::size_t i) {
        if (transformed) {
            PathConfig c = pc;
            c.path_index = i;
            auto tr = euler_transformed(spec.model, spec.sector, c, pc.n_steps, space_res);
            xT[i] = tr.states.back();
            if (i < n_export) shown[i] = std::move(tr);
        } else if (i < n_export) {
            shown[i] = sim->simulate(i);
            xT[i] = shown[i].states.back();
        } else {
            xT[i] = sim->terminal(i);
        }
    });
    for (double v : xT)
        if (!std::isfinite(v)) throw NumericalError("simulate: non-finite terminal value");
    const double elapsed = detail::seconds_since(t0);

    const auto m = mean_estimate(xT);
    double var = 0.0, lo = xT[0], hi = xT[0];
    for (double v : xT) {
        var += (v - m.mean) * (v - m.mean);
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    var = N > 1 ? var / static_cast<double>(N - 1) : 0.0;
    const double level = pc.level();
    io::CsvTable summary({"scheme", "eps", "level", "M", "N", "T", "n_steps", "mean", "se", "variance", "min", "max"});
    summary.row() << (transformed ? std::string("transformed_euler") : to_string(pc.scheme)) << pc.eps << level
                  << snap_level(1.0 / level) << N << pc.T << pc.steps() << m.mean << m.se << var << lo << hi;
    os << "mean X_T = " << detail::fixed(m.mean, 8) << " +- " << detail::fixed(m.se, 4) << " (N=" << N << ")\n";

    io::RunManifest man(out, cfg);
    man.write("summary.csv", summary);
    if (!summary_only) {
        io::CsvTable term({"path_index", "X_T"});
        for (std::size_t i = 0; i < N; ++i) term.row() << i << xT[i];
        man.write("terminals.csv", term);
        io::CsvTable paths({"path_index", "t", "X"});
        io::CsvTable events({"path_index", "time", "band", "z_tilde", "z", "xi", "v", "u", "x_before", "x_after"});
        for (std::size_t i = 0; i < n_export; ++i) {
            const auto& tr = shown[i];
            for (std::size_t j = 0; j < tr.times.size(); ++j) paths.row() << i << tr.times[j] << tr.states[j];
            for (const auto& e : tr.events)
                events.row() << i << e.time << e.band << e.z_tilde << e.z << e.split.xi << e.split.v << e.split.u
                             << e.x_before << e.x_after;
        }
        man.write("paths.csv", paths);
        man.write("events.csv", events);
    }
    man.timing("simulate", elapsed);
    man.finish();
    return 0;
}

inline int run_distance(const json& cfg, const std::string& out, std::ostream& os, std::ostream& err) {
    const json& o = cfg["options"];
    const auto spec = io::model_from_json(cfg["model"]);
    detail::precheck(cfg, spec.model, spec.sector, err);
    LadderConfig lc;
    lc.eps_grid = detail::get<std::vector<double>>(o, "eps");
    lc.eps_refs = detail::get<std::vector<double>>(o, "eps_ref");
    lc.x0 = detail::get<double>(o, "x0");
    lc.T = detail::get<double>(o, "T");
    lc.n_steps = detail::get<int>(o, "n_steps");
    lc.ref_step_factor = detail::get<int>(o, "ref_step_factor");
    lc.stepper = detail::parse_stepper(detail::get<std::string>(o, "stepper"));
    lc.N = detail::get<std::size_t>(o, "N");
    lc.rank_coupling = detail::get<bool>(o, "rank_coupling");
    lc.control_variate = detail::get<bool>(o, "control_variate");
    lc.truncation = detail::get<bool>(o, "truncation");
    lc.seed = detail::get<std::uint64_t>(cfg, "seed");
    lc.workers = detail::get<int>(cfg, "workers");
    for (double e : lc.eps_grid) detail::check_eps(e);
    lc.validate();
    const bool with_tv = detail::get<bool>(o, "tv");
    TvOptions tv;
    tv.bandwidth_factor = detail::get<double>(o, "bandwidth_factor");
    tv.seed = lc.seed;

    const auto t0 = std::chrono::steady_clock::now();
    const auto lad = run_ladder(spec.model, spec.sector, lc);
    const double t_sim = detail::seconds_since(t0);
    const auto family = family_for(lad.terminal[0]);

    io::CsvTable rows({"eps", "scheme", "eps_ref", "d3", "d3_stderr", "argmax", "tv", "tv_stderr", "eta3", "eta1", "N",
                       "seed", "bandwidth_factor"});
    io::CsvTable fits({"eps_ref", "scheme", "metric", "slope", "intercept", "r2", "used", "flag"});
    io::CsvTable plot({"eps_ref", "scheme", "ln_eps", "ln_d3", "ln_tv", "ln_eta3"});
    auto fit_row = [&](double ref, const std::string& scheme, const std::string& metric, const RateFit& f) {
        fits.row() << ref << scheme << metric << f.slope << f.intercept << f.r2 << f.used
                   << (f.ok ? std::string("ok") : f.flag);
        os << "eps_ref=" << detail::fixed(ref) << " " << scheme << " " << metric << " slope="
           << (f.ok ? detail::fixed(f.slope, 4) : f.flag) << (f.ok ? " r2=" + detail::fixed(f.r2, 5) : "") << "\n";
    };
    const auto t1 = std::chrono::steady_clock::now();
    for (std::size_t r = 0; r < lad.n_refs; ++r) {
        const auto rep = distance_report(spec.model, lad, family, r, with_tv, tv);
        for (const auto& d : rep.rows) {
            rows.row() << d.eps << d.scheme << d.eps_ref << d.d3 << d.d3_stderr << d.argmax << d.tv << d.tv_stderr
                       << d.eta3 << d.eta1 << rep.N << rep.seed << rep.bandwidth_factor;
            plot.row() << d.eps_ref << d.scheme << std::log(d.eps) << std::log(d.d3) << std::log(d.tv)
                       << std::log(d.eta3);
        }
        fit_row(rep.eps_ref, "gaussian_substitution", "d3", rep.fit_gauss);
        if (lc.truncation) fit_row(rep.eps_ref, "truncation_only", "d3", rep.fit_trunc);
        if (with_tv) fit_row(rep.eps_ref, "gaussian_substitution", "tv", rep.fit_tv);
    }
    io::RunManifest man(out, cfg);
    man.write("distance.csv", rows);
    man.write("fits.csv", fits);
    if (cfg.value("emit_plot_data", false)) man.write("plot.csv", plot);
    man.timing("ladder", t_sim);
    man.timing("estimation", detail::seconds_since(t1));
    man.finish();
    return 0;
}

inline int run_rate(const json& cfg, const std::string& out, std::ostream& os) {
    const json& o = cfg["options"];
    const auto input = detail::get<std::string>(o, "input");
    const auto metric = detail::get<std::string>(o, "metric");
    if (metric != "d3" && metric != "tv") throw ConfigError("rate: metric must be d3 or tv");
    const auto table = io::parse_csv(io::read_file(input));
    if (table.empty()) throw ConfigError(input + ": empty file");
    std::map<std::string, std::size_t> col;
    for (std::size_t i = 0; i < table[0].size(); ++i) col[table[0][i]] = i;
    for (const char* need : {"eps", "scheme", "eps_ref"})
        if (!col.count(need)) throw ConfigError(input + ": missing column '" + need + "'");
    const std::string vc = metric, sc = metric + "_stderr";
    if (!col.count(vc) || !col.count(sc)) throw ConfigError(input + ": missing column '" + vc + "' or '" + sc + "'");
    std::map<std::pair<std::string, std::string>, std::vector<RateRow>> groups;
    for (std::size_t r = 1; r < table.size(); ++r) {
        const auto& row = table[r];
        if (row.size() < table[0].size())
            throw ConfigError(input + ": line " + std::to_string(r + 1) + ": expected " +
                              std::to_string(table[0].size()) + " fields");
        try {
            groups[{row[col["eps_ref"]], row[col["scheme"]]}].push_back(
                {std::stod(row[col["eps"]]), std::stod(row[col[vc]]), std::stod(row[col[sc]])});
        } catch (const std::exception&) {
            throw ConfigError(input + ": line " + std::to_string(r + 1) + ": malformed number");
        }
    }
    io::CsvTable t({"eps_ref", "scheme", "metric", "slope", "intercept", "r2", "used", "flag"});
    for (const auto& [key, rows] : groups) {
        const auto f = rate_fit(rows);
        t.row() << key.first << key.second << metric << f.slope << f.intercept << f.r2 << f.used
                << (f.ok ? std::string("ok") : f.flag);
        os << "eps_ref=" << key.first << " " << key.second << " slope="
           << (f.ok ? detail::fixed(f.slope, 4) + " r2=" + detail::fixed(f.r2, 5) : f.flag) << "\n";
    }
    io::RunManifest man(out, cfg);
    man.write("rate.csv", t);
    man.finish();
    return 0;
}

inline int run_malliavin(const json& cfg, const std::string& out, std::ostream& os, std::ostream& err) {
    const json& o = cfg["options"];
    const auto spec = io::model_from_json(cfg["model"]);
    detail::precheck(cfg, spec.model, spec.sector, err);
    NondegeneracyConfig nc;
    nc.t = detail::get<double>(o, "t");
    nc.M_grid = detail::get<std::vector<double>>(o, "M");
    nc.p_list = detail::get<std::vector<double>>(o, "p");
    nc.N = detail::get<std::size_t>(o, "N");
    nc.n_steps = detail::get<int>(o, "n_steps");
    nc.bootstrap_resamples = detail::get<int>(o, "bootstrap");
    nc.x0 = detail::get<double>(o, "x0");
    nc.seed = detail::get<std::uint64_t>(cfg, "seed");
    nc.workers = detail::get<int>(cfg, "workers");
    if (!(nc.t > 0.0)) throw ConfigError("malliavin: t must be positive");
    for (double M : nc.M_grid)
        if (!(M >= 1.0)) throw ConfigError("malliavin: M must be >= 1");
    if (nc.N < 2) throw ConfigError("malliavin: N must be >= 2");
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = nondegeneracy_diagnostics(spec.model, spec.sector, nc);
    io::CsvTable t({"M", "p", "inv_moment", "ci_lo", "ci_hi", "degeneracy_count", "lower_bound_violations",
                    "heavy_tail", "paths"});
    for (const auto& r : rep.rows) {
        t.row() << r.M << r.p << r.inv_moment << r.ci_lo << r.ci_hi << r.degeneracy_count << r.lower_bound_violations
                << r.heavy_tail << r.paths;
        os << "M=" << detail::fixed(r.M) << " p=" << detail::fixed(r.p) << " E[sigma^-p]=" << detail::fixed(r.inv_moment)
           << " CI=[" << detail::fixed(r.ci_lo) << ", " << detail::fixed(r.ci_hi) << "] degenerate=" << r.degeneracy_count
           << " bound_violations=" << r.lower_bound_violations << "\n";
    }
    for (const auto& w : rep.warnings) err << "warning: " << w << "\n";
    if (rep.growth_flag) err << "warning: inverse moment grows monotonically with M beyond bootstrap noise\n";
    io::RunManifest man(out, cfg);
    man.write("malliavin.csv", t);
    man.timing("malliavin", detail::seconds_since(t0));
    man.finish();
    return 0;
}

inline int run_laplace(const json& cfg, const std::string& out, std::ostream& os, std::ostream& err) {
    const json& o = cfg["options"];
    const auto spec = io::model_from_json(cfg["model"]);
    detail::precheck(cfg, spec.model, spec.sector, err);
    LaplaceConfig lc;
    lc.t = detail::get<double>(o, "t");
    lc.M = detail::get<double>(o, "M");
    lc.s_grid = detail::get<std::vector<double>>(o, "s");
    lc.u_grid = detail::get<std::vector<double>>(o, "u");
    lc.N = detail::get<std::size_t>(o, "N");
    lc.seed = detail::get<std::uint64_t>(cfg, "seed");
    lc.workers = detail::get<int>(cfg, "workers");
    if (!(lc.t > 0.0)) throw ConfigError("laplace-check: t must be positive");
    if (!(lc.M >= 1.0)) throw ConfigError("laplace-check: M must be >= 1");
    if (lc.N < 2) throw ConfigError("laplace-check: N must be >= 2");
    const auto t0 = std::chrono::steady_clock::now();
    const auto rep = laplace_bound_check(spec.model, spec.sector, lc);
    io::CsvTable t({"s", "emp_laplace", "stderr", "exact", "bound", "literal_bound", "within_bound"});
    std::size_t violations = 0;
    for (const auto& r : rep.rows) {
        const bool ok = r.empirical <= r.bound + 3.0 * r.stderr_;
        violations += ok ? 0 : 1;
        t.row() << r.s << r.empirical << r.stderr_ << r.exact << r.bound << r.literal_bound << ok;
    }
    io::CsvTable lemma({"u", "m_level", "ratio", "m_level_literal", "ratio_literal", "sector_estimate"});
    for (const auto& l : rep.lemma)
        lemma.row() << l.u << l.m_level << l.ratio << l.m_level_literal << l.ratio_literal << l.sector_estimate;
    os << "M=" << detail::fixed(rep.M) << " alpha_M=" << detail::sci(rep.alpha_M) << " s-points=" << rep.rows.size()
       << " violations=" << violations << "\n";
    io::RunManifest man(out, cfg);
    man.write("laplace.csv", t);
    man.write("lemma.csv", lemma);
    man.timing("laplace", detail::seconds_since(t0));
    man.finish();
    return 0;
}

// Executes a fully specified configuration.
inline int execute(const Invocation& inv, std::ostream& os, std::ostream& err) {
    const auto& cfg = inv.config;
    const auto cmd = cfg.value("command", std::string());
    if (cmd == "eta") return run_eta(cfg, inv.out, os);
    if (cmd == "coeffs") return run_coeffs(cfg, inv.out, os, err);
    if (cmd == "check") return run_check(cfg, inv.out, os);
    if (cmd == "splitting-check") return run_splitting_check(cfg, inv.out, os, err);
    if (cmd == "simulate") return run_simulate(cfg, inv.out, os, err);
    if (cmd == "distance") return run_distance(cfg, inv.out, os, err);
    if (cmd == "rate") return run_rate(cfg, inv.out, os);
    if (cmd == "malliavin") return run_malliavin(cfg, inv.out, os, err);
    if (cmd == "laplace-check") return run_laplace(cfg, inv.out, os, err);
    throw ConfigError("unknown command '" + cmd + "'");
}

// Parses argv and runs; returns the process exit status.
inline int run(int argc, const char* const* argv, std::ostream& os = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"smalljump: Monte Carlo for SDEs with small-jump Gaussian substitution"};
    app.require_subcommand(0, 1);
    app.fallthrough();

    std::string model_path, config_path, out;
    std::uint64_t seed = 20240611;
    int workers = 1;
    bool emit_plot = false, skip_checks = false;
    app.add_option("--model", model_path, "Model definition file (JSON)");
    app.add_option("--config", config_path, "Rerun an emitted config.json");
    app.add_option("--seed", seed, "Base seed");
    app.add_option("--workers", workers, "Worker threads")->check(CLI::PositiveNumber);
    app.add_option("--out", out, "Output directory");
    app.add_flag("--emit-plot-data", emit_plot, "Write plot columns");
    app.add_flag("--skip-checks", skip_checks, "Skip the hypothesis pre-check");

    json opt = json::object();

    auto* eta = app.add_subcommand("eta", "Moment integral eta_p(eps)");
    std::optional<double> rho;
    double sigma_bar = 1.0;
    std::vector<int> eta_p_list{3};
    std::vector<double> eta_eps{0.1};
    eta->add_option("--rho", rho, "Truncated-stable index; overrides --model");
    eta->add_option("--sigma-bar", sigma_bar, "Envelope scale with --rho");
    eta->add_option("--p", eta_p_list, "Moment orders");
    eta->add_option("--eps", eta_eps, "Truncation levels");

    auto* coeffs = app.add_subcommand("coeffs", "Tables of b_eps and a_eps");
    std::vector<double> co_eps{0.4, 0.2, 0.1, 0.05};
    double co_s = 0.0, co_xmin = -5.0, co_xmax = 5.0;
    int co_nx = 11;
    coeffs->add_option("--eps", co_eps, "Truncation levels");
    coeffs->add_option("--s", co_s, "Time");
    coeffs->add_option("--x-min", co_xmin);
    coeffs->add_option("--x-max", co_xmax);
    coeffs->add_option("--nx", co_nx);

    auto* check = app.add_subcommand("check", "Hypothesis report");

    auto* split = app.add_subcommand("splitting-check", "Law identity of the splitting sampler");
    std::vector<int> sp_bands{1, 2, 5, 10};
    std::size_t sp_N = 100000;
    split->add_option("--bands", sp_bands);
    split->add_option("--N", sp_N);

    auto* sim = app.add_subcommand("simulate", "Simulate paths");
    std::string sim_scheme = "gaussian_substitution", sim_stepper = "euler";
    double sim_eps = 0.1, sim_eps_ref = 0.0125, sim_T = 1.0, sim_x0 = 0.0;
    int sim_steps = 256, sim_rf = 4, sim_space = 64;
    std::size_t sim_N = 10000, sim_export = 10;
    bool sim_summary = false, sim_transformed = false;
    sim->add_option("--scheme", sim_scheme, "gaussian_substitution | truncation_only | reference");
    sim->add_option("--stepper", sim_stepper, "euler | weak2");
    sim->add_option("--eps", sim_eps);
    sim->add_option("--eps-ref", sim_eps_ref);
    sim->add_option("--T", sim_T);
    sim->add_option("--x0", sim_x0);
    sim->add_option("--n-steps", sim_steps);
    sim->add_option("--ref-step-factor", sim_rf);
    sim->add_option("--N", sim_N);
    sim->add_option("--export-paths", sim_export, "Full trajectories written for the first K paths");
    sim->add_flag("--summary-only", sim_summary);
    sim->add_flag("--transformed", sim_transformed, "Euler scheme of the transformed equation");
    sim->add_option("--space-resolution", sim_space);

    auto* dist = app.add_subcommand("distance", "Smooth and TV distances over an eps grid");
    std::vector<double> d_eps{0.4, 0.2, 0.1, 0.05}, d_refs;
    double d_T = 1.0, d_x0 = 0.0, d_bw = 0.8;
    int d_steps = 128, d_rf = 4;
    std::size_t d_N = 100000;
    std::string d_stepper = "weak2";
    bool d_no_tv = false, d_no_rank = false, d_no_cv = false, d_no_trunc = false;
    dist->add_option("--eps", d_eps);
    dist->add_option("--eps-ref", d_refs, "Reference levels (default min eps / 8)");
    dist->add_option("--T", d_T);
    dist->add_option("--x0", d_x0);
    dist->add_option("--n-steps", d_steps);
    dist->add_option("--ref-step-factor", d_rf);
    dist->add_option("--N", d_N);
    dist->add_option("--stepper", d_stepper);
    dist->add_option("--bandwidth-factor", d_bw);
    dist->add_flag("--no-tv", d_no_tv);
    dist->add_flag("--no-rank-coupling", d_no_rank);
    dist->add_flag("--no-control-variate", d_no_cv);
    dist->add_flag("--no-truncation", d_no_trunc);

    auto* rate = app.add_subcommand("rate", "Log-log rate fits of a distance.csv");
    std::string r_input, r_metric = "d3";
    rate->add_option("--input", r_input, "distance.csv")->required();
    rate->add_option("--metric", r_metric, "d3 | tv");

    auto* mal = app.add_subcommand("malliavin", "Inverse moments of the Malliavin covariance");
    double m_t = 1.0, m_x0 = 0.0;
    std::vector<double> m_M{2, 4, 8, 16}, m_p{1};
    std::size_t m_N = 10000;
    int m_steps = 256, m_boot = 1000;
    mal->add_option("--t", m_t);
    mal->add_option("--M", m_M);
    mal->add_option("--p", m_p);
    mal->add_option("--N", m_N);
    mal->add_option("--n-steps", m_steps);
    mal->add_option("--bootstrap", m_boot);
    mal->add_option("--x0", m_x0);

    auto* lap = app.add_subcommand("laplace-check", "Laplace transform of rho_t^M + t alpha^M");
    double l_t = 1.0, l_M = 16.0;
    std::vector<double> l_s, l_u{1e2, 1e4, 1e8};
    std::size_t l_N = 100000;
    lap->add_option("--t", l_t);
    lap->add_option("--M", l_M);
    lap->add_option("--s", l_s, "s grid (default 20 log points on [0.1, 1e5])");
    lap->add_option("--u", l_u);
    lap->add_option("--N", l_N);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, os, err);
        return code == 0 ? 0 : static_cast<int>(ExitCode::config);
    }

    try {
        Invocation inv;
        inv.out = out;
        if (!config_path.empty()) {
            try {
                inv.config = json::parse(io::read_file(config_path));
            } catch (const json::parse_error& e) {
                throw ConfigError(config_path + ": " + e.what());
            }
            if (!inv.config.is_object() || !inv.config.contains("command") || !inv.config.contains("options"))
                throw ConfigError(config_path + ": not an emitted config (need command and options)");
            if (app.get_option("--workers")->count() > 0) inv.config["workers"] = workers;
            if (inv.out.empty() && inv.config["command"] != "eta" && inv.config["command"] != "coeffs")
                inv.out = "smalljump_out/" + inv.config["command"].get<std::string>();
            return execute(inv, os, err);
        }
        const auto subs = app.get_subcommands();
        if (subs.empty()) {
            os << app.help();
            return static_cast<int>(ExitCode::config);
        }
        const std::string cmd = subs.front()->get_name();
        json model = model_path.empty() ? io::worked_example_json() : io::load_model(model_path).source;

        if (cmd == "eta")
            opt = {{"rho", rho ? json(*rho) : json(nullptr)}, {"sigma_bar", sigma_bar}, {"p", eta_p_list}, {"eps", eta_eps}};
        else if (cmd == "coeffs")
            opt = {{"eps", co_eps}, {"s", co_s}, {"x_min", co_xmin}, {"x_max", co_xmax}, {"nx", co_nx}};
        else if (cmd == "splitting-check")
            opt = {{"bands", sp_bands}, {"N", sp_N}};
        else if (cmd == "simulate")
            opt = {{"scheme", sim_scheme},     {"stepper", sim_stepper},   {"eps", sim_eps},
                   {"eps_ref", sim_eps_ref},   {"T", sim_T},               {"x0", sim_x0},
                   {"n_steps", sim_steps},     {"ref_step_factor", sim_rf}, {"N", sim_N},
                   {"export_paths", sim_export}, {"summary_only", sim_summary}, {"transformed", sim_transformed},
                   {"space_resolution", sim_space}};
        else if (cmd == "distance")
            opt = {{"eps", d_eps},
                   {"eps_ref", d_refs},
                   {"T", d_T},
                   {"x0", d_x0},
                   {"n_steps", d_steps},
                   {"ref_step_factor", d_rf},
                   {"N", d_N},
                   {"stepper", d_stepper},
                   {"bandwidth_factor", d_bw},
                   {"tv", !d_no_tv},
                   {"rank_coupling", !d_no_rank},
                   {"control_variate", !d_no_cv},
                   {"truncation", !d_no_trunc}};
        else if (cmd == "rate")
            opt = {{"input", r_input}, {"metric", r_metric}};
        else if (cmd == "malliavin")
            opt = {{"t", m_t}, {"M", m_M}, {"p", m_p}, {"N", m_N}, {"n_steps", m_steps}, {"bootstrap", m_boot}, {"x0", m_x0}};
        else if (cmd == "laplace-check")
            opt = {{"t", l_t}, {"M", l_M}, {"s", l_s}, {"u", l_u}, {"N", l_N}};
        (void)check;

        inv.config = {{"command", cmd},
                      {"toolkit_version", io::toolkit_version},
                      {"seed", seed},
                      {"workers", workers},
                      {"emit_plot_data", emit_plot},
                      {"skip_checks", skip_checks},
                      {"model", model},
                      {"options", opt}};
        if (inv.out.empty() && cmd != "eta" && cmd != "coeffs") inv.out = "smalljump_out/" + cmd;
        return execute(inv, os, err);
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(e.code());
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return static_cast<int>(ExitCode::numerical);
    }
}

}  // namespace smalljump::cli
