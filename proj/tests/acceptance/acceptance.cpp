// Acceptance criteria runner. One PASS/FAIL line per criterion.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "smalljump/cli.hpp"
#include "smalljump/smalljump.hpp"

using namespace smalljump;
namespace fs = std::filesystem;

namespace {

// Criteria that fail on the reference configuration and are recorded as known deviations.
const std::set<std::string> documented_deviations{"T1", "M2"};

struct Outcome {
    std::string id;
    bool pass = false;
    std::string detail;
    double seconds = 0.0;
};

std::vector<Outcome> outcomes;

double since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

void report(const std::string& id, bool pass, const std::string& detail, double seconds) {
    outcomes.push_back({id, pass, detail, seconds});
    std::printf("%s %s (%.1fs) %s\n", id.c_str(), pass ? "PASS" : "FAIL", seconds, detail.c_str());
    std::fflush(stdout);
}

std::string f(const char* format, double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, format, v);
    return buf;
}

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

void a1() {
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (double rho : {0.0, 0.3, 0.5, 0.9}) {
        const auto m = worked_example_model(rho);
        for (double eps : {0.4, 0.2, 0.1, 0.05, 0.01}) {
            for (int p : {1, 2, 3}) worst = std::max(worst, rel(eta_p(m, p, eps), std::pow(2.5, p) * std::pow(eps, p - rho) / (p - rho)));
            for (double x : {-1.0, 0.0, 0.7}) {
                const double sig = 2.0 + 0.5 * std::sin(x);
                worst = std::max(worst, rel(b_eps(m, 0.0, x, eps), sig * std::pow(eps, 1.0 - rho) / (1.0 - rho)));
                worst = std::max(worst, rel(a_eps(m, 0.0, x, eps), sig * sig * std::pow(eps, 2.0 - rho) / (2.0 - rho)));
            }
        }
    }
    const double s = since(t0);
    report("A1", worst < 1e-8 && s < 1.0, "max relative error " + f("%.2e", worst), s);
}

void a2() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = worked_example_model();
    std::vector<double> xs;
    for (int i = 0; i <= 40; ++i) xs.push_back(-4.0 + 0.2 * i);
    std::size_t violations = 0, checked = 0;
    double worst = 0.0;
    const auto fam = standard_family();
    for (const auto& phi : fam)
        for (double eps : {0.4, 0.2, 0.1}) {
            const auto g = generator_gap(m, phi, eps, xs);
            ++checked;
            if (g.gap_sup > g.bound) ++violations;
            worst = std::max(worst, g.gap_sup / g.bound);
        }
    const double s = since(t0);
    report("A2", violations == 0 && fam.size() == 40 && s < 30.0,
           std::to_string(checked) + " pairs, " + std::to_string(violations) + " violations, max gap/bound " +
               f("%.3f", worst),
           s);
}

void a3() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = worked_example_model();
    bool ok = true;
    std::string detail;
    for (int k : {1, 2, 5, 10}) {
        const auto r = split_law_check(m.nu(), SectorSettings{}, k, 100000, 20240611);
        const bool band_ok = r.ks_stat < 0.01 && std::fabs(r.p_xi_emp - r.p_xi_exact) <= 3.0 * r.p_xi_se;
        ok = ok && band_ok;
        detail += "k=" + std::to_string(k) + " ks=" + f("%.4f", r.ks_stat) + " dxi/se=" +
                  f("%.2f", (r.p_xi_emp - r.p_xi_exact) / r.p_xi_se) + "; ";
    }
    const double s = since(t0);
    report("A3", ok && s < 20.0, detail, s);
}

void ladder_criteria() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = worked_example_model();
    LadderConfig c;
    c.N = 100000;
    c.seed = 20240611;
    c.eps_refs = {0.00625, 0.003125};
    const auto lad = run_ladder(m, SectorSettings{}, c);
    const auto fam = family_for(lad.terminal[0]);
    const auto r1 = distance_report(m, lad, fam, 0, true);
    const auto r2 = distance_report(m, lad, fam, 1, true);
    const double s = since(t0);

    const auto& g = r1.fit_gauss;
    report("R1", g.ok && std::fabs(g.slope - 2.5) <= 0.4 && g.r2 > 0.97,
           "gaussian slope " + f("%.3f", g.slope) + " r2 " + f("%.4f", g.r2), s);

    const auto& t = r1.fit_trunc;
    report("R2", t.ok && std::fabs(t.slope - 0.5) <= 0.3 && t.slope < g.slope,
           "truncation slope " + f("%.3f", t.slope) + " vs gaussian " + f("%.3f", g.slope), 0.0);

    const double dg = std::fabs(r2.fit_gauss.slope - g.slope);
    const double dt = std::fabs(r2.fit_trunc.slope - t.slope);
    const double dv = std::fabs(r2.fit_tv.slope - r1.fit_tv.slope);
    const bool r3 = r2.fit_gauss.ok && r2.fit_trunc.ok && r2.fit_tv.ok && r1.fit_tv.ok && dg < 0.1 && dt < 0.1 && dv < 0.1;
    report("R3", r3,
           "slope changes gaussian " + f("%.3f", dg) + " truncation " + f("%.3f", dt) + " tv " + f("%.3f", dv), 0.0);

    std::vector<double> tv;
    for (const auto& row : r1.rows)
        if (row.scheme == "gaussian_substitution") tv.push_back(row.tv);
    int inversions = 0;
    for (std::size_t i = 1; i < tv.size(); ++i)
        if (!(tv[i] < tv[i - 1])) ++inversions;
    const auto t1 = std::chrono::steady_clock::now();
    Rng ra(20240611, 0, StreamTag::test, 1), rb(20240611, 0, StreamTag::test, 2);
    std::vector<double> a(100000), b(100000);
    for (auto& x : a) x = ra.normal();
    for (auto& x : b) x = 0.5 + rb.normal();
    const double cal = tv_kde(a, b).estimate;
    std::string tvs;
    for (double v : tv) tvs += f("%.4f", v) + " ";
    // Bandwidth sensitivity, reported only; the criterion uses the default factor.
    std::string wider;
    for (double bw : {1.2, 1.6}) {
        TvOptions o;
        o.bandwidth_factor = bw;
        std::vector<RateRow> rows;
        for (std::size_t j = 0; j < c.eps_grid.size(); ++j) {
            const auto e = tv_kde(lad.terminal[0], lad.terminal[lad.grid_level(j)], o);
            rows.push_back({c.eps_grid[j], e.estimate, e.stderr_});
        }
        wider += " slope@bw" + f("%.1f", bw) + " " + f("%.3f", rate_fit(rows).slope);
    }
    report("T1", inversions <= 1 && r1.fit_tv.ok && r1.fit_tv.slope > 1.5 && std::fabs(cal - 0.1974) <= 0.02,
           "tv " + tvs + "slope " + f("%.3f", r1.fit_tv.slope) + " inversions " + std::to_string(inversions) +
               " calibration " + f("%.4f", cal) + wider,
           since(t1));
}

void m1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto m = worked_example_model();
    std::size_t paths = 0, assembly = 0, bound = 0;
    for (double M : {2.0, 4.0, 8.0, 16.0}) {
        const auto recs = covariance_samples(m, SectorSettings{}, M, 1.0, 10000, 256, 20240611, 1);
        for (const auto& r : recs) {
            ++paths;
            if (r.sigma != r.jump_part + r.gaussian_part) ++assembly;
            if (r.sigma + 1e-12 * std::fabs(r.sigma) < r.lower_bound) ++bound;
        }
    }
    const double s = since(t0);
    report("M1", assembly == 0 && bound == 0 && s < 300.0,
           std::to_string(paths) + " paths, assembly mismatches " + std::to_string(assembly) + ", bound violations " +
               std::to_string(bound),
           s);
}

void m2() {
    const auto t0 = std::chrono::steady_clock::now();
    NondegeneracyConfig c;
    c.N = 10000;
    c.seed = 20240611;
    const auto rep = nondegeneracy_diagnostics(worked_example_model(), SectorSettings{}, c);
    const double margin = ci_overlap_margin(rep.rows, 1.0);
    std::string d;
    for (const auto& r : rep.rows)
        d += "M=" + f("%g", r.M) + " " + f("%.3f", r.inv_moment) + " [" + f("%.3f", r.ci_lo) + "," + f("%.3f", r.ci_hi) + "]; ";
    const double s = since(t0);
    report("M2", margin >= 0.0 && !rep.growth_flag && s < 600.0,
           d + "overlap margin " + f("%.3f", margin) + (rep.growth_flag ? " growth flagged" : ""), s);
}

void m3() {
    const auto t0 = std::chrono::steady_clock::now();
    LaplaceConfig c;
    c.M = 16;
    c.N = 100000;
    c.seed = 20240611;
    const auto rep = laplace_bound_check(worked_example_model(), SectorSettings{}, c);
    std::size_t bad = 0;
    double worst = -1e300;
    for (const auto& r : rep.rows) {
        const double excess = r.empirical - r.bound - 3.0 * r.stderr_;
        worst = std::max(worst, excess);
        if (excess > 0.0) ++bad;
    }
    const double s = since(t0);
    report("M3", bad == 0 && rep.rows.size() == 20 && s < 120.0,
           std::to_string(rep.rows.size()) + " s-points, " + std::to_string(bad) + " violations, max excess " +
               f("%.2e", worst),
           s);
}

int call(std::vector<std::string> args) {
    args.insert(args.begin(), "smalljump");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream os, es;
    return cli::run(static_cast<int>(argv.size()), argv.data(), os, es);
}

std::map<std::string, std::string> csvs(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::directory_iterator(dir))
        if (e.path().extension() == ".csv") out[e.path().filename().string()] = io::read_file(e.path());
    return out;
}

void d1() {
    const auto t0 = std::chrono::steady_clock::now();
    const auto root = fs::temp_directory_path() / "smalljump_acceptance_d1";
    fs::remove_all(root);
    bool ok = true;
    std::string detail;
    const std::vector<std::vector<std::string>> runs{
        {"simulate", "--eps", "0.1", "--N", "2000", "--n-steps", "64"},
        {"distance", "--N", "4000", "--n-steps", "32", "--emit-plot-data"},
        {"malliavin", "--M", "2", "4", "--N", "1000", "--n-steps", "64", "--bootstrap", "200"},
        {"laplace-check", "--M", "8", "--N", "5000"},
        {"splitting-check", "--N", "5000"}};
    for (const auto& r : runs) {
        const auto a = root / (r[0] + "_w1"), b = root / (r[0] + "_w8"), c = root / (r[0] + "_rerun");
        auto args = r;
        args.insert(args.end(), {"--workers", "1", "--out", a.string()});
        int rc = call(args);
        args = r;
        args.insert(args.end(), {"--workers", "8", "--out", b.string()});
        rc |= call(args);
        rc |= call({"--config", (a / "config.json").string(), "--out", c.string()});
        const bool same = rc == 0 && csvs(a) == csvs(b) && csvs(a) == csvs(c) && !csvs(a).empty();
        ok = ok && same;
        detail += r[0] + (same ? " identical; " : " DIFFERS; ");
    }
    fs::remove_all(root);
    report("D1", ok, detail, since(t0));
}

}  // namespace

int main() {
    const auto t0 = std::chrono::steady_clock::now();
    a1();
    a2();
    a3();
    ladder_criteria();
    m1();
    m2();
    m3();
    d1();
    int undocumented = 0;
    for (const auto& o : outcomes)
        if (!o.pass) {
            if (documented_deviations.count(o.id))
                std::printf("note: %s failure is a documented deviation\n", o.id.c_str());
            else
                ++undocumented;
        }
    std::printf("total %.1fs, %d undocumented failures\n", since(t0), undocumented);
    return undocumented == 0 ? 0 : 1;
}
