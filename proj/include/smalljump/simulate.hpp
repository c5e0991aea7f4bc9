#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "coefficients.hpp"
#include "errors.hpp"
#include "measure.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "splitting.hpp"

namespace smalljump {

enum class Scheme { gaussian_substitution, truncation_only, reference };
enum class Stepper { euler, weak2 };

[[nodiscard]] inline std::string to_string(Scheme s) {
    switch (s) {
        case Scheme::gaussian_substitution: return "gaussian_substitution";
        case Scheme::truncation_only: return "truncation_only";
        default: return "reference";
    }
}

[[nodiscard]] inline std::string to_string(Stepper s) { return s == Stepper::euler ? "euler" : "weak2"; }

struct PathConfig {
    double x0 = 0.0;
    double T = 1.0;
    double eps = 0.1;
    int n_steps = 256;
    Scheme scheme = Scheme::gaussian_substitution;
    double eps_ref = 0.0125;
    int ref_step_factor = 4;
    bool couple_big_jumps = true;
    std::uint64_t seed = 1;
    std::uint64_t path_index = 0;
    Stepper stepper = Stepper::euler;

    void validate() const {
        if (!(eps > 0.0 && eps <= 1.0)) throw ConfigError("eps out of (0,1]");
        if (!(T > 0.0) || !std::isfinite(T)) throw ConfigError("T must be positive");
        if (n_steps < 1) throw ConfigError("n_steps must be >= 1");
        if (scheme == Scheme::reference) {
            if (!(eps_ref > 0.0 && eps_ref <= 1.0)) throw ConfigError("eps_ref out of (0,1]");
            if (ref_step_factor < 1) throw ConfigError("ref_step_factor must be >= 1");
        }
    }

    [[nodiscard]] double level() const { return scheme == Scheme::reference ? eps_ref : eps; }
    [[nodiscard]] int steps() const { return scheme == Scheme::reference ? n_steps * ref_step_factor : n_steps; }
};

struct JumpEvent {
    double time = 0.0;
    int band = 0;
    double z_tilde = 1.0;  // mark on [1, M)
    double z = 1.0;        // original mark 1/z_tilde
    SplitRecord split{};
    double x_before = 0.0;
    double x_after = 0.0;
    std::size_t step_index = 0;  // number of continuous steps taken before this jump
};

struct StepRecord {
    double t0 = 0.0;
    double h = 0.0;
    double x0 = 0.0;
    double normal = 0.0;  // dW / sqrt(h)
    double drift = 0.0;   // b at the step start
    double var_rate = 0.0;  // a at the step start; increment variance is var_rate * h
    double b_x = 0.0;
    double vol_x = 0.0;
};

struct Trajectory {
    Scheme scheme = Scheme::gaussian_substitution;
    double eps = 0.0;
    double M = 1.0;
    bool jumps_frozen_at_grid = false;
    std::vector<double> times;
    std::vector<double> states;
    std::vector<JumpEvent> events;
    std::vector<StepRecord> steps;

    [[nodiscard]] double terminal() const { return states.empty() ? 0.0 : states.back(); }
};

struct BigJumpStream {
    double T = 1.0;
    double M = 1.0;
    std::vector<std::uint64_t> band_counts;  // counts before partial-band thinning
    std::vector<JumpEvent> events;           // sorted by time
};

[[nodiscard]] inline double snap_level(double M) {
    const double r = std::round(M);
    return std::fabs(M - r) <= 1e-9 * M ? r : M;
}

// Jumps with marks in [1, M) for one path. Band k always draws from its own keyed stream,
// so every level shares the same jumps in the bands it retains.
inline BigJumpStream sample_big_jumps(const BandDecomposition& bands, const BandSamplers& samplers, double T,
                                      std::uint64_t seed, std::uint64_t path, std::uint64_t salt = 0) {
    BigJumpStream out;
    out.T = T;
    out.M = bands.M();
    const auto& bl = bands.bands();
    out.band_counts.resize(bl.size());
    for (std::size_t i = 0; i < bl.size(); ++i) {
        const Band& b = bl[i];
        Rng rng(seed, path, StreamTag::band_jumps, static_cast<std::uint64_t>(b.k) ^ (salt << 32));
        const std::uint64_t n = rng.poisson(T * b.full_mass);
        out.band_counts[i] = n;
        for (std::uint64_t j = 0; j < n; ++j) {
            JumpEvent e;
            e.time = T * rng.uniform();
            e.band = b.k;
            e.split = samplers[i].sample(rng);
            e.z_tilde = e.split.z;
            e.z = 1.0 / e.z_tilde;
            if (b.partial && !(e.z_tilde < b.hi)) continue;
            out.events.push_back(e);
        }
    }
    std::sort(out.events.begin(), out.events.end(), [](const JumpEvent& a, const JumpEvent& b) {
        return a.time < b.time || (a.time == b.time && a.band < b.band);
    });
    return out;
}

// Brownian values on a uniform grid and at event times for one path.
struct BrownianTape {
    double T = 1.0;
    int n = 1;
    std::vector<double> grid;    // W(j T / n), j = 0..n
    std::vector<double> at_event;  // W(event time), aligned with the event list

    [[nodiscard]] double grid_time(int j) const { return T * j / n; }
};

inline BrownianTape build_brownian(double T, int n, const std::vector<JumpEvent>& events, std::uint64_t seed,
                                   std::uint64_t path) {
    BrownianTape tape;
    tape.T = T;
    tape.n = n;
    tape.grid.assign(static_cast<std::size_t>(n) + 1, 0.0);
    Rng end_rng(seed, path, StreamTag::brownian_end);
    const double wT = std::sqrt(T) * end_rng.normal();
    tape.grid[static_cast<std::size_t>(n)] = wT;
    Rng grid_rng(seed, path, StreamTag::brownian_grid);
    for (int j = 1; j < n; ++j) {
        const double t0 = T * (j - 1) / n, t1 = T * j / n;
        const double w0 = tape.grid[static_cast<std::size_t>(j) - 1];
        const double frac = (t1 - t0) / (T - t0);
        const double var = (t1 - t0) * (T - t1) / (T - t0);
        tape.grid[static_cast<std::size_t>(j)] = w0 + frac * (wT - w0) + std::sqrt(var) * grid_rng.normal();
    }
    tape.at_event.resize(events.size());
    Rng ev_rng(seed, path, StreamTag::brownian_event);
    double prev_t = 0.0, prev_w = 0.0;
    int prev_cell = -1;
    for (std::size_t i = 0; i < events.size(); ++i) {
        const double t = events[i].time;
        int cell = static_cast<int>(std::floor(t / T * n));
        cell = std::clamp(cell, 0, n - 1);
        if (cell != prev_cell) {
            prev_t = tape.grid_time(cell);
            prev_w = tape.grid[static_cast<std::size_t>(cell)];
            prev_cell = cell;
        }
        const double t1 = tape.grid_time(cell + 1);
        const double w1 = tape.grid[static_cast<std::size_t>(cell) + 1];
        double w;
        if (t <= prev_t) {
            w = prev_w;
        } else if (t >= t1) {
            w = w1;
        } else {
            const double frac = (t - prev_t) / (t1 - prev_t);
            const double var = (t - prev_t) * (t1 - t) / (t1 - prev_t);
            w = prev_w + frac * (w1 - prev_w) + std::sqrt(var) * ev_rng.normal();
        }
        tape.at_event[i] = w;
        prev_t = std::max(prev_t, t);
        prev_w = w;
    }
    return tape;
}

struct NullObserver {
    void on_step(const StepRecord&, double) {}
    void on_jump(const JumpEvent&) {}
};

struct RecordingObserver {
    Trajectory* traj;
    void on_step(const StepRecord& s, double x1) {
        traj->steps.push_back(s);
        traj->times.push_back(s.t0 + s.h);
        traj->states.push_back(x1);
    }
    void on_jump(const JumpEvent& e) {
        traj->events.push_back(e);
        traj->times.push_back(e.time);
        traj->states.push_back(e.x_after);
    }
};

// One continuous step of length h with Brownian increment dw.
inline double advance(Stepper stepper, const DriftVolJet& j, double x, double h, double dw) {
    if (stepper == Stepper::euler) return x + j.b * h + j.vol * dw;
    const double mu = j.b, s = j.vol;
    return x + mu * h + s * dw + 0.5 * s * j.vol_x * (dw * dw - h) +
           0.5 * (j.b_x * s + mu * j.vol_x + 0.5 * j.vol_xx * s * s) * dw * h +
           0.5 * (mu * j.b_x + 0.5 * j.b_xx * s * s) * h * h;
}

// Evolves one path on the tape. Continuous steps use every `stride`-th tape grid point;
// only events with z_tilde < M are applied; the Brownian path is W + (t/T) * shift.
template <class Observer>
double evolve_on_tape(const LevyModel& model, const SmallJumpCoefficients* coef, Stepper stepper,
                      const BrownianTape& tape, const std::vector<JumpEvent>& events, int stride, double M, double x0,
                      double shift, Observer& obs) {
    const double T = tape.T;
    const int n = tape.n / stride;
    double x = x0;
    double t = 0.0;
    double w = 0.0;
    std::size_t ev = 0;
    std::size_t steps_taken = 0;
    auto step_to = [&](double t1, double w1) {
        const double h = t1 - t;
        if (h <= 0.0) {
            t = t1;
            w = w1;
            return;
        }
        const double dw = w1 - w;
        StepRecord rec;
        rec.t0 = t;
        rec.h = h;
        rec.x0 = x;
        rec.normal = dw / std::sqrt(h);
        double x1 = x;
        if (coef) {
            const DriftVolJet j = coef->jet(t, x);
            rec.drift = j.b;
            rec.var_rate = j.vol * j.vol;
            rec.b_x = j.b_x;
            rec.vol_x = j.vol_x;
            x1 = advance(stepper, j, x, h, dw);
        }
        ++steps_taken;
        obs.on_step(rec, x1);
        x = x1;
        t = t1;
        w = w1;
    };
    for (int j = 1; j <= n; ++j) {
        const double tj = tape.grid_time(j * stride);
        while (ev < events.size() && events[ev].time < tj) {
            const JumpEvent& e0 = events[ev];
            if (e0.z_tilde < M) {
                step_to(e0.time, tape.at_event[ev] + e0.time / T * shift);
                JumpEvent e = e0;
                e.x_before = x;
                x = x + model.c.c(e.time, e.z, x);
                e.x_after = x;
                e.step_index = steps_taken;
                obs.on_jump(e);
            }
            ++ev;
        }
        step_to(tj, tape.grid[static_cast<std::size_t>(j * stride)] + tj / T * shift);
    }
    return x;
}

// Holds the per-level objects needed to simulate many paths of one configuration.
class PathSimulator {
public:
    PathSimulator(const PathSimulator&) = delete;
    PathSimulator& operator=(const PathSimulator&) = delete;

    PathSimulator(const LevyModel& model, const SectorSettings& sector, const PathConfig& cfg)
        : model_(model), cfg_(cfg) {
        cfg.validate();
        const double level = cfg.level();
        bands_ = BandDecomposition(model_.nu(), level, sector);
        samplers_ = std::make_unique<BandSamplers>(bands_);
        if (cfg.scheme != Scheme::truncation_only) coef_ = SmallJumpCoefficients(model_, level, cfg.T);
    }

    [[nodiscard]] const BandDecomposition& bands() const noexcept { return bands_; }
    [[nodiscard]] const PathConfig& config() const noexcept { return cfg_; }

    [[nodiscard]] BigJumpStream jumps(std::uint64_t path) const {
        const std::uint64_t salt =
            cfg_.couple_big_jumps ? 0 : static_cast<std::uint64_t>(std::llround(1e6 * cfg_.level())) + 1;
        return sample_big_jumps(bands_, *samplers_, cfg_.T, cfg_.seed, path, salt);
    }

    [[nodiscard]] Trajectory simulate(std::uint64_t path) const {
        const auto stream = jumps(path);
        const int n = cfg_.steps();
        const auto tape = build_brownian(cfg_.T, n, stream.events, cfg_.seed, path);
        Trajectory traj;
        traj.scheme = cfg_.scheme;
        traj.eps = cfg_.level();
        traj.M = bands_.M();
        traj.times.push_back(0.0);
        traj.states.push_back(cfg_.x0);
        RecordingObserver obs{&traj};
        evolve_on_tape(model_, cfg_.scheme == Scheme::truncation_only ? nullptr : &coef_, cfg_.stepper, tape,
                       stream.events, 1, bands_.M(), cfg_.x0, 0.0, obs);
        return traj;
    }

    [[nodiscard]] double terminal(std::uint64_t path) const {
        const auto stream = jumps(path);
        const auto tape = build_brownian(cfg_.T, cfg_.steps(), stream.events, cfg_.seed, path);
        NullObserver obs;
        return evolve_on_tape(model_, cfg_.scheme == Scheme::truncation_only ? nullptr : &coef_, cfg_.stepper,
                              tape, stream.events, 1, bands_.M(), cfg_.x0, 0.0, obs);
    }

    // Terminal values of paths first .. first+count-1.
    [[nodiscard]] std::vector<double> terminals(std::size_t count, int workers, std::uint64_t first = 0) const {
        std::vector<double> out(count);
        parallel_for(count, workers, [&](std::size_t i) { out[i] = terminal(first + i); });
        return out;
    }

private:
    LevyModel model_;
    PathConfig cfg_;
    BandDecomposition bands_;
    std::unique_ptr<BandSamplers> samplers_;
    SmallJumpCoefficients coef_;
};

inline Trajectory simulate_path(const LevyModel& model, const BandDecomposition& bands, const PathConfig& cfg) {
    PathSimulator sim(model, bands.sector(), cfg);
    if (cfg.scheme != Scheme::reference && std::fabs(sim.bands().M() - bands.M()) > 1e-9 * bands.M())
        throw ConfigError("simulate_path: bands do not cover [1, 1/eps)");
    return sim.simulate(cfg.path_index);
}

// Two gaussian-substitution paths at eps_a >= eps_b sharing jumps above eps_a and every
// Brownian draw; the finer path also receives the jumps in (eps_b, eps_a].
inline std::pair<Trajectory, Trajectory> coupled_pair(const LevyModel& model, const BandDecomposition& bands,
                                                      const PathConfig& cfg, double eps_a, double eps_b) {
    if (eps_b > eps_a) throw ConfigError("coupled_pair: eps_b must not exceed eps_a");
    PathConfig ca = cfg, cb = cfg;
    ca.eps = eps_a;
    cb.eps = eps_b;
    ca.scheme = cb.scheme = Scheme::gaussian_substitution;
    ca.validate();
    cb.validate();
    const BandDecomposition fine(model.nu(), eps_b, bands.sector());
    const BandSamplers samplers(fine);
    const auto stream = sample_big_jumps(fine, samplers, cfg.T, cfg.seed, cfg.path_index);
    const auto tape = build_brownian(cfg.T, cfg.n_steps, stream.events, cfg.seed, cfg.path_index);
    const double Ma = snap_level(1.0 / eps_a);
    const SmallJumpCoefficients coef_a(model, eps_a, cfg.T);
    const SmallJumpCoefficients coef_b(model, eps_b, cfg.T);
    auto run = [&](const SmallJumpCoefficients& coef, double eps, double M) {
        Trajectory traj;
        traj.scheme = Scheme::gaussian_substitution;
        traj.eps = eps;
        traj.M = M;
        traj.times.push_back(0.0);
        traj.states.push_back(cfg.x0);
        RecordingObserver obs{&traj};
        evolve_on_tape(model, &coef, cfg.stepper, tape, stream.events, 1, M, cfg.x0, 0.0, obs);
        return traj;
    };
    return {run(coef_a, eps_a, Ma), run(coef_b, eps_b, fine.M())};
}

// Variance rate of the Gaussian integral above M with marks frozen on the grid M + j/m.
class FrozenMarkVariance {
public:
    FrozenMarkVariance(const LevyModel& model, double M, int space_resolution)
        : model_(&model), M_(M), delta_(1.0 / space_resolution) {
        if (space_resolution < 1) throw ConfigError("space grid resolution must be >= 1");
        if (model.c.separable) {
            const auto& g = model.c.separable->g;
            separable_ = true;
            G_ = sum_cells([&](double zt) {
                const double v = g(1.0 / zt);
                return v * v;
            });
        }
    }

    [[nodiscard]] double rate(double s, double x) const {
        if (separable_) {
            const double h = model_->c.separable->h(s, x).h;
            return h * h * G_;
        }
        return sum_cells([&](double zt) {
            const double v = model_->c.tilde(s, zt, x);
            return v * v;
        });
    }

    // sqrt(rate) and its x-derivative.
    [[nodiscard]] std::pair<double, double> vol(double s, double x) const {
        if (separable_) {
            const HJet h = model_->c.separable->h(s, x);
            const double sg = h.h < 0.0 ? -1.0 : 1.0;
            return {sg * h.h * std::sqrt(G_), sg * h.h_x * std::sqrt(G_)};
        }
        const double d = 1e-4 * std::max(1.0, std::fabs(x));
        const double v0 = std::sqrt(rate(s, x));
        return {v0, (std::sqrt(rate(s, x + d)) - std::sqrt(rate(s, x - d))) / (2.0 * d)};
    }

private:
    template <class F>
    [[nodiscard]] double sum_cells(F&& f2) const {
        const auto nu = model_->nu();
        const double z_end = std::max(64.0 * M_, M_ + 64.0);
        const auto cells = static_cast<long>(std::ceil((z_end - M_) / delta_));
        double sum = 0.0;
        for (long j = 0; j < cells; ++j) {
            const double a = M_ + j * delta_;
            sum += f2(a) * nu.mass(a, a + delta_);
        }
        const double tail_start = M_ + cells * delta_;
        const auto tail = nu.integrate(f2, tail_start, std::numeric_limits<double>::infinity());
        return sum + tail.value;
    }

    const LevyModel* model_;
    double M_;
    double delta_;
    bool separable_ = false;
    double G_ = 0.0;
};

// Euler scheme for the transformed equation with time freezing on the grid r_j = jT/n:
// jumps in [r_j, r_{j+1}) use the state at r_j, the drift is b_M and the Gaussian term
// uses marks frozen on the space grid M + i/space_resolution.
inline Trajectory euler_transformed(const LevyModel& model, const SectorSettings& sector, const PathConfig& cfg,
                                    int n, int space_resolution) {
    cfg.validate();
    if (n < 1) throw ConfigError("euler_transformed: n must be >= 1");
    const double eps = cfg.eps;
    const BandDecomposition bands(model.nu(), eps, sector);
    const BandSamplers samplers(bands);
    const auto stream = sample_big_jumps(bands, samplers, cfg.T, cfg.seed, cfg.path_index);
    const auto tape = build_brownian(cfg.T, n, stream.events, cfg.seed, cfg.path_index);
    const SmallJumpCoefficients drift(model, eps, cfg.T);
    const FrozenMarkVariance var(model, bands.M(), space_resolution);
    Trajectory traj;
    traj.scheme = Scheme::gaussian_substitution;
    traj.eps = eps;
    traj.M = bands.M();
    traj.jumps_frozen_at_grid = true;
    traj.times.push_back(0.0);
    traj.states.push_back(cfg.x0);
    double x = cfg.x0;
    std::size_t ev = 0;
    for (int j = 0; j < n; ++j) {
        const double r0 = tape.grid_time(j), r1 = tape.grid_time(j + 1);
        const double h = r1 - r0;
        const double xj = x;
        double jump_sum = 0.0;
        while (ev < stream.events.size() && (stream.events[ev].time < r1 || j == n - 1)) {
            JumpEvent e = stream.events[ev];
            e.x_before = xj;
            jump_sum += model.c.tilde(r0, e.z_tilde, xj);
            e.x_after = xj + jump_sum;
            e.step_index = static_cast<std::size_t>(j) + 1;
            traj.events.push_back(e);
            ++ev;
        }
        const DriftVolJet dj = drift.jet(r0, xj);
        const auto [vol, vol_x] = var.vol(r0, xj);
        const double dw = tape.grid[static_cast<std::size_t>(j) + 1] - tape.grid[static_cast<std::size_t>(j)];
        StepRecord rec;
        rec.t0 = r0;
        rec.h = h;
        rec.x0 = xj;
        rec.normal = dw / std::sqrt(h);
        rec.drift = dj.b;
        rec.var_rate = vol * vol;
        rec.b_x = dj.b_x;
        rec.vol_x = vol_x;
        traj.steps.push_back(rec);
        x = xj + jump_sum + dj.b * h + vol * dw;
        traj.times.push_back(r1);
        traj.states.push_back(x);
    }
    return traj;
}

}  // namespace smalljump
