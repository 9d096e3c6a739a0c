#include "shs/hsde.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace shs {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

ModeCatalog HsdeModel::catalog() const {
    ModeCatalog cat;
    for (const GshsMode& m : modes) cat.intern(m.tag);
    return cat;
}

double sigma_partial(const HsdeModel& model, int i, int theta, std::span<const double> x) {
    if (i < 0 || i > static_cast<int>(model.modes.size()))
        throw ConfigError("sigma_partial index out of range");
    if (i == 0) return 0.0;
    double lam = model.lambda.eval(theta, x);
    double acc = 0.0;
    for (int j = 0; j < i; ++j) acc += model.rho.eval(j, theta, x);
    return lam * acc;
}

// ---------------------------------------------------------------------------
// simulation
// ---------------------------------------------------------------------------

namespace {

std::vector<double> hsde_grid(const ExecParams& params) {
    std::vector<double> grid{0.0};
    if (params.grid_dt > 0.0) {
        for (int i = 1;; ++i) {
            double t = static_cast<double>(i) * params.grid_dt;
            if (t > params.horizon * (1.0 + 1e-12)) break;
            grid.push_back(std::min(t, params.horizon));
        }
    }
    if (grid.back() < params.horizon) grid.push_back(params.horizon);
    return grid;
}

}  // namespace

HybridPath simulate_hsde(const HsdeModel& model, const ExecParams& params, RandomBasis& basis) {
    if (!(params.horizon > 0.0)) throw ConfigError("simulate_hsde needs horizon > 0");
    if (!(params.dt > 0.0)) throw ConfigError("simulate_hsde needs dt > 0");
    if (model.c_lambda < 0.0) throw ConfigError("C_Lambda must be >= 0");

    HybridState state = model.init(basis);
    ModeTimeline timeline;
    timeline.horizon = params.horizon;
    {
        JumpEvent ev;
        ev.time = 0.0;
        ev.kind = JumpKind::init;
        ev.mode_after = state.mode;
        ev.state_after = state.x;
        ev.state_before = state.x;
        timeline.events.push_back(std::move(ev));
    }
    std::vector<double> grid = hsde_grid(params);
    SampledContinuous sampled;
    sampled.times.push_back(0.0);
    sampled.values.push_back(state.x);
    std::size_t next_grid = 1;

    double t = 0.0;
    std::uint64_t jumps = 0;
    SplitStream& pp = basis.poisson();
    double next_point = model.c_lambda > 0.0 ? pp.next_exponential(model.c_lambda) : kInf;

    Vec f, g, db, x_before;
    while (t < params.horizon) {
        const GshsMode& mode = model.modes[static_cast<std::size_t>(state.mode.index)];
        bool need_stepping = !mode.frozen || mode.has_boundary();
        double t_new = std::min(std::min(need_stepping ? t + params.dt : kInf, params.horizon),
                                std::min(next_point, next_grid < grid.size() ? grid[next_grid] : kInf));
        double h = t_new - t;

        x_before = state.x;
        if (!mode.frozen && h > 0.0) {
            std::size_t n = state.x.size();
            f.assign(n, 0.0);
            g.assign(n * static_cast<std::size_t>(model.wiener_dim), 0.0);
            model.drift(state.mode.index, state.x, f);
            model.diffusion(state.mode.index, state.x, g);
            db.assign(static_cast<std::size_t>(model.wiener_dim), 0.0);
            SplitStream& bm = basis.mode_brownian(state.mode.index);
            double sq = std::sqrt(h);
            for (double& v : db) v = sq * bm.next_normal();
            for (std::size_t i = 0; i < n; ++i) {
                double inc = f[i] * h;
                for (int j = 0; j < model.wiener_dim; ++j)
                    inc += g[i * static_cast<std::size_t>(model.wiener_dim) + static_cast<std::size_t>(j)] *
                           db[static_cast<std::size_t>(j)];
                state.x[i] += inc;
                if (!std::isfinite(state.x[i]))
                    throw NumericalError("non-finite continuous state in mode " +
                                         std::to_string(state.mode.index));
            }
        }

        // Boundary hit localization inside the step.
        double tau_b = kInf;
        for (const DomainFace& face : mode.faces) {
            auto hit = detect_guard_hit(face.guard, x_before, state.x, t, t_new,
                                        params.dt * params.time_tol_factor, params.guard_tol);
            if (hit && *hit < tau_b) tau_b = std::max(*hit, t);
        }

        if (tau_b <= t_new) {
            double frac = h > 0.0 ? (tau_b - t) / h : 1.0;
            if (frac < 1.0 && !mode.frozen)
                for (std::size_t i = 0; i < state.x.size(); ++i)
                    state.x[i] = x_before[i] + frac * (state.x[i] - x_before[i]);
            t = tau_b;
            Vec pre_state = state.x;
            state = model.boundary.sample({state.mode, pre_state}, JumpTrigger::boundary, basis);
            if (state.mode.index < 0 || state.mode.index >= static_cast<int>(model.modes.size()))
                throw ModelError("boundary kernel returned an invalid mode index " +
                                 std::to_string(state.mode.index));
            if (++jumps > params.max_jumps)
                throw NumericalError("jump budget exceeded at t=" + std::to_string(t) +
                                     " (Zeno-like behaviour)");
            JumpEvent ev;
            ev.time = t;
            ev.kind = JumpKind::forced;
            ev.mode_after = state.mode;
            ev.state_before = pre_state;
            ev.state_after = state.x;
            timeline.events.push_back(std::move(ev));
            while (next_grid < grid.size() && grid[next_grid] <= t) {
                sampled.times.push_back(grid[next_grid]);
                sampled.values.push_back(state.x);
                ++next_grid;
            }
            continue;
        }

        t = t_new;
        while (next_grid < grid.size() && grid[next_grid] <= t) {
            sampled.times.push_back(grid[next_grid]);
            sampled.values.push_back(state.x);
            ++next_grid;
        }

        if (t == next_point && t < params.horizon) {
            // Multivariate Poisson point: z1 uniform on (0, C_Lambda], mark
            // from mu. Accepted when z1 <= Lambda(theta-, X-), with the
            // target mode read off the Sigma interval containing z1.
            double z1 = model.c_lambda * pp.next_open();
            Vec mark = model.mu.sample ? model.mu.sample(pp) : Vec{};
            double lam = model.lambda.eval(state.mode.index, state.x);
            if (lam > model.c_lambda * (1.0 + 1e-12))
                throw NumericalError("thinning unsound: Lambda=" + std::to_string(lam) +
                                     " above declared C_Lambda=" + std::to_string(model.c_lambda));
            next_point = t + pp.next_exponential(model.c_lambda);
            if (z1 <= lam) {
                int target = -1;
                double acc = 0.0;
                for (std::size_t j = 0; j < model.modes.size(); ++j) {
                    acc += lam * model.rho.eval(static_cast<int>(j), state.mode.index, state.x);
                    if (z1 <= acc + 1e-15 * lam) {
                        target = static_cast<int>(j);
                        break;
                    }
                }
                if (target < 0) target = static_cast<int>(model.modes.size()) - 1;
                Vec pre_state = state.x;
                ModeId pre_mode = state.mode;
                if (!model.psi.zero) {
                    Vec disp(state.x.size(), 0.0);
                    model.psi.eval(target, pre_mode.index, pre_state, mark, disp);
                    for (std::size_t i = 0; i < state.x.size(); ++i) state.x[i] += disp[i];
                }
                state.mode = {target};
                if (++jumps > params.max_jumps)
                    throw NumericalError("jump budget exceeded at t=" + std::to_string(t) +
                                         " (Zeno-like behaviour)");
                JumpEvent ev;
                ev.time = t;
                ev.kind = JumpKind::spontaneous;
                ev.mode_after = state.mode;
                ev.state_before = pre_state;
                ev.state_after = state.x;
                timeline.events.push_back(std::move(ev));
                // The grid sample at exactly t (if any) must show the
                // post-jump state.
                if (!sampled.times.empty() && sampled.times.back() == t) {
                    sampled.values.back() = state.x;
                }
            }
        }
    }

    HybridPath path = merge_paths(timeline, sampled);
    path.catalog = ModeCatalog();
    for (const GshsMode& m : model.modes) path.catalog.intern(m.tag);
    return path;
}

KernelEstimate q_from_psi_rho_mu(const HsdeModel& model, int target,
                                 const std::function<bool(std::span<const double>)>& indicator,
                                 int theta, std::span<const double> x, int budget, std::uint64_t seed) {
    KernelEstimate est;
    double rho = model.rho.eval(target, theta, x);
    if (model.psi.zero) {
        est.value = indicator(x) ? rho : 0.0;
        est.std_error = 0.0;
        est.exact = true;
        return est;
    }
    if (budget < 2) throw ConfigError("q_from_psi_rho_mu needs a budget of at least 2");
    SplitStream rng = SplitStream(seed).child(41);
    Vec shifted(x.size());
    Vec disp(x.size());
    long long hits = 0;
    for (int i = 0; i < budget; ++i) {
        Vec mark = model.mu.sample(rng);
        std::fill(disp.begin(), disp.end(), 0.0);
        model.psi.eval(target, theta, x, mark, disp);
        for (std::size_t k = 0; k < shifted.size(); ++k) shifted[k] = x[k] + disp[k];
        if (indicator(shifted)) ++hits;
    }
    double p = static_cast<double>(hits) / static_cast<double>(budget);
    est.value = rho * p;
    est.std_error = rho * std::sqrt(p * (1.0 - p) / static_cast<double>(budget));
    est.exact = false;
    return est;
}

// ---------------------------------------------------------------------------
// mapping
// ---------------------------------------------------------------------------

HsdeModel map_sdcpn_to_hsde(const SdcpnModel& model, int max_nodes) {
    GshsModel g = map_sdcpn_to_gshs(model, max_nodes);

    int dim = g.modes.empty() ? 0 : g.modes.front().dim;
    for (const GshsMode& m : g.modes)
        if (m.dim != dim)
            throw ModelError(
                "outside the psi=0 mapping fragment: continuous dimension varies across modes; "
                "specify psi/mu manually");
    if (!g.lambda.all_constant)
        throw ModelError(
            "outside the psi=0 mapping fragment: state-dependent delay rates give an x-dependent "
            "spontaneous kernel; specify psi/mu manually");
    if (!g.kernel.spontaneous || !g.kernel.spontaneous->colour_preserving) {
        bool any_delay = false;
        for (const Transition& t : model.transitions)
            if (t.kind == TransitionKind::delay) any_delay = true;
        if (any_delay)
            throw ModelError(
                "outside the psi=0 mapping fragment: firing changes the continuous state (or the "
                "spontaneous kernel is x-dependent); specify psi/mu manually");
    }

    HsdeModel out;
    out.modes = g.modes;
    out.dim = dim;
    out.wiener_dim = g.wiener_dim;
    out.mark_dim = 1;
    out.drift = g.drift;
    out.diffusion = g.diffusion;
    out.init = g.init;
    out.lambda = g.lambda;
    out.source_hash = g.source_hash;
    out.rate_params = g.rate_params;
    out.rate_params_exact = g.rate_params_exact;

    out.c_lambda = 0.0;
    std::optional<Rational> cmax;
    std::string csym;
    for (std::size_t m = 0; m < g.modes.size(); ++m) {
        double v = g.lambda.mode_value[m];
        if (v > out.c_lambda) {
            out.c_lambda = v;
            csym = g.lambda.mode_symbol[m].to_string();
        }
    }
    out.c_lambda_symbol = "max over modes: " + csym;
    if (!g.rate_params_exact.empty() || true) {
        try {
            for (std::size_t m = 0; m < g.modes.size(); ++m) {
                Rational v = g.lambda.mode_symbol[m].eval_exact(g.rate_params_exact);
                if (!cmax || *cmax < v) cmax = v;
            }
            out.c_lambda_exact = cmax;
        } catch (const std::exception&) {
            out.c_lambda_exact = std::nullopt;
        }
    }

    out.psi.zero = true;
    out.psi.text = "zero";
    out.psi.eval = [](int, int, std::span<const double>, std::span<const double>, std::span<double> d) {
        for (double& v : d) v = 0.0;
    };

    // rho rows from the spontaneous matrix; modes that never jump
    // spontaneously (zero rate) get a self-loop so rho still normalizes.
    DiscreteKernelMatrix rho_matrix;
    if (g.kernel.spontaneous) {
        rho_matrix = *g.kernel.spontaneous;
        for (std::size_t m = 0; m < g.modes.size(); ++m) {
            if (g.lambda.mode_value[m] == 0.0) {
                rho_matrix.symbolic[m][m] = RateRatio::one();
                if (!rho_matrix.exact.empty()) rho_matrix.exact[m][m] = Rational(1);
                rho_matrix.value[m][m] = 1.0;
            }
        }
    } else {
        std::size_t K = g.modes.size();
        rho_matrix.symbolic.assign(K, std::vector<RateRatio>(K, RateRatio::zero()));
        rho_matrix.value.assign(K, std::vector<double>(K, 0.0));
        for (std::size_t m = 0; m < K; ++m) {
            rho_matrix.symbolic[m][m] = RateRatio::one();
            rho_matrix.value[m][m] = 1.0;
        }
        rho_matrix.colour_preserving = true;
    }
    auto values = std::make_shared<std::vector<std::vector<double>>>(rho_matrix.value);
    out.rho.matrix = std::move(rho_matrix);
    out.rho.eval = [values](int target, int source, std::span<const double>) {
        return (*values)[static_cast<std::size_t>(source)][static_cast<std::size_t>(target)];
    };

    // mu may be any invertible probability measure since the marks are
    // unused; the uniform on [0,1] is sampled by inverse transform.
    out.mu.text = "uniform01";
    out.mu.sample = [](SplitStream& s) { return Vec{s.next_unit()}; };

    out.boundary = g.kernel;
    return out;
}

// ---------------------------------------------------------------------------
// condition checks
// ---------------------------------------------------------------------------

namespace {

struct GapSweep {
    double first = 0.0, last = 0.0;
    bool finite = true;
};

// Max Lipschitz ratio within a fixed ball at shrinking pair gaps, plus a
// deterministic shrinking-pair ladder anchored at the origin (a cusp like
// sqrt|x| keeps its ratio constant under uniform gap sampling and only shows
// up when the pair itself approaches the trouble spot). Growth across levels
// marks a locally non-Lipschitz map.
GapSweep gap_sweep(const std::function<void(std::span<const double>, std::span<double>)>& f, int in_dim,
                   int out_dim, double ball, int samples, SplitStream& rng) {
    GapSweep sw;
    Vec x(static_cast<std::size_t>(in_dim)), y(static_cast<std::size_t>(in_dim));
    Vec fx(static_cast<std::size_t>(out_dim)), fy(static_cast<std::size_t>(out_dim));
    auto ratio = [&](const Vec& a, const Vec& b) {
        std::fill(fx.begin(), fx.end(), 0.0);
        std::fill(fy.begin(), fy.end(), 0.0);
        f(a, fx);
        f(b, fy);
        double dd = 0.0, df = 0.0;
        for (int i = 0; i < in_dim; ++i) {
            double d = a[static_cast<std::size_t>(i)] - b[static_cast<std::size_t>(i)];
            dd += d * d;
        }
        for (int i = 0; i < out_dim; ++i) {
            if (!std::isfinite(fx[static_cast<std::size_t>(i)]) ||
                !std::isfinite(fy[static_cast<std::size_t>(i)]))
                sw.finite = false;
            double d = fx[static_cast<std::size_t>(i)] - fy[static_cast<std::size_t>(i)];
            df += d * d;
        }
        return dd > 0.0 ? df / dd : 0.0;
    };

    const double gaps[3] = {1e-2, 1e-4, 1e-6};
    const double scales[3] = {1.0, 1e-4, 1e-8};
    for (int s = 0; s < 3; ++s) {
        double lip = 0.0;
        for (int it = 0; it < samples && sw.finite; ++it) {
            for (int i = 0; i < in_dim; ++i)
                x[static_cast<std::size_t>(i)] = ball * (2.0 * rng.next_unit() - 1.0);
            for (int i = 0; i < in_dim; ++i)
                y[static_cast<std::size_t>(i)] =
                    x[static_cast<std::size_t>(i)] + gaps[s] * (2.0 * rng.next_unit() - 1.0);
            lip = std::max(lip, ratio(x, y));
        }
        for (int axis = 0; axis < in_dim && sw.finite; ++axis) {
            std::fill(x.begin(), x.end(), 0.0);
            std::fill(y.begin(), y.end(), 0.0);
            x[static_cast<std::size_t>(axis)] = scales[s];
            y[static_cast<std::size_t>(axis)] = 0.5 * scales[s];
            lip = std::max(lip, ratio(x, y));
        }
        if (!sw.finite) return sw;
        if (s == 0) sw.first = lip;
        if (s == 2) sw.last = lip;
    }
    return sw;
}

}  // namespace

CheckReport check_h1_h8(const HsdeModel& model, int budget, std::uint64_t seed) {
    CheckReport report;
    SplitStream rng = SplitStream(seed).child(53);
    std::size_t K = model.modes.size();
    int per_mode = std::max(16, budget / static_cast<int>(std::max<std::size_t>(1, K)) / 8);

    // H1: linear growth bound on |f|^2 + ||g||^2, radius sweep.
    {
        CheckItem item{"H1", false, ""};
        for (std::size_t m = 0; m < K && !item.flagged; ++m) {
            const double radii[3] = {1.0, 10.0, 100.0};
            double first = 0.0, last = 0.0;
            bool finite = true;
            for (int s = 0; s < 3 && finite; ++s) {
                double worst = 0.0;
                Vec x(static_cast<std::size_t>(model.dim));
                Vec f(static_cast<std::size_t>(model.dim));
                Vec g(static_cast<std::size_t>(model.dim) * static_cast<std::size_t>(model.wiener_dim));
                for (int it = 0; it < per_mode; ++it) {
                    for (double& v : x) v = radii[s] * (2.0 * rng.next_unit() - 1.0);
                    std::fill(f.begin(), f.end(), 0.0);
                    std::fill(g.begin(), g.end(), 0.0);
                    model.drift(static_cast<int>(m), x, f);
                    model.diffusion(static_cast<int>(m), x, g);
                    double num = 0.0, den = 1.0;
                    for (double v : f) {
                        if (!std::isfinite(v)) finite = false;
                        num += v * v;
                    }
                    for (double v : g) num += v * v;
                    for (double v : x) den += v * v;
                    worst = std::max(worst, num / den);
                }
                if (s == 0) first = worst;
                if (s == 2) last = worst;
            }
            if (!finite) {
                item.flagged = true;
                item.detail = "non-finite field in mode " + std::to_string(m);
            } else if (first > 0.0 ? last > 8.0 * first : last > 1e-9) {
                item.flagged = true;
                item.detail = "growth ratio (|f|^2+||g||^2)/(1+|x|^2) diverges in mode " + std::to_string(m);
            }
        }
        report.items.push_back(std::move(item));
    }

    // H2: local Lipschitz continuity inside a fixed ball, gap sweep.
    {
        CheckItem item{"H2", false, ""};
        for (std::size_t m = 0; m < K && !item.flagged; ++m) {
            auto fd = [&](std::span<const double> x, std::span<double> out) {
                model.drift(static_cast<int>(m), x, out);
            };
            auto gd = [&](std::span<const double> x, std::span<double> out) {
                model.diffusion(static_cast<int>(m), x, out);
            };
            GapSweep a = gap_sweep(fd, model.dim, model.dim, 2.0, per_mode, rng);
            GapSweep b = gap_sweep(gd, model.dim, model.dim * model.wiener_dim, 2.0, per_mode, rng);
            auto blows = [](const GapSweep& s) {
                return !s.finite || (s.first > 0.0 ? s.last > 10.0 * s.first : s.last > 1e6);
            };
            if (blows(a) || blows(b)) {
                item.flagged = true;
                item.detail = "Lipschitz ratio grows as pair gap shrinks in mode " + std::to_string(m);
            }
        }
        report.items.push_back(std::move(item));
    }

    // H3: Lambda bounded by the declared C_Lambda.
    {
        CheckItem item{"H3", false, ""};
        Vec x(static_cast<std::size_t>(model.dim));
        double worst = 0.0;
        for (std::size_t m = 0; m < K && !item.flagged; ++m) {
            for (int it = 0; it < per_mode; ++it) {
                for (double& v : x) v = 50.0 * (2.0 * rng.next_unit() - 1.0);
                double lam = model.lambda.eval(static_cast<int>(m), x);
                worst = std::max(worst, lam);
                if (!std::isfinite(lam) || lam > model.c_lambda * (1.0 + 1e-12)) {
                    item.flagged = true;
                    item.detail = "Lambda=" + std::to_string(lam) + " exceeds C_Lambda=" +
                                  std::to_string(model.c_lambda) + " in mode " + std::to_string(m);
                    break;
                }
            }
        }
        if (!item.flagged)
            item.detail = "sup Lambda sampled " + std::to_string(worst) + " <= C_Lambda " +
                          std::to_string(model.c_lambda);
        report.items.push_back(std::move(item));
    }

    // H4: continuity of rho in x: coarse jump detection along random lines,
    // bisected down to vanishing gaps.
    {
        CheckItem item{"H4", false, ""};
        Vec x(static_cast<std::size_t>(model.dim)), u(static_cast<std::size_t>(model.dim));
        int lines = std::min(budget / 10 + 10, 4000);
        for (int it = 0; it < lines && !item.flagged; ++it) {
            int theta = static_cast<int>(rng.next_unit() * static_cast<double>(K));
            if (theta >= static_cast<int>(K)) theta = static_cast<int>(K) - 1;
            int target = static_cast<int>(rng.next_unit() * static_cast<double>(K));
            if (target >= static_cast<int>(K)) target = static_cast<int>(K) - 1;
            for (double& v : x) v = 5.0 * (2.0 * rng.next_unit() - 1.0);
            for (double& v : u) v = 2.0 * rng.next_unit() - 1.0;
            auto rho_at = [&](double s) {
                Vec y = x;
                for (std::size_t i = 0; i < y.size(); ++i) y[i] += s * u[i];
                return model.rho.eval(target, theta, y);
            };
            double lo = 0.0, hi = 0.1;
            double dlo = rho_at(lo), dhi = rho_at(hi);
            if (std::fabs(dhi - dlo) < 0.2) continue;
            for (int b = 0; b < 60 && hi - lo > 1e-11; ++b) {
                double mid = 0.5 * (lo + hi);
                double dm = rho_at(mid);
                if (std::fabs(dm - dlo) >= 0.5 * std::fabs(dhi - dlo)) hi = mid, dhi = dm;
                else lo = mid, dlo = dm;
            }
            if (std::fabs(dhi - dlo) > 0.1 && hi - lo <= 1e-10) {
                item.flagged = true;
                item.detail = "rho(target=" + std::to_string(target) + ",theta=" + std::to_string(theta) +
                              ",.) jumps by " + std::to_string(std::fabs(dhi - dlo)) +
                              " across a vanishing gap";
            }
        }
        report.items.push_back(std::move(item));
    }

    // H5: integral of |psi| against mu, flagged when the sample mean keeps
    // growing decade over decade (a diverging integral signature).
    {
        CheckItem item{"H5", false, ""};
        if (!model.psi.zero) {
            Vec x(static_cast<std::size_t>(model.dim), 0.5);
            Vec disp(static_cast<std::size_t>(model.dim));
            int n = std::max(1000, budget);
            for (std::size_t a = 0; a < K && !item.flagged; ++a)
                for (std::size_t b = 0; b < K && !item.flagged; ++b) {
                    // nested prefix means plus the share of the largest term:
                    // for an integrable |psi| the largest sample carries a
                    // vanishing share of the sum
                    SplitStream ms = rng.child(100 + a * K + b);
                    double sum = 0.0, largest = 0.0;
                    double means[3] = {0, 0, 0};
                    int checkpoints[3] = {n / 100, n / 10, n};
                    int lvl = 0;
                    for (int i = 0; i < n; ++i) {
                        Vec mark = model.mu.sample(ms);
                        std::fill(disp.begin(), disp.end(), 0.0);
                        model.psi.eval(static_cast<int>(a), static_cast<int>(b), x, mark, disp);
                        double norm = 0.0;
                        for (double v : disp) norm += v * v;
                        norm = std::sqrt(norm);
                        if (!std::isfinite(norm)) {
                            item.flagged = true;
                            item.detail = "non-finite psi displacement";
                            break;
                        }
                        sum += norm;
                        largest = std::max(largest, norm);
                        if (lvl < 3 && i + 1 == checkpoints[lvl]) {
                            means[lvl] = sum / checkpoints[lvl];
                            ++lvl;
                        }
                    }
                    if (item.flagged) break;
                    bool growing = means[0] > 1e-12 && means[1] > 1.15 * means[0] &&
                                   means[2] > 1.15 * means[1];
                    bool dominated = sum > 0.0 && largest / sum > 0.2;
                    if (growing || dominated) {
                        item.flagged = true;
                        item.detail = "E|psi| estimate diverges (prefix means " + std::to_string(means[0]) +
                                      " -> " + std::to_string(means[2]) + ", max-term share " +
                                      std::to_string(sum > 0.0 ? largest / sum : 0.0) + ")";
                    }
                }
        }
        report.items.push_back(std::move(item));
    }

    // H6: |psi(theta, theta, x, z)| must be 0 or > 1.
    {
        CheckItem item{"H6", false, ""};
        if (!model.psi.zero) {
            Vec x(static_cast<std::size_t>(model.dim));
            Vec disp(static_cast<std::size_t>(model.dim));
            SplitStream ms = rng.child(7001);
            for (std::size_t m = 0; m < K && !item.flagged; ++m)
                for (int it = 0; it < per_mode; ++it) {
                    for (double& v : x) v = 5.0 * (2.0 * rng.next_unit() - 1.0);
                    Vec mark = model.mu.sample(ms);
                    std::fill(disp.begin(), disp.end(), 0.0);
                    model.psi.eval(static_cast<int>(m), static_cast<int>(m), x, mark, disp);
                    double norm = 0.0;
                    for (double v : disp) norm += v * v;
                    norm = std::sqrt(norm);
                    if (norm > 1e-12 && norm <= 1.0) {
                        item.flagged = true;
                        item.detail = "|psi(theta,theta,x,z)| = " + std::to_string(norm) + " lies in (0,1]";
                        break;
                    }
                }
        }
        report.items.push_back(std::move(item));
    }

    // H7: boundary hits per unit time from pilot runs.
    {
        CheckItem item{"H7", false, ""};
        bool any_boundary = false;
        for (const GshsMode& m : model.modes) any_boundary = any_boundary || m.has_boundary();
        if (any_boundary) {
            ExecParams pilot;
            pilot.dt = 0.01;
            pilot.horizon = 2.0;
            pilot.grid_dt = 0.0;
            pilot.max_jumps = 5000;
            RandomBasis pb(seed ^ 0x2545f491u);
            double forced = 0.0;
            int reps = 12;
            try {
                for (int i = 0; i < reps; ++i) {
                    RandomBasis b = pb.replicate(static_cast<std::uint64_t>(i));
                    HybridPath p = simulate_hsde(model, pilot, b);
                    for (JumpKind k : p.jump_kinds)
                        if (k == JumpKind::forced) forced += 1.0;
                }
                forced /= reps;
                if (forced > 100.0 * pilot.horizon) {
                    item.flagged = true;
                    item.detail = "mean boundary hits per pilot run " + std::to_string(forced);
                } else {
                    item.detail = "mean boundary hits per pilot run " + std::to_string(forced);
                }
            } catch (const NumericalError& e) {
                item.flagged = true;
                item.detail = std::string("pilot aborted: ") + e.what();
            }
        }
        report.items.push_back(std::move(item));
    }

    // H8: pairwise mode distances above 1 under the declared metric
    // (Euclidean distance between mode tag vectors).
    {
        CheckItem item{"H8", false, ""};
        double min_d2 = kInf;
        for (std::size_t i = 0; i < K; ++i)
            for (std::size_t j = i + 1; j < K; ++j) {
                const auto& a = model.modes[i].tag;
                const auto& b = model.modes[j].tag;
                double d2 = 0.0;
                std::size_t n = std::max(a.size(), b.size());
                for (std::size_t k = 0; k < n; ++k) {
                    double av = k < a.size() ? a[k] : 0.0;
                    double bv = k < b.size() ? b[k] : 0.0;
                    d2 += (av - bv) * (av - bv);
                }
                min_d2 = std::min(min_d2, d2);
            }
        if (K > 1 && !(min_d2 > 1.0)) {
            item.flagged = true;
            item.detail = "minimal pairwise |theta_i - theta_j|^2 = " + std::to_string(min_d2) +
                          " is not > 1";
        } else if (K > 1) {
            item.detail = "minimal pairwise squared distance " + std::to_string(min_d2);
        }
        report.items.push_back(std::move(item));
    }

    return report;
}

nlohmann::json hsde_to_json(const HsdeModel& model) {
    nlohmann::json j;
    j["formalism"] = "hsde";
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(model.source_hash));
    j["source_hash"] = buf;
    j["n"] = model.dim;
    j["wiener_dim"] = model.wiener_dim;
    j["mark_dim"] = model.mark_dim;
    j["c_lambda"] = model.c_lambda;
    if (model.c_lambda_exact) {
        j["c_lambda_num"] = model.c_lambda_exact->num();
        j["c_lambda_den"] = model.c_lambda_exact->den();
    }
    j["c_lambda_symbolic"] = model.c_lambda_symbol;
    j["psi"] = model.psi.text;
    j["mu"] = model.mu.text;
    nlohmann::json order = nlohmann::json::array();
    for (const GshsMode& m : model.modes) order.push_back(m.tag);
    j["mode_order"] = order;
    if (model.rho.matrix) {
        nlohmann::json rows = nlohmann::json::array();
        const DiscreteKernelMatrix& rm = *model.rho.matrix;
        for (std::size_t i = 0; i < rm.symbolic.size(); ++i) {
            nlohmann::json row = nlohmann::json::array();
            for (std::size_t k = 0; k < rm.symbolic[i].size(); ++k) {
                if (rm.symbolic[i][k].is_zero()) {
                    row.push_back(nullptr);
                    continue;
                }
                nlohmann::json e;
                e["symbolic"] = rm.symbolic[i][k].to_string();
                e["value"] = rm.value[i][k];
                if (!rm.exact.empty()) {
                    e["num"] = rm.exact[i][k].num();
                    e["den"] = rm.exact[i][k].den();
                }
                row.push_back(e);
            }
            rows.push_back(row);
        }
        j["rho"] = rows;
    }
    return j;
}

}  // namespace shs
