#include "shs/sdcpn_exec.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace shs {

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();
}

std::vector<int> Marking::counts() const {
    std::vector<int> c(tokens.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) c[i] = static_cast<int>(tokens[i].size());
    return c;
}

Vec Marking::colour_vector(const SdcpnModel& model) const {
    Vec out;
    for (std::size_t p = 0; p < tokens.size(); ++p) {
        if (model.places[p].colour_dim == 0) continue;
        for (const Token& tok : tokens[p]) out.insert(out.end(), tok.colour.begin(), tok.colour.end());
    }
    return out;
}

int Marking::total_tokens() const {
    int n = 0;
    for (const auto& ts : tokens) n += static_cast<int>(ts.size());
    return n;
}

int Marking::find_slot(int place, std::uint64_t serial) const {
    const auto& ts = tokens[static_cast<std::size_t>(place)];
    for (std::size_t s = 0; s < ts.size(); ++s)
        if (ts[s].serial == serial) return static_cast<int>(s);
    return -1;
}

Marking initial_marking(const SdcpnModel& model, RandomBasis& basis, std::uint64_t* serial_counter) {
    Marking m;
    m.tokens.resize(model.places.size());
    for (const InitialTokens& init : model.initial) {
        const Place& place = model.places[static_cast<std::size_t>(init.place)];
        for (int k = 0; k < init.count; ++k) {
            Token tok;
            tok.serial = (*serial_counter)++;
            if (place.colour_dim > 0) {
                const ColourSampler& cs =
                    init.colours.size() == 1 ? init.colours[0] : init.colours.at(static_cast<std::size_t>(k));
                tok.colour = cs.sample(basis.uniforms());
                if (static_cast<int>(tok.colour.size()) != place.colour_dim)
                    throw ModelError(place.id + ": initial colour has wrong dimension");
            }
            m.tokens[static_cast<std::size_t>(init.place)].push_back(std::move(tok));
        }
    }
    return m;
}

std::vector<std::uint64_t> EnablingCandidate::key(std::size_t) const {
    std::vector<std::uint64_t> k;
    k.reserve(picks.size() + 1);
    k.push_back(static_cast<std::uint64_t>(transition));
    for (const TokenPick& p : picks) k.push_back(p.serial);
    return k;
}

Vec EnablingCandidate::colour_vector(const SdcpnModel& model, const Marking& marking) const {
    // Concatenation follows place order then token order, not arc order.
    std::vector<const TokenPick*> sorted;
    sorted.reserve(picks.size());
    for (const TokenPick& p : picks) sorted.push_back(&p);
    std::sort(sorted.begin(), sorted.end(), [](const TokenPick* a, const TokenPick* b) {
        return a->place != b->place ? a->place < b->place : a->slot < b->slot;
    });
    Vec out;
    for (const TokenPick* p : sorted) {
        if (model.places[static_cast<std::size_t>(p->place)].colour_dim == 0) continue;
        const Token& tok = marking.tokens[static_cast<std::size_t>(p->place)].at(static_cast<std::size_t>(p->slot));
        out.insert(out.end(), tok.colour.begin(), tok.colour.end());
    }
    return out;
}

namespace {

void enumerate_picks(const SdcpnModel& model, const Marking& marking, int transition,
                     const std::vector<int>& input_arcs, std::size_t arc_pos,
                     std::vector<TokenPick>& picks, std::vector<EnablingCandidate>& out) {
    if (arc_pos == input_arcs.size()) {
        EnablingCandidate c;
        c.transition = transition;
        c.picks = picks;
        out.push_back(std::move(c));
        return;
    }
    const Arc& arc = model.arcs[static_cast<std::size_t>(input_arcs[arc_pos])];
    const auto& tokens = marking.tokens[static_cast<std::size_t>(arc.place)];
    for (std::size_t slot = 0; slot < tokens.size(); ++slot) {
        bool taken = false;
        for (const TokenPick& p : picks)
            if (p.place == arc.place && p.serial == tokens[slot].serial) taken = true;
        if (taken) continue;  // one token per arc, distinct across arcs from one place
        picks.push_back({arc.place, static_cast<int>(slot), tokens[slot].serial});
        enumerate_picks(model, marking, transition, input_arcs, arc_pos + 1, picks, out);
        picks.pop_back();
    }
}

}  // namespace

std::vector<EnablingCandidate> pre_enabled(const SdcpnModel& model, const Marking& marking) {
    std::vector<EnablingCandidate> out;
    for (std::size_t t = 0; t < model.transitions.size(); ++t) {
        const auto& io = model.io[t];
        bool inhibited = false;
        for (int a : io.inhibitor_arcs)
            if (!marking.tokens[static_cast<std::size_t>(model.arcs[static_cast<std::size_t>(a)].place)].empty())
                inhibited = true;
        if (inhibited) continue;
        if (io.input_arcs.empty()) continue;  // a transition with no inputs is never pre-enabled
        bool feasible = true;
        for (int a : io.input_arcs)
            if (marking.tokens[static_cast<std::size_t>(model.arcs[static_cast<std::size_t>(a)].place)].empty())
                feasible = false;
        if (!feasible) continue;
        std::vector<TokenPick> picks;
        enumerate_picks(model, marking, static_cast<int>(t), io.input_arcs, 0, picks, out);
    }
    return out;
}

double sample_delay(const RateFn& rate, const std::function<Vec(double)>& colour_path, double dt,
                    SplitStream& uniforms) {
    double threshold = -std::log(uniforms.next_open());
    if (rate.constant) {
        if (rate.value == 0.0) return kInf;
        return threshold / rate.value;
    }
    if (!colour_path) throw ConfigError("state-dependent delay rate needs a colour path");
    if (!(dt > 0.0)) throw ConfigError("sample_delay needs dt > 0");
    double integral = 0.0;
    double t = 0.0;
    const double t_max = 1e9;
    while (t < t_max) {
        Vec c = colour_path(t);
        double r = rate.eval(c);
        if (!std::isfinite(r) || r < 0.0)
            throw NumericalError("delay rate not integrable along the colour path at t=" + std::to_string(t));
        if (integral + r * dt >= threshold && r > 0.0) return t + (threshold - integral) / r;
        integral += r * dt;
        t += dt;
    }
    return kInf;
}

void advance_colours(const SdcpnModel& model, Marking& marking, double dt, RandomBasis& basis) {
    if (!(dt > 0.0)) throw ConfigError("advance_colours needs dt > 0");
    double sqdt = std::sqrt(dt);
    Vec drift, diff;
    for (std::size_t p = 0; p < marking.tokens.size(); ++p) {
        const Place& place = model.places[p];
        if (place.colour_dim == 0 || place.frozen()) continue;
        int n = place.colour_dim;
        int h = place.brownian_dim;
        drift.assign(static_cast<std::size_t>(n), 0.0);
        diff.assign(static_cast<std::size_t>(n) * static_cast<std::size_t>(h), 0.0);
        for (std::size_t slot = 0; slot < marking.tokens[p].size(); ++slot) {
            Token& tok = marking.tokens[p][slot];
            place.drift.eval(tok.colour, drift);
            place.diffusion.eval(tok.colour, diff);
            SplitStream& bm = basis.brownian(static_cast<int>(p), static_cast<int>(slot));
            Vec db(static_cast<std::size_t>(h));
            for (double& v : db) v = sqdt * bm.next_normal();
            for (int i = 0; i < n; ++i) {
                double inc = drift[static_cast<std::size_t>(i)] * dt;
                for (int j = 0; j < h; ++j)
                    inc += diff[static_cast<std::size_t>(i * h + j)] * db[static_cast<std::size_t>(j)];
                tok.colour[static_cast<std::size_t>(i)] += inc;
                if (!std::isfinite(tok.colour[static_cast<std::size_t>(i)]))
                    throw NumericalError(place.id + ": non-finite colour for token serial " +
                                         std::to_string(tok.serial));
            }
        }
    }
}

std::optional<double> detect_guard_hit(const GuardFn& guard, const Vec& colour_before,
                                       const Vec& colour_after, double t0, double t1,
                                       double time_tol, double guard_tol) {
    double sd0 = guard.signed_distance(colour_before);
    double sd1 = guard.signed_distance(colour_after);
    if (std::fabs(sd0) <= guard_tol) return t0;
    bool sign_change = (sd0 < 0.0) != (sd1 < 0.0);
    if (!sign_change && std::fabs(sd1) > guard_tol) return std::nullopt;
    if (!sign_change) return t1;  // touched the boundary within tolerance at step end

    Vec mid(colour_before.size());
    double lo = 0.0, hi = 1.0;
    double sd_hi = sd1;
    for (int iter = 0; iter < 200; ++iter) {
        double m = 0.5 * (lo + hi);
        for (std::size_t i = 0; i < mid.size(); ++i)
            mid[i] = colour_before[i] + m * (colour_after[i] - colour_before[i]);
        double sdm = guard.signed_distance(mid);
        if ((sdm < 0.0) == (sd0 < 0.0) && std::fabs(sdm) > guard_tol) {
            lo = m;
        } else {
            hi = m;
            sd_hi = sdm;
        }
        if ((hi - lo) * (t1 - t0) <= time_tol && std::fabs(sd_hi) <= guard_tol) break;
    }
    return t0 + hi * (t1 - t0);
}

namespace {

// Disabling relation between two simultaneous candidates: one consumes a
// token the other selected, or may produce into the other's inhibitor place.
bool conflicts(const SdcpnModel& model, const EnablingCandidate& a, const EnablingCandidate& b) {
    auto consumed_by = [&model](const EnablingCandidate& c) {
        std::set<std::pair<int, std::uint64_t>> consumed;
        const auto& io = model.io[static_cast<std::size_t>(c.transition)];
        for (std::size_t i = 0; i < io.input_arcs.size(); ++i) {
            const Arc& arc = model.arcs[static_cast<std::size_t>(io.input_arcs[i])];
            if (arc.kind == ArcKind::ordinary)
                consumed.insert({c.picks[i].place, c.picks[i].serial});
        }
        return consumed;
    };
    auto uses = [](const EnablingCandidate& c) {
        std::set<std::pair<int, std::uint64_t>> used;
        for (const TokenPick& p : c.picks) used.insert({p.place, p.serial});
        return used;
    };
    auto may_output_into_inhibitor = [&model](const EnablingCandidate& x, const EnablingCandidate& y) {
        const auto& iox = model.io[static_cast<std::size_t>(x.transition)];
        const auto& ioy = model.io[static_cast<std::size_t>(y.transition)];
        const FiringMeasure& fm = model.transitions[static_cast<std::size_t>(x.transition)].firing;
        for (std::size_t j = 0; j < iox.output_arcs.size(); ++j) {
            bool can_produce = false;
            for (const auto& e : fm.support)
                if (e[j] == 1) can_produce = true;
            if (!can_produce) continue;
            int target = model.arcs[static_cast<std::size_t>(iox.output_arcs[j])].place;
            for (int ia : ioy.inhibitor_arcs)
                if (model.arcs[static_cast<std::size_t>(ia)].place == target) return true;
        }
        return false;
    };

    auto ca = consumed_by(a), cb = consumed_by(b);
    for (const auto& tok : ca)
        if (uses(b).count(tok)) return true;
    for (const auto& tok : cb)
        if (uses(a).count(tok)) return true;
    return may_output_into_inhibitor(a, b) || may_output_into_inhibitor(b, a);
}

void maximal_independent_sets(const std::vector<std::vector<bool>>& adj, std::size_t n,
                              std::vector<int>& chosen, std::size_t next,
                              std::vector<std::vector<int>>& out) {
    if (next == n) {
        // maximal iff every excluded vertex conflicts with a chosen one
        for (std::size_t v = 0; v < n; ++v) {
            bool in = false;
            for (int c : chosen)
                if (static_cast<std::size_t>(c) == v) in = true;
            if (in) continue;
            bool blocked = false;
            for (int c : chosen)
                if (adj[v][static_cast<std::size_t>(c)]) blocked = true;
            if (!blocked) return;  // could still add v: not maximal
        }
        out.push_back(chosen);
        return;
    }
    bool can_take = true;
    for (int c : chosen)
        if (adj[next][static_cast<std::size_t>(c)]) can_take = false;
    if (can_take) {
        chosen.push_back(static_cast<int>(next));
        maximal_independent_sets(adj, n, chosen, next + 1, out);
        chosen.pop_back();
    }
    maximal_independent_sets(adj, n, chosen, next + 1, out);
}

}  // namespace

std::vector<std::vector<EnablingCandidate>> conflict_free_plans(
    const SdcpnModel& model, const std::vector<EnablingCandidate>& enabled) {
    std::vector<EnablingCandidate> pool = enabled;
    std::sort(pool.begin(), pool.end(), [](const EnablingCandidate& a, const EnablingCandidate& b) {
        return a.key(0) < b.key(0);
    });
    std::size_t n = pool.size();
    if (n == 0) return {};
    if (n == 1) return {pool};
    if (n > 25) throw NumericalError("conflict resolution over more than 25 simultaneous candidates");

    std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
    bool any_conflict = false;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j)
            if (conflicts(model, pool[i], pool[j])) {
                adj[i][j] = adj[j][i] = true;
                any_conflict = true;
            }

    if (!any_conflict) return {pool};

    std::vector<std::vector<int>> sets;
    std::vector<int> chosen;
    maximal_independent_sets(adj, n, chosen, 0, sets);
    std::vector<std::vector<EnablingCandidate>> plans;
    plans.reserve(sets.size());
    for (const auto& set : sets) {
        std::vector<EnablingCandidate> plan;
        for (int i : set) plan.push_back(pool[static_cast<std::size_t>(i)]);
        plans.push_back(std::move(plan));
    }
    return plans;
}

std::vector<EnablingCandidate> resolve_conflicts(const SdcpnModel& model,
                                                 const std::vector<EnablingCandidate>& enabled,
                                                 SplitStream& uniforms) {
    if (enabled.empty()) return {};

    // R0: immediate firings preempt guard and delay firings.
    std::vector<EnablingCandidate> pool;
    bool any_immediate = false;
    for (const EnablingCandidate& c : enabled)
        if (model.transitions[static_cast<std::size_t>(c.transition)].kind == TransitionKind::immediate)
            any_immediate = true;
    for (const EnablingCandidate& c : enabled) {
        if (!any_immediate ||
            model.transitions[static_cast<std::size_t>(c.transition)].kind == TransitionKind::immediate)
            pool.push_back(c);
    }

    // R1/R3 leave a single plan; R2/R4 weight the maximal combinations
    // equally.
    std::vector<std::vector<EnablingCandidate>> plans = conflict_free_plans(model, pool);
    if (plans.size() == 1) return plans.front();
    std::size_t pick = static_cast<std::size_t>(uniforms.next_unit() * static_cast<double>(plans.size()));
    if (pick >= plans.size()) pick = plans.size() - 1;
    return plans[pick];
}

FireStats fire(const SdcpnModel& model, Marking& marking, const std::vector<EnablingCandidate>& plan,
               RandomBasis& basis, std::uint64_t* serial_counter) {
    FireStats stats;

    // Colour vectors are read at the firing instant, before any removal.
    std::vector<Vec> colours;
    colours.reserve(plan.size());
    for (const EnablingCandidate& c : plan) colours.push_back(c.colour_vector(model, marking));

    for (const EnablingCandidate& c : plan) {
        const auto& io = model.io[static_cast<std::size_t>(c.transition)];
        for (std::size_t i = 0; i < io.input_arcs.size(); ++i) {
            const Arc& arc = model.arcs[static_cast<std::size_t>(io.input_arcs[i])];
            if (arc.kind != ArcKind::ordinary) continue;  // tokens are not removed along enabling arcs
            int slot = marking.find_slot(c.picks[i].place, c.picks[i].serial);
            if (slot < 0)
                throw ModelError("firing plan references a token that is no longer present");
            auto& toks = marking.tokens[static_cast<std::size_t>(c.picks[i].place)];
            toks.erase(toks.begin() + slot);
            ++stats.tokens_removed;
        }
    }

    for (std::size_t k = 0; k < plan.size(); ++k) {
        const EnablingCandidate& c = plan[k];
        const Transition& tr = model.transitions[static_cast<std::size_t>(c.transition)];
        const auto& io = model.io[static_cast<std::size_t>(c.transition)];
        int which = tr.firing.sample(colours[k], basis.uniforms());
        const std::vector<int>& e = tr.firing.support[static_cast<std::size_t>(which)];
        for (std::size_t j = 0; j < io.output_arcs.size(); ++j) {
            if (e[j] != 1) continue;
            const Arc& arc = model.arcs[static_cast<std::size_t>(io.output_arcs[j])];
            const Place& out_place = model.places[static_cast<std::size_t>(arc.place)];
            Token tok;
            tok.serial = (*serial_counter)++;
            if (out_place.colour_dim > 0) {
                if (tr.firing.produce_colour)
                    tok.colour = tr.firing.produce_colour(static_cast<int>(j), colours[k], basis.uniforms());
                else
                    tok.colour = colours[k];
                if (static_cast<int>(tok.colour.size()) != out_place.colour_dim)
                    throw ModelError(tr.id + ": produced colour dimension does not match place " +
                                     out_place.id);
            }
            marking.tokens[static_cast<std::size_t>(arc.place)].push_back(std::move(tok));
            ++stats.tokens_added;
        }
    }
    return stats;
}

int immediate_closure(const SdcpnModel& model, Marking& marking, RandomBasis& basis,
                      std::uint64_t* serial_counter, int max_rounds) {
    int rounds = 0;
    while (true) {
        std::vector<EnablingCandidate> immediates;
        for (EnablingCandidate& c : pre_enabled(model, marking))
            if (model.transitions[static_cast<std::size_t>(c.transition)].kind == TransitionKind::immediate)
                immediates.push_back(std::move(c));
        if (immediates.empty()) return rounds;
        if (++rounds > max_rounds)
            throw NumericalError("immediate-transition cycle: closure did not terminate within " +
                                 std::to_string(max_rounds) + " rounds");
        std::vector<EnablingCandidate> plan = resolve_conflicts(model, immediates, basis.uniforms());
        fire(model, marking, plan, basis, serial_counter);
    }
}

// ---------------------------------------------------------------------------
// execution loop
// ---------------------------------------------------------------------------

namespace {

struct ClockState {
    double threshold;
    double rate_integral;
    double expiry;
};

std::vector<double> build_grid(const ExecParams& params) {
    std::vector<double> grid;
    grid.push_back(0.0);
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

HybridPath simulate_sdcpn(const SdcpnModel& model, const ExecParams& params, RandomBasis& basis) {
    if (!(params.horizon > 0.0)) throw ConfigError("simulate_sdcpn needs horizon > 0");
    if (!(params.dt > 0.0)) throw ConfigError("simulate_sdcpn needs dt > 0");

    std::uint64_t serial_counter = 0;
    Marking marking = initial_marking(model, basis, &serial_counter);
    immediate_closure(model, marking, basis, &serial_counter, params.max_immediate);

    ModeTimeline timeline;
    timeline.horizon = params.horizon;
    ModeCatalog catalog;
    {
        JumpEvent ev;
        ev.time = 0.0;
        ev.kind = JumpKind::init;
        ev.mode_after = catalog.intern(marking.counts());
        ev.state_after = marking.colour_vector(model);
        ev.state_before = ev.state_after;
        timeline.events.push_back(std::move(ev));
    }

    std::vector<double> grid = build_grid(params);
    SampledContinuous sampled;
    sampled.times.push_back(0.0);
    sampled.values.push_back(marking.colour_vector(model));
    std::size_t next_grid = 1;

    // Candidate set with clock carry-over across firings: a pre-enabled delay
    // transition's clock is sampled once and survives until its token
    // selection is consumed; re-pre-enabling resamples.
    std::vector<EnablingCandidate> candidates;
    auto rebuild_candidates = [&](double now, const std::map<std::vector<std::uint64_t>, ClockState>& carried) {
        candidates = pre_enabled(model, marking);
        std::sort(candidates.begin(), candidates.end(),
                  [](const EnablingCandidate& a, const EnablingCandidate& b) { return a.key(0) < b.key(0); });
        for (EnablingCandidate& c : candidates) {
            const Transition& tr = model.transitions[static_cast<std::size_t>(c.transition)];
            if (tr.kind == TransitionKind::delay) {
                auto it = carried.find(c.key(0));
                if (it != carried.end()) {
                    c.threshold = it->second.threshold;
                    c.rate_integral = it->second.rate_integral;
                    c.expiry = it->second.expiry;
                } else {
                    c.threshold = -std::log(basis.uniforms().next_open());
                    c.rate_integral = 0.0;
                    c.expiry = tr.rate->constant
                                   ? (tr.rate->value == 0.0 ? kInf : now + c.threshold / tr.rate->value)
                                   : kInf;
                }
            } else if (tr.kind == TransitionKind::guard) {
                c.last_sd = tr.guard->signed_distance(c.colour_vector(model, marking));
            }
        }
    };
    rebuild_candidates(0.0, {});

    double t = 0.0;
    std::uint64_t jumps = 0;

    // Saved pre-step colours for event localization inside a step.
    std::vector<std::vector<Vec>> saved(model.places.size());

    while (t < params.horizon) {
        bool active_dynamics = false;
        for (std::size_t p = 0; p < marking.tokens.size(); ++p)
            if (!marking.tokens[p].empty() && model.places[p].colour_dim > 0 && !model.places[p].frozen())
                active_dynamics = true;
        bool state_dep = false, guards_active = false;
        double next_expiry = kInf;
        for (const EnablingCandidate& c : candidates) {
            const Transition& tr = model.transitions[static_cast<std::size_t>(c.transition)];
            if (tr.kind == TransitionKind::delay) {
                if (tr.rate->constant) next_expiry = std::min(next_expiry, c.expiry);
                else state_dep = true;
            } else if (tr.kind == TransitionKind::guard) {
                guards_active = true;
            }
        }

        bool need_stepping = active_dynamics || state_dep || guards_active;
        double step_cap = need_stepping ? params.dt : kInf;
        double t_new = std::min(std::min(t + step_cap, params.horizon),
                                std::min(next_expiry, next_grid < grid.size() ? grid[next_grid] : kInf));
        double h = t_new - t;

        // Tentative advance over [t, t_new]; events may truncate it.
        if (active_dynamics && h > 0.0) {
            for (std::size_t p = 0; p < marking.tokens.size(); ++p) {
                saved[p].clear();
                if (model.places[p].colour_dim > 0 && !model.places[p].frozen())
                    for (const Token& tok : marking.tokens[p]) saved[p].push_back(tok.colour);
            }
        }
        struct PendingEvent {
            double time;
            std::size_t candidate;
        };
        std::vector<PendingEvent> pending;
        std::vector<double> rate_now(candidates.size(), 0.0);
        std::vector<Vec> colour_before(candidates.size());
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            const Transition& tr = model.transitions[static_cast<std::size_t>(candidates[i].transition)];
            if (tr.kind == TransitionKind::delay && !tr.rate->constant)
                rate_now[i] = tr.rate->eval(candidates[i].colour_vector(model, marking));
            if (tr.kind == TransitionKind::guard)
                colour_before[i] = candidates[i].colour_vector(model, marking);
        }

        if (active_dynamics && h > 0.0) advance_colours(model, marking, h, basis);

        for (std::size_t i = 0; i < candidates.size(); ++i) {
            EnablingCandidate& c = candidates[i];
            const Transition& tr = model.transitions[static_cast<std::size_t>(c.transition)];
            if (tr.kind == TransitionKind::delay) {
                if (tr.rate->constant) {
                    if (c.expiry <= t_new) pending.push_back({c.expiry, i});
                } else if (rate_now[i] > 0.0 && c.rate_integral + rate_now[i] * h >= c.threshold) {
                    pending.push_back({t + (c.threshold - c.rate_integral) / rate_now[i], i});
                }
            } else if (tr.kind == TransitionKind::guard) {
                Vec after = c.colour_vector(model, marking);
                auto hit = detect_guard_hit(*tr.guard, colour_before[i], after, t, t_new,
                                            params.dt * params.time_tol_factor, params.guard_tol);
                if (hit) pending.push_back({std::max(*hit, t), i});
            }
        }

        if (pending.empty()) {
            // Commit the full step.
            for (std::size_t i = 0; i < candidates.size(); ++i) {
                EnablingCandidate& c = candidates[i];
                const Transition& tr = model.transitions[static_cast<std::size_t>(c.transition)];
                if (tr.kind == TransitionKind::delay && !tr.rate->constant)
                    c.rate_integral += rate_now[i] * h;
                else if (tr.kind == TransitionKind::guard)
                    c.last_sd = tr.guard->signed_distance(c.colour_vector(model, marking));
            }
            t = t_new;
            while (next_grid < grid.size() && grid[next_grid] <= t) {
                sampled.times.push_back(grid[next_grid]);
                sampled.values.push_back(marking.colour_vector(model));
                ++next_grid;
            }
            continue;
        }

        double tau = kInf;
        for (const PendingEvent& ev : pending) tau = std::min(tau, ev.time);
        double frac = h > 0.0 ? (tau - t) / h : 1.0;
        if (frac < 1.0 && active_dynamics) {
            // Interpolate every advanced token back to the event time.
            for (std::size_t p = 0; p < marking.tokens.size(); ++p) {
                if (saved[p].empty()) continue;
                for (std::size_t s = 0; s < marking.tokens[p].size(); ++s) {
                    Vec& col = marking.tokens[p][s].colour;
                    const Vec& was = saved[p][s];
                    for (std::size_t j = 0; j < col.size(); ++j)
                        col[j] = was[j] + frac * (col[j] - was[j]);
                }
            }
        }
        // Book-keeping for candidates that did not fire.
        for (std::size_t i = 0; i < candidates.size(); ++i) {
            EnablingCandidate& c = candidates[i];
            const Transition& tr = model.transitions[static_cast<std::size_t>(c.transition)];
            if (tr.kind == TransitionKind::delay && !tr.rate->constant)
                c.rate_integral += rate_now[i] * (tau - t);
        }

        std::vector<EnablingCandidate> enabled;
        JumpKind kind = JumpKind::spontaneous;
        bool first = true;
        for (const PendingEvent& ev : pending) {
            if (ev.time > tau) continue;
            enabled.push_back(candidates[ev.candidate]);
            const Transition& tr =
                model.transitions[static_cast<std::size_t>(candidates[ev.candidate].transition)];
            if (first) {
                kind = tr.kind == TransitionKind::guard ? JumpKind::forced : JumpKind::spontaneous;
                first = false;
            }
        }

        t = tau;
        Vec pre_state = marking.colour_vector(model);
        std::vector<EnablingCandidate> plan = resolve_conflicts(model, enabled, basis.uniforms());
        fire(model, marking, plan, basis, &serial_counter);
        immediate_closure(model, marking, basis, &serial_counter, params.max_immediate);
        if (++jumps > params.max_jumps)
            throw NumericalError("jump budget exceeded at t=" + std::to_string(t) +
                                 " (Zeno-like behaviour)");

        JumpEvent ev;
        ev.time = t;
        ev.kind = kind;
        ev.mode_after = catalog.intern(marking.counts());
        ev.state_before = pre_state;
        ev.state_after = marking.colour_vector(model);
        timeline.events.push_back(std::move(ev));

        // Carry clocks whose token selections survived the firing. Triggered
        // candidates (fired or tied losers) get a fresh clock even when their
        // tokens were not consumed: their survivor clock has run out.
        std::map<std::vector<std::uint64_t>, ClockState> carried;
        std::set<std::vector<std::uint64_t>> triggered;
        for (const EnablingCandidate& c : enabled) triggered.insert(c.key(0));
        for (const EnablingCandidate& c : candidates) {
            const Transition& tr = model.transitions[static_cast<std::size_t>(c.transition)];
            if (tr.kind == TransitionKind::delay && !triggered.count(c.key(0)))
                carried[c.key(0)] = {c.threshold, c.rate_integral, c.expiry};
        }
        rebuild_candidates(t, carried);

        while (next_grid < grid.size() && grid[next_grid] <= t) {
            sampled.times.push_back(grid[next_grid]);
            sampled.values.push_back(marking.colour_vector(model));
            ++next_grid;
        }
    }

    HybridPath path = merge_paths(timeline, sampled);
    path.catalog = catalog;
    return path;
}

}  // namespace shs
