#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <set>

#include "shs/model_io.hpp"
#include "shs/sdcpn_exec.hpp"

using namespace shs;

namespace {

// Compact programmatic net builder for the crafted rule tests.
struct NetBuilder {
    SdcpnModel m;

    int place(const std::string& id, int dim = 0) {
        Place p;
        p.id = id;
        p.colour_dim = dim;
        if (dim > 0) {
            p.brownian_dim = dim;
            p.drift = make_drift_zero(dim);
            p.diffusion = make_diffusion_zero(dim, dim);
        }
        m.places.push_back(std::move(p));
        return static_cast<int>(m.places.size()) - 1;
    }
    int immediate(const std::string& id) {
        Transition t;
        t.id = id;
        t.kind = TransitionKind::immediate;
        m.transitions.push_back(std::move(t));
        return static_cast<int>(m.transitions.size()) - 1;
    }
    int delay(const std::string& id, double rate) {
        Transition t;
        t.id = id;
        t.kind = TransitionKind::delay;
        t.rate = make_rate_const(rate);
        m.transitions.push_back(std::move(t));
        return static_cast<int>(m.transitions.size()) - 1;
    }
    void arc(const std::string& src, const std::string& dst, ArcKind kind = ArcKind::ordinary) {
        Arc a;
        a.id = "a" + std::to_string(m.arcs.size());
        a.kind = kind;
        int sp = m.place_index(src);
        if (sp >= 0) {
            a.place_to_transition = true;
            a.place = sp;
            a.transition = m.transition_index(dst);
        } else {
            a.place_to_transition = false;
            a.transition = m.transition_index(src);
            a.place = m.place_index(dst);
        }
        m.arcs.push_back(a);
    }
    void tokens(const std::string& id, int count) {
        InitialTokens i;
        i.place = m.place_index(id);
        i.count = count;
        m.initial.push_back(std::move(i));
    }
    SdcpnModel build() {
        m.finalize();
        for (std::size_t t = 0; t < m.transitions.size(); ++t)
            if (m.transitions[t].firing.support.empty())
                m.transitions[t].firing = make_firing_dirac(static_cast<int>(m.io[t].output_arcs.size()));
        return m;
    }
};

Marking marking_of(const SdcpnModel& model, std::uint64_t seed, std::uint64_t* serial) {
    RandomBasis basis(seed);
    return initial_marking(model, basis, serial);
}

std::set<std::string> transition_names(const SdcpnModel& m, const std::vector<EnablingCandidate>& cs) {
    std::set<std::string> names;
    for (const EnablingCandidate& c : cs) names.insert(m.transitions[static_cast<std::size_t>(c.transition)].id);
    return names;
}

}  // namespace

TEST_CASE("pre_enabled on the airtraffic initial marking") {
    SdcpnModel m = airtraffic_example();
    std::uint64_t serial = 0;
    Marking marking = marking_of(m, 1, &serial);
    std::vector<EnablingCandidate> cands = pre_enabled(m, marking);
    CHECK(transition_names(m, cands) == std::set<std::string>{"T4", "T6", "T7"});
    CHECK(cands.size() == 3);

    Marking empty;
    empty.tokens.resize(m.places.size());
    CHECK(pre_enabled(m, empty).empty());
}

TEST_CASE("one candidate per distinct token selection") {
    NetBuilder nb;
    nb.place("P");
    nb.place("Q");
    nb.immediate("T");
    nb.arc("P", "T");
    nb.arc("T", "Q");
    nb.tokens("P", 2);
    SdcpnModel m = nb.build();
    std::uint64_t serial = 0;
    Marking marking = marking_of(m, 1, &serial);
    CHECK(pre_enabled(m, marking).size() == 2);
}

TEST_CASE("inhibitor arcs block pre-enabling") {
    NetBuilder nb;
    nb.place("P");
    nb.place("B");
    nb.place("Q");
    nb.immediate("T");
    nb.arc("P", "T");
    nb.arc("B", "T", ArcKind::inhibitor);
    nb.arc("T", "Q");
    nb.tokens("P", 1);
    nb.tokens("B", 1);
    SdcpnModel m = nb.build();
    std::uint64_t serial = 0;
    Marking marking = marking_of(m, 1, &serial);
    CHECK(pre_enabled(m, marking).empty());
}

TEST_CASE("sample_delay closed form and inversion") {
    SplitStream u(7);
    RateFn zero_rate = make_rate_const(0.0);
    CHECK(sample_delay(zero_rate, nullptr, 0.0, u) == std::numeric_limits<double>::infinity());

    RateFn r2 = make_rate_const(2.0);
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += sample_delay(r2, nullptr, 0.0, u);
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));

    // state-dependent constant-valued rate agrees with the closed form
    RateFn state_dep;
    state_dep.constant = false;
    state_dep.eval = [](std::span<const double>) { return 2.0; };
    auto path = [](double) { return Vec{0.0}; };
    double sum2 = 0.0;
    for (int i = 0; i < 20000; ++i) sum2 += sample_delay(state_dep, path, 1e-3, u);
    CHECK(sum2 / 20000 == doctest::Approx(0.5).epsilon(0.03));

    RateFn broken;
    broken.constant = false;
    broken.eval = [](std::span<const double>) { return std::numeric_limits<double>::quiet_NaN(); };
    CHECK_THROWS_AS(sample_delay(broken, path, 1e-3, u), NumericalError);
}

TEST_CASE("advance_colours steps") {
    // zero dynamics leave the colour unchanged
    NetBuilder nb;
    int p = nb.place("P", 2);
    nb.m.places[static_cast<std::size_t>(p)].drift = make_drift_zero(2);
    SdcpnModel m = nb.build();
    Marking marking;
    marking.tokens.resize(1);
    marking.tokens[0].push_back({{1.0, -2.0}, 0});
    RandomBasis basis(3);
    advance_colours(m, marking, 0.1, basis);
    CHECK(marking.tokens[0][0].colour == Vec{1.0, -2.0});

    // constant drift, zero diffusion: exact Euler step
    NetBuilder nc;
    int pc = nc.place("P", 2);
    nc.m.places[static_cast<std::size_t>(pc)].drift = make_drift_const({3.0, -1.0});
    SdcpnModel mc = nc.build();
    Marking mk;
    mk.tokens.resize(1);
    mk.tokens[0].push_back({{0.0, 0.0}, 0});
    advance_colours(mc, mk, 0.1, basis);
    CHECK(mk.tokens[0][0].colour[0] == doctest::Approx(0.3).epsilon(1e-12));
    CHECK(mk.tokens[0][0].colour[1] == doctest::Approx(-0.1).epsilon(1e-12));
}

TEST_CASE("Ornstein-Uhlenbeck stationary variance") {
    NetBuilder nb;
    int p = nb.place("P", 1);
    nb.m.places[static_cast<std::size_t>(p)].drift = make_drift_linear({{-1.0}});
    nb.m.places[static_cast<std::size_t>(p)].diffusion = make_diffusion_const({{1.0}});
    SdcpnModel m = nb.build();

    const double dt = 1e-3;
    double sum = 0.0, sq = 0.0;
    long long n = 0;
    RandomBasis basis(101);
    for (int rep = 0; rep < 60; ++rep) {
        Marking mk;
        mk.tokens.resize(1);
        mk.tokens[0].push_back({{0.0}, 0});
        RandomBasis rb = basis.replicate(static_cast<std::uint64_t>(rep));
        double t = 0.0;
        while (t < 12.0) {
            advance_colours(m, mk, dt, rb);
            t += dt;
            if (t > 2.0) {
                double x = mk.tokens[0][0].colour[0];
                sum += x;
                sq += x * x;
                ++n;
            }
        }
    }
    double mean = sum / static_cast<double>(n);
    double var = sq / static_cast<double>(n) - mean * mean;
    CHECK(var == doctest::Approx(0.5).epsilon(0.05));
}

TEST_CASE("guard hit localization") {
    GuardFn g = make_guard_halfspace({1.0}, 0.0);  // sd = x

    // no crossing
    CHECK(!detect_guard_hit(g, {1.0}, {0.5}, 0.0, 0.1, 1e-5, 1e-9).has_value());

    // linear path crossing: exact interpolation root at the midpoint
    auto hit = detect_guard_hit(g, {1.0}, {-1.0}, 0.0, 0.1, 1e-5, 1e-9);
    REQUIRE(hit.has_value());
    CHECK(*hit == doctest::Approx(0.05).epsilon(1e-3));
    // the signed distance at the reported crossing is within tolerance
    double s = (*hit - 0.0) / 0.1;
    double sd = 1.0 + s * (-1.0 - 1.0);
    CHECK(std::fabs(sd) <= 1e-6);
}

TEST_CASE("R0: immediate firing preempts delay firing") {
    NetBuilder nb;
    nb.place("P");
    nb.place("Q1");
    nb.place("Q2");
    nb.immediate("TI");
    nb.delay("TD", 1.0);
    nb.arc("P", "TI");
    nb.arc("TI", "Q1");
    nb.arc("P", "TD");
    nb.arc("TD", "Q2");
    nb.tokens("P", 1);
    SdcpnModel m = nb.build();
    std::uint64_t serial = 0;
    Marking marking = marking_of(m, 1, &serial);
    std::vector<EnablingCandidate> cands = pre_enabled(m, marking);
    REQUIRE(cands.size() == 2);
    SplitStream u(5);
    std::vector<EnablingCandidate> plan = resolve_conflicts(m, cands, u);
    REQUIRE(plan.size() == 1);
    CHECK(m.transitions[static_cast<std::size_t>(plan[0].transition)].id == "TI");
}

TEST_CASE("R1: non-conflicting token sets of one transition fire together") {
    NetBuilder nb;
    nb.place("P");
    nb.place("Q");
    nb.immediate("T");
    nb.arc("P", "T");
    nb.arc("T", "Q");
    nb.tokens("P", 2);
    SdcpnModel m = nb.build();
    std::uint64_t serial = 0;
    Marking marking = marking_of(m, 1, &serial);
    RandomBasis basis(2);
    int rounds = immediate_closure(m, marking, basis, &serial, 100);
    CHECK(rounds == 1);
    CHECK(marking.tokens[nb.m.place_index("P")].empty());
    CHECK(marking.tokens[nb.m.place_index("Q")].size() == 2);
}

TEST_CASE("R2: conflicting token sets picked uniformly") {
    // T needs the P1 token and one of two P2 tokens: the two selections
    // conflict through the shared P1 token.
    NetBuilder nb;
    nb.place("P1");
    nb.place("P2");
    nb.place("Q");
    nb.immediate("T");
    nb.arc("P1", "T");
    nb.arc("P2", "T");
    nb.arc("T", "Q");
    nb.tokens("P1", 1);
    nb.tokens("P2", 2);
    SdcpnModel m = nb.build();

    SplitStream u(17);
    RandomBasis basis(18);
    int first_survives = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        std::uint64_t serial = 0;
        Marking marking = marking_of(m, 1, &serial);
        std::uint64_t first_serial = marking.tokens[1][0].serial;
        std::vector<EnablingCandidate> cands = pre_enabled(m, marking);
        REQUIRE(cands.size() == 2);
        std::vector<EnablingCandidate> plan = resolve_conflicts(m, cands, u);
        REQUIRE(plan.size() == 1);
        fire(m, marking, plan, basis, &serial);
        REQUIRE(marking.tokens[1].size() == 1);
        if (marking.tokens[1][0].serial == first_serial) ++first_survives;
    }
    double freq = static_cast<double>(first_survives) / trials;
    CHECK(freq == doctest::Approx(0.5).epsilon(0.04));  // 0.5 +- 0.02
}

TEST_CASE("R3: transitions with disjoint tokens fire at the same time") {
    NetBuilder nb;
    nb.place("P1");
    nb.place("P2");
    nb.place("Q1");
    nb.place("Q2");
    nb.immediate("TA");
    nb.immediate("TB");
    nb.arc("P1", "TA");
    nb.arc("TA", "Q1");
    nb.arc("P2", "TB");
    nb.arc("TB", "Q2");
    nb.tokens("P1", 1);
    nb.tokens("P2", 1);
    SdcpnModel m = nb.build();
    std::uint64_t serial = 0;
    Marking marking = marking_of(m, 1, &serial);
    std::vector<EnablingCandidate> cands = pre_enabled(m, marking);
    REQUIRE(cands.size() == 2);
    SplitStream u(5);
    std::vector<EnablingCandidate> plan = resolve_conflicts(m, cands, u);
    CHECK(plan.size() == 2);
}

TEST_CASE("R4: maximal combinations weighted uniformly") {
    // TA consumes both tokens; TB and TC each consume one: the maximal
    // conflict-free combinations are {TA} and {TB, TC}.
    NetBuilder nb;
    nb.place("P1");
    nb.place("P2");
    nb.place("QA");
    nb.place("QB");
    nb.place("QC");
    nb.immediate("TA");
    nb.immediate("TB");
    nb.immediate("TC");
    nb.arc("P1", "TA");
    nb.arc("P2", "TA");
    nb.arc("TA", "QA");
    nb.arc("P1", "TB");
    nb.arc("TB", "QB");
    nb.arc("P2", "TC");
    nb.arc("TC", "QC");
    nb.tokens("P1", 1);
    nb.tokens("P2", 1);
    SdcpnModel m = nb.build();

    std::uint64_t serial = 0;
    Marking base = marking_of(m, 1, &serial);
    std::vector<EnablingCandidate> cands = pre_enabled(m, base);
    REQUIRE(cands.size() == 3);
    std::vector<std::vector<EnablingCandidate>> plans = conflict_free_plans(m, cands);
    REQUIRE(plans.size() == 2);

    SplitStream u(23);
    int solo = 0;
    const int trials = 10000;
    for (int i = 0; i < trials; ++i) {
        std::vector<EnablingCandidate> plan = resolve_conflicts(m, cands, u);
        if (plan.size() == 1) ++solo;
    }
    CHECK(static_cast<double>(solo) / trials == doctest::Approx(0.5).epsilon(0.04));
}

TEST_CASE("fire: airtraffic engine failure trace") {
    SdcpnModel m = airtraffic_example();
    std::uint64_t serial = 0;
    RandomBasis basis(4);
    Marking marking = initial_marking(m, basis, &serial);
    Vec colour_before = marking.tokens[0][0].colour;

    // fire T4 (engine fails): P4 token moves to P3
    std::vector<EnablingCandidate> cands = pre_enabled(m, marking);
    const EnablingCandidate* t4 = nullptr;
    for (const EnablingCandidate& c : cands)
        if (m.transitions[static_cast<std::size_t>(c.transition)].id == "T4") t4 = &c;
    REQUIRE(t4 != nullptr);
    FireStats stats = fire(m, marking, {*t4}, basis, &serial);
    CHECK(stats.tokens_removed == 1);
    CHECK(stats.tokens_added == 1);
    CHECK(marking.counts() == std::vector<int>{1, 0, 1, 0, 0, 1, 0});

    // immediate T1a becomes enabled; closure moves the aircraft token to P2
    std::vector<EnablingCandidate> now = pre_enabled(m, marking);
    bool t1a = false;
    for (const EnablingCandidate& c : now)
        if (m.transitions[static_cast<std::size_t>(c.transition)].id == "T1a") t1a = true;
    CHECK(t1a);
    immediate_closure(m, marking, basis, &serial, 100);
    CHECK(marking.counts() == std::vector<int>{0, 1, 1, 0, 0, 1, 0});
    // Dirac firing preserves the colour exactly
    CHECK(marking.tokens[1][0].colour == colour_before);
}

TEST_CASE("fire: all-zero e-vector consumes without producing") {
    NetBuilder nb;
    nb.place("P");
    nb.place("Q");
    nb.immediate("T");
    nb.arc("P", "T");
    nb.arc("T", "Q");
    nb.tokens("P", 1);
    SdcpnModel m = nb.build();
    m.transitions[0].firing = make_firing_choice({{0}}, {Rational(1)});

    std::uint64_t serial = 0;
    Marking marking = marking_of(m, 1, &serial);
    RandomBasis basis(5);
    std::vector<EnablingCandidate> cands = pre_enabled(m, marking);
    FireStats stats = fire(m, marking, cands, basis, &serial);
    CHECK(stats.tokens_removed == 1);
    CHECK(stats.tokens_added == 0);
    CHECK(marking.total_tokens() == 0);
}

TEST_CASE("immediate closure cases") {
    // both systems working, aircraft non-nominal: T2 fires once
    SdcpnModel m = airtraffic_example();
    std::uint64_t serial = 0;
    RandomBasis basis(6);
    Marking marking;
    marking.tokens.resize(7);
    marking.tokens[1].push_back({Vec{0, 0, 1, 1, 0, 0.5}, serial++});  // P2
    marking.tokens[3].push_back({{}, serial++});                      // P4
    marking.tokens[5].push_back({{}, serial++});                      // P6
    int rounds = immediate_closure(m, marking, basis, &serial, 100);
    CHECK(rounds == 1);
    CHECK(marking.counts() == std::vector<int>{1, 0, 0, 1, 0, 1, 0});

    // fixed point: no immediate enabled
    int again = immediate_closure(m, marking, basis, &serial, 100);
    CHECK(again == 0);

    // crafted two-transition cycle diverges and is diagnosed
    NetBuilder nb;
    nb.place("P1");
    nb.place("P2");
    nb.immediate("TA");
    nb.immediate("TB");
    nb.arc("P1", "TA");
    nb.arc("TA", "P2");
    nb.arc("P2", "TB");
    nb.arc("TB", "P1");
    nb.tokens("P1", 1);
    SdcpnModel cyc = nb.build();
    std::uint64_t s2 = 0;
    Marking mk = marking_of(cyc, 1, &s2);
    CHECK_THROWS_AS(immediate_closure(cyc, mk, basis, &s2, 50), NumericalError);
}

TEST_CASE("simulate: no events leaves a single segment") {
    AirtrafficConfig cfg = AirtrafficConfig::defaults();
    cfg.delta3 = cfg.delta4 = cfg.delta5 = cfg.delta6 = 0.0;
    cfg.landing_guards = false;
    SdcpnModel m = airtraffic_example(cfg);

    ExecParams params;
    params.dt = 1e-2;
    params.horizon = 2.0;
    params.grid_dt = 0.5;
    RandomBasis basis(7);
    HybridPath path = simulate_sdcpn(m, params, basis);
    CHECK(path.jump_count() == 0);
    CHECK(path.segment_modes.size() == 1);
    CHECK(check_cadlag(path).empty());
    // colours moved (drift is nonzero)
    CHECK(path.grid_states.back() != path.grid_states.front());
}

TEST_CASE("simulate: dominant engine-failure rate fires first") {
    AirtrafficConfig cfg = AirtrafficConfig::defaults();
    cfg.delta3 = cfg.delta5 = cfg.delta6 = 0.0;
    cfg.delta4 = 1000.0;
    SdcpnModel m = airtraffic_example(cfg);

    ExecParams params;
    params.dt = 1e-3;
    params.horizon = 0.2;
    params.grid_dt = 0.1;
    RandomBasis basis(8);
    HybridPath path = simulate_sdcpn(m, params, basis);
    REQUIRE(path.jump_count() >= 1);
    // post-jump token set {P2, P3, P6}: engine failed, closure made the
    // evolution non-nominal
    CHECK(path.catalog.tag(path.segment_modes[1].index) == std::vector<int>{0, 1, 1, 0, 0, 1, 0});
    CHECK(path.jump_kinds[1] == JumpKind::spontaneous);
}

TEST_CASE("simulate: landing guard forces the jump") {
    AirtrafficConfig cfg = AirtrafficConfig::defaults();
    cfg.delta3 = cfg.delta4 = cfg.delta5 = cfg.delta6 = 0.0;
    SdcpnModel m = airtraffic_example(cfg);

    ExecParams params;
    params.dt = 1e-3;
    params.horizon = 3.0;
    params.grid_dt = 1.0;
    RandomBasis basis(9);
    HybridPath path = simulate_sdcpn(m, params, basis);
    REQUIRE(path.jump_count() == 1);
    CHECK(path.jump_kinds[1] == JumpKind::forced);
    // landed marking V5 = (0,0,0,1,0,1,1)
    CHECK(path.catalog.tag(path.segment_modes[1].index) == std::vector<int>{0, 0, 0, 1, 0, 1, 1});
    // vertical velocity at the recorded crossing is at the boundary
    CHECK(std::fabs(path.left_limit_at_jump(1)[5]) <= 1e-6);
    // the landed colour is frozen afterwards
    CHECK(path.value_at_jump(1) == path.grid_states.back());
}

TEST_CASE("simulate: delay self-loop is a Poisson process") {
    NetBuilder nb;
    nb.place("P");
    nb.delay("T", 2.0);
    nb.arc("P", "T");
    nb.arc("T", "P");
    nb.tokens("P", 1);
    SdcpnModel m = nb.build();

    ExecParams params;
    params.dt = 0.1;
    params.horizon = 2.5;
    params.grid_dt = 0.0;
    RandomBasis root(10);
    const int reps = 20000;
    double total = 0.0;
    for (int r = 0; r < reps; ++r) {
        RandomBasis basis = root.replicate(static_cast<std::uint64_t>(r));
        total += static_cast<double>(simulate_sdcpn(m, params, basis).jump_count());
    }
    // mean jump count over [0,t] is delta * t
    CHECK(total / reps == doctest::Approx(5.0).epsilon(0.03));
}

TEST_CASE("simulate: determinism and structural invariants") {
    SdcpnModel m = airtraffic_example();
    ExecParams params;
    params.dt = 1e-2;
    params.horizon = 4.0;
    params.grid_dt = 0.5;

    RandomBasis b1 = RandomBasis(11).replicate(0);
    RandomBasis b2 = RandomBasis(11).replicate(0);
    HybridPath p1 = simulate_sdcpn(m, params, b1);
    HybridPath p2 = simulate_sdcpn(m, params, b2);
    CHECK(p1.jump_times == p2.jump_times);
    CHECK(p1.grid_states == p2.grid_states);

    for (int r = 0; r < 30; ++r) {
        RandomBasis basis = RandomBasis(12).replicate(static_cast<std::uint64_t>(r));
        HybridPath p = simulate_sdcpn(m, params, basis);
        CHECK(check_cadlag(p).empty());
        // net invariants: one aircraft token, one engine token, one
        // navigation token
        for (ModeId mode : p.grid_modes) {
            const std::vector<int>& tag = p.catalog.tag(mode.index);
            CHECK(tag[0] + tag[1] + tag[6] == 1);
            CHECK(tag[2] + tag[3] == 1);
            CHECK(tag[4] + tag[5] == 1);
        }
    }
}
