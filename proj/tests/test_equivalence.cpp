#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "shs/equivalence.hpp"
#include "shs/model_io.hpp"

using namespace shs;

namespace {

SdcpnModel delay_loop_net(double rate) {
    SdcpnModel m;
    m.places.push_back({"P", 0, 0, {}, {}});
    m.places.push_back({"Q", 0, 0, {}, {}});
    Transition t1;
    t1.id = "T1";
    t1.kind = TransitionKind::delay;
    t1.rate = make_rate_const(rate);
    m.transitions.push_back(std::move(t1));
    Transition t2;
    t2.id = "T2";
    t2.kind = TransitionKind::delay;
    t2.rate = make_rate_const(rate);
    m.transitions.push_back(std::move(t2));
    m.arcs.push_back({"a0", ArcKind::ordinary, true, 0, 0});
    m.arcs.push_back({"a1", ArcKind::ordinary, false, 1, 0});
    m.arcs.push_back({"a2", ArcKind::ordinary, true, 1, 1});
    m.arcs.push_back({"a3", ArcKind::ordinary, false, 0, 1});
    InitialTokens i;
    i.place = 0;
    i.count = 1;
    m.initial.push_back(i);
    m.finalize();
    for (std::size_t t = 0; t < m.transitions.size(); ++t)
        m.transitions[t].firing = make_firing_dirac(1);
    return m;
}

}  // namespace

TEST_CASE("ctmc oracle transient probabilities") {
    // t = 0: all mass on (Working, Working)
    CtmcOracle o0 = ctmc_oracle(2.0, 1.0, 1.5, 0.5, {0.0});
    CHECK(o0.probs[0] == std::array<double, 4>{1.0, 0.0, 0.0, 0.0});

    // symmetric rates: stationary distribution is uniform
    CtmcOracle sym = ctmc_oracle(1.0, 1.0, 2.0, 2.0, {50.0});
    for (double p : sym.probs[0]) CHECK(p == doctest::Approx(0.25).epsilon(1e-8));

    // engine-only chain closed form: P(Not working at t=1) = (1/3)(1-e^-3)
    CtmcOracle eng = ctmc_oracle(2.0, 1.0, 0.0, 0.0, {1.0});
    double expected = (1.0 / 3.0) * (1.0 - std::exp(-3.0));
    CHECK(eng.probs[0][1] == doctest::Approx(expected).epsilon(1e-10));

    // full 4-state chain against an independently computed matrix exponential
    CtmcOracle full = ctmc_oracle(2.0, 1.0, 1.5, 0.5, {1.0, 5.0});
    CHECK(full.probs[0][0] == doctest::Approx(0.535564143215).epsilon(1e-9));
    CHECK(full.probs[0][1] == doctest::Approx(0.248269677594).epsilon(1e-9));
    CHECK(full.probs[0][2] == doctest::Approx(0.068467966283).epsilon(1e-9));
    CHECK(full.probs[0][3] == doctest::Approx(0.147698212908).epsilon(1e-9));
    CHECK(full.probs[1][0] == doctest::Approx(0.500007643132).epsilon(1e-9));
}

TEST_CASE("uniformization agrees with forward Euler integration") {
    std::vector<std::vector<double>> g{{-3.0, 2.0, 1.0}, {0.5, -1.0, 0.5}, {1.0, 1.0, -2.0}};
    std::vector<double> p{1.0, 0.0, 0.0};
    std::vector<double> uni = ctmc_transient(g, p, 0.7);

    std::vector<double> euler = p;
    const int steps = 2000000;
    double dt = 0.7 / steps;
    for (int s = 0; s < steps; ++s) {
        std::vector<double> next = euler;
        for (std::size_t i = 0; i < 3; ++i)
            for (std::size_t j = 0; j < 3; ++j) next[j] += dt * euler[i] * g[i][j];
        euler = std::move(next);
    }
    for (std::size_t i = 0; i < 3; ++i) CHECK(uni[i] == doctest::Approx(euler[i]).epsilon(1e-6));
}

TEST_CASE("airtraffic system-state projection") {
    CHECK(airtraffic_system_state({1, 0, 0, 1, 0, 1, 0}) == 0);  // V1: both working
    CHECK(airtraffic_system_state({0, 1, 1, 0, 0, 1, 0}) == 1);  // V2: engine down
    CHECK(airtraffic_system_state({0, 1, 1, 0, 1, 0, 0}) == 2);  // V3: both down
    CHECK(airtraffic_system_state({0, 1, 0, 1, 1, 0, 0}) == 3);  // V4: nav down
    CHECK(airtraffic_system_state({0, 0, 0, 1, 0, 1, 1}) == 0);  // V5 aggregates with V1
}

TEST_CASE("run_ensemble determinism across reruns and thread counts") {
    SdcpnModel net = delay_loop_net(2.0);
    ExecParams params;
    params.dt = 0.5;
    params.horizon = 3.0;
    params.grid_dt = 1.0;

    Ensemble e1 = run_ensemble(net, 64, params, 99, 1);
    Ensemble e2 = run_ensemble(net, 64, params, 99, 2);
    Ensemble e3 = run_ensemble(net, 64, params, 99, 4);
    CHECK(e1.grid_modes == e2.grid_modes);
    CHECK(e1.grid_modes == e3.grid_modes);
    CHECK(e1.jump_counts == e2.jump_counts);
    CHECK(e1.jump_counts == e3.jump_counts);
    CHECK(e1.grid_states == e2.grid_states);

    Ensemble one = run_ensemble(net, 1, params, 5, 1);
    CHECK(one.reps == 1);

    // identical seed, identical ensemble; different seed differs
    Ensemble e4 = run_ensemble(net, 64, params, 99, 0);
    CHECK(e4.grid_modes == e1.grid_modes);
    Ensemble e5 = run_ensemble(net, 64, params, 100, 0);
    CHECK(e5.grid_modes != e1.grid_modes);
}

TEST_CASE("compare: self comparison passes with zero statistics") {
    SdcpnModel net = delay_loop_net(1.0);
    ExecParams params;
    params.dt = 0.5;
    params.horizon = 4.0;
    params.grid_dt = 1.0;
    Ensemble e = run_ensemble(net, 500, params, 7, 0);
    ComparisonReport rep = compare(e, e, 0.01);
    CHECK(rep.pass);
    for (const TestRecord& r : rep.records)
        if (!r.skipped) CHECK(r.statistic == doctest::Approx(0.0));
}

TEST_CASE("compare: sdcpn vs gshs on the example, and a perturbed power check") {
    AirtrafficConfig cfg = AirtrafficConfig::defaults();
    cfg.landing_guards = false;
    SdcpnModel net = airtraffic_example(cfg);
    GshsModel mapped = map_sdcpn_to_gshs(net);

    ExecParams params;
    params.dt = 0.1;
    params.horizon = 5.0;
    params.grid_dt = 1.0;
    const int reps = 4000;
    Ensemble a = run_ensemble(net, reps, params, 31, 0);
    Ensemble b = run_ensemble(mapped, reps, params, 32, 0);
    ComparisonReport rep = compare(a, b, 0.01);
    INFO(rep.to_table());
    CHECK(rep.pass);
    CHECK(rep.notes.empty());  // hashes match through the mapping

    // doubling delta4 is detected by the occupancy tests
    AirtrafficConfig bad = cfg;
    bad.delta4 = 2.0;
    GshsModel perturbed = map_sdcpn_to_gshs(airtraffic_example(bad));
    Ensemble c = run_ensemble(perturbed, reps, params, 33, 0);
    ComparisonReport power = compare(a, c, 0.01);
    CHECK(!power.pass);
    bool occupancy_reject = false;
    for (const TestRecord& r : power.records)
        if (r.kind == "occupancy-chi2" && r.reject) occupancy_reject = true;
    CHECK(occupancy_reject);
    // the hash mismatch is noted
    CHECK(!power.notes.empty());
}

TEST_CASE("compare_to_oracle accepts the true chain and rejectsswapped rates") {
    AirtrafficConfig cfg = AirtrafficConfig::defaults();
    cfg.landing_guards = false;
    SdcpnModel net = airtraffic_example(cfg);
    ExecParams params;
    params.dt = 0.25;
    params.horizon = 5.0;
    params.grid_dt = 1.0;
    const int reps = 20000;
    Ensemble e = run_ensemble(net, reps, params, 41, 0);

    CtmcOracle oracle = ctmc_oracle(2.0, 1.0, 1.5, 0.5, e.grid);
    ComparisonReport rep = compare_to_oracle(e, oracle, 0.01);
    INFO(rep.to_table());
    CHECK(rep.pass);
    CHECK(rep.tests_performed == 5);  // t=0 skipped

    // swapped delta3/delta4 oracle must reject
    CtmcOracle wrong = ctmc_oracle(1.0, 2.0, 1.5, 0.5, e.grid);
    ComparisonReport bad = compare_to_oracle(e, wrong, 0.01);
    CHECK(!bad.pass);

    // trivial grid: only t=0 leaves nothing to test and passes
    ExecParams p0 = params;
    p0.horizon = 1.0;
    p0.grid_dt = 0.0;
    Ensemble e0 = run_ensemble(net, 50, p0, 42, 0);
    CtmcOracle o0 = ctmc_oracle(2.0, 1.0, 1.5, 0.5, {0.0, 1.0});
    ComparisonReport rep0 = compare_to_oracle(e0, o0, 0.01);
    CHECK(rep0.pass);
}

TEST_CASE("null rejection rate stays near alpha") {
    SdcpnModel net = delay_loop_net(1.5);
    ExecParams params;
    params.dt = 0.5;
    params.horizon = 2.0;
    params.grid_dt = 0.5;
    const double alpha = 0.1;
    const int trials = 30;
    int rejections = 0;
    for (int trial = 0; trial < trials; ++trial) {
        Ensemble a = run_ensemble(net, 250, params, 1000 + 2 * static_cast<std::uint64_t>(trial), 0);
        Ensemble b = run_ensemble(net, 250, params, 1001 + 2 * static_cast<std::uint64_t>(trial), 0);
        if (!compare(a, b, alpha).pass) ++rejections;
    }
    double bound = alpha + 2.0 * std::sqrt(alpha / trials);
    CHECK(static_cast<double>(rejections) / trials <= bound);
}

TEST_CASE("pure-diffusion laws agree across all three backends") {
    AirtrafficConfig cfg = AirtrafficConfig::defaults();
    cfg.landing_guards = false;
    cfg.delta3 = cfg.delta4 = cfg.delta5 = cfg.delta6 = 0.0;
    SdcpnModel net = airtraffic_example(cfg);

    ExecParams params;
    params.dt = 0.01;
    params.horizon = 1.0;
    params.grid_dt = 0.5;
    const int reps = 2000;
    Ensemble a = run_ensemble(net, reps, params, 51, 0);
    Ensemble b = run_ensemble(map_sdcpn_to_gshs(net), reps, params, 52, 0);
    Ensemble c = run_ensemble(map_sdcpn_to_hsde(net), reps, params, 53, 0);
    ComparisonReport ab = compare(a, b, 0.01);
    ComparisonReport ac = compare(a, c, 0.01);
    ComparisonReport bc = compare(b, c, 0.01);
    INFO(ab.to_table());
    INFO(ac.to_table());
    INFO(bc.to_table());
    CHECK(ab.pass);
    CHECK(ac.pass);
    CHECK(bc.pass);
}

TEST_CASE("report json round trip") {
    SdcpnModel net = delay_loop_net(1.0);
    ExecParams params;
    params.dt = 0.5;
    params.horizon = 2.0;
    params.grid_dt = 1.0;
    Ensemble e1 = run_ensemble(net, 100, params, 61, 0);
    Ensemble e2 = run_ensemble(net, 100, params, 62, 0);
    ComparisonReport rep = compare(e1, e2, 0.05);
    nlohmann::json j = rep.to_json();
    ComparisonReport back = report_from_json(j);
    CHECK(back.pass == rep.pass);
    CHECK(back.records.size() == rep.records.size());
    CHECK(back.alpha == rep.alpha);
    CHECK(back.to_table() == rep.to_table());
}
