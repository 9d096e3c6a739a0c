#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "shs/hsde.hpp"
#include "shs/model_io.hpp"
#include "shs/stats.hpp"

using namespace shs;

namespace {

const std::vector<std::vector<int>> kPaperModes = {
    {1, 0, 0, 1, 0, 1, 0}, {0, 1, 1, 0, 0, 1, 0}, {0, 1, 1, 0, 1, 0, 0}, {0, 1, 0, 1, 1, 0, 0},
    {0, 0, 0, 1, 0, 1, 1}, {0, 0, 1, 0, 0, 1, 1}, {0, 0, 1, 0, 1, 0, 1}, {0, 0, 0, 1, 1, 0, 1},
};

int mode_of(const HsdeModel& m, const std::vector<int>& tag) {
    for (std::size_t i = 0; i < m.modes.size(); ++i)
        if (m.modes[i].tag == tag) return static_cast<int>(i);
    return -1;
}

// Direct single-mode HSDE for crafted checks.
HsdeModel single_mode_hsde(double lambda_const, double c_lambda, double diffusion, double x0) {
    HsdeModel m;
    GshsMode mode;
    mode.tag = {0};
    mode.dim = 1;
    mode.frozen = diffusion == 0.0;
    m.modes.push_back(mode);
    m.dim = 1;
    m.wiener_dim = 1;
    m.mark_dim = 1;
    m.drift = [](int, std::span<const double>, std::span<double> f) { f[0] = 0.0; };
    m.diffusion = [diffusion](int, std::span<const double>, std::span<double> g) { g[0] = diffusion; };
    m.init = [x0](RandomBasis&) { return HybridState{{0}, {x0}}; };
    m.lambda.eval = [lambda_const](int, std::span<const double>) { return lambda_const; };
    m.lambda.all_constant = true;
    m.lambda.mode_value = {lambda_const};
    m.lambda.mode_symbol = {LinForm(Rational(1))};
    m.c_lambda = c_lambda;
    m.psi.zero = true;
    m.psi.eval = [](int, int, std::span<const double>, std::span<const double>, std::span<double> d) {
        d[0] = 0.0;
    };
    m.rho.eval = [](int, int, std::span<const double>) { return 1.0; };
    m.mu.sample = [](SplitStream& s) { return Vec{s.next_unit()}; };
    m.boundary.sample = [](const HybridState& pre, JumpTrigger, RandomBasis&) { return pre; };
    return m;
}

}  // namespace

TEST_CASE("sigma partition") {
    HsdeModel m = map_sdcpn_to_hsde(airtraffic_example());
    int v1 = mode_of(m, kPaperModes[0]);
    int v2 = mode_of(m, kPaperModes[1]);
    int v4 = mode_of(m, kPaperModes[3]);
    Vec x(6, 0.0);

    CHECK(sigma_partial(m, 0, v1, x) == 0.0);
    int n = static_cast<int>(m.modes.size());
    CHECK(sigma_partial(m, n, v1, x) == doctest::Approx(1.5).epsilon(1e-12));

    // the partition increments by delta4 at V2's slot and delta6 at V4's slot
    auto increment = [&](int j) {
        return sigma_partial(m, j + 1, v1, x) - sigma_partial(m, j, v1, x);
    };
    CHECK(increment(v2) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(increment(v4) == doctest::Approx(0.5).epsilon(1e-12));
    for (int j = 0; j < n; ++j)
        if (j != v2 && j != v4) CHECK(increment(j) == doctest::Approx(0.0));

    // monotone, ending exactly at Lambda
    double prev = 0.0;
    for (int i = 0; i <= n; ++i) {
        double s = sigma_partial(m, i, v1, x);
        CHECK(s >= prev);
        prev = s;
    }

    // a direct two-mode model ordered "V2 first": Sigma_1 = delta4
    HsdeModel direct = single_mode_hsde(1.5, 1.5, 0.0, 0.0);
    GshsMode second;
    second.tag = {1};
    second.dim = 1;
    direct.modes.push_back(second);
    direct.rho.eval = [](int target, int, std::span<const double>) {
        return target == 0 ? 1.0 / 1.5 : 0.5 / 1.5;  // delta4/Lambda, delta6/Lambda
    };
    CHECK(sigma_partial(direct, 1, 0, x) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sigma_partial(direct, 2, 0, x) == doctest::Approx(1.5).epsilon(1e-12));
}

TEST_CASE("simulate_hsde: zero rate is pure diffusion") {
    HsdeModel m = single_mode_hsde(0.0, 0.0, 1.0, 0.0);
    ExecParams params;
    params.dt = 1e-3;
    params.horizon = 1.0;
    params.grid_dt = 0.5;
    RandomBasis basis(11);
    HybridPath p = simulate_hsde(m, params, basis);
    CHECK(p.jump_count() == 0);
    CHECK(p.grid_states.back()[0] != 0.0);
    CHECK(check_cadlag(p).empty());
}

TEST_CASE("simulate_hsde: thinning accepts at rate Lambda") {
    // Lambda = 1 under C_Lambda = 4; accepted points are Poisson(1)
    HsdeModel m = single_mode_hsde(1.0, 4.0, 0.0, 0.0);
    ExecParams params;
    params.dt = 0.1;
    params.horizon = 5.0;
    params.grid_dt = 0.0;
    RandomBasis root(12);
    const int reps = 10000;
    double total = 0.0;
    for (int r = 0; r < reps; ++r) {
        RandomBasis basis = root.replicate(static_cast<std::uint64_t>(r));
        total += static_cast<double>(simulate_hsde(m, params, basis).jump_count());
    }
    double mean = total / reps;
    CHECK(mean == doctest::Approx(5.0).epsilon(0.03));

    // acceptance rate ~= (time-average Lambda) / C_Lambda within 3 SE
    double est = total / (reps * params.horizon * m.c_lambda);
    double se = std::sqrt(1.0 * params.horizon * reps) / (reps * params.horizon * m.c_lambda);
    CHECK(std::fabs(est - 0.25) < 3.0 * se);
}

TEST_CASE("simulate_hsde: thinning soundness is enforced") {
    HsdeModel m = single_mode_hsde(3.0, 2.0, 0.0, 0.0);  // Lambda above C_Lambda
    ExecParams params;
    params.dt = 0.1;
    params.horizon = 10.0;
    params.grid_dt = 0.0;
    RandomBasis basis(13);
    CHECK_THROWS_AS(simulate_hsde(m, params, basis), NumericalError);
}

TEST_CASE("simulate_hsde: spontaneous split from V1 follows the rates") {
    AirtrafficConfig cfg = AirtrafficConfig::defaults();
    cfg.landing_guards = false;
    HsdeModel m = map_sdcpn_to_hsde(airtraffic_example(cfg));
    int v2 = mode_of(m, {0, 1, 1, 0, 0, 1, 0});
    int v4 = mode_of(m, {0, 1, 0, 1, 1, 0, 0});
    REQUIRE(v2 >= 0);
    REQUIRE(v4 >= 0);

    ExecParams params;
    params.dt = 0.25;
    params.horizon = 3.0;
    params.grid_dt = 0.0;
    RandomBasis root(14);
    long long to_v2 = 0, to_v4 = 0;
    const int reps = 6000;
    for (int r = 0; r < reps; ++r) {
        RandomBasis basis = root.replicate(static_cast<std::uint64_t>(r));
        HybridPath p = simulate_hsde(m, params, basis);
        if (p.jump_count() < 1) continue;
        int first = p.segment_modes[1].index;
        if (first == v2) ++to_v2;
        else if (first == v4) ++to_v4;
    }
    // delta4 : delta6 = 2/3 : 1/3
    auto outcome = stats::chi2_gof({to_v2, to_v4}, {2.0 / 3.0, 1.0 / 3.0});
    CHECK(outcome.p_value > 0.01);
}

TEST_CASE("q_from_psi_rho_mu") {
    HsdeModel m = map_sdcpn_to_hsde(airtraffic_example());
    int v1 = mode_of(m, kPaperModes[0]);
    int v2 = mode_of(m, kPaperModes[1]);
    Vec x{0, 0, 1, 1, 0, 0.5};

    // psi == 0: exactly rho * 1_A(x)
    auto contains_x = [&x](std::span<const double> y) {
        for (std::size_t i = 0; i < y.size(); ++i)
            if (std::fabs(y[i] - x[i]) > 1e-12) return false;
        return true;
    };
    auto never = [](std::span<const double>) { return false; };
    KernelEstimate inside = q_from_psi_rho_mu(m, v2, contains_x, v1, x, 10);
    CHECK(inside.exact);
    CHECK(inside.value == doctest::Approx(2.0 / 3.0).epsilon(1e-12));
    KernelEstimate outside = q_from_psi_rho_mu(m, v2, never, v1, x, 10);
    CHECK(outside.value == 0.0);

    // psi = mark displacement, mu uniform on [0,1]: a half-box has measure 1/2
    HsdeModel d = single_mode_hsde(1.0, 1.0, 0.0, 0.0);
    d.psi.zero = false;
    d.psi.eval = [](int, int, std::span<const double>, std::span<const double> z, std::span<double> out) {
        out[0] = z[0];
    };
    Vec x0{0.25};
    auto half_box = [&x0](std::span<const double> y) {
        return y[0] >= x0[0] && y[0] <= x0[0] + 0.5;
    };
    KernelEstimate est = q_from_psi_rho_mu(d, 0, half_box, 0, x0, 40000);
    CHECK(!est.exact);
    CHECK(std::fabs(est.value - 0.5) < 3.0 * est.std_error + 1e-9);
}

TEST_CASE("map_sdcpn_to_hsde on the airtraffic example") {
    SdcpnModel net = airtraffic_example();
    HsdeModel m = map_sdcpn_to_hsde(net);
    GshsModel g = map_sdcpn_to_gshs(net);

    CHECK(m.modes.size() == 8);
    CHECK(m.dim == 6);
    CHECK(m.psi.zero);
    CHECK(m.mu.text == "uniform01");
    CHECK(m.c_lambda == doctest::Approx(3.5));
    REQUIRE(m.c_lambda_exact.has_value());
    CHECK(*m.c_lambda_exact == Rational(7, 2));

    // rho rows equal the spontaneous table rows
    REQUIRE(m.rho.matrix.has_value());
    REQUIRE(g.kernel.spontaneous.has_value());
    for (std::size_t i = 0; i < 8; ++i)
        for (std::size_t j = 0; j < 8; ++j)
            CHECK(m.rho.matrix->value[i][j] == g.kernel.spontaneous->value[i][j]);

    // rho normalizes pointwise
    SplitStream rng(15);
    Vec x(6);
    for (int rep = 0; rep < 50; ++rep) {
        for (double& v : x) v = 5.0 * (2.0 * rng.next_unit() - 1.0);
        int theta = rep % 8;
        double sum = 0.0;
        for (int j = 0; j < 8; ++j) sum += m.rho.eval(j, theta, x);
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }

    // kernel consistency: the Monte Carlo estimate of Q matches the matrix
    int v1 = mode_of(m, kPaperModes[0]);
    int v4 = mode_of(m, kPaperModes[3]);
    auto anything = [](std::span<const double>) { return true; };
    KernelEstimate est = q_from_psi_rho_mu(m, v4, anything, v1, x, 10);
    CHECK(est.value ==
          doctest::Approx(g.kernel.spontaneous->value[static_cast<std::size_t>(v1)][static_cast<std::size_t>(v4)])
              .epsilon(1e-12));
}

TEST_CASE("map_sdcpn_to_hsde degenerate and rejected nets") {
    // single place, no transitions: N=1, Lambda == 0, rho self-loop
    SdcpnModel net;
    Place p;
    p.id = "P";
    p.colour_dim = 1;
    p.brownian_dim = 1;
    p.drift = make_drift_zero(1);
    p.diffusion = make_diffusion_zero(1, 1);
    net.places.push_back(std::move(p));
    InitialTokens i;
    i.place = 0;
    i.count = 1;
    i.colours.push_back(make_colour_point({0.0}));
    net.initial.push_back(std::move(i));
    net.finalize();
    HsdeModel m = map_sdcpn_to_hsde(net);
    CHECK(m.modes.size() == 1);
    CHECK(m.c_lambda == 0.0);
    CHECK(m.rho.eval(0, 0, Vec{0.0}) == 1.0);

    // colour-shifting firing falls outside the psi == 0 fragment
    SdcpnModel shifty;
    Place q;
    q.id = "P";
    q.colour_dim = 1;
    q.brownian_dim = 1;
    q.drift = make_drift_zero(1);
    q.diffusion = make_diffusion_zero(1, 1);
    shifty.places.push_back(std::move(q));
    Transition t;
    t.id = "T";
    t.kind = TransitionKind::delay;
    t.rate = make_rate_const(1.0);
    shifty.transitions.push_back(std::move(t));
    Arc a0{"a0", ArcKind::ordinary, true, 0, 0};
    Arc a1{"a1", ArcKind::ordinary, false, 0, 0};
    shifty.arcs = {a0, a1};
    InitialTokens i2;
    i2.place = 0;
    i2.count = 1;
    i2.colours.push_back(make_colour_point({0.0}));
    shifty.initial.push_back(std::move(i2));
    shifty.finalize();
    shifty.transitions[0].firing = make_firing_shift(1, {1.0});
    CHECK_THROWS_WITH_AS(map_sdcpn_to_hsde(shifty),
                         doctest::Contains("outside the psi=0 mapping fragment"), ModelError);
}

TEST_CASE("check_h1_h8 passes on the mapped example") {
    HsdeModel m = map_sdcpn_to_hsde(airtraffic_example());
    CheckReport rep = check_h1_h8(m, 20000, 16);
    INFO(rep.to_string());
    CHECK(rep.all_pass());
    // H8 evidence: paper modes differ in at least two coordinates
    CHECK(rep.item("H8").detail.find("2.0") != std::string::npos);
}

TEST_CASE("check_h1_h8 flags crafted violations") {
    // H1: quadratic growth
    HsdeModel h1 = single_mode_hsde(0.5, 1.0, 0.0, 0.0);
    h1.drift = [](int, std::span<const double> x, std::span<double> f) { f[0] = x[0] * x[0]; };
    CHECK(check_h1_h8(h1, 4000, 17).item("H1").flagged);

    // H2: sqrt cusp is not locally Lipschitz at the origin
    HsdeModel h2 = single_mode_hsde(0.5, 1.0, 0.0, 0.0);
    h2.drift = [](int, std::span<const double> x, std::span<double> f) {
        f[0] = (x[0] >= 0 ? 1.0 : -1.0) * std::sqrt(std::fabs(x[0]));
    };
    CHECK(check_h1_h8(h2, 4000, 18).item("H2").flagged);
    CHECK(!check_h1_h8(h2, 4000, 18).item("H1").flagged);

    // H3: Lambda exceeds the declared bound
    HsdeModel h3 = single_mode_hsde(0.5, 2.0, 0.0, 0.0);
    h3.lambda.eval = [](int, std::span<const double> x) { return 1.0 + x[0] * x[0]; };
    h3.lambda.all_constant = false;
    CHECK(check_h1_h8(h3, 4000, 19).item("H3").flagged);

    // H4: rho jumps in x
    HsdeModel h4 = single_mode_hsde(0.5, 1.0, 0.0, 0.0);
    h4.rho.eval = [](int, int, std::span<const double> x) { return x[0] < 0.0 ? 1.0 : 0.0; };
    CHECK(check_h1_h8(h4, 40000, 20).item("H4").flagged);

    // H5: E|psi| diverges under mu
    HsdeModel h5 = single_mode_hsde(0.5, 1.0, 0.0, 0.0);
    h5.psi.zero = false;
    h5.psi.eval = [](int, int, std::span<const double>, std::span<const double> z, std::span<double> d) {
        d[0] = 1.0 / (z[0] * z[0]);
    };
    CHECK(check_h1_h8(h5, 100000, 21).item("H5").flagged);

    // H6: a self-jump displacement inside (0,1]
    HsdeModel h6 = single_mode_hsde(0.5, 1.0, 0.0, 0.0);
    h6.psi.zero = false;
    h6.psi.eval = [](int, int, std::span<const double>, std::span<const double>, std::span<double> d) {
        d[0] = 0.5;
    };
    CHECK(check_h1_h8(h6, 4000, 22).item("H6").flagged);

    // H7: accumulating boundary hits
    HsdeModel h7 = single_mode_hsde(0.0, 0.0, 0.0, 1e-4);
    h7.modes[0].frozen = false;
    h7.drift = [](int, std::span<const double>, std::span<double> f) { f[0] = -1.0; };
    DomainFace face;
    face.guard = make_guard_halfspace({-1.0}, 0.0);
    h7.modes[0].faces.push_back(std::move(face));
    auto level = std::make_shared<double>(1e-4);
    h7.boundary.sample = [level](const HybridState& pre, JumpTrigger, RandomBasis&) {
        *level *= 0.5;
        return HybridState{pre.mode, {*level}};
    };
    CHECK(check_h1_h8(h7, 2000, 23).item("H7").flagged);

    // H8: mode tags at distance exactly 1
    HsdeModel h8 = single_mode_hsde(0.5, 1.0, 0.0, 0.0);
    GshsMode second;
    second.tag = {1};
    second.dim = 1;
    h8.modes.push_back(second);
    h8.rho.eval = [](int target, int source, std::span<const double>) {
        return target == source ? 1.0 : 0.0;
    };
    CHECK(check_h1_h8(h8, 4000, 24).item("H8").flagged);
}

TEST_CASE("hsde json export") {
    HsdeModel m = map_sdcpn_to_hsde(airtraffic_example());
    nlohmann::json j = hsde_to_json(m);
    CHECK(j["n"] == 6);
    CHECK(j["c_lambda"] == doctest::Approx(3.5));
    CHECK(j["c_lambda_num"] == 7);
    CHECK(j["c_lambda_den"] == 2);
    CHECK(j["psi"] == "zero");
    CHECK(j["mu"] == "uniform01");
    CHECK(j["mode_order"].size() == 8);
    CHECK(j["rho"].size() == 8);
}
