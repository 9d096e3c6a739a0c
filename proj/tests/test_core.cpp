#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <sstream>

#include "shs/hybrid.hpp"
#include "shs/rational.hpp"
#include "shs/rng.hpp"
#include "shs/stats.hpp"

using namespace shs;

TEST_CASE("rational arithmetic and decimal parsing") {
    CHECK(Rational(1, 2) + Rational(1, 3) == Rational(5, 6));
    CHECK(Rational(2, 4) == Rational(1, 2));
    CHECK(Rational(3, -6) == Rational(-1, 2));
    CHECK((Rational(1, 3) * Rational(3, 5)) == Rational(1, 5));
    CHECK((Rational(1) / Rational(4)).to_string() == "1/4");
    CHECK(Rational::from_decimal("1.5") == Rational(3, 2));
    CHECK(Rational::from_decimal("-0.125") == Rational(-1, 8));
    CHECK(Rational::from_decimal("2") == Rational(2));
    CHECK_THROWS(Rational::from_decimal("1e-3"));
    CHECK_THROWS(Rational(1, 0));
}

TEST_CASE("linear forms and rate ratios") {
    LinForm a = LinForm::term("d4");
    LinForm b = LinForm::term("d4") + LinForm::term("d6");
    RateRatio q{a, b};
    RateRatio q_scaled{a.scaled(Rational(2)), b.scaled(Rational(2))};
    CHECK(q == q_scaled);
    RateRatio other{LinForm::term("d6"), b};
    CHECK(q != other);

    std::map<std::string, double> vals{{"d4", 1.0}, {"d6", 0.5}};
    CHECK(q.eval(vals) == doctest::Approx(1.0 / 1.5));
    std::map<std::string, Rational> exact{{"d4", Rational(1)}, {"d6", Rational(1, 2)}};
    CHECK(q.eval_exact(exact) == Rational(2, 3));

    // row-sum exactness: d4/(d4+d6) + d6/(d4+d6) == 1
    LinForm num_sum = a + LinForm::term("d6");
    CHECK(num_sum == b);
}

TEST_CASE("split streams reproduce and separate") {
    SplitStream s1 = SplitStream(42).child(7);
    SplitStream s2 = SplitStream(42).child(7);
    for (int i = 0; i < 100; ++i) CHECK(s1.next_u64() == s2.next_u64());

    SplitStream a = SplitStream(42).child(1);
    SplitStream b = SplitStream(42).child(2);
    int agree = 0;
    for (int i = 0; i < 64; ++i)
        if (a.next_u64() == b.next_u64()) ++agree;
    CHECK(agree == 0);
}

TEST_CASE("brownian_increment reproducibility and scaling") {
    RandomBasis basis(123);
    std::vector<double> v1 = brownian_increment(basis, StreamId::place_token(0, 0), 1.0, 3);
    RandomBasis basis2(123);
    std::vector<double> v2 = brownian_increment(basis2, StreamId::place_token(0, 0), 1.0, 3);
    REQUIRE(v1.size() == 3);
    CHECK(v1 == v2);

    // sample variance of increments at dt=1e-6 is dt within 5% relative
    RandomBasis vb(9);
    SplitStream& s = vb.brownian(1, 0);
    const int n = 100000;
    const double dt = 1e-6;
    double sum = 0.0, sq = 0.0;
    double sd = std::sqrt(dt);
    for (int i = 0; i < n; ++i) {
        double x = sd * s.next_normal();
        sum += x;
        sq += x * x;
    }
    double mean = sum / n;
    double var = sq / n - mean * mean;
    CHECK(var == doctest::Approx(dt).epsilon(0.05));

    // distinct streams with the same seed are empirically uncorrelated
    RandomBasis cb(77);
    SplitStream& sa = cb.brownian(0, 0);
    SplitStream& sb = cb.brownian(0, 1);
    double sxy = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        double x = sa.next_normal();
        double y = sb.next_normal();
        sxy += x * y;
        sx += x;
        sy += y;
        sxx += x * x;
        syy += y * y;
    }
    double cx = (sxy / n - sx / n * sy / n) /
                std::sqrt((sxx / n - sx / n * sx / n) * (syy / n - sy / n * sy / n));
    CHECK(std::fabs(cx) < 0.01);

    CHECK_THROWS_AS(brownian_increment(basis, StreamId::uniform(), 1.0, 1), ConfigError);
    CHECK_THROWS_AS(brownian_increment(basis, StreamId::place_token(0, 0), 0.0, 1), ConfigError);
}

TEST_CASE("replicated bases are independent of consumption order") {
    RandomBasis root(5);
    RandomBasis r3 = root.replicate(3);
    double first = r3.uniforms().next_unit();

    RandomBasis root2(5);
    root2.uniforms().next_unit();  // consume on the parent first
    RandomBasis r3b = root2.replicate(3);
    CHECK(r3b.uniforms().next_unit() == first);
}

TEST_CASE("merge_paths assembles cadlag paths") {
    ModeTimeline tl;
    tl.horizon = 4.0;
    ModeCatalog cat;
    ModeId m0 = cat.intern({1, 0});
    ModeId m1 = cat.intern({0, 1});

    JumpEvent init;
    init.time = 0.0;
    init.mode_after = m0;
    init.state_after = {1.0};
    init.state_before = {1.0};
    tl.events.push_back(init);

    JumpEvent jump;
    jump.time = 2.5;
    jump.kind = JumpKind::spontaneous;
    jump.mode_after = m1;
    jump.state_before = {2.0};
    jump.state_after = {3.0};
    tl.events.push_back(jump);

    // immediate closure at the same stopping time collapses
    JumpEvent closure;
    closure.time = 2.5;
    closure.kind = JumpKind::immediate;
    closure.mode_after = m0;
    closure.state_before = {3.0};
    closure.state_after = {4.0};
    tl.events.push_back(closure);

    SampledContinuous sc;
    sc.times = {0.0, 1.0, 2.0, 3.0, 4.0};
    sc.values = {{1.0}, {1.5}, {1.9}, {4.1}, {4.2}};

    HybridPath p = merge_paths(tl, sc);
    p.catalog = cat;
    CHECK(p.jump_count() == 1);
    REQUIRE(p.jump_times.size() == 2);
    CHECK(p.jump_times[1] == 2.5);
    // value at the jump is the post-closure state, the left limit the
    // pre-jump state
    CHECK(p.value_at_jump(1) == Vec{4.0});
    CHECK(p.left_limit_at_jump(1) == Vec{2.0});
    CHECK(p.segment_modes[1] == m0);
    CHECK(check_cadlag(p).empty());

    // no-jump path has jump_times = [0]
    ModeTimeline only_init;
    only_init.horizon = 1.0;
    only_init.events.push_back(init);
    SampledContinuous sc2;
    sc2.times = {0.0, 1.0};
    sc2.values = {{1.0}, {1.0}};
    HybridPath p2 = merge_paths(only_init, sc2);
    CHECK(p2.jump_times == std::vector<double>{0.0});
    CHECK(p2.jump_count() == 0);

    // misaligned grids are an assembly error
    SampledContinuous bad;
    bad.times = {0.5, 1.0};
    bad.values = {{0.0}, {0.0}};
    CHECK_THROWS_AS(merge_paths(only_init, bad), AssemblyError);
}

TEST_CASE("path csv export") {
    ModeTimeline tl;
    tl.horizon = 1.0;
    ModeCatalog cat;
    JumpEvent init;
    init.time = 0.0;
    init.mode_after = cat.intern({1});
    init.state_after = {0.5, -1.0};
    init.state_before = init.state_after;
    tl.events.push_back(init);
    SampledContinuous sc;
    sc.times = {0.0, 1.0};
    sc.values = {{0.5, -1.0}, {0.75, -2.0}};
    HybridPath p = merge_paths(tl, sc);
    std::ostringstream out;
    write_path_csv(out, p);
    CHECK(out.str() ==
          "t,mode,x_1,x_2,jump_flag\n"
          "0,0,0.5,-1,0\n"
          "1,0,0.75,-2,0\n");
}

TEST_CASE("chi-square and KS tails match reference values") {
    using namespace shs::stats;
    // frozen reference values (scipy.stats.chi2.sf / scipy.special.kolmogorov)
    CHECK(chi2_sf(7.815, 3) == doctest::Approx(4.999390297488e-02).epsilon(1e-9));
    CHECK(chi2_sf(11.345, 3) == doctest::Approx(9.999384083287e-03).epsilon(1e-9));
    CHECK(chi2_sf(2.0, 2) == doctest::Approx(std::exp(-1.0)).epsilon(1e-12));
    CHECK(chi2_sf(5.0, 1) == doctest::Approx(2.534731867747e-02).epsilon(1e-9));
    CHECK(chi2_sf(0.5, 4) == doctest::Approx(9.735009788393e-01).epsilon(1e-9));
    CHECK(chi2_sf(30.0, 10) == doctest::Approx(8.566412107753e-04).epsilon(1e-9));

    CHECK(kolmogorov_sf(0.5) == doctest::Approx(9.639452436649e-01).epsilon(1e-9));
    CHECK(kolmogorov_sf(1.0) == doctest::Approx(2.699996716774e-01).epsilon(1e-9));
    CHECK(kolmogorov_sf(1.36) == doctest::Approx(4.948587675538e-02).epsilon(1e-9));
    CHECK(kolmogorov_sf(2.0) == doctest::Approx(6.709252557797e-04).epsilon(1e-9));
}

TEST_CASE("two-sample tests behave on crafted samples") {
    using namespace shs::stats;
    std::vector<double> a{0.1, 0.2, 0.3, 0.9};
    std::vector<double> b{0.15, 0.5, 0.6, 0.7};
    TestOutcome ks = ks_two_sample(a, b);
    CHECK(ks.statistic == doctest::Approx(0.5));

    TestOutcome chi = chi2_homogeneity({50, 50}, {50, 50});
    CHECK(chi.statistic == doctest::Approx(0.0));
    CHECK(chi.p_value == doctest::Approx(1.0));

    TestOutcome deg = chi2_homogeneity({100, 0}, {100, 0});
    CHECK(deg.skipped);

    std::vector<double> n1, n2;
    SplitStream s(11);
    for (int i = 0; i < 4000; ++i) {
        n1.push_back(s.next_normal());
        n2.push_back(s.next_normal() + 0.5);
    }
    CHECK(welch_t(n1, n1).skipped == false);
    CHECK(welch_t(n1, n2).p_value < 1e-10);
    CHECK(ks_two_sample(n1, n2).p_value < 1e-10);
    TestOutcome same = ks_two_sample(n1, n1);
    CHECK(same.statistic == doctest::Approx(0.0));
}

TEST_CASE("exponential sampling closed form") {
    SplitStream s(3);
    CHECK(s.next_exponential(0.0) == std::numeric_limits<double>::infinity());
    const int n = 100000;
    double sum = 0.0;
    for (int i = 0; i < n; ++i) sum += s.next_exponential(2.0);
    CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
}
