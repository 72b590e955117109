#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hubbard_pert/grassmann.hpp"

#include <cmath>

using namespace hubbard_pert;

TEST_CASE("trivial limits") {
    ModelParams p{1, 2, 1.0, 0.0, 0.1, 1.0};
    Propagator prop(p);
    CHECK(P_h_truncated(prop, 0.0, 4.0, 4) == 1.0);
    FockBasis b(p);
    CHECK(partition_ratio_exact(b, p, 0.0) == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("single site by hand") {
    ModelParams p{1, 1, 0.0, 0.0, 0.0, 1.0};
    Propagator prop(p);
    // two time points, each contributes det diag(1/2, 1/2) = 1/4
    const double U = 0.3;
    auto s = P_h_series(prop, U, 2.0, 1);
    CHECK(s.terms[1] == doctest::Approx(-U / 2.0 * 2.0 * 0.25).epsilon(1e-14));

    FockBasis b(p);
    for (double u : {0.1, 0.5, -0.4})
        CHECK(partition_ratio_exact(b, p, u) == doctest::Approx((3.0 + std::exp(-u)) / 4.0).epsilon(1e-13));
}

TEST_CASE("series is a polynomial of degree n_max") {
    ModelParams p{1, 2, 1.0, 0.0, 0.2, 1.0};
    Propagator prop(p);
    const double h = 4.0;
    auto s1 = P_h_series(prop, 0.01, h, 3);
    auto s2 = P_h_series(prop, 0.02, h, 3);
    for (int n = 1; n <= 3; ++n) CHECK(s2.terms[n] == doctest::Approx(s1.terms[n] * std::pow(2.0, n)).epsilon(1e-12));

    // linear coefficient: −(1/h) Σ_{x, time} det of the 2×2 equal-time spin block
    auto dc = build_discrete_covariance(prop, h);
    double lin = 0.0;
    for (int x = 0; x < prop.volume(); ++x)
        for (int l = 0; l < dc.steps; ++l) {
            double up = dc.entries(dc.index(x, Spin::up, l), dc.index(x, Spin::up, l));
            double dn = dc.entries(dc.index(x, Spin::down, l), dc.index(x, Spin::down, l));
            lin += up * dn;
        }
    lin *= -1.0 / h;
    CHECK(s1.terms[1] / 0.01 == doctest::Approx(lin).epsilon(1e-12));
    CHECK(det_covariance(dc) != 0.0);
}

TEST_CASE("small coupling keeps P_h near one") {
    for (auto p : {ModelParams{1, 2, 1.0, 0.0, 0.2, 1.0}, ModelParams{2, 2, 0.5, 0.2, -0.1, 1.0}}) {
        Propagator prop(p);
        const double V = prop.volume();
        const double U = std::log(2.0) / (16.0 * p.beta * std::pow(V, 4 * p.d)) * 0.9;
        for (double h : {4.0, 8.0}) CHECK(std::abs(P_h_truncated(prop, U, h, 4) - 1.0) < 1.0);
    }
}

TEST_CASE("first-order convergence to the exact partition ratio") {
    for (auto p : {ModelParams{1, 1, 0.0, 0.0, 0.0, 1.0}, ModelParams{1, 2, 1.0, 0.0, 0.0, 1.0}}) {
        Propagator prop(p);
        FockBasis b(p);
        auto st = convergence_study(prop, b, p, 0.1, {4.0, 8.0, 16.0}, 4);
        REQUIRE(st.ratios.size() == 2);
        CHECK(st.decreasing);
        CHECK(st.first_order);
        for (double r : st.ratios) {
            CHECK(r >= 1.5);
            CHECK(r <= 2.5);
        }
        CHECK_FALSE(st.plateau);
    }
}

TEST_CASE("zero coupling and truncation plateau") {
    ModelParams p{1, 1, 0.0, 0.0, 0.0, 1.0};
    Propagator prop(p);
    FockBasis b(p);
    auto zero = convergence_study(prop, b, p, 0.0, {4.0, 8.0}, 2);
    for (const auto& r : zero.rows) CHECK(r.error == 0.0);

    auto coarse = convergence_study(prop, b, p, 1.5, {4.0, 8.0, 16.0}, 1);
    CHECK(coarse.plateau);
}

TEST_CASE("preconditions") {
    ModelParams p{1, 3, 1.0, 0.0, 0.0, 1.0};
    Propagator prop(p);
    CHECK_THROWS(P_h_truncated(prop, 0.1, 4.0, 2));
    ModelParams q{1, 2, 1.0, 0.0, 0.0, 1.0};
    Propagator pq(q);
    CHECK_THROWS(P_h_truncated(pq, 0.1, 4.0, 5));
    CHECK_THROWS(P_h_truncated(pq, 0.1, 32.0, 2));
    CHECK_THROWS(P_h_truncated(pq, 0.1, 3.0, 2));
}
