#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hubbard_pert/bounds.hpp"

#include <cmath>
#include <numbers>

using namespace hubbard_pert;

TEST_CASE("tree counts") {
    CHECK(tree_count(1) == 4);
    CHECK(tree_count(2) == 36);
    CHECK(tree_count_bruteforce(1) == 4);
    CHECK(tree_count_bruteforce(2) == 36);
    for (int n = 1; n <= 6; ++n) CHECK(tree_count(n) == tree_count_bruteforce(n));
    // 4·n!/(3n+4)·C(3n+4, n) for a larger n, exact division
    BigInt fact = 1;
    for (int i = 2; i <= 30; ++i) fact *= i;
    BigInt num = 4 * fact * binomial(94, 30);
    CHECK(num % 94 == 0);
    CHECK(tree_count(30) == num / 94);
    CHECK_THROWS(tree_count(0));
    CHECK_THROWS(tree_count_bruteforce(7));
}

TEST_CASE("coefficient bounds") {
    CHECK(coeff_bound(0, 92.04) == doctest::Approx(32.0));
    CHECK(coeff_bound(1, 1.0) == doctest::Approx(512.0));
    for (int n = 0; n < 20; ++n) {
        double direct = 128.0 / (3 * n + 4) * binomial(3 * n + 4, n).convert_to<double>() * std::pow(4.0 * 0.7, n);
        CHECK(coeff_bound(n, 0.7) == doctest::Approx(direct).epsilon(1e-13));
        CHECK(coeff_bound(n, 0.7) == doctest::Approx(32.0 * f_coefficient(n) * std::pow(2.8, n)).epsilon(1e-15));
    }
}

TEST_CASE("generating function") {
    CHECK(f_series(0.0, 5) == 1.0);
    CHECK(f_closed(kFRadius) == doctest::Approx(81.0 / 16.0).epsilon(1e-12));
    CHECK(std::abs(f_closed(4.0 / 27.0) - 5.0625) < 1e-12);
    CHECK(f_closed(1e-6) == doctest::Approx(f_series(1e-6, 10)).epsilon(1e-12));
    CHECK(f_closed(0.05) == doctest::Approx(f_series(0.05, 200)).epsilon(1e-10));
    CHECK(f_closed(0.1) == doctest::Approx(f_series(0.1, 200)).epsilon(1e-10));
    for (int i = 1; i <= 50; ++i) {
        double x = 0.12 * i / 50.0;
        CHECK(std::abs(f_series(x, 400) - f_closed(x)) < 1e-10);
    }
    // partial sums increase in n_terms and in x
    double prev = 0.0;
    for (int n = 1; n < 40; ++n) {
        double s = f_series(0.14, n);
        CHECK(s > prev);
        prev = s;
    }
    prev = 0.0;
    for (int i = 0; i <= 20; ++i) {
        double s = f_series(kFRadius * i / 20.0, 60);
        CHECK(s >= prev);
        prev = s;
    }
    // slow approach to 81/16 at the radius
    CHECK(f_series(kFRadius, 2000) < 81.0 / 16.0);
    CHECK(f_series(kFRadius, 2000) > 4.9);  // tail ~ n^{-3/2}
    CHECK_THROWS(f_closed(0.0));
    CHECK_THROWS(f_closed(0.2));
    CHECK_THROWS(f_series(0.2, 3));
}

TEST_CASE("R(|U|)") {
    const double D = 92.04;
    const double radius = 1.0 / (27.0 * D);
    CHECK(R_bound(0.0, D) == 32.0);
    CHECK(R_bound(radius, D) == doctest::Approx(162.0).epsilon(1e-12));
    for (int i = 1; i <= 100; ++i) {
        double U = radius * i / 100.0;
        CHECK(R_bound(U, D) == doctest::Approx(32.0 * f_closed(4.0 * D * U)).epsilon(1e-12));
    }
    CHECK_THROWS(R_bound(1.01 * radius, D));
}

TEST_CASE("remainders") {
    const double D = 92.04;
    CHECK(remainder_bound(2, 0.0, D) == 0.0);
    CHECK(remainder_bound(2, 1e-6, D) == doctest::Approx(1.408e-7).epsilon(5e-3));
    CHECK(remainder_bound(2, 1e-5, D) == doctest::Approx(1.433e-4).epsilon(5e-3));
    const double radius = 1.0 / (27.0 * D);
    for (int m : {0, 1, 2, 3}) {
        for (int i = 0; i <= 200; ++i) CHECK(remainder_bound(m, radius * i / 200.0, D) >= 0.0);
        // leading behaviour O(U^{m+1})
        for (double U : {radius / 1000.0, radius / 100.0}) {
            double ratio = remainder_bound(m, U, D) / std::pow(U, m + 1) / coeff_bound(m + 1, D);
            CHECK(ratio >= 1.0);
            CHECK(ratio <= 2.0);
        }
    }
    // the two evaluation routes meet continuously at 4D|U| = 0.05
    const double U0 = 0.05 / (4.0 * D);
    CHECK(remainder_bound(2, U0 * (1 - 1e-9), D) == doctest::Approx(remainder_bound(2, U0 * (1 + 1e-9), D)).epsilon(1e-6));
}

TEST_CASE("two-dimensional decay bound") {
    ModelParams p{2, 10, 0.01, 0.01, 0.01, 1.0};
    const double D = D_upper_2d(p);
    CHECK(std::abs(D - 92.04) < 0.01);
    CHECK(std::abs(1.0 / (27.0 * D) - 4.024e-4) < 1e-7);

    ModelParams z{2, 10, 0.0, 0.0, 0.0, 1.0};
    const double pi = std::numbers::pi, s3 = std::sqrt(3.0);
    CHECK(D_upper_2d(z) == doctest::Approx((16.0 + 32.0 * pi * pi / (3 * s3) + 16.0 * pi * pi * pi / (3 * s3)) / 2.0));

    double prev = 0.0;
    for (double t : {0.0, 0.01, 0.1, 0.5}) {
        ModelParams q{2, 4, t, 0.02, -0.03, 1.5};
        CHECK(D_upper_2d(q) >= prev);
        prev = D_upper_2d(q);
    }
    prev = 0.0;
    for (double mu : {0.0, -0.2, 0.5, -1.0}) {
        ModelParams q{2, 4, 0.1, 0.05, mu, 1.0};
        CHECK(D_upper_2d(q) >= prev);
        prev = D_upper_2d(q);
    }
    CHECK_THROWS(D_upper_2d(ModelParams{1, 4, 0.1, 0.0, 0.0, 1.0}));
}

TEST_CASE("error table") {
    const double D = 92.04;
    auto rows = error_table({0.0, 5e-5, 4e-4, 1e-3}, D, 2);
    REQUIRE(rows.size() == 4);
    CHECK(rows[0].error == 0.0);
    CHECK(rows[1].error == doctest::Approx(1.942e-2).epsilon(5e-3));
    CHECK(rows[2].error == doctest::Approx(7.307e1).epsilon(5e-3));
    CHECK(rows[3].beyond_radius);
    CHECK(std::isnan(rows[3].error));
    CHECK(error_table({}, D, 2).empty());

    auto tb = make_tail_bound(D, 2, DSource::prop51_bound);
    CHECK(tb.radius == doctest::Approx(1.0 / (27.0 * D)));
    CHECK_THROWS(make_tail_bound(0.0, 2, DSource::computed));
}
