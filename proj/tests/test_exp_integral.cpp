#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hubbard_pert/exp_integral.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <cmath>
#include <random>
#include <vector>

using namespace hubbard_pert;
using boost::math::quadrature::gauss;

namespace {

// Nested Gauss-Legendre over the ordered simplex; integrands are entire, so 30 nodes per level suffice.
double nested_quadrature(const std::vector<double>& a, std::size_t j, double upper) {
    if (j == a.size()) return 1.0;
    auto f = [&](double x) { return std::exp(a[j] * x) * nested_quadrature(a, j + 1, x); };
    return gauss<double, 30>::integrate(f, 0.0, upper);
}

// Σ_i e^{βz_i} / Π_{j≠i}(z_i − z_j), valid for distinct nodes
double divdiff_distinct(const std::vector<double>& z, double beta) {
    double s = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        double den = 1.0;
        for (std::size_t j = 0; j < z.size(); ++j)
            if (j != i) den *= z[i] - z[j];
        s += std::exp(beta * z[i]) / den;
    }
    return s;
}

}  // namespace

TEST_CASE("nested integral elementary cases") {
    const double b = 1.7;
    double z2[] = {0.0, 0.0};
    CHECK(nested_exp_integral(z2, b) == doctest::Approx(b * b / 2).epsilon(1e-15));
    double one[] = {0.8};
    CHECK(nested_exp_integral(one, b) == doctest::Approx(std::expm1(b * 0.8) / 0.8).epsilon(1e-14));
    double tiny[] = {1e-12};
    CHECK(nested_exp_integral(tiny, b) == doctest::Approx(b).epsilon(1e-11));
    CHECK_THROWS(nested_exp_integral(std::span<const double>(), b));
}

TEST_CASE("nested integral against quadrature") {
    std::vector<double> r{0.3, -0.7, 0.4};
    double q = nested_quadrature(r, 0, 1.0);
    CHECK(std::abs(nested_exp_integral(r, 1.0) - q) < 1e-9);
    CHECK(std::abs(nested_exp_integral_symbolic(r, 1.0) - q) < 1e-9);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-3.0, 3.0);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 1 + trial % 3;
        std::vector<double> a(n);
        for (double& x : a) x = U(rng);
        double ref = nested_quadrature(a, 0, 1.3);
        CHECK(nested_exp_integral(a, 1.3) == doctest::Approx(ref).epsilon(1e-8));
    }
}

TEST_CASE("symbolic recursion and divided differences agree") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(-4.0, 4.0);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 1 + trial % 4;
        std::vector<double> a(n);
        for (double& x : a) x = U(rng);
        // exact coincidences exercise the merge path
        if (trial % 5 == 0 && n >= 2) a[1] = -a[0];
        const double beta = 0.5 + 0.05 * (trial % 30);
        double sym = nested_exp_integral_symbolic(a, beta);
        CHECK(nested_exp_integral(a, beta) == doctest::Approx(sym).epsilon(1e-8));
    }
}

TEST_CASE("divided differences") {
    std::vector<double> z{-1.5, 0.2, 1.1, 2.9};
    CHECK(exp_divided_difference(z, 1.0) == doctest::Approx(divdiff_distinct(z, 1.0)).epsilon(1e-12));
    CHECK(exp_divided_difference(z, 4.0) == doctest::Approx(divdiff_distinct(z, 4.0)).epsilon(1e-11));
    // repeated node: derivative
    std::vector<double> rep{0.7, 0.7};
    CHECK(exp_divided_difference(rep, 2.0) == doctest::Approx(2.0 * std::exp(1.4)).epsilon(1e-14));
    // f[z,z,z] = β²e^{βz}/2
    std::vector<double> rep3{-0.4, -0.4, -0.4};
    CHECK(exp_divided_difference(rep3, 3.0) == doctest::Approx(4.5 * std::exp(-1.2)).epsilon(1e-13));
    // nearly coinciding nodes stay accurate
    std::vector<double> near{0.5, 0.5 + 1e-9, 0.5 - 1e-9};
    CHECK(exp_divided_difference(near, 1.0) == doctest::Approx(0.5 * std::exp(0.5)).epsilon(1e-12));
    std::vector<double> none;
    CHECK_THROWS(exp_divided_difference(none, 1.0));
}

TEST_CASE("zero-sum nested integrals") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> small(-0.45, 0.45), wide(-5.0, 5.0);
    ZeroSumNestedIntegral z(1.0);
    for (int trial = 0; trial < 200; ++trial) {
        auto& dist = trial % 2 ? small : wide;
        double a = dist(rng), b = dist(rng), c = dist(rng);
        double r3[] = {a, b, -(a + b)};
        double r2[] = {c, -c};
        CHECK(z.order3(a, a + b) == doctest::Approx(nested_exp_integral(r3, 1.0)).epsilon(1e-13));
        CHECK(z.order2(c) == doctest::Approx(nested_exp_integral(r2, 1.0)).epsilon(1e-13));
    }
    double u[6] = {0.1, -0.2, 0.3, 0.0, 0.05, -0.4}, v[6] = {0.2, 0.1, -0.3, 0.0, 0.4, -0.1}, out[6];
    z.order3_batch(u, v, out, 6);
    for (int i = 0; i < 6; ++i) CHECK(out[i] == doctest::Approx(z.order3(u[i], v[i])).epsilon(1e-15));
    CHECK(z.order3(0.0, 0.0) == doctest::Approx(1.0 / 6.0).epsilon(1e-15));
}

TEST_CASE("ordered-sum identity") {
    double zz[] = {0.0, 0.0};
    auto [l0, r0] = ordered_sum_identity_check(zz, 1.5);
    CHECK(l0 == doctest::Approx(2.25));
    CHECK(r0 == doctest::Approx(2.25));

    double pm[] = {1.0, -1.0};
    auto [l1, r1] = ordered_sum_identity_check(pm, 1.0);
    const double ref = (std::exp(1.0) - 1.0) * (1.0 - std::exp(-1.0));
    CHECK(l1 == doctest::Approx(ref).epsilon(1e-13));
    CHECK(r1 == doctest::Approx(ref).epsilon(1e-13));

    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> U(-2.0, 2.0);
    for (int trial = 0; trial < 100; ++trial) {
        int n = 1 + trial % 6;
        std::vector<double> a(n);
        for (double& x : a) x = U(rng);
        auto [lhs, rhs] = ordered_sum_identity_check(a, 1.0);
        CHECK(std::abs(lhs - rhs) <= 1e-10 * std::abs(rhs));
    }
    std::vector<double> seven(7, 0.1);
    CHECK_THROWS(ordered_sum_identity_check(seven, 1.0));
}

TEST_CASE("ExpPolySum representation") {
    auto e = ExpPolySum::constant(2.0);
    e.multiply_exp(0.5);
    CHECK(e.evaluate(1.0) == doctest::Approx(2.0 * std::exp(0.5)));
    auto i = e.integrate(1.0, 1e-8);
    CHECK(i.evaluate(1.0) == doctest::Approx(4.0 * std::expm1(0.5)).epsilon(1e-14));
    CHECK(std::abs(i.evaluate(0.0)) < 1e-15);

    auto flat = ExpPolySum::constant(1.0).integrate(1.0, 1e-8).integrate(1.0, 1e-8);
    CHECK(flat.terms().size() == 1);
    CHECK(flat.evaluate(3.0) == doctest::Approx(4.5));
}
