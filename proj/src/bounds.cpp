#include "hubbard_pert/bounds.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace hubbard_pert {

BigInt binomial(unsigned n, unsigned k) {
    if (k > n) return 0;
    if (k > n - k) k = n - k;
    BigInt r = 1;
    for (unsigned i = 1; i <= k; ++i) {
        r *= n - k + i;
        r /= i;
    }
    return r;
}

BigInt tree_count(int n) {
    if (n < 1) throw std::invalid_argument("tree_count: n >= 1");
    // 4·n!/(3n+4)·C(3n+4,n) = 4·(n−1)!·C(3n+3, n−1)
    BigInt f = 1;
    for (int i = 2; i < n; ++i) f *= i;
    return 4 * f * binomial(3 * n + 3, n - 1);
}

BigInt tree_count_bruteforce(int n) {
    if (n < 1 || n > 6) throw std::invalid_argument("tree_count_bruteforce: 1 <= n <= 6");
    const int vertices = n + 1;
    const int len = n - 1;
    std::vector<int> seq(len, 0);
    BigInt total = 0;
    for (;;) {
        std::vector<int> degree(vertices, 1);
        for (int v : seq) ++degree[v];
        BigInt weight = 4;
        for (int d : degree) {
            if (d > 4) {
                weight = 0;
                break;
            }
            BigInt f = 1;
            for (int i = 2; i <= d - 1; ++i) f *= i;
            weight *= binomial(3, d - 1) * f;
        }
        total += weight;
        int i = len - 1;
        while (i >= 0 && ++seq[i] == vertices) seq[i--] = 0;
        if (i < 0) break;
    }
    return total;
}

double f_coefficient(int n) {
    if (n < 0) throw std::invalid_argument("f_coefficient: n >= 0");
    return 4.0 * binomial(3 * n + 4, n).convert_to<double>() / (3 * n + 4);
}

double coeff_bound(int n, double D) {
    if (n < 0 || !(D > 0.0)) throw std::invalid_argument("coeff_bound: n >= 0 and D > 0");
    return 32.0 * f_coefficient(n) * std::pow(4.0 * D, n);
}

double f_series(double x, int n_terms) {
    if (x < 0.0 || x > kFRadius) throw std::invalid_argument("f_series: x outside [0, 4/27]");
    if (n_terms < 0) throw std::invalid_argument("f_series: n_terms >= 0");
    // exact binomials, converted in extended precision so large n neither overflows nor underflows
    long double sum = 0.0L;
    long double xn = 1.0L;
    BigInt c = 1;  // C(3n+4, n)
    for (int n = 0; n < n_terms; ++n) {
        sum += 4.0L * c.convert_to<long double>() / (3 * n + 4) * xn;
        xn *= x;
        // C(3n+7, n+1) = C(3n+4, n)·(3n+7)(3n+6)(3n+5) / ((n+1)(2n+6)(2n+5))
        c *= (3 * n + 7);
        c *= (3 * n + 6);
        c *= (3 * n + 5);
        c /= (n + 1);
        c /= (2 * n + 6);
        c /= (2 * n + 5);
    }
    return static_cast<double>(sum);
}

namespace {

// cos((atan(√A) + π)/3) = sin(atan2(1, √A)/3)
double cube_angle_cos(double A) {
    if (A < 0.0) {
        if (A < -1e-14) throw std::invalid_argument("negative argument under the square root");
        A = 0.0;
    }
    return std::sin(std::atan2(1.0, std::sqrt(A)) / 3.0);
}

}  // namespace

double f_closed(double x) {
    if (!(x > 0.0) || x > kFRadius * (1.0 + 1e-15)) throw std::invalid_argument("f_closed: x outside (0, 4/27]");
    double c = cube_angle_cos(4.0 / (27.0 * x) - 1.0);
    double c2 = c * c;
    return 16.0 / (9.0 * x * x) * c2 * c2;
}

double R_bound(double U_abs, double D) {
    if (!(D > 0.0)) throw std::invalid_argument("R_bound: D > 0");
    if (U_abs < 0.0) throw std::invalid_argument("R_bound: |U| >= 0");
    const double radius = 1.0 / (27.0 * D);
    if (U_abs > radius * (1.0 + 1e-15)) throw std::invalid_argument("R_bound: |U| beyond 1/(27D)");
    if (U_abs == 0.0) return 32.0;
    double c = cube_angle_cos(1.0 / (27.0 * D * U_abs) - 1.0);
    double c2 = c * c;
    return 32.0 / (9.0 * D * D * U_abs * U_abs) * c2 * c2;
}

double remainder_bound(int m, double U_abs, double D) {
    if (m < 0) throw std::invalid_argument("remainder_bound: m >= 0");
    const double R = R_bound(U_abs, D);
    if (U_abs == 0.0) return 0.0;
    const double x = 4.0 * D * U_abs;
    if (x <= 0.05) {
        // tail Σ_{n>m} 32 c_n x^n; term ratio ≤ 6.75x
        double sum = 0.0;
        for (int n = m + 1; n < 400; ++n) {
            double term = 32.0 * f_coefficient(n) * std::pow(x, n);
            sum += term;
            if (term < 1e-18 * sum) break;
        }
        return sum;
    }
    double partial = 0.0;
    for (int n = 0; n <= m; ++n) partial += coeff_bound(n, D) * std::pow(U_abs, n);
    return std::max(0.0, R - partial);
}

double D_upper_2d(const ModelParams& p) {
    if (p.d != 2) throw std::invalid_argument("D_upper_2d: only d = 2");
    if (!(p.beta > 0.0)) throw std::invalid_argument("D_upper_2d: beta > 0");
    const double b = p.beta;
    const double pi = std::numbers::pi;
    const double s3 = std::sqrt(3.0);
    const double xi = 4.0 * std::abs(p.t) + 4.0 * std::abs(p.tprime) + std::abs(p.mu);
    // e^{βξ}/(1+e^{βξ}) = 1/(1+e^{−βξ})
    const double A = (2.0 * std::abs(p.t) + 4.0 * std::abs(p.tprime)) * b / (1.0 + std::exp(-b * xi));
    const double pref = 16.0 / (b * b) + 32.0 * pi * pi / (3.0 * s3 * b) + 16.0 * pi * pi * pi / (3.0 * s3);
    return pref * (b * b * b / 2.0 + A + 3.0 * A * A + A * A * A);
}

TailBound make_tail_bound(double D, int m, DSource source) {
    if (!(D > 0.0)) throw std::invalid_argument("TailBound: D > 0");
    if (m < 0) throw std::invalid_argument("TailBound: m >= 0");
    return TailBound{D, 1.0 / (27.0 * D), m, source};
}

std::vector<ErrorRow> error_table(const std::vector<double>& U_list, double D, int m) {
    const double radius = 1.0 / (27.0 * D);
    std::vector<ErrorRow> rows;
    rows.reserve(U_list.size());
    for (double U : U_list) {
        ErrorRow r;
        r.U_abs = std::abs(U);
        if (r.U_abs > radius * (1.0 + 1e-15)) {
            r.beyond_radius = true;
            r.error = std::numeric_limits<double>::quiet_NaN();
        } else {
            r.error = remainder_bound(m, std::min(r.U_abs, radius), D);
        }
        rows.push_back(r);
    }
    return rows;
}

}  // namespace hubbard_pert
