#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <utility>
#include <vector>

namespace hubbard_pert {

namespace detail {

inline constexpr int kMaxNodes = 8;

// 1/m! for m < 64
inline const double* inverse_factorials() {
    static const auto table = [] {
        std::vector<double> f(64);
        f[0] = 1.0;
        for (int m = 1; m < 64; ++m) f[m] = f[m - 1] / m;
        return f;
    }();
    return table.data();
}

// Taylor series of e^{βz} divided differences about the midpoint of the nodes.
// Accurate when β·(spread/2) is O(1).
inline double exp_divdiff_taylor(const double* z, int count, double beta) {
    double lo = z[0], hi = z[0];
    for (int i = 1; i < count; ++i) {
        lo = std::min(lo, z[i]);
        hi = std::max(hi, z[i]);
    }
    const double c = 0.5 * (lo + hi);
    const double r = 0.5 * beta * (hi - lo);
    double u[kMaxNodes], h[kMaxNodes];
    for (int i = 0; i < count; ++i) {
        u[i] = beta * (z[i] - c);
        h[i] = 1.0;  // h_0 of the first i+1 variables
    }
    const int n = count - 1;
    const double* inv_fact = inverse_factorials();
    double sum = inv_fact[n];
    // stop once r^k/k! < 1e-17 e^{-r}
    double bound = 1.0;
    const double target = 1e-17 * std::exp(-r);
    for (int k = 1; k + n < 64; ++k) {
        double prev = 0.0;
        for (int i = 0; i < count; ++i) {
            h[i] = prev + u[i] * h[i];
            prev = h[i];
        }
        sum += h[n] * inv_fact[k + n];
        bound *= r / k;
        if (bound < target) break;
    }
    return std::exp(beta * c) * std::pow(beta, n) * sum;
}

}  // namespace detail

/// f[z_0, ..., z_n] for f(z) = e^{βz}, at most 8 nodes. Repeated nodes are allowed.
double exp_divided_difference(std::span<const double> nodes, double beta);

// Hot-path variant: Taylor directly when the scaled spread is small.
inline double exp_divided_difference_fast(const double* z, int count, double beta) {
    double lo = z[0], hi = z[0];
    for (int i = 1; i < count; ++i) {
        lo = std::min(lo, z[i]);
        hi = std::max(hi, z[i]);
    }
    if (0.5 * beta * (hi - lo) <= 1.0) return detail::exp_divdiff_taylor(z, count, beta);
    return exp_divided_difference(std::span<const double>(z, static_cast<std::size_t>(count)), beta);
}

/// ∫₀^β dx₁ e^{x₁a₁} ∫₀^{x₁} dx₂ e^{x₂a₂} ⋯ ∫₀^{x_{n−1}} dx_n e^{x_n a_n}
/// equals the divided difference of e^{βz} at (0, a₁, a₁+a₂, …, a₁+⋯+a_n).
double nested_exp_integral(std::span<const double> rates, double beta);

inline double nested_exp_integral_fast(const double* rates, int n, double beta) {
    double z[detail::kMaxNodes];
    z[0] = 0.0;
    for (int i = 0; i < n; ++i) z[i + 1] = z[i] + rates[i];
    return exp_divided_difference_fast(z, n + 1, beta);
}

/// Nested integrals whose rates sum to zero, the case of every momentum tuple: the nodes
/// (0, a₁, a₁+a₂, 0) collapse to {0, 0, a₁, −a₃} and (0, a₁, 0) to {0, 0, a₁}.
class ZeroSumNestedIntegral {
public:
    explicit ZeroSumNestedIntegral(double beta);

    double order2(double a1) const {
        if (beta_ * std::abs(a1) > kTaylorRadius) return fallback(a1, 0.0, 3);
        double sum = 0.0;
        for (int k = kTerms - 1; k >= 0; --k) sum = sum * a1 + c2_[k];
        return sum;
    }

    // f[0, 0, u, v]
    double order3(double u, double v) const {
        if (beta_ * std::max(std::abs(u), std::abs(v)) > kTaylorRadius) return fallback(u, v, 4);
        double h = 1.0, vk = 1.0, sum = c3_[0];
        for (int k = 1; k < kTerms; ++k) {
            vk *= v;
            h = u * h + vk;  // complete homogeneous h_k(u, v)
            sum += c3_[k] * h;
        }
        return sum;
    }

    // order3 for `count` ≤ 8 independent pairs; the recurrences run interleaved
    void order3_batch(const double* u, const double* v, double* out, int count) const {
        double rho = 0.0;
        for (int i = 0; i < count; ++i) rho = std::max(rho, std::max(std::abs(u[i]), std::abs(v[i])));
        if (beta_ * rho > kTaylorRadius) {
            for (int i = 0; i < count; ++i) out[i] = order3(u[i], v[i]);
            return;
        }
        double h[8], vk[8];
        for (int i = 0; i < count; ++i) {
            h[i] = 1.0;
            vk[i] = 1.0;
            out[i] = c3_[0];
        }
        for (int k = 1; k < kTerms; ++k) {
            const double c = c3_[k];
            for (int i = 0; i < count; ++i) {
                vk[i] *= v[i];
                h[i] = u[i] * h[i] + vk[i];
                out[i] += c * h[i];
            }
        }
    }

private:
    static constexpr double kTaylorRadius = 0.5;
    static constexpr int kTerms = 13;  // (K+1)ρ^K·3!/(K+3)! < 2e-17 at ρ = 1/2
    double fallback(double u, double v, int count) const;

    double beta_;
    double c2_[kTerms], c3_[kTerms];  // β^{k+2}/(k+2)!, β^{k+3}/(k+3)!
};

// (Σ_η nested integral over permuted rates, Π_j (e^{βa_j}−1)/a_j)
std::pair<double, double> ordered_sum_identity_check(std::span<const double> rates, double beta);

/// Σ_i e^{rate_i s} P_i(s): closed under multiplication by e^{as} and under ∫₀^s.
class ExpPolySum {
public:
    struct Term {
        double rate;
        std::vector<double> poly;  // coefficients of s^0, s^1, ...
    };

    static ExpPolySum constant(double c);

    void multiply_exp(double a);
    // s ↦ ∫₀^s (this)(x) dx. Rates with |rate·β| < merge_tol are treated as 0.
    ExpPolySum integrate(double beta, double merge_tol) const;
    double evaluate(double s) const;

    const std::vector<Term>& terms() const { return terms_; }

private:
    void add(double rate, const std::vector<double>& poly, double beta, double merge_tol);
    std::vector<Term> terms_;
};

// Symbolic recursion on ExpPolySum. Exact for well-separated or exactly coinciding rate sums;
// loses accuracy when partial rate sums nearly coincide.
double nested_exp_integral_symbolic(std::span<const double> rates, double beta, double merge_tol = 1e-8);

}  // namespace hubbard_pert
