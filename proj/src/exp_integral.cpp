#include "hubbard_pert/exp_integral.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace hubbard_pert {

double exp_divided_difference(std::span<const double> nodes, double beta) {
    const int count = static_cast<int>(nodes.size());
    if (count < 1 || count > detail::kMaxNodes) throw std::invalid_argument("exp_divided_difference: 1 to 8 nodes");
    const auto [lo, hi] = std::minmax_element(nodes.begin(), nodes.end());
    const double r = 0.5 * beta * (*hi - *lo);
    if (r <= 1.0) return detail::exp_divdiff_taylor(nodes.data(), count, beta);

    // Scaling and squaring of exp(βZ), Z the bidiagonal matrix with the nodes on the diagonal:
    // exp(βZ)_{ij} = f[z_i..z_j].
    int s = static_cast<int>(std::ceil(std::log2(r)));
    double small_beta = std::ldexp(beta, -s);
    double F[detail::kMaxNodes][detail::kMaxNodes] = {};
    for (int i = 0; i < count; ++i)
        for (int j = i; j < count; ++j) F[i][j] = detail::exp_divdiff_taylor(nodes.data() + i, j - i + 1, small_beta);
    double G[detail::kMaxNodes][detail::kMaxNodes];
    for (int step = 0; step < s; ++step) {
        for (int i = 0; i < count; ++i)
            for (int j = i; j < count; ++j) {
                double acc = 0.0;
                for (int m = i; m <= j; ++m) acc += F[i][m] * F[m][j];
                G[i][j] = acc;
            }
        for (int i = 0; i < count; ++i)
            for (int j = i; j < count; ++j) F[i][j] = G[i][j];
    }
    return F[0][count - 1];
}

double nested_exp_integral(std::span<const double> rates, double beta) {
    const int n = static_cast<int>(rates.size());
    if (n < 1) throw std::invalid_argument("nested_exp_integral: need at least one rate");
    if (n + 1 > detail::kMaxNodes) throw std::invalid_argument("nested_exp_integral: at most 7 rates");
    double z[detail::kMaxNodes];
    z[0] = 0.0;
    for (int i = 0; i < n; ++i) z[i + 1] = z[i] + rates[i];
    return exp_divided_difference(std::span<const double>(z, n + 1), beta);
}

ZeroSumNestedIntegral::ZeroSumNestedIntegral(double beta) : beta_(beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    double c = beta * beta / 2.0;
    for (int k = 0; k < kTerms; ++k) {
        c2_[k] = c;
        c *= beta / (k + 3);
        c3_[k] = c;
    }
}

double ZeroSumNestedIntegral::fallback(double u, double v, int count) const {
    const double z[4] = {0.0, 0.0, u, v};
    return exp_divided_difference(std::span<const double>(z, static_cast<std::size_t>(count)), beta_);
}

std::pair<double, double> ordered_sum_identity_check(std::span<const double> rates, double beta) {
    const int n = static_cast<int>(rates.size());
    if (n < 1 || n > 6) throw std::invalid_argument("ordered_sum_identity_check: 1 <= n <= 6");
    std::vector<int> eta(n);
    std::iota(eta.begin(), eta.end(), 0);
    std::vector<double> permuted(n);
    double lhs = 0.0;
    do {
        for (int j = 0; j < n; ++j) permuted[j] = rates[eta[j]];
        lhs += nested_exp_integral(permuted, beta);
    } while (std::next_permutation(eta.begin(), eta.end()));
    double rhs = 1.0;
    for (double a : rates) {
        double z[2] = {0.0, a};
        rhs *= exp_divided_difference(std::span<const double>(z, 2), beta);  // (e^{βa}−1)/a
    }
    return {lhs, rhs};
}

ExpPolySum ExpPolySum::constant(double c) {
    ExpPolySum e;
    e.terms_.push_back({0.0, {c}});
    return e;
}

void ExpPolySum::multiply_exp(double a) {
    for (auto& t : terms_) t.rate += a;
}

void ExpPolySum::add(double rate, const std::vector<double>& poly, double beta, double merge_tol) {
    for (auto& t : terms_) {
        if (std::abs(t.rate - rate) * beta < merge_tol) {
            if (t.poly.size() < poly.size()) t.poly.resize(poly.size(), 0.0);
            for (std::size_t m = 0; m < poly.size(); ++m) t.poly[m] += poly[m];
            return;
        }
    }
    terms_.push_back({rate, poly});
}

ExpPolySum ExpPolySum::integrate(double beta, double merge_tol) const {
    ExpPolySum out;
    for (const auto& t : terms_) {
        const std::size_t M = t.poly.size();
        if (std::abs(t.rate * beta) < merge_tol) {
            std::vector<double> q(M + 1, 0.0);
            for (std::size_t m = 0; m < M; ++m) q[m + 1] = t.poly[m] / static_cast<double>(m + 1);
            out.add(0.0, q, beta, merge_tol);
            continue;
        }
        const double a = t.rate;
        std::vector<double> q(M, 0.0);
        double constant = 0.0;
        for (std::size_t m = 0; m < M; ++m) {
            // ∫₀^s e^{ax} x^m dx = e^{as} Σ_j (−1)^j m!/(m−j)! s^{m−j}/a^{j+1} − (−1)^m m!/a^{m+1}
            double coeff = t.poly[m];
            if (coeff == 0.0) continue;
            double falling = 1.0;  // m!/(m−j)!
            double apow = a;       // a^{j+1}
            for (std::size_t j = 0; j <= m; ++j) {
                double sign = (j % 2 == 0) ? 1.0 : -1.0;
                q[m - j] += coeff * sign * falling / apow;
                if (j == m) constant -= coeff * sign * falling / apow;
                falling *= static_cast<double>(m - j);
                apow *= a;
            }
        }
        out.add(a, q, beta, merge_tol);
        out.add(0.0, {constant}, beta, merge_tol);
    }
    return out;
}

double ExpPolySum::evaluate(double s) const {
    double total = 0.0;
    for (const auto& t : terms_) {
        double p = 0.0;
        for (std::size_t m = t.poly.size(); m-- > 0;) p = p * s + t.poly[m];
        total += std::exp(t.rate * s) * p;
    }
    return total;
}

double nested_exp_integral_symbolic(std::span<const double> rates, double beta, double merge_tol) {
    if (rates.empty()) throw std::invalid_argument("nested_exp_integral_symbolic: need at least one rate");
    ExpPolySum h = ExpPolySum::constant(1.0);
    for (std::size_t j = rates.size(); j-- > 0;) {
        h.multiply_exp(rates[j]);
        h = h.integrate(beta, merge_tol);
    }
    return h.evaluate(beta);
}

}  // namespace hubbard_pert
