#include "hubbard_pert/grassmann.hpp"

#include <cmath>
#include <stdexcept>

namespace hubbard_pert {

namespace {

template <int N>
double principal_minor(const Eigen::MatrixXd& A, const int* idx) {
    Eigen::Matrix<double, N, N> M;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) M(i, j) = A(idx[i], idx[j]);
    return M.determinant();
}

double minor_det(const Eigen::MatrixXd& A, const int* idx, int n) {
    switch (n) {
        case 1: return A(idx[0], idx[0]);
        case 2: return principal_minor<2>(A, idx);
        case 3: return principal_minor<3>(A, idx);
        case 4: return principal_minor<4>(A, idx);
        default: {
            Eigen::MatrixXd M(n, n);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < n; ++j) M(i, j) = A(idx[i], idx[j]);
            return M.partialPivLu().determinant();
        }
    }
}

double binomial_double(int n, int k) {
    if (k < 0 || k > n) return 0.0;
    double r = 1.0;
    for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
    return r;
}

// Σ over n-subsets S of det(A_S)^2
double subset_sum(const Eigen::MatrixXd& A, int n) {
    const int M = static_cast<int>(A.rows());
    if (n > M) return 0.0;
    std::vector<int> idx(n);
    for (int i = 0; i < n; ++i) idx[i] = i;
    double total = 0.0;
    for (;;) {
        double d = minor_det(A, idx.data(), n);
        total += d * d;
        int i = n - 1;
        while (i >= 0 && idx[i] == M - n + i) --i;
        if (i < 0) break;
        ++idx[i];
        for (int j = i + 1; j < n; ++j) idx[j] = idx[j - 1] + 1;
    }
    return total;
}

DiscretizedSeries series_unchecked(const Propagator& prop, double U, double h, int n_max) {
    const int S = grid_steps(prop.beta(), h);
    const int V = prop.volume();
    const int M = V * S;
    if (binomial_double(M, n_max) > 5e7) throw std::invalid_argument("P_h: cost guard (too many vertex placements)");

    // spin-up block on the grid points (site, l); spin-down is identical
    Eigen::MatrixXd A(M, M);
    const auto& lat = prop.lattice();
    for (int a = 0; a < M; ++a)
        for (int b = 0; b < M; ++b) {
            int xa = a / S, la = a % S, xb = b / S, lb = b % S;
            A(a, b) = prop.kernel(lat.sub(xb, xa), (la - lb) / h);
        }

    DiscretizedSeries out;
    out.h = h;
    out.n_max = n_max;
    out.terms.assign(n_max + 1, 0.0);
    out.terms[0] = 1.0;
    // (1/n!) Σ over ordered placements equals Σ over distinct n-subsets: repeated points give
    // equal rows, and the 2n×2n spin-blocked determinant is det(A_S)^2.
    double coupling = 1.0;
    for (int n = 1; n <= n_max; ++n) {
        coupling *= -U / h;
        if (U == 0.0) break;
        out.terms[n] = coupling * subset_sum(A, n);
    }
    return out;
}

}  // namespace

double DiscretizedSeries::value() const {
    double v = 0.0;
    for (double t : terms) v += t;
    return v;
}

DiscretizedSeries P_h_series(const Propagator& prop, double U, double h, int n_max) {
    const auto& p = prop.params();
    if (!(p.d == 1 || (p.d == 2 && p.L <= 2))) throw std::invalid_argument("P_h: needs d = 1, or d = 2 with L <= 2");
    if (p.d == 1 && p.L > 2) throw std::invalid_argument("P_h: L <= 2");
    if (n_max < 0 || n_max > 4) throw std::invalid_argument("P_h: 0 <= n_max <= 4");
    if (grid_steps(p.beta, h) > 16) throw std::invalid_argument("P_h: beta*h <= 16");
    return series_unchecked(prop, U, h, n_max);
}

double P_h_truncated(const Propagator& prop, double U, double h, int n_max) {
    return P_h_series(prop, U, h, n_max).value();
}

double partition_ratio_exact(const FockBasis& b, const ModelParams& p, double U) {
    double lz = ThermalState(build_H(b, p, U), p.beta).log_partition();
    double lz0 = ThermalState(build_H(b, p, 0.0), p.beta).log_partition();
    return std::exp(lz - lz0);
}

ConvergenceStudy convergence_study(const Propagator& prop, const FockBasis& b, const ModelParams& p, double U,
                                   const std::vector<double>& h_list, int n_max) {
    ConvergenceStudy st;
    const double exact = partition_ratio_exact(b, p, U);
    for (double h : h_list) {
        double P = P_h_truncated(prop, U, h, n_max);
        st.rows.push_back({h, P, std::abs(P - exact)});
    }
    st.decreasing = true;
    st.first_order = !st.rows.empty();
    for (std::size_t i = 0; i + 1 < st.rows.size(); ++i) {
        double e0 = st.rows[i].error, e1 = st.rows[i + 1].error;
        if (!(e1 < e0)) st.decreasing = false;
        double r = e1 > 0.0 ? e0 / e1 : (e0 == 0.0 ? 1.0 : INFINITY);
        st.ratios.push_back(r);
        if (!(r >= 1.5 && r <= 2.5)) st.first_order = false;
    }
    if (U == 0.0) {
        st.first_order = true;
        st.decreasing = true;
    }
    if (!st.rows.empty() && U != 0.0) {
        // first omitted order at the finest grid
        const double h = st.rows.back().h;
        auto next = series_unchecked(prop, U, h, n_max + 1);
        st.truncation_estimate = std::abs(next.terms.back());
        st.plateau = st.truncation_estimate > 0.1 * st.rows.back().error;
    }
    return st;
}

}  // namespace hubbard_pert
