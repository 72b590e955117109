#include "hubbard_pert/propagator.hpp"

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

namespace hubbard_pert {

double fermi(double x) {
    if (x > 0.0) {
        double e = std::exp(-x);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(x));
}

Propagator::Propagator(ModelParams p) : params_((p.validate(), p)), lattice_(p.d, p.L) {
    energies_ = dispersion_table(params_);
    occ_le_.resize(energies_.size());
    occ_gt_.resize(energies_.size());
    for (std::size_t k = 0; k < energies_.size(); ++k) {
        occ_le_[k] = fermi(params_.beta * energies_[k]);
        occ_gt_[k] = fermi(-params_.beta * energies_[k]);
    }
    cos_table_.resize(params_.L);
    sin_table_.resize(params_.L);
    for (int s = 0; s < params_.L; ++s) {
        double a = 2.0 * std::numbers::pi * s / params_.L;
        cos_table_[s] = std::cos(a);
        sin_table_[s] = std::sin(a);
    }
}

double Propagator::mode_kernel(int k, double t, bool negative_branch) const {
    const double E = energies_[k];
    const double b = params_.beta;
    if (!negative_branch) {
        if (E <= 0.0) return std::exp(t * E) * occ_le_[k];
        return std::exp((t - b) * E) * occ_gt_[k];
    }
    if (E >= 0.0) return -std::exp(t * E) * occ_gt_[k];
    return -std::exp((t + b) * E) * occ_le_[k];
}

double Propagator::kernel(int r, double t, bool negative_branch) const {
    const int V = volume();
    double re = 0.0, im = 0.0;
    for (int k = 0; k < V; ++k) {
        double g = mode_kernel(k, t, negative_branch);
        re += cos_phase(k, r) * g;
        im += sin_phase(k, r) * g;
    }
    re /= V;
    im /= V;
    if (std::abs(im) >= 1e-12) throw std::logic_error("covariance has a non-vanishing imaginary part");
    return re;
}

double Propagator::kernel_l1(double t, bool negative_branch) const {
    const int V = volume();
    std::vector<double> g(V);
    for (int k = 0; k < V; ++k) g[k] = mode_kernel(k, t, negative_branch);
    double total = 0.0;
    for (int r = 0; r < V; ++r) {
        double s = 0.0;
        for (int k = 0; k < V; ++k) s += cos_phase(k, r) * g[k];
        total += std::abs(s);
    }
    return total / V;
}

namespace {

void check_time(double tau, double beta) {
    if (!(tau >= 0.0 && tau < beta)) throw std::invalid_argument("time argument outside [0, beta)");
}

}  // namespace

double covariance(const Propagator& prop, int x, Spin sx, double tx, int y, Spin sy, double ty) {
    check_time(tx, prop.beta());
    check_time(ty, prop.beta());
    if (sx != sy) return 0.0;
    return prop.kernel(prop.lattice().sub(y, x), tx - ty);
}

double covariance(const Propagator& prop, const Site& x, Spin sx, double tx, const Site& y, Spin sy, double ty) {
    const auto& lat = prop.lattice();
    return covariance(prop, lat.index(x.coords), sx, tx, lat.index(y.coords), sy, ty);
}

std::pair<double, double> covariance_antiperiodicity_check(const Propagator& prop, const Site& x, Spin, double dtau) {
    const double b = prop.beta();
    if (!(dtau > -b && dtau < 0.0)) throw std::invalid_argument("dtau must lie in (-beta, 0)");
    int r = prop.lattice().index(x.coords);
    return {prop.kernel(r, dtau), -prop.kernel(r, dtau + b)};
}

int grid_steps(double beta, double h, bool require_even) {
    if (!(h > 0.0) || !std::isfinite(h)) throw std::invalid_argument("h must be positive");
    double bh = beta * h;
    double r = std::round(bh);
    if (std::abs(bh - r) > 1e-9 * std::max(1.0, bh) || r < 1.0)
        throw std::invalid_argument("beta*h must be a positive integer");
    int steps = static_cast<int>(r);
    if (require_even && (steps < 2 || steps % 2 != 0)) throw std::invalid_argument("beta*h must be an even integer >= 2");
    return steps;
}

MatsubaraSet matsubara_frequencies(double beta, double h) {
    int steps = grid_steps(beta, h);
    int half = steps / 2;
    MatsubaraSet m;
    for (int j = -half; j < half; ++j) m.frequencies.push_back(std::numbers::pi * (2 * j + 1) / beta);
    return m;
}

DiscreteCovariance build_discrete_covariance(const Propagator& prop, double h) {
    const auto& p = prop.params();
    DiscreteCovariance dc;
    dc.params = p;
    dc.h = h;
    dc.steps = grid_steps(p.beta, h);
    dc.energies = prop.energies();
    const int V = prop.volume();
    const int S = dc.steps;
    const long N = 2L * V * S;
    if (N > 4096) throw std::invalid_argument("discrete covariance dimension above 4096");

    // kernel depends on (y − x, lx − ly) only
    std::vector<double> table(static_cast<std::size_t>(V) * (2 * S - 1));
    for (int r = 0; r < V; ++r)
        for (int dl = -(S - 1); dl <= S - 1; ++dl)
            table[static_cast<std::size_t>(r) * (2 * S - 1) + dl + S - 1] = prop.kernel(r, dl / h);

    dc.entries = Eigen::MatrixXd::Zero(N, N);
    const auto& lat = prop.lattice();
    for (int x = 0; x < V; ++x)
        for (int y = 0; y < V; ++y) {
            int r = lat.sub(y, x);
            for (int s = 0; s < 2; ++s)
                for (int lx = 0; lx < S; ++lx)
                    for (int ly = 0; ly < S; ++ly)
                        dc.entries(dc.index(x, Spin(s), lx), dc.index(y, Spin(s), ly)) =
                            table[static_cast<std::size_t>(r) * (2 * S - 1) + lx - ly + S - 1];
        }
    return dc;
}

MatsubaraDiagonalization matsubara_diagonalize(const DiscreteCovariance& dc) {
    using cd = std::complex<double>;
    const auto& p = dc.params;
    Lattice lat(p.d, p.L);
    const int V = lat.volume();
    const int S = dc.steps;
    const int N = dc.dim();
    const auto omegas = matsubara_frequencies(p.beta, dc.h).frequencies;
    const double twopi_L = 2.0 * std::numbers::pi / p.L;
    const double norm = 1.0 / std::sqrt(static_cast<double>(S) * V);

    Eigen::MatrixXcd Y = Eigen::MatrixXcd::Zero(N, N);
    for (int k = 0; k < V; ++k)
        for (int s = 0; s < 2; ++s)
            for (int m = 0; m < S; ++m) {
                int row = (k * 2 + s) * S + m;
                for (int x = 0; x < V; ++x)
                    for (int l = 0; l < S; ++l) {
                        double phase = twopi_L * lat.dot(k, x) - omegas[m] * l / dc.h;
                        Y(row, dc.index(x, Spin(s), l)) = norm * std::polar(1.0, phase);
                    }
            }

    MatsubaraDiagonalization out;
    Eigen::MatrixXcd YY = Y * Y.adjoint();
    out.unitarity_residual = (YY - Eigen::MatrixXcd::Identity(N, N)).cwiseAbs().maxCoeff();

    Eigen::MatrixXcd D = Y * dc.entries.cast<cd>() * Y.adjoint();
    out.diagonal.resize(N);
    for (int i = 0; i < N; ++i) {
        out.diagonal[i] = D(i, i);
        D(i, i) = 0.0;
    }
    out.offdiag_residual = N > 0 ? D.cwiseAbs().maxCoeff() : 0.0;

    out.eigenvalues.resize(N);
    for (int k = 0; k < V; ++k)
        for (int s = 0; s < 2; ++s)
            for (int m = 0; m < S; ++m) {
                int row = (k * 2 + s) * S + m;
                cd z = std::exp(cd(dc.energies[k] / dc.h, -omegas[m] / dc.h));
                out.eigenvalues[row] = 1.0 / (1.0 - z);
                out.eigenvalue_residual = std::max(out.eigenvalue_residual, std::abs(out.eigenvalues[row] - out.diagonal[row]));
            }

    if (out.unitarity_residual > 1e-8 || out.offdiag_residual > 1e-8 || out.eigenvalue_residual > 1e-8)
        throw std::runtime_error("Matsubara diagonalization residual above 1e-8 (unitarity " +
                                 std::to_string(out.unitarity_residual) + ", off-diagonal " +
                                 std::to_string(out.offdiag_residual) + ", eigenvalues " +
                                 std::to_string(out.eigenvalue_residual) + ")");
    return out;
}

double det_covariance(const DiscreteCovariance& dc) { return dc.entries.partialPivLu().determinant(); }

double det_covariance_closed(const Propagator& prop) {
    double log_det = 0.0;
    for (double E : prop.energies()) {
        double x = prop.beta() * E;
        // log(1+e^x)
        log_det -= 2.0 * (x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)));
    }
    return std::exp(log_det);
}

double decay_Dh(const Propagator& prop, double h) {
    const int S = grid_steps(prop.beta(), h, false);
    double total = 0.0;
    for (int m = -S; m < S; ++m) total += prop.kernel_l1(m / h, m < 0);
    return total / h;
}

namespace {

struct SimpsonState {
    std::function<double(double)> f;
    long panels = 0;
    long cap = 1L << 20;
};

double simpson_recurse(SimpsonState& st, double a, double b, double fa, double fm, double fb, double whole, double eps,
                       int depth) {
    double m = 0.5 * (a + b);
    double lm = 0.5 * (a + m), rm = 0.5 * (m + b);
    double flm = st.f(lm), frm = st.f(rm);
    double left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    double right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    double delta = left + right - whole;
    if (++st.panels > st.cap) throw std::runtime_error("decay_D: adaptive quadrature exceeded 2^20 panels");
    if (depth <= 0 || std::abs(delta) <= 15.0 * eps) return left + right + delta / 15.0;
    return simpson_recurse(st, a, m, fa, flm, fm, left, 0.5 * eps, depth - 1) +
           simpson_recurse(st, m, b, fm, frm, fb, right, 0.5 * eps, depth - 1);
}

double adaptive_simpson(SimpsonState& st, double a, double b, double eps) {
    // a few uniform panels first so a kink cannot hide between the initial nodes
    const int pieces = 16;
    double total = 0.0;
    double w = (b - a) / pieces;
    for (int i = 0; i < pieces; ++i) {
        double lo = a + i * w, hi = lo + w, mid = 0.5 * (lo + hi);
        double flo = st.f(lo), fmid = st.f(mid), fhi = st.f(hi);
        double whole = w / 6.0 * (flo + 4.0 * fmid + fhi);
        total += simpson_recurse(st, lo, hi, flo, fmid, fhi, whole, eps / pieces, 40);
    }
    return total;
}

}  // namespace

double decay_D(const Propagator& prop, double rel_tol) {
    if (!(rel_tol > 0.0)) throw std::invalid_argument("rel_tol must be positive");
    const double b = prop.beta();
    SimpsonState neg{[&](double t) { return prop.kernel_l1(t, true); }};
    SimpsonState pos{[&](double t) { return prop.kernel_l1(t, false); }};
    // rough scale for the absolute tolerance
    double scale = 0.0;
    for (int i = 0; i <= 8; ++i) {
        double t = b * i / 8.0;
        scale += prop.kernel_l1(t, false) + prop.kernel_l1(-t, true);
    }
    scale *= b / 9.0;
    double eps = rel_tol * std::max(scale, 1e-300);
    double total = adaptive_simpson(neg, -b, 0.0, 0.5 * eps) + adaptive_simpson(pos, 0.0, b, 0.5 * eps);
    return total;
}

double gram_determinant(const Propagator& prop, const std::vector<SpacetimePoint>& rows,
                        const std::vector<SpacetimePoint>& cols, const Eigen::MatrixXcd& u, const Eigen::MatrixXcd& v) {
    const int n = static_cast<int>(rows.size());
    if (static_cast<int>(cols.size()) != n || u.cols() != n || v.cols() != n || u.rows() != v.rows())
        throw std::invalid_argument("gram_determinant: inconsistent sizes");
    Eigen::MatrixXcd M(n, n);
    for (int j = 0; j < n; ++j)
        for (int k = 0; k < n; ++k) {
            std::complex<double> g = u.col(j).dot(v.col(k));  // conjugate-linear in u
            double c = covariance(prop, rows[j].site, rows[j].spin, rows[j].time, cols[k].site, cols[k].spin, cols[k].time);
            M(j, k) = g * c;
        }
    return std::abs(M.partialPivLu().determinant());
}

double determinant_bound_sample(const Propagator& prop, int n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("n must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> site(0, prop.volume() - 1);
    std::uniform_int_distribution<int> spin(0, 1);
    std::uniform_real_distribution<double> time(0.0, prop.beta());
    std::normal_distribution<double> gauss;

    auto point = [&] { return SpacetimePoint{site(rng), Spin(spin(rng)), time(rng)}; };
    auto unit_vectors = [&] {
        Eigen::MatrixXcd w(n, n);
        for (int j = 0; j < n; ++j) {
            for (int i = 0; i < n; ++i) w(i, j) = {gauss(rng), gauss(rng)};
            w.col(j).normalize();
        }
        return w;
    };
    std::vector<SpacetimePoint> rows(n), cols(n);
    for (auto& p : rows) p = point();
    for (auto& p : cols) p = point();
    Eigen::MatrixXcd u = unit_vectors();
    Eigen::MatrixXcd v = unit_vectors();
    return gram_determinant(prop, rows, cols, u, v);
}

}  // namespace hubbard_pert
