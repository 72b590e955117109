#include "hubbard_pert/fock.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/QR>
#include <Eigen/SVD>

#include <algorithm>
#include <bit>
#include <cmath>
#include <stdexcept>

namespace hubbard_pert {

namespace {

using cd = std::complex<double>;
using Triplet = Eigen::Triplet<cd>;

}  // namespace

FockBasis::FockBasis(const ModelParams& p) : params_((p.validate(), p)), lattice_(p.d, p.L) {
    modes_ = 2 * lattice_.volume();
    if (modes_ > 12) throw std::invalid_argument("Fock space dimension above 4096 (more than 12 modes)");
    dim_ = 1 << modes_;
}

int FockBasis::mode(const Site& x, Spin s) const { return 2 * lattice_.index(x.coords) + static_cast<int>(s); }

FockOperator annihilation(const FockBasis& b, int mode) {
    if (mode < 0 || mode >= b.modes()) throw std::invalid_argument("unknown mode");
    std::vector<Triplet> entries;
    const std::uint32_t bit = 1u << mode;
    for (std::uint32_t s = 0; s < static_cast<std::uint32_t>(b.dim()); ++s) {
        if (!(s & bit)) continue;
        int parity = std::popcount(s & (bit - 1));
        entries.emplace_back(static_cast<int>(s ^ bit), static_cast<int>(s), parity % 2 ? -1.0 : 1.0);
    }
    FockOperator op(b.dim(), b.dim());
    op.setFromTriplets(entries.begin(), entries.end());
    return op;
}

FockOperator creation(const FockBasis& b, int mode) { return FockOperator(annihilation(b, mode).adjoint()); }

FockOperator annihilation(const FockBasis& b, const Site& x, Spin s) { return annihilation(b, b.mode(x, s)); }
FockOperator creation(const FockBasis& b, const Site& x, Spin s) { return creation(b, b.mode(x, s)); }

FockOperator identity_operator(const FockBasis& b) {
    FockOperator I(b.dim(), b.dim());
    I.setIdentity();
    return I;
}

FockOperator number_operator(const FockBasis& b) {
    FockOperator N(b.dim(), b.dim());
    for (int m = 0; m < b.modes(); ++m) N += creation(b, m) * annihilation(b, m);
    return N;
}

FockOperator build_H(const FockBasis& b, const ModelParams& p, double U) {
    if (p.d != b.params().d || p.L != b.params().L) throw std::invalid_argument("params do not match the basis lattice");
    Eigen::MatrixXd F = hopping_matrix(p);
    std::vector<FockOperator> c(b.modes()), cdag(b.modes());
    for (int m = 0; m < b.modes(); ++m) {
        c[m] = annihilation(b, m);
        cdag[m] = creation(b, m);
    }
    FockOperator H(b.dim(), b.dim());
    for (int a = 0; a < b.modes(); ++a)
        for (int q = 0; q < b.modes(); ++q)
            if (F(a, q) != 0.0) H += F(a, q) * (cdag[a] * c[q]);
    if (U != 0.0) {
        for (int x = 0; x < b.lattice().volume(); ++x) {
            const int up = 2 * x, dn = 2 * x + 1;
            H += U * (cdag[up] * cdag[dn] * c[dn] * c[up]);
        }
    }
    H.prune(cd(0.0));
    return H;
}

FockOperator pair_observable(const FockBasis& b, const SiteQuad& q) {
    auto term = [&](const Site& a1, const Site& a2, const Site& b1, const Site& b2) {
        return FockOperator(creation(b, a1, Spin::up) * creation(b, a2, Spin::down) * annihilation(b, b2, Spin::down) *
                            annihilation(b, b1, Spin::up));
    };
    return term(q.x1, q.x2, q.y1, q.y2) + term(q.y1, q.y2, q.x1, q.x2);
}

ThermalState::ThermalState(const FockOperator& H, double beta) : beta_(beta) {
    if (!(beta > 0.0)) throw std::invalid_argument("beta must be positive");
    Eigen::MatrixXcd dense = Eigen::MatrixXcd(H);
    double asym = (dense - dense.adjoint()).cwiseAbs().maxCoeff();
    if (asym > 1e-12) throw std::invalid_argument("Hamiltonian is not Hermitian");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> es(dense);
    if (es.info() != Eigen::Success) throw std::runtime_error("eigendecomposition failed");
    evals_ = es.eigenvalues();
    evecs_ = es.eigenvectors();
    const double emin = evals_.minCoeff();
    weights_ = (-beta_ * (evals_.array() - emin)).exp();
    weights_ /= weights_.sum();
}

double ThermalState::expectation(const FockOperator& O) const {
    if (O.rows() != evecs_.rows()) throw std::invalid_argument("operator dimension mismatch");
    Eigen::MatrixXcd OV = O * evecs_;
    cd acc = 0.0;
    for (int i = 0; i < evecs_.cols(); ++i) acc += weights_[i] * evecs_.col(i).dot(OV.col(i));
    if (std::abs(acc.imag()) > 1e-10) throw std::runtime_error("thermal expectation is not real");
    return acc.real();
}

double ThermalState::log_partition() const {
    const double emin = evals_.minCoeff();
    return -beta_ * emin + std::log((-beta_ * (evals_.array() - emin)).exp().sum());
}

double thermal_expectation(const FockOperator& H, const FockOperator& O, double beta) {
    return ThermalState(H, beta).expectation(O);
}

double correlation_exact(const FockBasis& b, const ModelParams& p, double U, const SiteQuad& q) {
    return ThermalState(build_H(b, p, U), p.beta).expectation(pair_observable(b, q));
}

std::vector<double> default_fit_grid(double radius) {
    std::vector<double> g;
    for (int i = -4; i <= 4; ++i) g.push_back(radius / 10.0 * i / 4.0);
    return g;
}

CoefficientFit coeff_fit(const FockBasis& b, const ModelParams& p, const SiteQuad& q, const std::vector<double>& U_grid) {
    const int m = static_cast<int>(U_grid.size());
    if (m < 6) throw std::invalid_argument("coeff_fit: need at least 6 grid points for a degree-4 fit");
    std::vector<double> sorted = U_grid;
    std::sort(sorted.begin(), sorted.end());
    double umax = std::max(std::abs(sorted.front()), std::abs(sorted.back()));
    if (!(umax > 0.0)) throw std::invalid_argument("coeff_fit: degenerate grid");
    for (int i = 0; i < m; ++i)
        if (std::abs(sorted[i] + sorted[m - 1 - i]) > 1e-12 * umax)
            throw std::invalid_argument("coeff_fit: grid must be symmetric about 0");

    const FockOperator O = pair_observable(b, q);
    Eigen::MatrixXd A(m, 5);
    Eigen::VectorXd y(m);
    for (int i = 0; i < m; ++i) {
        double u = U_grid[i] / umax;
        double pw = 1.0;
        for (int k = 0; k < 5; ++k, pw *= u) A(i, k) = pw;
        y[i] = ThermalState(build_H(b, p, U_grid[i]), p.beta).expectation(O);
    }
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(A);
    const auto& sv = svd.singularValues();
    CoefficientFit fit;
    fit.condition = sv[0] / sv[sv.size() - 1];
    if (!(fit.condition < 1e12)) throw std::runtime_error("coeff_fit: ill-conditioned fit");

    Eigen::VectorXd c = A.colPivHouseholderQr().solve(y);
    Eigen::VectorXd resid = y - A * c;
    double dof = m - 5;
    double sigma2 = dof > 0 ? resid.squaredNorm() / dof : 0.0;
    Eigen::MatrixXd cov = sigma2 * (A.transpose() * A).inverse();
    fit.a0 = c[0];
    fit.a1 = c[1] / umax;
    fit.a2 = c[2] / (umax * umax);
    fit.se0 = std::sqrt(cov(0, 0));
    fit.se1 = std::sqrt(cov(1, 1)) / umax;
    fit.se2 = std::sqrt(cov(2, 2)) / (umax * umax);
    return fit;
}

std::pair<double, double> lambda_derivative_check(const FockBasis& b, const ModelParams& p, double U,
                                                  const SiteQuad& q, double eps) {
    if (!(eps > 0.0)) throw std::invalid_argument("eps must be positive");
    const FockOperator H = build_H(b, p, U);
    const FockOperator O = pair_observable(b, q);
    double exact = ThermalState(H, p.beta).expectation(O);
    FockOperator Hp = H + eps * O;
    FockOperator Hm = H - eps * O;
    double lp = ThermalState(Hp, p.beta).log_partition();
    double lm = ThermalState(Hm, p.beta).log_partition();
    return {exact, -(lp - lm) / (2.0 * eps * p.beta)};
}

}  // namespace hubbard_pert
