#pragma once

#include "hubbard_pert/model.hpp"

#include <Eigen/Dense>

#include <complex>
#include <cstdint>
#include <utility>
#include <vector>

namespace hubbard_pert {

// 1/(1+e^x), overflow-free
double fermi(double x);

class Propagator {
public:
    explicit Propagator(ModelParams p);

    const ModelParams& params() const { return params_; }
    const Lattice& lattice() const { return lattice_; }
    int volume() const { return lattice_.volume(); }
    double beta() const { return params_.beta; }

    const std::vector<double>& energies() const { return energies_; }
    // 1/(1+e^{βE_k}): the branch taken when τy − τx ≤ 0
    const std::vector<double>& occ_le() const { return occ_le_; }
    // 1/(1+e^{−βE_k})
    const std::vector<double>& occ_gt() const { return occ_gt_; }

    // g_k(t) = e^{tE_k}(1_{t≥0}/(1+e^{βE_k}) − 1_{t<0}/(1+e^{−βE_k})), t ∈ [−β, β].
    // `negative_branch` forces the t<0 formula (used for left limits at t=0).
    double mode_kernel(int k, double t, bool negative_branch) const;
    double mode_kernel(int k, double t) const { return mode_kernel(k, t, t < 0.0); }

    // (1/L^d) Σ_k e^{i⟨k,r⟩} g_k(t) with r = y − x given as a site index.
    double kernel(int r, double t, bool negative_branch) const;
    double kernel(int r, double t) const { return kernel(r, t, t < 0.0); }

    // Σ_x |kernel(x, t)| for one branch.
    double kernel_l1(double t, bool negative_branch) const;

    double cos_phase(int k, int r) const { return cos_table_[lattice_.dot(k, r)]; }
    double sin_phase(int k, int r) const { return sin_table_[lattice_.dot(k, r)]; }

private:
    ModelParams params_;
    Lattice lattice_;
    std::vector<double> energies_, occ_le_, occ_gt_;
    std::vector<double> cos_table_, sin_table_;
};

// C(xσ τx, yτ τy). Times must lie in [0, β).
double covariance(const Propagator& prop, const Site& x, Spin sx, double tx, const Site& y, Spin sy, double ty);
double covariance(const Propagator& prop, int x, Spin sx, double tx, int y, Spin sy, double ty);

// (g(Δτ), −g(Δτ+β)) for the kernel at displacement x.
std::pair<double, double> covariance_antiperiodicity_check(const Propagator& prop, const Site& x, Spin s, double dtau);

struct MatsubaraSet {
    std::vector<double> frequencies;
};

MatsubaraSet matsubara_frequencies(double beta, double h);

// Number of grid points βh; throws unless βh is an even integer ≥ 2.
int grid_steps(double beta, double h, bool require_even = true);

struct DiscreteCovariance {
    ModelParams params;
    double h = 0.0;
    int steps = 0;  // βh
    std::vector<double> energies;
    Eigen::MatrixXd entries;

    int dim() const { return static_cast<int>(entries.rows()); }
    // row/column index of (site, spin, time l/h)
    int index(int site, Spin s, int l) const { return (site * 2 + static_cast<int>(s)) * steps + l; }
};

DiscreteCovariance build_discrete_covariance(const Propagator& prop, double h);

struct MatsubaraDiagonalization {
    // ordered as (k, spin, ω) with ω from matsubara_frequencies
    std::vector<std::complex<double>> eigenvalues;
    std::vector<std::complex<double>> diagonal;  // diag(Y C_h Y*)
    double unitarity_residual = 0.0;
    double offdiag_residual = 0.0;
    double eigenvalue_residual = 0.0;
};

// Throws std::runtime_error if any residual exceeds 1e−8.
MatsubaraDiagonalization matsubara_diagonalize(const DiscreteCovariance& dc);

double det_covariance(const DiscreteCovariance& dc);
// Π_k (1+e^{βE_k})^{−2}
double det_covariance_closed(const Propagator& prop);

double decay_Dh(const Propagator& prop, double h);
double decay_D(const Propagator& prop, double rel_tol);

struct SpacetimePoint {
    int site = 0;
    Spin spin = Spin::up;
    double time = 0.0;
};

// |det(⟨u_j, v_k⟩ C(ξ_j, ζ_k))|
double gram_determinant(const Propagator& prop, const std::vector<SpacetimePoint>& rows,
                        const std::vector<SpacetimePoint>& cols, const Eigen::MatrixXcd& u, const Eigen::MatrixXcd& v);

double determinant_bound_sample(const Propagator& prop, int n, std::uint64_t seed);

}  // namespace hubbard_pert
