#pragma once

#include "hubbard_pert/model.hpp"
#include "hubbard_pert/perturb.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <complex>
#include <cstdint>
#include <vector>

namespace hubbard_pert {

using FockOperator = Eigen::SparseMatrix<std::complex<double>>;

/// Occupation-number basis; mode 2·site + spin, states are bitmasks over modes.
class FockBasis {
public:
    explicit FockBasis(const ModelParams& p);

    const ModelParams& params() const { return params_; }
    const Lattice& lattice() const { return lattice_; }
    int modes() const { return modes_; }
    int dim() const { return dim_; }
    int mode(const Site& x, Spin s) const;

private:
    ModelParams params_;
    Lattice lattice_;
    int modes_, dim_;
};

FockOperator annihilation(const FockBasis& b, const Site& x, Spin s);
FockOperator creation(const FockBasis& b, const Site& x, Spin s);
FockOperator annihilation(const FockBasis& b, int mode);
FockOperator creation(const FockBasis& b, int mode);

FockOperator identity_operator(const FockBasis& b);
FockOperator number_operator(const FockBasis& b);

FockOperator build_H(const FockBasis& b, const ModelParams& p, double U);

// ψ*_{x1↑}ψ*_{x2↓}ψ_{y2↓}ψ_{y1↑} + ψ*_{y1↑}ψ*_{y2↓}ψ_{x2↓}ψ_{x1↑}
FockOperator pair_observable(const FockBasis& b, const SiteQuad& q);

/// Eigendecomposition of a Hermitian H, reused for several observables.
class ThermalState {
public:
    ThermalState(const FockOperator& H, double beta);

    double expectation(const FockOperator& O) const;
    // log Tr e^{−βH}
    double log_partition() const;
    const Eigen::VectorXd& energies() const { return evals_; }

private:
    double beta_;
    Eigen::VectorXd evals_;
    Eigen::MatrixXcd evecs_;
    Eigen::VectorXd weights_;  // normalized Boltzmann weights
};

double thermal_expectation(const FockOperator& H, const FockOperator& O, double beta);

double correlation_exact(const FockBasis& b, const ModelParams& p, double U, const SiteQuad& q);

struct CoefficientFit {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
    double se0 = 0.0, se1 = 0.0, se2 = 0.0;
    double condition = 0.0;
};

// Degree-4 least-squares fit of correlation_exact over U_grid (symmetric about 0).
CoefficientFit coeff_fit(const FockBasis& b, const ModelParams& p, const SiteQuad& q, const std::vector<double>& U_grid);

// 9 points, symmetric, max |U| = radius/10
std::vector<double> default_fit_grid(double radius);

// (correlation_exact, −(1/β)[log Z(+ε) − log Z(−ε)]/(2ε)) with H(λ) = H + λ·pair_observable
std::pair<double, double> lambda_derivative_check(const FockBasis& b, const ModelParams& p, double U,
                                                  const SiteQuad& q, double eps);

}  // namespace hubbard_pert
