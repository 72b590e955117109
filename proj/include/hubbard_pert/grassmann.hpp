#pragma once

#include "hubbard_pert/fock.hpp"
#include "hubbard_pert/model.hpp"
#include "hubbard_pert/propagator.hpp"

#include <vector>

namespace hubbard_pert {

struct DiscretizedSeries {
    double h = 0.0;
    int n_max = 0;
    std::vector<double> terms;  // terms[n] is the order-n contribution (terms[0] = 1)

    double value() const;
};

// Riemann-sum determinant series of the discretized partition function, truncated at n_max.
DiscretizedSeries P_h_series(const Propagator& prop, double U, double h, int n_max);
double P_h_truncated(const Propagator& prop, double U, double h, int n_max);

// Tr e^{−βH}/Tr e^{−βH₀}
double partition_ratio_exact(const FockBasis& b, const ModelParams& p, double U);

struct ConvergenceRow {
    double h = 0.0;
    double P_h = 0.0;
    double error = 0.0;
};

struct ConvergenceStudy {
    std::vector<ConvergenceRow> rows;
    std::vector<double> ratios;  // error(h_i)/error(h_{i+1})
    bool decreasing = false;
    bool first_order = false;  // every ratio in [1.5, 2.5]
    bool plateau = false;      // truncation at n_max dominates the discretization error
    double truncation_estimate = 0.0;
};

ConvergenceStudy convergence_study(const Propagator& prop, const FockBasis& b, const ModelParams& p, double U,
                                   const std::vector<double>& h_list, int n_max);

}  // namespace hubbard_pert
