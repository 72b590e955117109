#pragma once

#include "hubbard_pert/model.hpp"

#include <boost/multiprecision/cpp_int.hpp>

#include <vector>

namespace hubbard_pert {

using BigInt = boost::multiprecision::cpp_int;

BigInt binomial(unsigned n, unsigned k);

// Σ_T N(T) = 4·n!/(3n+4)·C(3n+4, n)
BigInt tree_count(int n);
// Prüfer enumeration of labelled trees on n+1 vertices, n ≤ 6
BigInt tree_count_bruteforce(int n);

// 128/(3n+4)·C(3n+4, n)·(4D)^n
double coeff_bound(int n, double D);

// c_n = 4/(3n+4)·C(3n+4, n)
double f_coefficient(int n);

inline constexpr double kFRadius = 4.0 / 27.0;

double f_series(double x, int n_terms);
double f_closed(double x);

double R_bound(double U_abs, double D);
double remainder_bound(int m, double U_abs, double D);

// d = 2 only
double D_upper_2d(const ModelParams& p);

enum class DSource { computed, prop51_bound };

struct TailBound {
    double D = 0.0;
    double radius = 0.0;
    int m = 2;
    DSource source = DSource::computed;
};

TailBound make_tail_bound(double D, int m, DSource source);

struct ErrorRow {
    double U_abs = 0.0;
    double error = 0.0;  // NaN when beyond the radius
    bool beyond_radius = false;
};

std::vector<ErrorRow> error_table(const std::vector<double>& U_list, double D, int m);

}  // namespace hubbard_pert
