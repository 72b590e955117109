#pragma once

#include "hubbard_pert/exp_integral.hpp"
#include "hubbard_pert/model.hpp"
#include "hubbard_pert/propagator.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace hubbard_pert {

/// One-line notation, zero based: perm[j] = π(j).
using Permutation = std::vector<int>;

Permutation identity_permutation(int n);
Permutation inverse(const Permutation& p);
bool is_permutation(const Permutation& p);
std::string to_string(const Permutation& p);  // one-based, e.g. "231"

struct SiteQuad {
    Site x1, x2, y1, y2;
};

SiteQuad swapped(const SiteQuad& s);  // (x1,x2) <-> (y1,y2)

struct PermPair {
    Permutation pi, tau;
    double weight = 1.0;
};

// Bracketed sums for a1 (overall −1/(2β)) and a2 (overall −1/(3β)).
std::vector<PermPair> a1_terms();
std::vector<PermPair> a2_terms();

/// Momentum sum of one (π, τ) pair. The n conservation constraints are the incidence relations of the
/// multigraph with edges k_m: m → π(m), p_m: m → τ(m); a spanning forest fixes the tree-edge momenta and
/// leaves the remaining edges free.
class MomentumSum {
public:
    MomentumSum(const Propagator& prop, Permutation pi, Permutation tau);

    int order() const { return n_; }
    int free_count() const { return static_cast<int>(free_edges_.size()); }
    std::uint64_t tuple_count() const;
    // chunk c fixes the first free momentum
    std::size_t chunk_count() const;

    // Global momentum inversion maps chunk c onto chunk −c with identical sums (E_k = E_{−k},
    // cosines are even), so only chunks with c ≤ −c need evaluating. Returns (chunk, multiplicity).
    std::vector<std::pair<std::size_t, int>> representative_chunks() const;

    // Unnormalized partial sums Σ_tuples Σ_j[cos + cos] · (time part), one per site configuration.
    std::vector<double> evaluate_chunk(std::size_t chunk, const std::vector<SiteQuad>& sites) const;

    // Edge momenta of every constrained tuple in chunk order (small systems only).
    std::vector<std::vector<int>> enumerate_tuples() const;

    double prefactor() const;  // (−1)^n / L^{(n+1)d}
    std::string key() const;

private:
    struct Derived {
        int edge;
        std::vector<std::pair<int, int>> terms;  // (edge, ±1)
    };
    struct Ordering {
        std::vector<int> eta;
        std::vector<char> le_branch;  // per edge: 1 if the ≤ 0 indicator is active
    };

    template <int N>
    void accumulate(std::size_t chunk, const std::vector<SiteQuad>& sites, std::vector<double>& out) const;

    const Propagator* prop_;
    int n_;
    Permutation pi_, tau_, pinv_, tauinv_;
    std::vector<int> free_edges_;
    std::vector<Derived> derived_;
    std::vector<Ordering> orderings_;
};

// Checkpoint storage for chunk partial sums.
class ChunkStore {
public:
    virtual ~ChunkStore() = default;
    virtual std::optional<std::vector<double>> load(const std::string& key, std::size_t chunk) = 0;
    virtual void save(const std::string& key, std::size_t chunk, const std::vector<double>& values) = 0;
};

struct EvalOptions {
    int threads = 0;  // 0: resolve_threads()
    std::function<void(const std::string& key, std::size_t done, std::size_t total)> progress;
    ChunkStore* store = nullptr;
    bool validate_low_L = true;  // cross-check each g3 pair against real-space quadrature at L=2 first
};

std::vector<double> g_lambda_derivative_batch(const Propagator& prop, const std::vector<SiteQuad>& sites,
                                              const Permutation& pi, const Permutation& tau,
                                              const EvalOptions& opts = {});

double g_lambda_derivative(const Propagator& prop, const SiteQuad& sites, int n, const Permutation& pi,
                           const Permutation& tau);

/// Direct real-space evaluation: products of covariances, explicit site sums, and Gauss–Legendre
/// quadrature over each time-ordered simplex. Only for tiny lattices.
double g_lambda_derivative_quadrature(const Propagator& prop, const SiteQuad& sites, const Permutation& pi,
                                      const Permutation& tau);

// Throws std::runtime_error if the momentum formula and the quadrature disagree for any pair at L=2.
void validate_terms_low_L(const ModelParams& params, const std::vector<PermPair>& terms);

struct PerturbationCoefficients {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0;
    SiteQuad sites;
    ModelParams params;
};

// Σ_terms weight · g_n(π,τ), per site configuration.
std::vector<double> term_sum(const Propagator& prop, const std::vector<SiteQuad>& sites,
                             const std::vector<PermPair>& terms, const EvalOptions& opts = {});

double coeff_a0(const Propagator& prop, const SiteQuad& sites);
double coeff_a1(const Propagator& prop, const SiteQuad& sites);
double coeff_a2(const Propagator& prop, const SiteQuad& sites);

// max_order 0..2; higher coefficients are left at zero.
std::vector<PerturbationCoefficients> coefficients(const Propagator& prop, const std::vector<SiteQuad>& sites,
                                                   int max_order = 2, const EvalOptions& opts = {},
                                                   const std::vector<PermPair>& a2_list = a2_terms());

double series_eval(const PerturbationCoefficients& c, double U);

}  // namespace hubbard_pert
