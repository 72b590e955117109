#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace hubbard_pert {

enum class Spin { up = 0, down = 1 };

struct ModelParams {
    int d = 2;
    int L = 10;
    double t = 0.0;
    double tprime = 0.0;
    double mu = 0.0;
    double beta = 1.0;

    // throws std::invalid_argument
    void validate() const;
};

struct Site {
    std::vector<int> coords;
};

struct Momentum {
    std::vector<int> index;
    std::vector<double> value(int L) const;
};

/// Row-major indexing of Γ = Z^d/(LZ)^d. Momenta share the same index space.
class Lattice {
public:
    Lattice(int d, int L);

    int d() const { return d_; }
    int L() const { return L_; }
    int volume() const { return volume_; }

    int index(const std::vector<int>& coords) const;
    std::vector<int> coords(int idx) const;

    int add(int a, int b) const { return add_[static_cast<std::size_t>(a) * volume_ + b]; }
    int sub(int a, int b) const { return sub_[static_cast<std::size_t>(a) * volume_ + b]; }
    int neg(int a) const { return sub(0, a); }
    // ⟨k, x⟩ · L/(2π) reduced mod L
    int dot(int k, int x) const { return dot_[static_cast<std::size_t>(k) * volume_ + x]; }

private:
    int d_, L_, volume_;
    std::vector<int> add_, sub_, dot_;
};

Site make_site(const ModelParams& p, std::vector<int> coords);

double dispersion(const ModelParams& p, const Momentum& k);

std::vector<Momentum> momentum_grid(const ModelParams& p);

// Dispersion at every momentum, in momentum_grid order.
std::vector<double> dispersion_table(const ModelParams& p);

/// F(xσ, yτ) indexed by 2·site + spin.
Eigen::MatrixXd hopping_matrix(const ModelParams& p);

}  // namespace hubbard_pert
