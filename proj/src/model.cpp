#include "hubbard_pert/model.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

namespace hubbard_pert {

void ModelParams::validate() const {
    if (d < 1) throw std::invalid_argument("d must be >= 1");
    if (L < 1) throw std::invalid_argument("L must be >= 1");
    if (!(beta > 0.0) || !std::isfinite(beta)) throw std::invalid_argument("beta must be positive and finite");
    if (!std::isfinite(t) || !std::isfinite(tprime) || !std::isfinite(mu))
        throw std::invalid_argument("t, tprime, mu must be finite");
    double vol = std::pow(static_cast<double>(L), d);
    if (vol > 1e7) throw std::invalid_argument("lattice volume too large");
}

std::vector<double> Momentum::value(int L) const {
    std::vector<double> v(index.size());
    for (std::size_t i = 0; i < index.size(); ++i) v[i] = 2.0 * std::numbers::pi * index[i] / L;
    return v;
}

Lattice::Lattice(int d, int L) : d_(d), L_(L), volume_(1) {
    if (d < 1 || L < 1) throw std::invalid_argument("lattice needs d >= 1 and L >= 1");
    for (int i = 0; i < d; ++i) {
        volume_ *= L;
        if (volume_ > 4096) throw std::invalid_argument("lattice volume above 4096 is not supported");
    }
    std::size_t n = static_cast<std::size_t>(volume_) * volume_;
    add_.resize(n);
    sub_.resize(n);
    dot_.resize(n);
    std::vector<std::vector<int>> c(volume_);
    for (int a = 0; a < volume_; ++a) c[a] = coords(a);
    std::vector<int> tmp(d);
    for (int a = 0; a < volume_; ++a) {
        for (int b = 0; b < volume_; ++b) {
            for (int i = 0; i < d; ++i) tmp[i] = (c[a][i] + c[b][i]) % L;
            add_[static_cast<std::size_t>(a) * volume_ + b] = index(tmp);
            for (int i = 0; i < d; ++i) tmp[i] = ((c[a][i] - c[b][i]) % L + L) % L;
            sub_[static_cast<std::size_t>(a) * volume_ + b] = index(tmp);
            long s = 0;
            for (int i = 0; i < d; ++i) s += static_cast<long>(c[a][i]) * c[b][i];
            dot_[static_cast<std::size_t>(a) * volume_ + b] = static_cast<int>(s % L);
        }
    }
}

int Lattice::index(const std::vector<int>& coords) const {
    if (static_cast<int>(coords.size()) != d_) throw std::invalid_argument("coordinate vector has wrong dimension");
    int idx = 0;
    for (int c : coords) {
        if (c < 0 || c >= L_) throw std::invalid_argument("coordinate out of range [0, L)");
        idx = idx * L_ + c;
    }
    return idx;
}

std::vector<int> Lattice::coords(int idx) const {
    std::vector<int> c(d_);
    for (int i = d_ - 1; i >= 0; --i) {
        c[i] = idx % L_;
        idx /= L_;
    }
    return c;
}

Site make_site(const ModelParams& p, std::vector<int> coords) {
    if (static_cast<int>(coords.size()) != p.d) throw std::invalid_argument("site has wrong dimension");
    for (int& c : coords) c = ((c % p.L) + p.L) % p.L;
    return Site{std::move(coords)};
}

double dispersion(const ModelParams& p, const Momentum& k) {
    if (static_cast<int>(k.index.size()) != p.d) throw std::invalid_argument("momentum has wrong dimension");
    auto v = k.value(p.L);
    double e = 0.0;
    for (double kj : v) e += -2.0 * p.t * std::cos(kj);
    if (p.d >= 2) {
        for (int j = 0; j < p.d; ++j)
            for (int l = j + 1; l < p.d; ++l) e += -4.0 * p.tprime * std::cos(v[j]) * std::cos(v[l]);
    }
    return e - p.mu;
}

std::vector<Momentum> momentum_grid(const ModelParams& p) {
    Lattice lat(p.d, p.L);
    std::vector<Momentum> out;
    out.reserve(lat.volume());
    for (int i = 0; i < lat.volume(); ++i) out.push_back(Momentum{lat.coords(i)});
    return out;
}

std::vector<double> dispersion_table(const ModelParams& p) {
    auto grid = momentum_grid(p);
    std::vector<double> e;
    e.reserve(grid.size());
    for (const auto& k : grid) e.push_back(dispersion(p, k));
    return e;
}

Eigen::MatrixXd hopping_matrix(const ModelParams& p) {
    p.validate();
    Lattice lat(p.d, p.L);
    const int V = lat.volume();
    Eigen::MatrixXd F = Eigen::MatrixXd::Zero(2 * V, 2 * V);

    auto shifted = [&](int x, const std::vector<int>& step) {
        auto c = lat.coords(x);
        for (int i = 0; i < p.d; ++i) c[i] = ((c[i] + step[i]) % p.L + p.L) % p.L;
        return lat.index(c);
    };
    auto hop = [&](int x, int y, double amp) {
        for (int s = 0; s < 2; ++s) F(2 * x + s, 2 * y + s) += amp;
    };

    for (int x = 0; x < V; ++x) {
        hop(x, x, -p.mu);
        for (int j = 0; j < p.d; ++j) {
            std::vector<int> e(p.d, 0);
            e[j] = 1;
            hop(x, shifted(x, e), -p.t);
            e[j] = -1;
            hop(x, shifted(x, e), -p.t);
        }
        if (p.d < 2) continue;
        for (int j = 0; j < p.d; ++j) {
            for (int l = j + 1; l < p.d; ++l) {
                for (int sj : {1, -1}) {
                    for (int sl : {1, -1}) {
                        std::vector<int> e(p.d, 0);
                        e[j] = sj;
                        e[l] = sl;
                        hop(x, shifted(x, e), -p.tprime);
                    }
                }
            }
        }
    }
    return F;
}

}  // namespace hubbard_pert
