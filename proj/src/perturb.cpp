#include "hubbard_pert/perturb.hpp"

#include "hubbard_pert/parallel.hpp"

#include <boost/math/quadrature/gauss.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <functional>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace hubbard_pert {

Permutation identity_permutation(int n) {
    Permutation p(n);
    std::iota(p.begin(), p.end(), 0);
    return p;
}

bool is_permutation(const Permutation& p) {
    std::vector<char> seen(p.size(), 0);
    for (int v : p) {
        if (v < 0 || v >= static_cast<int>(p.size()) || seen[v]) return false;
        seen[v] = 1;
    }
    return true;
}

Permutation inverse(const Permutation& p) {
    Permutation q(p.size());
    for (std::size_t i = 0; i < p.size(); ++i) q[p[i]] = static_cast<int>(i);
    return q;
}

std::string to_string(const Permutation& p) {
    std::string s;
    for (int v : p) s += std::to_string(v + 1);
    return s;
}

SiteQuad swapped(const SiteQuad& s) { return SiteQuad{s.y1, s.y2, s.x1, s.x2}; }

std::vector<PermPair> a1_terms() {
    const Permutation id{0, 1}, s{1, 0};
    return {{s, s, 1.0}, {id, s, -1.0}, {s, id, -1.0}};
}

std::vector<PermPair> a2_terms() {
    const Permutation id{0, 1, 2};
    const Permutation c{1, 2, 0};    // 1→2→3→1
    const Permutation c2{2, 0, 1};   // 1→3→2→1
    const Permutation s23{0, 2, 1};
    const Permutation s12{1, 0, 2};
    return {{id, c, 1.0},   {c, id, 1.0},    {c, c, 1.0},   {s23, s12, 3.0},
            {s23, c, -3.0}, {c, s23, -3.0},  {c, c2, 1.0}};
}

// ---------------------------------------------------------------------------

MomentumSum::MomentumSum(const Propagator& prop, Permutation pi, Permutation tau)
    : prop_(&prop), n_(static_cast<int>(pi.size())), pi_(std::move(pi)), tau_(std::move(tau)) {
    if (n_ < 1 || n_ > 3) throw std::invalid_argument("perturbation order must be 1, 2 or 3");
    if (static_cast<int>(tau_.size()) != n_ || !is_permutation(pi_) || !is_permutation(tau_))
        throw std::invalid_argument("pi and tau must be permutations of the same size");
    pinv_ = inverse(pi_);
    tauinv_ = inverse(tau_);

    const int E = 2 * n_;
    auto tail = [&](int e) { return e < n_ ? e : e - n_; };
    auto head = [&](int e) { return e < n_ ? pi_[e] : tau_[e - n_]; };
    auto sign_at = [&](int node, int e) {
        int s = 0;
        if (tail(e) == node) s += 1;
        if (head(e) == node) s -= 1;
        return s;
    };

    // spanning forest by BFS, roots in index order
    std::vector<int> parent_edge(n_, -1), order;
    std::vector<char> seen(n_, 0), tree_edge(E, 0);
    for (int root = 0; root < n_; ++root) {
        if (seen[root]) continue;
        seen[root] = 1;
        std::deque<int> queue{root};
        while (!queue.empty()) {
            int v = queue.front();
            queue.pop_front();
            order.push_back(v);
            for (int e = 0; e < E; ++e) {
                if (tail(e) == head(e)) continue;
                int other = -1;
                if (tail(e) == v) other = head(e);
                else if (head(e) == v) other = tail(e);
                if (other < 0 || seen[other]) continue;
                seen[other] = 1;
                parent_edge[other] = e;
                tree_edge[e] = 1;
                queue.push_back(other);
            }
        }
    }
    for (int e = 0; e < E; ++e)
        if (!tree_edge[e]) free_edges_.push_back(e);

    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        int v = *it;
        int ep = parent_edge[v];
        if (ep < 0) continue;
        int sp = sign_at(v, ep);
        Derived d{ep, {}};
        for (int e = 0; e < E; ++e) {
            if (e == ep) continue;
            int s = sign_at(v, e);
            if (s != 0) d.terms.push_back({e, -sp * s});
        }
        derived_.push_back(std::move(d));
    }

    std::vector<int> eta = identity_permutation(n_);
    do {
        Ordering o{eta, std::vector<char>(E, 0)};
        std::vector<int> pos(n_);
        for (int i = 0; i < n_; ++i) pos[eta[i]] = i;
        for (int j = 0; j < n_; ++j) {
            // later position in η means an earlier (smaller) time
            o.le_branch[j] = (pi_[j] == j || pos[pi_[j]] > pos[j]) ? 1 : 0;
            o.le_branch[n_ + j] = (tau_[j] == j || pos[tau_[j]] > pos[j]) ? 1 : 0;
        }
        orderings_.push_back(std::move(o));
    } while (std::next_permutation(eta.begin(), eta.end()));
}

std::uint64_t MomentumSum::tuple_count() const {
    std::uint64_t c = 1;
    for (int i = 0; i < free_count(); ++i) c *= static_cast<std::uint64_t>(prop_->volume());
    return c;
}

std::size_t MomentumSum::chunk_count() const { return free_edges_.empty() ? 1 : prop_->volume(); }

std::vector<std::pair<std::size_t, int>> MomentumSum::representative_chunks() const {
    std::vector<std::pair<std::size_t, int>> reps;
    if (free_edges_.empty()) return {{0, 1}};
    const Lattice& lat = prop_->lattice();
    for (int c = 0; c < lat.volume(); ++c) {
        int m = lat.neg(c);
        if (m == c) reps.push_back({static_cast<std::size_t>(c), 1});
        else if (c < m) reps.push_back({static_cast<std::size_t>(c), 2});
    }
    return reps;
}

double MomentumSum::prefactor() const {
    double v = std::pow(static_cast<double>(prop_->volume()), n_ + 1);
    return (n_ % 2 == 0 ? 1.0 : -1.0) / v;
}

std::string MomentumSum::key() const { return "n" + std::to_string(n_) + ":" + to_string(pi_) + ":" + to_string(tau_); }

template <int N>
void MomentumSum::accumulate(std::size_t chunk, const std::vector<SiteQuad>& sites, std::vector<double>& out) const {
    constexpr int E = 2 * N;
    const Lattice& lat = prop_->lattice();
    const int V = lat.volume();
    const int L = lat.L();
    const double beta = prop_->beta();
    const double* energy = prop_->energies().data();
    const double* occ_le = prop_->occ_le().data();
    const double* occ_gt = prop_->occ_gt().data();

    const std::size_t S = sites.size();
    std::vector<int> sx1(S), sx2(S), sy1(S), sy2(S);
    for (std::size_t s = 0; s < S; ++s) {
        sx1[s] = lat.index(sites[s].x1.coords);
        sx2[s] = lat.index(sites[s].x2.coords);
        sy1[s] = lat.index(sites[s].y1.coords);
        sy2[s] = lat.index(sites[s].y2.coords);
    }
    std::vector<double> cos_table(L);
    for (int m = 0; m < L; ++m) cos_table[m] = std::cos(2.0 * std::numbers::pi * m / L);

    const int F = free_count();
    int q[E] = {};
    std::vector<int> counter(F, 0);
    if (F > 0) q[free_edges_[0]] = static_cast<int>(chunk);
    for (int i = 1; i < F; ++i) q[free_edges_[i]] = 0;

    const int n_order = static_cast<int>(orderings_.size());
    double le[E], gt[E], E_q[E], rates[N];
    double partial[64];
    const ZeroSumNestedIntegral zero_sum(beta);
    std::vector<double> local(S, 0.0);

    for (;;) {
        for (const auto& d : derived_) {
            int acc = 0;
            for (const auto& [e, s] : d.terms) acc = s > 0 ? lat.add(acc, q[e]) : lat.sub(acc, q[e]);
            q[d.edge] = acc;
        }
        for (int e = 0; e < E; ++e) {
            E_q[e] = energy[q[e]];
            le[e] = occ_le[q[e]];
            gt[e] = -occ_gt[q[e]];
        }
        for (int m = 0; m < N; ++m) rates[m] = E_q[m] + E_q[N + m] - E_q[pinv_[m]] - E_q[N + tauinv_[m]];

        double time_part = 0.0;
        if constexpr (N == 3) {
            double u[6], v[6];
            for (int o = 0; o < 6; ++o) {
                u[o] = rates[orderings_[o].eta[0]];
                v[o] = -rates[orderings_[o].eta[2]];
            }
            zero_sum.order3_batch(u, v, partial, 6);
        }
        for (int o = 0; o < n_order; ++o) {
            const auto& ord = orderings_[o];
            double occ = 1.0;
            for (int e = 0; e < E; ++e) occ *= ord.le_branch[e] ? le[e] : gt[e];
            if constexpr (N == 1) time_part += occ * beta;
            else if constexpr (N == 2) time_part += occ * zero_sum.order2(rates[ord.eta[0]]);
            else time_part += occ * partial[o];
        }

        for (std::size_t s = 0; s < S; ++s) {
            double w = 0.0;
            for (int j = 0; j < N; ++j) {
                const int kj = q[j], pj = q[N + j], kb = q[pinv_[j]], pb = q[N + tauinv_[j]];
                int a = lat.dot(kj, sx1[s]) + lat.dot(pj, sx2[s]) + 2 * L - lat.dot(kb, sy1[s]) - lat.dot(pb, sy2[s]);
                int b = lat.dot(kj, sy1[s]) + lat.dot(pj, sy2[s]) + 2 * L - lat.dot(kb, sx1[s]) - lat.dot(pb, sx2[s]);
                w += cos_table[a % L] + cos_table[b % L];
            }
            local[s] += w * time_part;
        }

        int level = F - 1;
        while (level >= 1) {
            if (++counter[level] < V) {
                q[free_edges_[level]] = counter[level];
                break;
            }
            counter[level] = 0;
            q[free_edges_[level]] = 0;
            --level;
        }
        if (level < 1) break;
    }
    for (std::size_t s = 0; s < S; ++s) out[s] += local[s];
}

std::vector<double> MomentumSum::evaluate_chunk(std::size_t chunk, const std::vector<SiteQuad>& sites) const {
    if (chunk >= chunk_count()) throw std::out_of_range("chunk index out of range");
    std::vector<double> out(sites.size(), 0.0);
    switch (n_) {
        case 1: accumulate<1>(chunk, sites, out); break;
        case 2: accumulate<2>(chunk, sites, out); break;
        case 3: accumulate<3>(chunk, sites, out); break;
        default: throw std::logic_error("unsupported order");
    }
    return out;
}

std::vector<std::vector<int>> MomentumSum::enumerate_tuples() const {
    if (tuple_count() > 10'000'000ULL) throw std::invalid_argument("enumerate_tuples: too many tuples");
    const Lattice& lat = prop_->lattice();
    const int V = lat.volume();
    const int F = free_count();
    std::vector<std::vector<int>> out;
    std::vector<int> q(2 * n_, 0), counter(F, 0);
    for (;;) {
        for (int i = 0; i < F; ++i) q[free_edges_[i]] = counter[i];
        for (const auto& d : derived_) {
            int acc = 0;
            for (const auto& [e, s] : d.terms) acc = s > 0 ? lat.add(acc, q[e]) : lat.sub(acc, q[e]);
            q[d.edge] = acc;
        }
        out.push_back(q);
        int level = F - 1;
        while (level >= 0 && ++counter[level] == V) counter[level--] = 0;
        if (level < 0) break;
    }
    return out;
}

// ---------------------------------------------------------------------------

std::vector<double> g_lambda_derivative_batch(const Propagator& prop, const std::vector<SiteQuad>& sites,
                                              const Permutation& pi, const Permutation& tau, const EvalOptions& opts) {
    MomentumSum ms(prop, pi, tau);
    const auto reps = ms.representative_chunks();
    const std::size_t chunks = reps.size();
    const std::string key = ms.key();
    std::vector<std::vector<double>> parts(chunks);
    std::mutex progress_mutex;
    std::size_t done = 0;
    parallel_for(chunks, resolve_threads(opts.threads), [&](std::size_t i) {
        const auto [c, mult] = reps[i];
        std::optional<std::vector<double>> cached;
        if (opts.store) cached = opts.store->load(key, c);
        if (cached && cached->size() == sites.size()) {
            parts[i] = std::move(*cached);
        } else {
            parts[i] = ms.evaluate_chunk(c, sites);
            if (opts.store) opts.store->save(key, c, parts[i]);
        }
        for (double& v : parts[i]) v *= mult;
        if (opts.progress) {
            std::lock_guard lock(progress_mutex);
            opts.progress(key, ++done, chunks);
        }
    });
    auto total = pairwise_reduce(parts, sites.size());
    const double pref = ms.prefactor();
    for (double& v : total) v *= pref;
    return total;
}

double g_lambda_derivative(const Propagator& prop, const SiteQuad& sites, int n, const Permutation& pi,
                           const Permutation& tau) {
    if (n < 1 || n > 3) throw std::invalid_argument("g_lambda_derivative: n must be 1, 2 or 3");
    if (static_cast<int>(pi.size()) != n || static_cast<int>(tau.size()) != n)
        throw std::invalid_argument("g_lambda_derivative: permutation size differs from n");
    EvalOptions opts;
    opts.threads = 1;
    return g_lambda_derivative_batch(prop, {sites}, pi, tau, opts)[0];
}

double g_lambda_derivative_quadrature(const Propagator& prop, const SiteQuad& sq, const Permutation& pi,
                                      const Permutation& tau) {
    const int n = static_cast<int>(pi.size());
    if (n < 1 || n > 3 || static_cast<int>(tau.size()) != n || !is_permutation(pi) || !is_permutation(tau))
        throw std::invalid_argument("g_lambda_derivative_quadrature: invalid permutations");
    const Lattice& lat = prop.lattice();
    const int V = lat.volume();
    if (std::pow(static_cast<double>(V), n - 1) > 4096) throw std::invalid_argument("lattice too large for quadrature");
    const double beta = prop.beta();
    using GL = boost::math::quadrature::gauss<double, 20>;

    const int x1 = lat.index(sq.x1.coords), x2 = lat.index(sq.x2.coords);
    const int y1 = lat.index(sq.y1.coords), y2 = lat.index(sq.y2.coords);

    // site assignments: vertex j carries (x1,x2,y1,y2) or the swap, the others sit on one site each
    struct Assignment {
        std::vector<int> X1, X2, Y1, Y2;
    };
    std::vector<Assignment> assignments;
    for (int j = 0; j < n; ++j) {
        for (int variant = 0; variant < 2; ++variant) {
            std::vector<int> z(n, 0);
            for (;;) {
                Assignment a{z, z, z, z};
                if (variant == 0) { a.X1[j] = x1; a.X2[j] = x2; a.Y1[j] = y1; a.Y2[j] = y2; }
                else { a.X1[j] = y1; a.X2[j] = y2; a.Y1[j] = x1; a.Y2[j] = x2; }
                assignments.push_back(std::move(a));
                int m = n - 1;
                for (; m >= 0; --m) {
                    if (m == j) continue;
                    if (++z[m] < V) break;
                    z[m] = 0;
                }
                if (m < 0) break;
            }
        }
    }

    // kernels depend on the times only through the 2n differences: tabulate them over r once per time point
    std::vector<double> t(n);
    std::vector<double> A(static_cast<std::size_t>(n) * V), B(static_cast<std::size_t>(n) * V);
    auto integrand = [&] {
        for (int m = 0; m < n; ++m)
            for (int r = 0; r < V; ++r) {
                A[m * V + r] = prop.kernel(r, t[m] - t[pi[m]]);
                B[m * V + r] = prop.kernel(r, t[m] - t[tau[m]]);
            }
        double sum = 0.0;
        for (const auto& a : assignments) {
            double v = 1.0;
            for (int m = 0; m < n; ++m) {
                v *= A[m * V + lat.sub(a.Y1[pi[m]], a.X1[m])];
                v *= B[m * V + lat.sub(a.Y2[tau[m]], a.X2[m])];
            }
            sum += v;
        }
        return sum;
    };

    double total = 0.0;
    std::vector<int> eta = identity_permutation(n);
    do {
        std::function<double(int, double)> level = [&](int i, double upper) -> double {
            if (i == n) return integrand();
            return GL::integrate(
                [&, i](double x) {
                    t[eta[i]] = x;
                    return level(i + 1, x);
                },
                0.0, upper);
        };
        total += level(0, beta);
    } while (std::next_permutation(eta.begin(), eta.end()));
    return (n % 2 == 0 ? 1.0 : -1.0) * total;
}

void validate_terms_low_L(const ModelParams& params, const std::vector<PermPair>& terms) {
    ModelParams small = params;
    small.L = 2;
    Propagator prop(small);
    auto site = [&](std::vector<int> c) { return make_site(small, std::move(c)); };
    std::vector<int> zero(small.d, 0), one(small.d, 1), e_first(small.d, 0), e_last(small.d, 0);
    e_first[0] = 1;
    e_last[small.d - 1] = 1;
    SiteQuad sq{site(zero), site(one), site(e_first), site(small.d > 1 ? e_last : zero)};
    for (const auto& term : terms) {
        int n = static_cast<int>(term.pi.size());
        double fast = g_lambda_derivative(prop, sq, n, term.pi, term.tau);
        double slow = g_lambda_derivative_quadrature(prop, sq, term.pi, term.tau);
        if (std::abs(fast - slow) > 1e-9 + 1e-7 * std::abs(slow)) {
            std::ostringstream msg;
            msg.precision(17);
            msg << "low-L validation failed for (" << to_string(term.pi) << ", " << to_string(term.tau)
                << "): momentum sum " << fast << ", quadrature " << slow;
            throw std::runtime_error(msg.str());
        }
    }
}

// ---------------------------------------------------------------------------

std::vector<double> term_sum(const Propagator& prop, const std::vector<SiteQuad>& sites,
                             const std::vector<PermPair>& terms, const EvalOptions& opts) {
    std::vector<double> total(sites.size(), 0.0);
    for (const auto& term : terms) {
        auto g = g_lambda_derivative_batch(prop, sites, term.pi, term.tau, opts);
        for (std::size_t s = 0; s < sites.size(); ++s) total[s] += term.weight * g[s];
    }
    return total;
}

std::vector<PerturbationCoefficients> coefficients(const Propagator& prop, const std::vector<SiteQuad>& sites,
                                                   int max_order, const EvalOptions& opts,
                                                   const std::vector<PermPair>& a2_list) {
    if (max_order < 0 || max_order > 2) throw std::invalid_argument("max_order must be 0, 1 or 2");
    const double beta = prop.beta();
    std::vector<PerturbationCoefficients> out(sites.size());
    for (std::size_t s = 0; s < sites.size(); ++s) {
        out[s].sites = sites[s];
        out[s].params = prop.params();
    }
    auto g1 = term_sum(prop, sites, {{identity_permutation(1), identity_permutation(1), 1.0}}, opts);
    for (std::size_t s = 0; s < sites.size(); ++s) out[s].a0 = -g1[s] / beta;
    if (max_order >= 1) {
        auto g2 = term_sum(prop, sites, a1_terms(), opts);
        for (std::size_t s = 0; s < sites.size(); ++s) out[s].a1 = -g2[s] / (2.0 * beta);
    }
    if (max_order >= 2) {
        if (opts.validate_low_L) validate_terms_low_L(prop.params(), a2_list);
        auto g3 = term_sum(prop, sites, a2_list, opts);
        for (std::size_t s = 0; s < sites.size(); ++s) out[s].a2 = -g3[s] / (3.0 * beta);
    }
    return out;
}

double coeff_a0(const Propagator& prop, const SiteQuad& sites) {
    return -g_lambda_derivative(prop, sites, 1, {0}, {0}) / prop.beta();
}

double coeff_a1(const Propagator& prop, const SiteQuad& sites) {
    EvalOptions opts;
    return -term_sum(prop, {sites}, a1_terms(), opts)[0] / (2.0 * prop.beta());
}

double coeff_a2(const Propagator& prop, const SiteQuad& sites) {
    EvalOptions opts;
    return -term_sum(prop, {sites}, a2_terms(), opts)[0] / (3.0 * prop.beta());
}

double series_eval(const PerturbationCoefficients& c, double U) { return c.a0 + c.a1 * U + c.a2 * U * U; }

}  // namespace hubbard_pert
