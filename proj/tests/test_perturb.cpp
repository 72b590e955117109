#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "hubbard_pert/perturb.hpp"

#include <cmath>
#include <algorithm>
#include <map>
#include <optional>
#include <set>

using namespace hubbard_pert;

namespace {

std::vector<Permutation> all_perms(int n) {
    std::vector<Permutation> out;
    Permutation p = identity_permutation(n);
    do out.push_back(p);
    while (std::next_permutation(p.begin(), p.end()));
    return out;
}

SiteQuad quad(const ModelParams& p, std::vector<int> a, std::vector<int> b, std::vector<int> c, std::vector<int> d) {
    return {make_site(p, a), make_site(p, b), make_site(p, c), make_site(p, d)};
}

}  // namespace

TEST_CASE("permutation helpers") {
    CHECK(identity_permutation(3) == Permutation{0, 1, 2});
    CHECK(inverse(Permutation{1, 2, 0}) == Permutation{2, 0, 1});
    CHECK(is_permutation({2, 0, 1}));
    CHECK_FALSE(is_permutation({0, 0, 1}));
    CHECK_FALSE(is_permutation({0, 3, 1}));
    CHECK(to_string({1, 2, 0}) == "231");
}

TEST_CASE("bracketed term lists") {
    auto a1 = a1_terms();
    REQUIRE(a1.size() == 3);
    CHECK(a1[0].pi == Permutation{1, 0});
    CHECK(a1[0].tau == Permutation{1, 0});
    CHECK(a1[0].weight == 1.0);
    CHECK(a1[1].weight == -1.0);
    CHECK(a1[2].weight == -1.0);

    auto a2 = a2_terms();
    REQUIRE(a2.size() == 7);
    double wsum = 0.0;
    for (const auto& t : a2) {
        CHECK(t.pi.size() == 3);
        CHECK(is_permutation(t.pi));
        CHECK(is_permutation(t.tau));
        wsum += t.weight;
    }
    CHECK(wsum == 1.0);  // 1+1+1+3−3−3+1
    CHECK(to_string(a2[3].pi) == "132");
    CHECK(to_string(a2[3].tau) == "213");
    CHECK(a2[3].weight == 3.0);
    CHECK(to_string(a2[6].tau) == "312");
}

TEST_CASE("constraint elimination enumerates every conserving tuple") {
    for (auto p : {ModelParams{1, 2, 1.0, 0.0, 0.0, 1.0}, ModelParams{1, 3, 1.0, 0.0, 0.0, 1.0}}) {
        Propagator prop(p);
        const Lattice& lat = prop.lattice();
        const int V = lat.volume();
        for (int n : {1, 2, 3}) {
            const std::uint64_t expect = static_cast<std::uint64_t>(std::llround(std::pow(V, n + 1)));
            for (const auto& pi : all_perms(n))
                for (const auto& tau : all_perms(n)) {
                    MomentumSum ms(prop, pi, tau);
                    auto tuples = ms.enumerate_tuples();
                    auto pinv = inverse(pi), tinv = inverse(tau);
                    // brute force over all 2n edge momenta
                    std::uint64_t brute = 0;
                    std::vector<int> q(2 * n, 0);
                    for (;;) {
                        bool ok = true;
                        for (int l = 0; l < n && ok; ++l)
                            ok = lat.add(q[l], q[n + l]) == lat.add(q[pinv[l]], q[n + tinv[l]]);
                        brute += ok;
                        int i = 2 * n - 1;
                        while (i >= 0 && ++q[i] == V) q[i--] = 0;
                        if (i < 0) break;
                    }
                    std::set<std::vector<int>> distinct(tuples.begin(), tuples.end());
                    for (const auto& t : tuples)
                        for (int l = 0; l < n; ++l)
                            CHECK(lat.add(t[l], t[n + l]) == lat.add(t[pinv[l]], t[n + tinv[l]]));
                    // one free momentum per independent cycle of the constraint graph
                    CHECK(distinct.size() == tuples.size());
                    CHECK(tuples.size() == brute);
                    CHECK(ms.tuple_count() == brute);
                    if (ms.free_count() == n + 1) CHECK(brute == expect);
                }
        }
    }
}

TEST_CASE("inversion representatives cover every chunk") {
    ModelParams p{2, 4, 0.6, 0.2, 0.1, 1.0};
    Propagator prop(p);
    MomentumSum ms(prop, {1, 2, 0}, {2, 0, 1});
    std::vector<SiteQuad> sites{quad(p, {0, 0}, {1, 2}, {3, 1}, {2, 2})};
    double all = 0.0, reps = 0.0;
    for (std::size_t c = 0; c < ms.chunk_count(); ++c) all += ms.evaluate_chunk(c, sites)[0];
    int weight = 0;
    for (auto [c, m] : ms.representative_chunks()) {
        reps += m * ms.evaluate_chunk(c, sites)[0];
        weight += m;
    }
    CHECK(weight == static_cast<int>(ms.chunk_count()));
    CHECK(reps == doctest::Approx(all).epsilon(1e-12));
}

TEST_CASE("momentum formula against real-space quadrature") {
    for (auto p : {ModelParams{1, 2, 1.0, 0.0, 0.2, 1.0}, ModelParams{2, 2, 1.0, 0.3, 0.2, 1.0},
                   ModelParams{1, 3, 0.7, 0.0, -0.3, 1.5}}) {
        Propagator prop(p);
        const int V = prop.volume();
        for (int cfg = 0; cfg < 3; ++cfg) {
            auto c = [&](int i) { return Site{prop.lattice().coords((i * 7 + cfg * 3) % V)}; };
            SiteQuad sq{c(0), c(1), c(2), c(cfg)};
            std::vector<PermPair> pairs;
            for (int n : {1, 2})
                for (const auto& pi : all_perms(n))
                    for (const auto& tau : all_perms(n)) pairs.push_back({pi, tau});
            // every third-order pair on the smallest lattice, the bracketed ones elsewhere
            if (V == 2 && cfg == 0) {
                for (const auto& pi : all_perms(3))
                    for (const auto& tau : all_perms(3)) pairs.push_back({pi, tau});
            } else {
                for (const auto& t : a2_terms()) pairs.push_back(t);
            }
            for (const auto& [pi, tau, w] : pairs) {
                double fast = g_lambda_derivative(prop, sq, static_cast<int>(pi.size()), pi, tau);
                double slow = g_lambda_derivative_quadrature(prop, sq, pi, tau);
                CHECK(std::abs(fast - slow) <= 1e-10 + 1e-8 * std::abs(slow));
            }
        }
    }
}

TEST_CASE("a0 trivial and table values") {
    ModelParams z{2, 4, 0.0, 0.0, 0.0, 1.0};
    Propagator pz(z);
    auto same = quad(z, {1, 1}, {1, 1}, {1, 1}, {1, 1});
    CHECK(coeff_a0(pz, same) == doctest::Approx(0.5).epsilon(1e-14));

    ModelParams p{2, 10, 0.01, 0.01, 0.01, 1.0};
    Propagator prop(p);
    for (int l = 0; l < 3; ++l) {
        auto eq = quad(p, {l, l}, {l, l}, {l, l}, {l, l});
        CHECK(coeff_a0(prop, eq) == doctest::Approx(5.050e-1).epsilon(1e-3));
    }
    auto t3 = quad(p, {0, 0}, {2, 2}, {0, 0}, {2, 2});
    CHECK(coeff_a0(prop, t3) == doctest::Approx(5.050e-1).epsilon(1e-3));
    CHECK(coeff_a1(prop, t3) == doctest::Approx(-2.524e-1).epsilon(1e-3));
    CHECK(coeff_a1(prop, quad(p, {0, 0}, {0, 0}, {0, 0}, {0, 0})) == doctest::Approx(-3.774e-1).epsilon(1e-3));
}

TEST_CASE("translation and swap invariance") {
    ModelParams p{2, 3, 0.8, 0.3, 0.1, 1.2};
    Propagator prop(p);
    auto base = quad(p, {0, 0}, {1, 2}, {2, 0}, {1, 1});
    auto shifted = quad(p, {1, 1}, {2, 3}, {3, 1}, {2, 2});
    EvalOptions opts;
    opts.validate_low_L = false;
    auto c0 = coefficients(prop, {base, shifted, swapped(base)}, 2, opts);
    for (int i : {1, 2}) {
        CHECK(c0[i].a0 == doctest::Approx(c0[0].a0).epsilon(1e-12));
        CHECK(c0[i].a1 == doctest::Approx(c0[0].a1).epsilon(1e-11));
        CHECK(c0[i].a2 == doctest::Approx(c0[0].a2).epsilon(1e-10));
    }
}

TEST_CASE("batched and single-configuration evaluation agree") {
    ModelParams p{1, 4, 0.9, 0.0, 0.3, 1.0};
    Propagator prop(p);
    std::vector<SiteQuad> sites{quad(p, {0}, {1}, {2}, {3}), quad(p, {0}, {0}, {1}, {1})};
    EvalOptions opts;
    opts.threads = 2;
    auto batch = coefficients(prop, sites, 2, opts);
    for (std::size_t s = 0; s < sites.size(); ++s) {
        CHECK(batch[s].a0 == doctest::Approx(coeff_a0(prop, sites[s])).epsilon(1e-13));
        CHECK(batch[s].a1 == doctest::Approx(coeff_a1(prop, sites[s])).epsilon(1e-13));
        CHECK(batch[s].a2 == doctest::Approx(coeff_a2(prop, sites[s])).epsilon(1e-13));
    }
}

TEST_CASE("L-stability of a0 and a1") {
    ModelParams p{2, 6, 0.01, 0.01, 0.01, 1.0};
    std::vector<double> a0, a1;
    for (int L : {6, 8, 10}) {
        p.L = L;
        Propagator prop(p);
        auto c = coefficients(prop, {quad(p, {0, 0}, {1, 1}, {0, 0}, {1, 1})}, 1);
        a0.push_back(c[0].a0);
        a1.push_back(c[0].a1);
    }
    for (int i = 0; i < 2; ++i) {
        CHECK(std::abs(a0[i] - a0[i + 1]) < 1e-3 * std::abs(a0[i]));
        CHECK(std::abs(a1[i] - a1[i + 1]) < 1e-3 * std::abs(a1[i]));
    }
}

TEST_CASE("checkpoint store round trip") {
    struct MemoryStore : ChunkStore {
        std::map<std::pair<std::string, std::size_t>, std::vector<double>> data;
        int loads = 0, hits = 0;
        std::optional<std::vector<double>> load(const std::string& key, std::size_t chunk) override {
            ++loads;
            auto it = data.find({key, chunk});
            if (it == data.end()) return std::nullopt;
            ++hits;
            return it->second;
        }
        void save(const std::string& key, std::size_t chunk, const std::vector<double>& values) override {
            data[{key, chunk}] = values;
        }
    } store;
    ModelParams p{2, 3, 0.5, 0.1, 0.2, 1.0};
    Propagator prop(p);
    std::vector<SiteQuad> sites{quad(p, {0, 0}, {1, 1}, {0, 0}, {1, 1})};
    EvalOptions opts;
    opts.store = &store;
    std::size_t last_total = 0;
    opts.progress = [&](const std::string&, std::size_t done, std::size_t total) {
        CHECK(done <= total);
        last_total = total;
    };
    auto first = g_lambda_derivative_batch(prop, sites, {1, 2, 0}, {1, 2, 0}, opts);
    CHECK(store.hits == 0);
    CHECK(last_total > 0);
    auto second = g_lambda_derivative_batch(prop, sites, {1, 2, 0}, {1, 2, 0}, opts);
    CHECK(store.hits == static_cast<int>(last_total));
    CHECK(first[0] == second[0]);
}

TEST_CASE("low-L validation rejects a corrupted engine input") {
    ModelParams p{2, 10, 0.01, 0.01, 0.01, 1.0};
    CHECK_NOTHROW(validate_terms_low_L(p, a2_terms()));
    CHECK_THROWS(g_lambda_derivative(Propagator(p), SiteQuad{}, 4, {0, 1, 2, 3}, {0, 1, 2, 3}));
    CHECK_THROWS(MomentumSum(Propagator(p), {0, 1}, {0, 1, 2}));
}

TEST_CASE("series evaluation") {
    PerturbationCoefficients c;
    c.a0 = 0.5;
    c.a1 = -0.25;
    c.a2 = 0.1;
    CHECK(series_eval(c, 0.0) == 0.5);
    CHECK(series_eval(c, 2.0) == doctest::Approx(0.5 - 0.5 + 0.4));
}
