#include <gtest/gtest.h>

#include <map>
#include <numeric>

#include "twistlab/legendre_equi.hpp"

using namespace twistlab;

namespace {

// Euler's criterion, kept apart from the library's Jacobi routine.
int euler_symbol(std::int64_t a, std::uint64_t p) {
    std::uint64_t base = static_cast<std::uint64_t>(((a % static_cast<std::int64_t>(p)) + static_cast<std::int64_t>(p)) %
                                                    static_cast<std::int64_t>(p));
    if (base == 0) return 0;
    std::uint64_t e = (p - 1) / 2, acc = 1;
    while (e) {
        if (e & 1) acc = static_cast<std::uint64_t>(static_cast<unsigned __int128>(acc) * base % p);
        base = static_cast<std::uint64_t>(static_cast<unsigned __int128>(base) * base % p);
        e >>= 1;
    }
    return acc == 1 ? 1 : -1;
}

std::uint64_t naive_count(const PrimeGrid& X, const SymbolAssignment& a) {
    std::uint64_t total = 1;
    for (auto& c : X) total *= c.size();
    std::uint64_t hits = 0;
    std::vector<std::size_t> idx(X.size(), 0);
    for (std::uint64_t n = 0; n < total; ++n) {
        std::uint64_t q = n;
        for (std::size_t i = X.size(); i-- > 0;) {
            idx[i] = q % X[i].size();
            q /= X[i].size();
        }
        bool ok = true;
        for (std::size_t k = 0; k < a.M.size() && ok; ++k) {
            auto [i, j] = a.M[k];
            ok = euler_symbol(static_cast<std::int64_t>(X[i][idx[i]]), X[j][idx[j]]) == a.values[k];
        }
        for (std::size_t k = 0; k < a.MP.size() && ok; ++k) {
            auto [i, d] = a.MP[k];
            ok = euler_symbol(d, X[i][idx[i]]) == a.values[a.M.size() + k];
        }
        hits += ok;
    }
    return hits;
}

std::vector<std::uint64_t> primes_between(std::uint64_t lo, std::uint64_t hi) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t n = lo; n <= hi; ++n)
        if (n > 2 && is_prime(n)) out.push_back(n);
    return out;
}

}  // namespace

TEST(FilterXofA, SmallExample) {
    PrimeGrid X{{5}, {13, 17}};
    SymbolAssignment a{2, {-1}, {{0, 1}}, {}, {1}};
    EXPECT_TRUE(filter_X_of_a(X, a).empty());
    a.values = {-1};
    auto pts = filter_X_of_a(X, a);
    ASSERT_EQ(pts.size(), 2u);
    EXPECT_EQ(pts[0], (std::vector<std::uint64_t>{5, 13}));
    EXPECT_EQ(pts[1], (std::vector<std::uint64_t>{5, 17}));
}

TEST(FilterXofA, MatchesEulerCriterionOnRandomGrids) {
    Rng rng(11);
    auto pool = primes_between(5, 400);
    for (int trial = 0; trial < 60; ++trial) {
        std::shuffle(pool.begin(), pool.end(), rng);
        const std::size_t r = 2 + rng() % 3;
        PrimeGrid X(r);
        std::size_t at = 0;
        for (auto& c : X)
            for (std::size_t k = 0, sz = 1 + rng() % 5; k < sz; ++k) c.push_back(pool[at++]);
        SymbolAssignment a;
        a.r = r;
        a.P = {-1, 2, 3};
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = i + 1; j < r; ++j)
                if (rng() % 2) a.M.emplace_back(i, j);
        for (std::size_t i = 0; i < r; ++i)
            for (auto d : a.P)
                if (rng() % 3 == 0) a.MP.emplace_back(i, d);
        for (std::size_t k = 0; k < a.conditions(); ++k) a.values.push_back(rng() % 2 ? 1 : -1);
        ASSERT_EQ(count_X_of_a(X, a), naive_count(X, a)) << "trial " << trial;
        ASSERT_EQ(filter_X_of_a(X, a).size(), naive_count(X, a));
    }
}

TEST(FilterXofA, FibersPartitionTheGrid) {
    PrimeGrid X{primes_between(3, 60), primes_between(61, 120), primes_between(121, 170)};
    SymbolAssignment a{3, {-1, 2}, {{0, 1}, {1, 2}, {0, 2}}, {{0, -1}, {2, 2}}, {}};
    auto f = fiber_counts(X, a);
    ASSERT_EQ(f.size(), 32u);
    std::uint64_t total = std::accumulate(f.begin(), f.end(), std::uint64_t{0});
    EXPECT_EQ(total, X[0].size() * X[1].size() * X[2].size());
}

TEST(FilterXofA, Validation) {
    SymbolAssignment a{2, {-1}, {{0, 1}}, {}, {1}};
    EXPECT_THROW(filter_X_of_a(PrimeGrid{{5}, {5}}, a), precondition_error);
    EXPECT_THROW(filter_X_of_a(PrimeGrid{{9}, {13}}, a), precondition_error);
    EXPECT_THROW(filter_X_of_a(PrimeGrid{{2}, {13}}, a), precondition_error);
    EXPECT_THROW(filter_X_of_a(PrimeGrid{{5}}, a), dimension_error);
    SymbolAssignment b{2, {-1, 3}, {}, {{0, 3}}, {1}};
    EXPECT_THROW(filter_X_of_a(PrimeGrid{{3}, {13}}, b), precondition_error);
    SymbolAssignment c{2, {-1}, {{1, 0}}, {}, {1}};
    EXPECT_THROW(filter_X_of_a(PrimeGrid{{5}, {13}}, c), precondition_error);
    SymbolAssignment big;
    big.r = 7;
    big.P = {-1};
    for (std::size_t i = 0; i < 7; ++i)
        for (std::size_t j = i + 1; j < 7; ++j) big.M.emplace_back(i, j);
    big.values.assign(21, 1);
    PrimeGrid X7{{3}, {5}, {7}, {11}, {13}, {17}, {19}};
    EXPECT_THROW(filter_X_of_a(X7, big), capacity_error);
}

TEST(PermFilter, CountsMatchPermutedGrids) {
    PrimeGrid X{{5, 7}, {13, 17, 19}, {29, 31}, {37, 41}};
    SymbolAssignment a{4, {-1}, {{0, 1}, {1, 2}, {0, 3}}, {{2, -1}}, {1, -1, 1, -1}};
    auto counts = perm_filter_counts(X, a, 3);
    EXPECT_EQ(counts.size(), 6u);
    for (auto& [sigma, n] : counts) {
        EXPECT_EQ(sigma[3], 3u);
        PrimeGrid Y(4);
        for (std::size_t i = 0; i < 4; ++i) Y[i] = X[sigma[i]];
        EXPECT_EQ(n, naive_count(Y, a));
    }
    EXPECT_THROW(perm_filter_counts(X, a, 5), precondition_error);
}

TEST(PermMoment, ConditionCountFormula) {
    // brute count of the relaxed conditions for the identity permutation
    for (std::size_t P = 1; P <= 3; ++P)
        for (std::size_t k1 = 0; k1 <= 5; ++k1)
            for (std::size_t k0 = 0; k0 <= k1; ++k0) {
                std::uint64_t n = k1 * P;
                for (std::size_t i = 0; i < k1; ++i)
                    for (std::size_t j = i + 1; j < k1; ++j)
                        if (i < k0 || j < k0) ++n;
                EXPECT_EQ(perm_moment_mC(k0, k1, P), n);
            }
}

TEST(PermMoment, WitnessTotalsEqualFactorialTimesFreeBits) {
    Rng rng(3);
    for (std::size_t r = 2; r <= 4; ++r)
        for (std::size_t k2 = 0; k2 <= r; ++k2)
            for (std::size_t k1 = 0; k1 <= k2; ++k1)
                for (std::size_t k0 = 0; k0 <= k1; ++k0) {
                    auto x = random_point_symbols(r, 2, rng);
                    auto W = perm_witness_counts(k0, k1, k2, x);
                    std::uint64_t sum = 0;
                    for (auto w : W) sum += w;
                    std::uint64_t fact = 1;
                    for (std::size_t i = 2; i <= k2; ++i) fact *= i;
                    const std::size_t bits = r * (r - 1) / 2 + 2 * r;
                    EXPECT_EQ(sum, fact << (bits - perm_moment_mC(k0, k1, 2)));
                }
}

TEST(PermMoment, WitnessCountsMatchDirectCheck) {
    Rng rng(5);
    const std::size_t r = 4, P = 1;
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> pair_bit;
    std::size_t bit = 0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = i + 1; j < r; ++j) pair_bit[{i, j}] = bit++;
    const std::size_t single0 = bit;
    for (int trial = 0; trial < 8; ++trial) {
        auto x = random_point_symbols(r, P, rng);
        const std::size_t k0 = trial % 2, k1 = 1 + trial % 3, k2 = 3 + trial % 2;
        auto W = perm_witness_counts(k0, k1, k2, x);
        for (std::uint32_t a = 0; a < (1u << (single0 + r)); ++a) {
            std::uint32_t w = 0;
            std::vector<std::size_t> sigma(r);
            std::iota(sigma.begin(), sigma.end(), 0);
            do {
                auto pre = [&](std::size_t j) {
                    return static_cast<std::size_t>(std::find(sigma.begin(), sigma.end(), j) - sigma.begin());
                };
                bool ok = true;
                for (std::size_t j = 0; j < k1 && ok; ++j) ok = ((a >> (single0 + pre(j))) & 1u) == x.legP[j][0];
                for (std::size_t i = 0; i < k1 && ok; ++i)
                    for (std::size_t j = 0; j < k1 && ok; ++j) {
                        if (i == j || pre(i) > pre(j) || !(i < k0 || j < k0)) continue;
                        const std::size_t lo = std::min(pre(i), pre(j)), hi = std::max(pre(i), pre(j));
                        ok = ((a >> pair_bit[{lo, hi}]) & 1u) == x.leg[i][j];
                    }
                w += ok;
            } while (std::next_permutation(sigma.begin(), sigma.begin() + static_cast<std::ptrdiff_t>(k2)));
            ASSERT_EQ(W[a], w) << "a=" << a;
        }
    }
}

TEST(PermMoment, HypothesisHoldsNoViolations) {
    // 2^{1+0+1} * 1 = 4 < 5
    auto rep = perm_moment_check(5, 0, 1, 5, 1, 20, 9);
    EXPECT_TRUE(rep.hypothesis);
    EXPECT_EQ(rep.m_C, 1u);
    EXPECT_EQ(rep.assignment_bits, 15u);
    EXPECT_EQ(rep.violations, 0u);
    EXPECT_LE(rep.max_ratio, 1.0);
}

TEST(PermMoment, TrivialCaseIsExact) {
    auto rep = perm_moment_check(5, 0, 0, 4, 1, 5, 1);
    EXPECT_TRUE(rep.hypothesis);
    EXPECT_EQ(rep.m_C, 0u);
    EXPECT_EQ(rep.violations, 0u);
    Rng rng(1);
    EXPECT_EQ(perm_moment_lhs(0, 0, 4, random_point_symbols(5, 1, rng)), 0.0);
}

TEST(PermMoment, HypothesisFlagAndGuards) {
    EXPECT_FALSE(perm_moment_check(5, 0, 1, 4, 1, 1, 1).hypothesis);
    EXPECT_FALSE(perm_moment_check(5, 1, 1, 5, 1, 1, 1).hypothesis);
    EXPECT_THROW(perm_moment_check(5, 2, 1, 4, 1, 1, 1), precondition_error);
    EXPECT_THROW(perm_moment_check(5, 0, 1, 6, 1, 1, 1), precondition_error);
    EXPECT_THROW(perm_moment_check(5, 0, 1, 4, 0, 1, 1), precondition_error);
    EXPECT_THROW(perm_moment_check(7, 0, 1, 7, 1, 1, 1), capacity_error);
    EXPECT_THROW(perm_moment_check(6, 0, 1, 6, 2, 1, 1), capacity_error);
}

TEST(PermMoment, Deterministic) {
    auto a = perm_moment_check(4, 1, 2, 4, 1, 10, 77);
    auto b = perm_moment_check(4, 1, 2, 4, 1, 10, 77);
    EXPECT_EQ(a.violations, b.violations);
    EXPECT_EQ(a.max_ratio, b.max_ratio);
}

TEST(BoxEqui, SinglePairConditionNearOneMillion) {
    PrimeGrid X{primes_in_interval(1e6 + 1, 1e6 + 1e4), primes_in_interval(1e6 + 1e4 + 1, 1e6 + 2e4),
                primes_in_interval(1e6 + 2e4 + 1, 1e6 + 3e4)};
    EXPECT_EQ(X[0].size(), 753u);
    auto rep = box_equi_experiment(X, 1, 0, {-1}, 4);
    EXPECT_TRUE(rep.conserved);
    EXPECT_TRUE(rep.siegel_less_assumed);
    EXPECT_EQ(rep.fibers.size(), 2u);
    EXPECT_EQ(rep.points, X[0].size() * X[1].size() * X[2].size());
    EXPECT_LT(rep.max_relative_deviation, 0.05);
    EXPECT_GE(rep.p_value, 0.0);
    EXPECT_LE(rep.p_value, 1.0);
}

TEST(BoxEqui, MixedConditionsAgreeWithDirectCounts) {
    PrimeGrid X{primes_between(1001, 1400), primes_between(1401, 1800), primes_between(1801, 2200)};
    auto rep = box_equi_experiment(X, 2, 3, {-1, 3, 5}, 12);
    ASSERT_EQ(rep.conditions, 5u);
    for (std::uint32_t s = 0; s < 32; s += 7) {
        SymbolAssignment a = rep.assignment;
        a.values.clear();
        for (std::size_t k = 0; k < 5; ++k) a.values.push_back((s >> k) & 1u ? -1 : 1);
        EXPECT_EQ(rep.fibers[s], naive_count(X, a));
    }
    EXPECT_LT(rep.max_relative_deviation, 0.25);
}

TEST(BoxEqui, FromBox) {
    auto box = make_box(1e12, 3, 100, profile_from_primes({5, 1009, 50021}));
    auto rep = box_equi_experiment(box, 1, 1, {-1}, 2);
    EXPECT_TRUE(rep.conserved);
    EXPECT_EQ(rep.points, [&] {
        std::uint64_t n = 1;
        for (auto& c : box_prime_sets(box)) n *= c.size();
        return n;
    }());
}

TEST(BoxEqui, ThreadCountDoesNotMatter) {
    PrimeGrid X{primes_between(3, 300), primes_between(301, 600), primes_between(601, 900)};
    parallel::set_thread_count(1);
    auto a = box_equi_experiment(X, 3, 2, {-1, 2}, 8);
    parallel::set_thread_count(4);
    auto b = box_equi_experiment(X, 3, 2, {-1, 2}, 8);
    parallel::set_thread_count(0);
    EXPECT_EQ(a.fibers, b.fibers);
    EXPECT_EQ(a.chi_square, b.chi_square);
}

TEST(BoxEqui, Preconditions) {
    PrimeGrid X{{3, 5}, {7, 11}};
    EXPECT_THROW(box_equi_experiment(X, 2, 0, {-1}, 1), precondition_error);
    EXPECT_THROW(box_equi_experiment(X, 0, 3, {-1}, 1), precondition_error);
}
