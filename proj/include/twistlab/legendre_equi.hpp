#pragma once

#include <boost/math/distributions/chi_squared.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <numeric>
#include <set>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "arithmetic.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "spacing.hpp"

namespace twistlab {

// Components X_1, ..., X_r of odd primes.
using PrimeGrid = std::vector<std::vector<std::uint64_t>>;

// Prescribed Legendre symbols. Indices are 0-based; pairs are stored with i < j.
// values[k] = +1 or -1, conditions ordered as M then M_P.
struct SymbolAssignment {
    std::size_t r = 0;
    std::vector<std::int64_t> P;                           // -1 and small primes
    std::vector<std::pair<std::size_t, std::size_t>> M;    // {i, j}, i < j: (x_i / x_j)
    std::vector<std::pair<std::size_t, std::int64_t>> MP;  // (i, d): (d / x_i)
    std::vector<int> values;

    std::size_t conditions() const { return M.size() + MP.size(); }
    // bit k set when condition k asks for -1
    std::uint32_t target_bits() const {
        std::uint32_t b = 0;
        for (std::size_t k = 0; k < values.size(); ++k)
            if (values[k] < 0) b |= std::uint32_t{1} << k;
        return b;
    }
};

inline constexpr std::size_t symbol_condition_limit = 20;

inline void validate_assignment(const PrimeGrid& X, const SymbolAssignment& a) {
    if (a.r != X.size()) throw dimension_error("assignment r does not match the grid");
    if (a.conditions() > symbol_condition_limit) throw capacity_error("more than 20 symbol conditions");
    if (!a.values.empty() && a.values.size() != a.conditions())
        throw dimension_error("one value per condition");
    for (auto v : a.values)
        if (v != 1 && v != -1) throw precondition_error("symbol values must be +1 or -1");
    for (auto [i, j] : a.M)
        if (!(i < j && j < a.r)) throw precondition_error("pair conditions need i < j < r");
    for (auto [i, d] : a.MP) {
        if (i >= a.r) throw precondition_error("M_P index out of range");
        if (std::find(a.P.begin(), a.P.end(), d) == a.P.end()) throw precondition_error("M_P entry not in P");
    }
    std::set<std::uint64_t> seen;
    for (auto& comp : X) {
        if (comp.empty()) throw precondition_error("grid components must be nonempty");
        for (auto p : comp) {
            if (p % 2 == 0 || !is_prime(p)) throw precondition_error("grid entries must be odd primes");
            if (!seen.insert(p).second) throw precondition_error("grid components must be disjoint");
            for (auto d : a.P)
                if (d > 0 && static_cast<std::uint64_t>(d) == p) throw precondition_error("grid meets P");
        }
    }
}

namespace detail {

inline int sym(std::int64_t a, std::uint64_t p) { return kronecker_symbol(a, static_cast<std::int64_t>(p)); }

// Per-condition symbol tables: pair k gives bits over X_i x X_j, M_P entries over X_i.
struct SignatureTables {
    std::vector<std::vector<std::uint8_t>> pair;  // index a * |X_j| + b
    std::vector<std::vector<std::uint8_t>> single;
};

inline SignatureTables build_tables(const PrimeGrid& X, const SymbolAssignment& asg) {
    SignatureTables t;
    for (auto [i, j] : asg.M) {
        const auto& A = X[i];
        const auto& B = X[j];
        std::vector<std::uint8_t> bits(A.size() * B.size());
        for (std::size_t a = 0; a < A.size(); ++a)
            for (std::size_t b = 0; b < B.size(); ++b) {
                const int s = sym(static_cast<std::int64_t>(A[a]), B[b]);
                const int back = sym(static_cast<std::int64_t>(B[b]), A[a]);
                const int sign = ((A[a] % 4 == 3) && (B[b] % 4 == 3)) ? -1 : 1;
                if (s * back != sign) throw std::logic_error("quadratic reciprocity check failed");
                bits[a * B.size() + b] = s < 0;
            }
        t.pair.push_back(std::move(bits));
    }
    for (auto [i, d] : asg.MP) {
        std::vector<std::uint8_t> bits(X[i].size());
        for (std::size_t a = 0; a < X[i].size(); ++a) bits[a] = sym(d, X[i][a]) < 0;
        t.single.push_back(std::move(bits));
    }
    return t;
}

// Calls fn(index tuple, signature) for every point of X.
template <class Fn>
void for_each_signature(const PrimeGrid& X, const SymbolAssignment& asg, const SignatureTables& t, Fn&& fn,
                        std::uint64_t begin, std::uint64_t end) {
    const std::size_t r = X.size();
    std::vector<std::size_t> idx(r);
    std::uint64_t q = begin;
    for (std::size_t i = r; i-- > 0;) {
        idx[i] = q % X[i].size();
        q /= X[i].size();
    }
    for (std::uint64_t n = begin; n < end; ++n) {
        if (n != begin)
            for (std::size_t i = r; i-- > 0;) {
                if (++idx[i] < X[i].size()) break;
                idx[i] = 0;
            }
        std::uint32_t sig = 0;
        for (std::size_t k = 0; k < asg.M.size(); ++k) {
            auto [i, j] = asg.M[k];
            sig |= std::uint32_t{t.pair[k][idx[i] * X[j].size() + idx[j]]} << k;
        }
        for (std::size_t k = 0; k < asg.MP.size(); ++k)
            sig |= std::uint32_t{t.single[k][idx[asg.MP[k].first]]} << (asg.M.size() + k);
        fn(idx, sig);
    }
}

inline std::uint64_t grid_size(const PrimeGrid& X) {
    std::uint64_t n = 1;
    for (auto& c : X) {
        if (c.empty()) return 0;
        if (n > (std::uint64_t{1} << 62) / c.size()) throw capacity_error("grid too large");
        n *= c.size();
    }
    return n;
}

}  // namespace detail

// Fiber sizes |X(a)| for every a, indexed by the signature bits.
inline std::vector<std::uint64_t> fiber_counts(const PrimeGrid& X, const SymbolAssignment& asg) {
    validate_assignment(X, asg);
    const auto tables = detail::build_tables(X, asg);
    const std::size_t B = asg.conditions();
    using Counts = std::vector<std::uint64_t>;
    return parallel::chunked_reduce<Counts>(
        detail::grid_size(X),
        [&](parallel::Range rg) {
            Counts c(std::size_t{1} << B, 0);
            detail::for_each_signature(X, asg, tables, [&](const auto&, std::uint32_t s) { ++c[s]; }, rg.begin,
                                       rg.end);
            return c;
        },
        [](Counts a, Counts b) {
            for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
            return a;
        },
        Counts(std::size_t{1} << B, 0));
}

// X(a) as a list of prime tuples.
inline std::vector<std::vector<std::uint64_t>> filter_X_of_a(const PrimeGrid& X, const SymbolAssignment& asg) {
    validate_assignment(X, asg);
    if (asg.values.size() != asg.conditions()) throw dimension_error("one value per condition");
    const auto tables = detail::build_tables(X, asg);
    const std::uint32_t want = asg.target_bits();
    std::vector<std::vector<std::uint64_t>> out;
    detail::for_each_signature(
        X, asg, tables,
        [&](const std::vector<std::size_t>& idx, std::uint32_t s) {
            if (s != want) return;
            std::vector<std::uint64_t> p(idx.size());
            for (std::size_t i = 0; i < idx.size(); ++i) p[i] = X[i][idx[i]];
            out.push_back(std::move(p));
        },
        0, detail::grid_size(X));
    return out;
}

inline std::uint64_t count_X_of_a(const PrimeGrid& X, const SymbolAssignment& asg) {
    if (asg.values.size() != asg.conditions()) throw dimension_error("one value per condition");
    return fiber_counts(X, asg)[asg.target_bits()];
}

inline constexpr std::uint64_t permutation_limit = 1'000'000;

inline std::uint64_t factorial_checked(std::size_t k) {
    std::uint64_t f = 1;
    for (std::size_t i = 2; i <= k; ++i) {
        f *= i;
        if (f > permutation_limit) throw capacity_error("k2! exceeds 10^6");
    }
    return f;
}

// |X(sigma, a)| for each permutation sigma of [r] fixing everything beyond the first k2 positions.
// sigma is stored 0-based: component at position i is X_{sigma[i]}.
inline std::map<std::vector<std::size_t>, std::uint64_t> perm_filter_counts(const PrimeGrid& X,
                                                                          const SymbolAssignment& asg,
                                                                          std::size_t k2) {
    if (k2 > X.size()) throw precondition_error("k2 exceeds r");
    factorial_checked(k2);
    std::map<std::vector<std::size_t>, std::uint64_t> out;
    std::vector<std::size_t> sigma(X.size());
    std::iota(sigma.begin(), sigma.end(), 0);
    do {
        PrimeGrid Y(X.size());
        for (std::size_t i = 0; i < X.size(); ++i) Y[i] = X[sigma[i]];
        out[sigma] = count_X_of_a(Y, asg);
    } while (std::next_permutation(sigma.begin(), sigma.begin() + static_cast<std::ptrdiff_t>(k2)));
    return out;
}

// ---- second moment over permutations ----

inline std::uint64_t perm_moment_mC(std::size_t k0, std::size_t k1, std::size_t P_size) {
    return k1 * P_size + (k0 * k0 - k0) / 2 + k0 * (k1 - k0);
}

struct PermMomentReport {
    std::size_t r = 0, k0 = 0, k1 = 0, k2 = 0, P_size = 0;
    std::uint64_t m_C = 0;
    std::size_t assignment_bits = 0;
    bool hypothesis = false;
    std::uint64_t trials = 0, violations = 0;
    double max_ratio = 0;  // max lhs / rhs over trials (0 when rhs = 0 and lhs = 0)
};

// Legendre symbols at one point x: leg[i][j] is 1 when (x_i / x_j) = -1, legP[j][d] likewise for (d / x_j).
struct PointSymbols {
    std::vector<std::vector<std::uint8_t>> leg;
    std::vector<std::vector<std::uint8_t>> legP;
};

inline PointSymbols random_point_symbols(std::size_t r, std::size_t P_size, Rng& rng) {
    PointSymbols s{std::vector<std::vector<std::uint8_t>>(r, std::vector<std::uint8_t>(r, 0)),
                   std::vector<std::vector<std::uint8_t>>(r, std::vector<std::uint8_t>(P_size, 0))};
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
            if (i != j) s.leg[i][j] = rng() & 1u;
    for (auto& row : s.legP)
        for (auto& b : row) b = rng() & 1u;
    return s;
}

// Bit layout of a maximal assignment: pairs {i < j} first, then (i, d) row by row.
inline std::size_t assignment_pair_bit(std::size_t r, std::size_t i, std::size_t j) {
    if (i > j) std::swap(i, j);
    return i * (2 * r - i - 1) / 2 + (j - i - 1);
}
inline std::size_t assignment_single_bit(std::size_t r, std::size_t P_size, std::size_t i, std::size_t d) {
    return r * (r - 1) / 2 + i * P_size + d;
}

// |W(a)| for every a: the number of sigma in the permutation family whose relaxed conditions hold at x.
inline std::vector<std::uint32_t> perm_witness_counts(std::size_t k0, std::size_t k1, std::size_t k2,
                                                      const PointSymbols& x) {
    const std::size_t r = x.leg.size();
    const std::size_t P_size = r ? x.legP[0].size() : 0;
    if (!(k0 <= k1 && k1 <= k2 && k2 <= r)) throw precondition_error("need k0 <= k1 <= k2 <= r");
    factorial_checked(k2);
    const std::size_t bits = r * (r - 1) / 2 + r * P_size;
    if (bits > symbol_condition_limit) throw capacity_error("more than 20 assignment bits");
    const std::size_t A = std::size_t{1} << bits;
    std::vector<std::uint32_t> W(A, 0);
    std::vector<std::size_t> sigma(r), inv(r);
    std::iota(sigma.begin(), sigma.end(), 0);
    do {
        for (std::size_t i = 0; i < r; ++i) inv[sigma[i]] = i;
        std::uint32_t mask = 0, val = 0;
        auto require = [&](std::size_t bit, std::uint8_t v) {
            mask |= std::uint32_t{1} << bit;
            val |= std::uint32_t{v} << bit;
        };
        for (std::size_t j = 0; j < k1; ++j)
            for (std::size_t d = 0; d < P_size; ++d)
                require(assignment_single_bit(r, P_size, inv[j], d), x.legP[j][d]);
        for (std::size_t i = 0; i < k1; ++i)
            for (std::size_t j = 0; j < k1; ++j) {
                if (i == j || inv[i] > inv[j]) continue;
                if (!(i < k0 || j < k0)) continue;
                require(assignment_pair_bit(r, inv[i], inv[j]), x.leg[i][j]);
            }
        // every a agreeing with val on mask
        const std::uint32_t free = static_cast<std::uint32_t>(A - 1) & ~mask;
        std::uint32_t sub = 0;
        do {
            ++W[val | sub];
            sub = (sub - free) & free;
        } while (sub != 0);
    } while (std::next_permutation(sigma.begin(), sigma.begin() + static_cast<std::ptrdiff_t>(k2)));
    return W;
}

inline double perm_moment_lhs(std::size_t k0, std::size_t k1, std::size_t k2, const PointSymbols& x) {
    const std::size_t P_size = x.leg.empty() ? 0 : x.legP[0].size();
    const double mean =
        std::ldexp(static_cast<double>(factorial_checked(k2)), -static_cast<int>(perm_moment_mC(k0, k1, P_size)));
    double lhs = 0;
    for (auto w : perm_witness_counts(k0, k1, k2, x)) lhs += (mean - w) * (mean - w);
    return lhs;
}

inline double perm_moment_rhs(std::size_t r, std::size_t k0, std::size_t k1, std::size_t k2, std::size_t P_size) {
    const double k2f = static_cast<double>(factorial_checked(k2));
    const int bits = static_cast<int>(r * (r - 1) / 2 + r * P_size);
    const int mC = static_cast<int>(perm_moment_mC(k0, k1, P_size));
    return std::pow(2.0, static_cast<double>(P_size + k0 + 1)) * static_cast<double>(k1 * k1) /
           static_cast<double>(k2) * std::ldexp(1.0, bits - 2 * mC) * k2f * k2f;
}

// Random symbol tables at a fixed x; counts trials where the second moment exceeds its bound.
inline PermMomentReport perm_moment_check(std::size_t r, std::size_t k0, std::size_t k1, std::size_t k2,
                                          std::size_t P_size, std::uint64_t trials, std::uint64_t seed) {
    if (!(k0 <= k1 && k1 <= k2 && k2 <= r)) throw precondition_error("need k0 <= k1 <= k2 <= r");
    if (P_size < 1) throw precondition_error("P always contains -1");
    if (k2 > 6) throw capacity_error("perm_moment_check supports k2 <= 6");
    PermMomentReport rep{r, k0, k1, k2, P_size};
    rep.assignment_bits = r * (r - 1) / 2 + r * P_size;
    if (rep.assignment_bits > symbol_condition_limit) throw capacity_error("more than 20 assignment bits");
    rep.m_C = perm_moment_mC(k0, k1, P_size);
    rep.hypothesis = std::pow(2.0, static_cast<double>(P_size + k0 + 1)) * static_cast<double>(k1 * k1) <
                     static_cast<double>(k2);
    rep.trials = trials;
    const double rhs = perm_moment_rhs(r, k0, k1, k2, P_size);
    Rng rng(seed);
    for (std::uint64_t t = 0; t < trials; ++t) {
        const double lhs = perm_moment_lhs(k0, k1, k2, random_point_symbols(r, P_size, rng));
        if (lhs > rhs * (1 + 1e-9) + 1e-9) ++rep.violations;
        if (rhs > 0) rep.max_ratio = std::max(rep.max_ratio, lhs / rhs);
    }
    return rep;
}

// ---- equidistribution over boxes ----

struct BoxEquiReport {
    std::uint64_t points = 0;
    std::size_t conditions = 0;
    std::vector<std::uint64_t> fibers;
    double expected = 0;           // 2^{-|M u M_P|} |X|
    double max_deviation = 0;      // max_a | |X(a)| - expected |
    double max_relative_deviation = 0;
    double chi_square = 0, p_value = 1;
    bool conserved = false;        // sum of fibers equals |X|
    bool siegel_less_assumed = true;
    SymbolAssignment assignment;   // the chosen M and M_P
};

// Picks M_size pair conditions and MP_size conditions against P at random, then tallies every fiber.
inline BoxEquiReport box_equi_experiment(const PrimeGrid& X, std::size_t M_size, std::size_t MP_size,
                                         const std::vector<std::int64_t>& P, std::uint64_t seed) {
    const std::size_t r = X.size();
    if (M_size > r * (r - 1) / 2) throw precondition_error("more pair conditions than pairs");
    if (MP_size > r * P.size()) throw precondition_error("more M_P conditions than available");
    if (M_size + MP_size > symbol_condition_limit) throw capacity_error("more than 20 symbol conditions");
    Rng rng(seed);
    SymbolAssignment asg;
    asg.r = r;
    asg.P = P;
    std::vector<std::pair<std::size_t, std::size_t>> allM;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = i + 1; j < r; ++j) allM.emplace_back(i, j);
    std::shuffle(allM.begin(), allM.end(), rng);
    asg.M.assign(allM.begin(), allM.begin() + static_cast<std::ptrdiff_t>(M_size));
    std::sort(asg.M.begin(), asg.M.end());
    std::vector<std::pair<std::size_t, std::int64_t>> allMP;
    for (std::size_t i = 0; i < r; ++i)
        for (auto d : P) allMP.emplace_back(i, d);
    std::shuffle(allMP.begin(), allMP.end(), rng);
    asg.MP.assign(allMP.begin(), allMP.begin() + static_cast<std::ptrdiff_t>(MP_size));
    std::sort(asg.MP.begin(), asg.MP.end());

    BoxEquiReport rep;
    rep.fibers = fiber_counts(X, asg);
    rep.assignment = asg;
    rep.points = detail::grid_size(X);
    rep.conditions = asg.conditions();
    std::uint64_t total = 0;
    for (auto f : rep.fibers) total += f;
    rep.conserved = total == rep.points;
    if (!rep.conserved) throw std::logic_error("fiber counts do not sum to |X|");
    rep.expected = std::ldexp(static_cast<double>(rep.points), -static_cast<int>(rep.conditions));
    for (auto f : rep.fibers) {
        const double dev = std::abs(static_cast<double>(f) - rep.expected);
        rep.max_deviation = std::max(rep.max_deviation, dev);
        if (rep.expected > 0) rep.chi_square += dev * dev / rep.expected;
    }
    rep.max_relative_deviation = rep.expected > 0 ? rep.max_deviation / rep.expected : 0;
    if (rep.fibers.size() > 1 && rep.expected > 0) {
        boost::math::chi_squared dist(static_cast<double>(rep.fibers.size() - 1));
        rep.p_value = boost::math::cdf(boost::math::complement(dist, rep.chi_square));
    }
    return rep;
}

inline BoxEquiReport box_equi_experiment(const Box& box, std::size_t M_size, std::size_t MP_size,
                                         const std::vector<std::int64_t>& P, std::uint64_t seed) {
    return box_equi_experiment(box_prime_sets(box), M_size, MP_size, P, seed);
}

}  // namespace twistlab
