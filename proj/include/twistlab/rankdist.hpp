#pragma once

#include <boost/multiprecision/cpp_int.hpp>

#include <cmath>
#include <cstdint>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "f2linalg.hpp"
#include "parallel.hpp"

namespace twistlab {

using Rational = boost::multiprecision::cpp_rational;

enum class RankMode { exact, mc };

struct RankDistribution {
    std::size_t n = 0;
    MatrixKind kind = MatrixKind::alternating;
    bool exact = false;
    std::uint64_t samples = 0;            // 2^free_bits in exact mode
    std::vector<std::uint64_t> counts;    // counts[j] = matrices (or draws) with kernel rank j
    std::vector<Rational> exact_probs;    // filled in exact mode only

    double probability(std::size_t j) const {
        if (j >= counts.size() || samples == 0) return 0.0;
        return static_cast<double>(counts[j]) / static_cast<double>(samples);
    }
    Rational exact_probability(std::size_t j) const {
        if (!exact) throw precondition_error("distribution is a Monte-Carlo estimate");
        return j < exact_probs.size() ? exact_probs[j] : Rational(0);
    }
};

namespace detail {

// Kernel-rank counts over every matrix of the class. Chunks walk the index
// range in Gray-code order, so consecutive matrices differ in one free bit.
inline std::vector<std::uint64_t> enumerate_rank_counts(std::size_t n, MatrixKind kind) {
    MatrixEnumeration e(n, kind);  // capacity guard
    const std::size_t f = free_bits(n, kind);
    const std::uint64_t total = e.size();
    using Counts = std::vector<std::uint64_t>;
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (kind == MatrixKind::general || j > i) slots.emplace_back(i, j);
    const bool sym = kind == MatrixKind::alternating;

    return parallel::chunked_reduce<Counts>(
        total,
        [&](parallel::Range r) {
            Counts c(n + 1, 0);
            Word rows[64], scratch[64];
            auto toggle = [&](std::size_t bit) {
                auto [i, j] = slots[f - 1 - bit];
                rows[i] ^= Word{1} << j;
                if (sym) rows[j] ^= Word{1} << i;
            };
            std::fill(rows, rows + n, Word{0});
            const std::uint64_t g0 = r.begin ^ (r.begin >> 1);
            for (std::size_t b = 0; b < f; ++b)
                if ((g0 >> b) & 1u) toggle(b);
            for (std::uint64_t idx = r.begin;;) {
                std::copy(rows, rows + n, scratch);
                ++c[n - rank_single_word(scratch, n)];
                if (++idx == r.end) break;
                toggle(static_cast<std::size_t>(std::countr_zero(idx)));
            }
            return c;
        },
        [](Counts a, Counts b) {
            for (std::size_t j = 0; j < a.size(); ++j) a[j] += b[j];
            return a;
        },
        Counts(n + 1, 0));
}

inline const std::vector<std::uint64_t>& cached_rank_counts(std::size_t n, MatrixKind kind) {
    static std::mutex mu;
    static std::map<std::pair<std::size_t, int>, std::vector<std::uint64_t>> cache;
    std::pair<std::size_t, int> key{n, static_cast<int>(kind)};
    {
        std::lock_guard lock(mu);
        auto it = cache.find(key);
        if (it != cache.end()) return it->second;
    }
    auto counts = enumerate_rank_counts(n, kind);
    std::lock_guard lock(mu);
    return cache.emplace(key, std::move(counts)).first->second;
}

inline std::vector<std::uint64_t> sample_rank_counts(std::size_t n, MatrixKind kind,
                                                     std::uint64_t samples, std::uint64_t seed) {
    using Counts = std::vector<std::uint64_t>;
    return parallel::chunked_reduce<Counts>(
        samples,
        [&](parallel::Range r) {
            Counts c(n + 1, 0);
            Rng rng(derive_seed(seed, r.index));
            for (std::uint64_t s = r.begin; s < r.end; ++s) ++c[kernel_rank(sample_matrix(n, kind, rng))];
            return c;
        },
        [](Counts a, Counts b) {
            for (std::size_t j = 0; j < a.size(); ++j) a[j] += b[j];
            return a;
        },
        Counts(n + 1, 0));
}

}  // namespace detail

inline RankDistribution kernel_rank_dist(std::size_t n, MatrixKind kind, RankMode mode,
                                         std::uint64_t samples, Rng& rng) {
    RankDistribution d;
    d.n = n;
    d.kind = kind;
    if (mode == RankMode::exact) {
        d.exact = true;
        d.counts = detail::cached_rank_counts(n, kind);
        d.samples = std::uint64_t{1} << free_bits(n, kind);
        for (auto c : d.counts) d.exact_probs.emplace_back(Rational(c) / Rational(d.samples));
        return d;
    }
    if (samples < 1) throw precondition_error("Monte-Carlo mode needs at least one sample");
    d.samples = samples;
    d.counts = detail::sample_rank_counts(n, kind, samples, rng());
    return d;
}

// Probability vector over states 0..max; P is Rational or double.
template <class P>
struct BasicStateDistribution {
    std::map<std::size_t, P> probs;

    P at(std::size_t s) const {
        auto it = probs.find(s);
        return it == probs.end() ? P(0) : it->second;
    }
    P total() const {
        P t(0);
        for (auto& [s, p] : probs) t += p;
        return t;
    }
    static BasicStateDistribution point(std::size_t s) { return {{{s, P(1)}}}; }
};

using StateDistribution = BasicStateDistribution<double>;
using ExactStateDistribution = BasicStateDistribution<Rational>;

// Which transition rows may be enumerated and which may be sampled.
struct KernelPolicy {
    std::size_t exact_max = 5;
    bool allow_mc = true;
    std::uint64_t mc_samples = 100000;
    std::uint64_t seed = default_seed;
};

namespace detail {

template <class P>
std::vector<P> transition_row(std::size_t n, MatrixKind kind, const KernelPolicy& policy,
                              std::map<std::size_t, std::vector<P>>& memo) {
    auto it = memo.find(n);
    if (it != memo.end()) return it->second;
    std::vector<P> row(n + 1, P(0));
    if (n <= policy.exact_max) {
        const auto& c = cached_rank_counts(n, kind);
        const std::uint64_t total = std::uint64_t{1} << free_bits(n, kind);
        for (std::size_t j = 0; j <= n; ++j) row[j] = P(Rational(c[j]) / Rational(total));
    } else {
        if constexpr (std::is_same_v<P, Rational>) {
            throw capacity_error("exact transition row for state " + std::to_string(n) +
                                 " is beyond the enumeration limit");
        } else {
            if (!policy.allow_mc)
                throw capacity_error("state " + std::to_string(n) +
                                     " needs Monte-Carlo rows, which are disabled");
            auto c = sample_rank_counts(n, kind, policy.mc_samples, derive_seed(policy.seed, n));
            for (std::size_t j = 0; j <= n; ++j)
                row[j] = static_cast<double>(c[j]) / static_cast<double>(policy.mc_samples);
        }
    }
    memo.emplace(n, row);
    return row;
}

}  // namespace detail

template <class P>
BasicStateDistribution<P> markov_evolve(const BasicStateDistribution<P>& start, MatrixKind kind,
                                        std::size_t steps, const KernelPolicy& policy = {}) {
    std::map<std::size_t, std::vector<P>> memo;
    BasicStateDistribution<P> cur = start;
    for (std::size_t step = 0; step < steps; ++step) {
        BasicStateDistribution<P> next;
        for (auto& [n, p] : cur.probs) {
            if (p == P(0)) continue;
            auto row = detail::transition_row<P>(n, kind, policy, memo);
            for (std::size_t j = 0; j <= n; ++j)
                if (row[j] != P(0)) next.probs[j] += p * row[j];
        }
        cur = std::move(next);
    }
    return cur;
}

inline Rational markov_outside_tail_exact(std::size_t start_state, MatrixKind kind, std::size_t steps,
                                          const KernelPolicy& policy = {}) {
    auto d = markov_evolve(ExactStateDistribution::point(start_state), kind, steps, policy);
    Rational tail(0);
    for (auto& [s, p] : d.probs)
        if (s > 1) tail += p;
    return tail;
}

inline double markov_outside_tail(std::size_t start_state, MatrixKind kind, std::size_t steps,
                                  const KernelPolicy& policy = {}) {
    if (start_state <= policy.exact_max)
        return static_cast<double>(markov_outside_tail_exact(start_state, kind, steps, policy));
    auto d = markov_evolve(StateDistribution::point(start_state), kind, steps, policy);
    double tail = 0;
    for (auto& [s, p] : d.probs)
        if (s > 1) tail += p;
    return tail;
}

struct ProbabilityEstimate {
    double p = 0, lo = 0, hi = 0;
    std::uint64_t successes = 0, samples = 0;
    bool exact = false;
};

// Wilson score interval at z standard deviations.
inline ProbabilityEstimate wilson_interval(std::uint64_t successes, std::uint64_t samples, double z = 3.0) {
    ProbabilityEstimate e;
    e.successes = successes;
    e.samples = samples;
    if (samples == 0) return e;
    const double n = static_cast<double>(samples), ph = successes / n;
    const double z2 = z * z, denom = 1 + z2 / n;
    const double centre = (ph + z2 / (2 * n)) / denom;
    const double half = z * std::sqrt(ph * (1 - ph) / n + z2 / (4 * n * n)) / denom;
    e.p = ph;
    e.lo = std::max(0.0, centre - half);
    e.hi = std::min(1.0, centre + half);
    return e;
}

// Monte-Carlo estimate of P^Alt(j | n_large), the large-n limit proxy.
inline ProbabilityEstimate limit_alt_even(std::size_t j, std::size_t n_large, std::uint64_t samples,
                                          Rng& rng) {
    if (n_large % 2 != 0) throw precondition_error("n_large must be even");
    if (samples < 10000) throw precondition_error("limit_alt_even needs at least 10^4 samples");
    if (j % 2 != 0 || j > n_large) {
        ProbabilityEstimate e;
        e.samples = samples;
        e.exact = true;
        return e;
    }
    auto c = detail::sample_rank_counts(n_large, MatrixKind::alternating, samples, rng());
    return wilson_interval(c[j], samples);
}

}  // namespace twistlab
