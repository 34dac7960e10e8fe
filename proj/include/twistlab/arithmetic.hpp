#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "errors.hpp"

namespace twistlab {

using i128 = __int128;
using u128 = unsigned __int128;

inline constexpr std::uint64_t prime_table_guard = std::uint64_t{1} << 31;

// Least-prime-factor table for 0..limit.
class PrimeTable {
public:
    PrimeTable() = default;
    explicit PrimeTable(std::uint64_t limit) : limit_(limit) {
        if (limit < 2) throw precondition_error("sieve limit must be at least 2");
        if (limit >= prime_table_guard)
            throw capacity_error("sieve limit " + std::to_string(limit) + " exceeds 2^31");
        spf_.assign(limit + 1, 0);
        for (std::uint64_t i = 2; i <= limit; ++i) {
            if (spf_[i] == 0) {
                spf_[i] = static_cast<std::uint32_t>(i);
                primes_.push_back(static_cast<std::uint32_t>(i));
            }
            // linear sieve: each composite is struck once, by its least prime
            for (std::uint32_t p : primes_) {
                std::uint64_t m = p * i;
                if (p > spf_[i] || m > limit) break;
                spf_[m] = p;
            }
        }
    }

    std::uint64_t limit() const { return limit_; }
    std::uint32_t smallest_factor(std::uint64_t n) const { return spf_[n]; }
    bool is_prime(std::uint64_t n) const { return n >= 2 && spf_[n] == n; }
    const std::vector<std::uint32_t>& primes() const { return primes_; }

private:
    std::uint64_t limit_ = 0;
    std::vector<std::uint32_t> spf_;
    std::vector<std::uint32_t> primes_;
};

inline PrimeTable sieve_primes(std::uint64_t limit) { return PrimeTable(limit); }

struct PrimePower {
    std::uint64_t p;
    unsigned e;
    friend bool operator==(const PrimePower&, const PrimePower&) = default;
};

inline std::vector<PrimePower> factorize(std::uint64_t n, const PrimeTable& table) {
    if (n == 0) throw precondition_error("factorize(0)");
    if (n > table.limit()) throw capacity_error("factorize: n beyond table limit");
    std::vector<PrimePower> out;
    while (n > 1) {
        std::uint64_t p = table.smallest_factor(n);
        unsigned e = 0;
        while (n % p == 0) {
            n /= p;
            ++e;
        }
        out.push_back({p, e});
    }
    return out;
}

// Trial division; fine for the sizes used here (n up to ~10^12 quickly).
inline std::vector<PrimePower> factorize(std::uint64_t n) {
    if (n == 0) throw precondition_error("factorize(0)");
    std::vector<PrimePower> out;
    auto take = [&](std::uint64_t p) {
        unsigned e = 0;
        while (n % p == 0) {
            n /= p;
            ++e;
        }
        if (e) out.push_back({p, e});
    };
    take(2);
    take(3);
    for (std::uint64_t p = 5; p <= n / p; p += 6) {
        take(p);
        take(p + 2);
    }
    if (n > 1) out.push_back({n, 1});
    return out;
}

inline bool is_squarefree(std::uint64_t n) {
    if (n == 0) return false;
    for (auto [p, e] : factorize(n))
        if (e > 1) return false;
    return true;
}

inline bool is_squarefree(std::uint64_t n, const PrimeTable& table) {
    while (n > 1) {
        std::uint64_t p = table.smallest_factor(n);
        n /= p;
        if (n % p == 0) return false;
    }
    return true;
}

inline std::vector<std::uint64_t> prime_divisors(std::uint64_t n) {
    std::vector<std::uint64_t> out;
    for (auto [p, e] : factorize(n)) out.push_back(p);
    return out;
}

inline bool is_prime(std::uint64_t n) {
    if (n < 2) return false;
    auto f = factorize(n);
    return f.size() == 1 && f[0].e == 1;
}

inline std::uint64_t isqrt(std::uint64_t n) {
    auto r = static_cast<std::uint64_t>(std::sqrt(static_cast<double>(n)));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r;
}

inline bool is_square(i128 n) {
    if (n < 0) return false;
    if (n < (i128{1} << 62)) {
        auto m = static_cast<std::uint64_t>(n);
        auto r = isqrt(m);
        return r * r == m;
    }
    auto r = static_cast<i128>(std::sqrt(static_cast<long double>(n)));
    while (r * r > n) --r;
    while ((r + 1) * (r + 1) <= n) ++r;
    return r * r == n;
}

// Kronecker symbol (a/n), binary algorithm.
inline int kronecker_symbol(std::int64_t a, std::int64_t n) {
    static constexpr int tab2[8] = {0, 1, 0, -1, 0, -1, 0, 1};
    if (n == 0) return (a == 1 || a == -1) ? 1 : 0;
    if (!(a & 1) && !(n & 1)) return 0;
    int k = 1;
    unsigned v = std::countr_zero(static_cast<std::uint64_t>(n));
    std::uint64_t b;
    {
        i128 nn = n;
        nn >>= v;
        if (nn < 0) {
            nn = -nn;
            if (a < 0) k = -k;
        }
        b = static_cast<std::uint64_t>(nn);
    }
    if (v & 1) k *= tab2[static_cast<std::uint64_t>(a) & 7];
    i128 am = static_cast<i128>(a) % static_cast<i128>(b);
    if (am < 0) am += b;
    std::uint64_t x = static_cast<std::uint64_t>(am);
    while (x != 0) {
        unsigned t = std::countr_zero(x);
        x >>= t;
        if (t & 1) k *= tab2[b & 7];
        if (x & b & 2) k = -k;
        std::uint64_t r = x;
        x = b % r;
        b = r;
    }
    return b == 1 ? k : 0;
}

inline int legendre_symbol(std::int64_t a, std::uint64_t p) {
    return kronecker_symbol(a, static_cast<std::int64_t>(p));
}

// A place of Q: p == 0 is the real place.
struct Place {
    std::uint64_t p = 0;
    static Place real() { return {0}; }
    static Place prime(std::uint64_t q) { return {q}; }
    bool is_real() const { return p == 0; }
    friend bool operator==(const Place&, const Place&) = default;
    friend auto operator<=>(const Place&, const Place&) = default;
};

namespace detail {

inline unsigned strip(i128& n, std::uint64_t p) {
    unsigned v = 0;
    while (n % p == 0) {
        n /= p;
        ++v;
    }
    return v;
}

inline int hilbert_integers(i128 a, i128 b, Place place) {
    if (a == 0 || b == 0) throw precondition_error("hilbert_symbol needs nonzero arguments");
    if (place.is_real()) return (a < 0 && b < 0) ? -1 : 1;
    const std::uint64_t p = place.p;
    unsigned alpha = strip(a, p), beta = strip(b, p);
    if (p == 2) {
        auto mod8 = [](i128 x) { return static_cast<unsigned>(((x % 8) + 8) % 8); };
        unsigned u = mod8(a), w = mod8(b);
        auto eps = [](unsigned x) { return ((x - 1) / 2) & 1u; };
        auto omega = [](unsigned x) { return ((x * x - 1) / 8) & 1u; };
        unsigned e = eps(u) * eps(w) + alpha * omega(w) + beta * omega(u);
        return (e & 1u) ? -1 : 1;
    }
    auto red = [p](i128 x) {
        i128 r = x % static_cast<i128>(p);
        if (r < 0) r += p;
        return static_cast<std::int64_t>(r);
    };
    int s = 1;
    if ((alpha & beta & 1u) && (p % 4 == 3)) s = -s;
    if (beta & 1u) s *= legendre_symbol(red(a), p);
    if (alpha & 1u) s *= legendre_symbol(red(b), p);
    return s;
}

}  // namespace detail

inline int hilbert_symbol(std::int64_t a, std::int64_t b, Place place) {
    return detail::hilbert_integers(a, b, place);
}

struct Fraction {
    std::int64_t num = 0;
    std::int64_t den = 1;
};

// Bilinearity: (n1/d1, n2/d2) = (n1,n2)(n1,d2)(d1,n2)(d1,d2).
inline int hilbert_symbol(Fraction a, Fraction b, Place place) {
    if (a.den == 0 || b.den == 0) throw precondition_error("zero denominator");
    return detail::hilbert_integers(a.num, b.num, place) *
           detail::hilbert_integers(a.num, b.den, place) *
           detail::hilbert_integers(a.den, b.num, place) *
           detail::hilbert_integers(a.den, b.den, place);
}

// Calls fn(p) for every prime p <= limit in increasing order (segmented, odd-only).
template <class Fn>
void for_each_prime(std::uint64_t limit, Fn&& fn) {
    if (limit < 2) return;
    fn(std::uint64_t{2});
    const std::uint64_t root = isqrt(limit);
    std::vector<std::uint32_t> base;
    {
        std::vector<bool> comp(root + 1, false);
        for (std::uint64_t i = 3; i <= root; i += 2) {
            if (comp[i]) continue;
            base.push_back(static_cast<std::uint32_t>(i));
            for (std::uint64_t j = i * i; j <= root; j += 2 * i) comp[j] = true;
        }
    }
    constexpr std::uint64_t seg_odds = std::uint64_t{1} << 18;
    std::vector<std::uint8_t> mark(seg_odds);
    std::vector<std::uint64_t> next(base.size());
    for (std::size_t i = 0; i < base.size(); ++i) next[i] = std::uint64_t{base[i]} * base[i];
    // segment covers odd numbers lo, lo+2, ..., lo + 2*(seg_odds-1)
    for (std::uint64_t lo = 3; lo <= limit; lo += 2 * seg_odds) {
        const std::uint64_t hi = std::min(limit, lo + 2 * (seg_odds - 1));
        const std::uint64_t count = (hi - lo) / 2 + 1;
        std::fill(mark.begin(), mark.begin() + count, 0);
        for (std::size_t i = 0; i < base.size(); ++i) {
            std::uint64_t q = base[i], m = next[i];
            if (m > hi) continue;
            for (; m <= hi; m += 2 * q) mark[(m - lo) / 2] = 1;
            next[i] = m;
        }
        for (std::uint64_t k = 0; k < count; ++k)
            if (!mark[k]) fn(lo + 2 * k);
    }
}

// F(x) = sum of 1/p over primes p <= x.
inline double mertens_sum(std::uint64_t x) {
    long double s = 0;
    for_each_prime(x, [&](std::uint64_t p) { s += 1.0L / static_cast<long double>(p); });
    return static_cast<double>(s);
}

// F(x) - log log x, which tends to the Mertens constant.
inline double mertens_b1_estimate(std::uint64_t x) {
    if (x < 3) throw precondition_error("mertens_b1_estimate needs x >= 3");
    return mertens_sum(x) - std::log(std::log(static_cast<double>(x)));
}

inline constexpr double mertens_constant = 0.26149721284764278375;

}  // namespace twistlab
