#pragma once
// Local solvability of the 2-covering quadrics
//   d1 z1^2 - d2 z2^2 = (e2 - e1) w^2,   d1 z1^2 - d1 d2 z3^2 = (e3 - e1) w^2
// decided by scanning integer points (z1 : w). A hit is an honest Q_v point;
// coverage of residues modulo p^k is what makes the search complete.

#include <cmath>
#include <cstdint>
#include <vector>

#include "padic_search.hpp"

namespace oracle {

inline int sign_of(i128 x) { return x < 0 ? -1 : (x > 0 ? 1 : 0); }

inline bool real_solvable(i128 c2, i128 c3, i128 d1, i128 d2) {
    const long double D1 = static_cast<long double>(d1);
    // s = (z1 / w)^2 >= 0; both forms are linear in s
    std::vector<long double> pts{0.0L};
    std::vector<long double> br;
    for (i128 c : {c2, c3}) {
        long double s = static_cast<long double>(c) / D1;
        if (s > 0) br.push_back(s);
    }
    for (auto s : br) {
        pts.push_back(s / 2);
        pts.push_back(s * 2 + 1);
    }
    if (br.size() == 2) pts.push_back((br[0] + br[1]) / 2);
    for (auto s : pts) {
        long double g2 = D1 * s - static_cast<long double>(c2), g3 = D1 * s - static_cast<long double>(c3);
        if (g2 == 0 || g3 == 0) continue;
        if ((g2 > 0) == (d2 > 0) && (g3 > 0) == (d1 * d2 > 0)) return true;
    }
    // w = 0: both forms equal d1
    return (d1 > 0) == (d2 > 0) && (d1 > 0) == (d1 * d2 > 0);
}

inline bool classes_match(i128 g2, i128 g3, i128 d1, i128 d2, long long p) {
    if (g2 == 0 || g3 == 0) return false;
    return square_status(g2 * d2, p, 120) == 1 && square_status(g3 * d1 * d2, p, 120) == 1;
}

inline bool padic_solvable(i128 c2, i128 c3, i128 d1, i128 d2, long long p) {
    int k = 1;
    long long m = p;
    const long long limit = p == 2 ? 2048 : 30000;
    while (m * p <= limit || k < 3) {
        m *= p;
        ++k;
    }
    for (long long z = 0; z < m; ++z) {  // w = 1
        i128 s = i128{z} * z * d1;
        if (classes_match(s - c2, s - c3, d1, d2, p)) return true;
    }
    for (long long t = 0; t < m / p; ++t) {  // z1 = 1, w = p t
        i128 w = i128{p} * t, w2 = w * w;
        if (classes_match(d1 - c2 * w2, d1 - c3 * w2, d1, d2, p)) return true;
    }
    return false;
}

// p == 0 selects the real place.
inline bool torsor_solvable(const i128 e[3], i128 d1, i128 d2, long long p) {
    const i128 c2 = e[1] - e[0], c3 = e[2] - e[0];
    return p == 0 ? real_solvable(c2, c3, d1, d2) : padic_solvable(c2, c3, d1, d2, p);
}

inline std::vector<long long> odd_prime_factors(long long n) {
    std::vector<long long> out;
    if (n < 0) n = -n;
    for (long long q = 2; q * q <= n; ++q)
        if (n % q == 0) {
            if (q != 2) out.push_back(q);
            while (n % q == 0) n /= q;
        }
    if (n > 2) out.push_back(n);
    return out;
}

// Counts pairs (d1, d2) in Q(S,2)^2 passing every place of S.
inline unsigned long long selmer_pair_count(long long a, long long b, long long d) {
    const i128 e[3] = {0, -i128{a} * d, -i128{b} * d};
    std::vector<long long> primes{2};
    for (long long v : {a, b, a - b, d})
        for (auto q : odd_prime_factors(v)) {
            bool seen = false;
            for (auto r : primes) seen |= r == q;
            if (!seen) primes.push_back(q);
        }
    std::vector<long long> basis{-1};
    for (auto q : primes) basis.push_back(q);
    std::vector<long long> places{0};
    for (auto q : primes) places.push_back(q);
    const std::size_t nb = basis.size();
    unsigned long long count = 0;
    for (unsigned long long x = 0; x < (1ULL << nb); ++x)
        for (unsigned long long y = 0; y < (1ULL << nb); ++y) {
            i128 d1 = 1, d2 = 1;
            for (std::size_t i = 0; i < nb; ++i) {
                if ((x >> i) & 1) d1 *= basis[i];
                if ((y >> i) & 1) d2 *= basis[i];
            }
            bool ok = true;
            for (auto v : places)
                if (!torsor_solvable(e, d1, d2, v)) {
                    ok = false;
                    break;
                }
            count += ok;
        }
    return count;
}

}  // namespace oracle
