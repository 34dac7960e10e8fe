#pragma once
// Bounded p-adic searches used as references for symbol and local
// solvability computations. Square classes are decided from residues
// only, with no Legendre symbols involved.

#include <cstdint>
#include <set>
#include <vector>

namespace oracle {

using i128 = __int128;

inline long long ipow(long long p, int k) {
    long long r = 1;
    while (k-- > 0) r *= p;
    return r;
}

// Unit squares modulo p (odd p) by listing x^2.
inline const std::vector<bool>& unit_squares_mod(long long p) {
    static std::vector<std::pair<long long, std::vector<bool>>> memo;
    for (auto& [q, v] : memo)
        if (q == p) return v;
    std::vector<bool> sq(p, false);
    for (long long x = 1; x < p; ++x) sq[(x * x) % p] = true;
    memo.emplace_back(p, sq);
    return memo.back().second;
}

// 1 = nonzero p-adic square, 0 = nonsquare, -1 = undetermined from the value
// modulo p^k (value divisible by too high a power of p).
inline int square_status(i128 value, long long p, int k) {
    if (value == 0) return -1;
    int v = 0;
    while (value % p == 0) {
        value /= p;
        ++v;
    }
    int need = p == 2 ? 3 : 1;
    if (v + need > k) return -1;
    if (v % 2) return 0;
    if (p == 2) {
        long long u = static_cast<long long>(((value % 8) + 8) % 8);
        return u == 1 ? 1 : 0;
    }
    long long u = static_cast<long long>(((value % p) + p) % p);
    return unit_squares_mod(p)[u] ? 1 : 0;
}

// (a,b)_p = 1 iff a x^2 + b y^2 is a nonzero square for some x, y.
inline int hilbert_by_search(long long a, long long b, long long p) {
    // square factors do not change the symbol; dropping them keeps k small
    while (a % (p * p) == 0) a /= p * p;
    while (b % (p * p) == 0) b /= p * p;
    const int k = p == 2 ? 8 : 4;
    const long long m = ipow(p, k);
    for (long long x = 0; x < m; ++x)
        for (long long y = 0; y < m; ++y) {
            if (x % p == 0 && y % p == 0) continue;
            i128 val = static_cast<i128>(a) * x * x + static_cast<i128>(b) * y * y;
            if (square_status(val, p, k) == 1) return 1;
        }
    return -1;
}

}  // namespace oracle
