#pragma once
// Element-by-element F2 routines used as references in tests.

#include <cstddef>
#include <vector>

namespace oracle {

using Dense = std::vector<std::vector<int>>;

inline std::size_t rank(Dense a) {
    std::size_t rows = a.size(), cols = rows ? a[0].size() : 0, r = 0;
    for (std::size_t c = 0; c < cols && r < rows; ++c) {
        std::size_t piv = r;
        while (piv < rows && a[piv][c] == 0) ++piv;
        if (piv == rows) continue;
        std::swap(a[piv], a[r]);
        for (std::size_t i = 0; i < rows; ++i)
            if (i != r && a[i][c])
                for (std::size_t k = 0; k < cols; ++k) a[i][k] ^= a[r][k];
        ++r;
    }
    return r;
}

// Counts matrices by kernel rank using the recursion on rank of the
// upper-triangular bits, independent of the library's enumeration.
inline std::vector<unsigned long long> kernel_rank_counts(std::size_t n, bool alternating) {
    std::vector<unsigned long long> counts(n + 1, 0);
    std::vector<std::pair<std::size_t, std::size_t>> slots;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (!alternating || i < j) slots.emplace_back(i, j);
    unsigned long long total = 1ULL << slots.size();
    for (unsigned long long m = 0; m < total; ++m) {
        Dense a(n, std::vector<int>(n, 0));
        for (std::size_t s = 0; s < slots.size(); ++s)
            if ((m >> s) & 1ULL) {
                a[slots[s].first][slots[s].second] = 1;
                if (alternating) a[slots[s].second][slots[s].first] = 1;
            }
        ++counts[n - rank(a)];
    }
    return counts;
}

}  // namespace oracle
