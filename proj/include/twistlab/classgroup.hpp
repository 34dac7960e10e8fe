#pragma once

#include <algorithm>
#include <bit>
#include <compare>
#include <cstdint>
#include <map>
#include <numeric>
#include <string>
#include <tuple>
#include <vector>

#include "arithmetic.hpp"
#include "errors.hpp"
#include "f2linalg.hpp"
#include "parallel.hpp"

namespace twistlab {

// Positive definite binary quadratic form a x^2 + b xy + c y^2.
struct QuadForm {
    std::int64_t a = 1, b = 0, c = 1;

    i128 discriminant() const { return i128{b} * b - i128{4} * a * c; }
    bool is_reduced() const {
        if (a <= 0) return false;
        if (!(std::abs(b) <= a && a <= c)) return false;
        if ((std::abs(b) == a || a == c) && b < 0) return false;
        return true;
    }
    friend bool operator==(const QuadForm&, const QuadForm&) = default;
    friend auto operator<=>(const QuadForm&, const QuadForm&) = default;
};

// Field discriminant of Q(sqrt(-d)).
inline std::int64_t discriminant(std::uint64_t d) {
    if (d == 0 || !is_squarefree(d)) throw precondition_error("discriminant needs squarefree d >= 1");
    auto s = static_cast<std::int64_t>(d);
    return d % 4 == 3 ? -s : -4 * s;
}

inline bool is_valid_negative_discriminant(std::int64_t disc) {
    if (disc >= 0) return false;
    auto r = ((disc % 4) + 4) % 4;
    return r == 0 || r == 1;
}

namespace detail {

inline std::int64_t floor_div(i128 a, i128 b) {
    i128 q = a / b;
    if ((a % b != 0) && ((a < 0) != (b < 0))) --q;
    return static_cast<std::int64_t>(q);
}

// (g, x, y) with x a + y b = g = gcd(a, b) >= 0.
inline std::tuple<std::int64_t, std::int64_t, std::int64_t> ext_gcd(std::int64_t a, std::int64_t b) {
    std::int64_t x0 = 1, y0 = 0, x1 = 0, y1 = 1;
    while (b != 0) {
        std::int64_t q = a / b, t = a - q * b;
        a = b;
        b = t;
        t = x0 - q * x1;
        x0 = x1;
        x1 = t;
        t = y0 - q * y1;
        y0 = y1;
        y1 = t;
    }
    if (a < 0) return {-a, -x0, -y0};
    return {a, x0, y0};
}

inline std::int64_t mod_pos(i128 a, std::int64_t m) {
    i128 r = a % m;
    if (r < 0) r += m;
    return static_cast<std::int64_t>(r);
}

}  // namespace detail

inline QuadForm reduce(QuadForm f) {
    const i128 disc = f.discriminant();
    if (f.a <= 0 || disc >= 0) throw precondition_error("reduce needs a positive definite form");
    auto normalize = [&] {
        if (-f.a < f.b && f.b <= f.a) return;
        std::int64_t k = detail::floor_div(i128{f.a} - f.b, i128{2} * f.a);
        i128 b = i128{f.b} + i128{2} * k * f.a;
        f.b = static_cast<std::int64_t>(b);
        f.c = static_cast<std::int64_t>((b * b - disc) / (i128{4} * f.a));
    };
    normalize();
    while (f.a > f.c) {
        f = {f.c, -f.b, f.a};
        normalize();
    }
    if (f.a == f.c && f.b < 0) f.b = -f.b;
    return f;
}

inline QuadForm principal_form(std::int64_t disc) {
    if (!is_valid_negative_discriminant(disc)) throw precondition_error("invalid discriminant");
    std::int64_t b = (-disc) & 1;
    return {1, b, (b - disc) / 4};
}

inline QuadForm inverse(const QuadForm& f) { return reduce({f.a, -f.b, f.c}); }

// Gauss composition (Cohen, Algorithm 5.4.7) with 128-bit intermediates.
inline QuadForm compose(QuadForm f1, QuadForm f2) {
    const i128 disc = f1.discriminant();
    if (f2.discriminant() != disc) throw precondition_error("compose: discriminants differ");
    if (f1.a > f2.a) std::swap(f1, f2);
    const i128 s = (i128{f1.b} + f2.b) / 2;
    const i128 n = i128{f2.b} - s;
    std::int64_t y1, d;
    if (f2.a % f1.a == 0) {
        y1 = 0;
        d = f1.a;
    } else {
        auto [g, u, v] = detail::ext_gcd(f2.a, f1.a);
        (void)v;
        d = g;
        y1 = u;
    }
    std::int64_t x2, y2, d1;
    const auto s64 = static_cast<std::int64_t>(s);
    if (s64 % d == 0) {
        y2 = -1;
        x2 = 0;
        d1 = d;
    } else {
        auto [g, x, y] = detail::ext_gcd(s64, d);
        d1 = g;
        x2 = x;
        y2 = -y;
    }
    const std::int64_t v1 = f1.a / d1, v2 = f2.a / d1;
    const std::int64_t r = detail::mod_pos(i128{y1} * y2 % v1 * (n % v1) - i128{x2} * (f2.c % v1), v1);
    const i128 b3 = i128{f2.b} + i128{2} * v2 * r;
    const i128 a3 = i128{v1} * v2;
    const i128 c3 = (b3 * b3 - disc) / (4 * a3);
    return reduce({static_cast<std::int64_t>(a3), static_cast<std::int64_t>(b3), static_cast<std::int64_t>(c3)});
}

namespace detail {

template <class Fn>
void for_each_divisor_upto(std::uint64_t n, std::uint64_t lo, std::uint64_t hi, const PrimeTable* table,
                           Fn&& fn) {
    if (table && n <= table->limit()) {
        std::vector<PrimePower> f = factorize(n, *table);
        // depth-first product over exponent choices, pruned at hi
        auto rec = [&](auto&& self, std::size_t i, std::uint64_t acc) -> void {
            if (i == f.size()) {
                if (acc >= lo) fn(acc);
                return;
            }
            std::uint64_t x = acc;
            for (unsigned e = 0; e <= f[i].e; ++e) {
                self(self, i + 1, x);
                if (e < f[i].e) {
                    if (x > hi / f[i].p) break;
                    x *= f[i].p;
                }
            }
        };
        rec(rec, 0, 1);
        return;
    }
    for (std::uint64_t a = std::max<std::uint64_t>(lo, 1); a <= hi; ++a)
        if (n % a == 0) fn(a);
}

}  // namespace detail

// One reduced form per class, sorted.
inline std::vector<QuadForm> reduced_forms(std::int64_t disc, const PrimeTable* table = nullptr) {
    if (!is_valid_negative_discriminant(disc)) throw precondition_error("invalid discriminant " + std::to_string(disc));
    const auto D = static_cast<std::uint64_t>(-disc);
    std::vector<QuadForm> out;
    const std::uint64_t bmax = isqrt(D / 3);
    for (std::uint64_t b = D & 1; b <= bmax; b += 2) {
        const std::uint64_t N = (b * b + D) / 4;  // = a c
        const std::uint64_t root = isqrt(N);
        detail::for_each_divisor_upto(N, std::max<std::uint64_t>(b, 1), root, table, [&](std::uint64_t a) {
            if (a * a > N) return;
            const std::uint64_t c = N / a;
            if (std::gcd(std::gcd(a, b), c) != 1) return;
            auto sa = static_cast<std::int64_t>(a), sb = static_cast<std::int64_t>(b),
                 sc = static_cast<std::int64_t>(c);
            out.push_back({sa, sb, sc});
            if (b != 0 && b != a && a != c) out.push_back({sa, -sb, sc});
        });
    }
    std::sort(out.begin(), out.end());
    return out;
}

inline std::uint64_t class_number(std::int64_t disc, const PrimeTable* table = nullptr) {
    return reduced_forms(disc, table).size();
}

// 2-Sylow subgroup as a multiset of exponents, largest first.
struct TwoSylowType {
    std::vector<unsigned> exponents;
    std::uint64_t class_number = 0;

    // r_k = dim 2^{k-1} Cl[2^k]; k = 1 is the 2-rank, k = 2 the 4-rank, ...
    unsigned rank(unsigned k) const {
        unsigned r = 0;
        for (auto a : exponents) r += a >= k;
        return r;
    }
    unsigned two_rank() const { return rank(1); }
    unsigned four_rank() const { return rank(2); }
    unsigned eight_rank() const { return rank(3); }
    std::uint64_t order() const {
        std::uint64_t o = 1;
        for (auto a : exponents) o <<= a;
        return o;
    }
    std::vector<unsigned> ranks(unsigned k_max) const {
        std::vector<unsigned> r;
        for (unsigned k = 1; k <= k_max; ++k) r.push_back(rank(k));
        return r;
    }
};

inline constexpr std::uint64_t class_number_guard = 1000000;

// Squares every class once, then counts |Cl[2^k]| by walking the squaring map.
inline TwoSylowType two_sylow_ranks(std::int64_t disc, const PrimeTable* table = nullptr) {
    auto forms = reduced_forms(disc, table);
    const std::size_t h = forms.size();
    if (h > class_number_guard) throw capacity_error("class number beyond guard");
    TwoSylowType t;
    t.class_number = h;
    const std::uint64_t two_part = std::uint64_t{1} << std::countr_zero(static_cast<std::uint64_t>(h));
    if (two_part == 1) return t;

    auto index_of = [&](const QuadForm& f) {
        auto it = std::lower_bound(forms.begin(), forms.end(), f);
        if (it == forms.end() || !(*it == f)) throw std::logic_error("composition left the form list");
        return static_cast<std::size_t>(it - forms.begin());
    };
    const std::size_t id = index_of(principal_form(disc));
    std::vector<std::uint32_t> sq(h);
    for (std::size_t i = 0; i < h; ++i) sq[i] = static_cast<std::uint32_t>(index_of(compose(forms[i], forms[i])));

    // level[x] = least k with x^(2^k) = 1, or "never" for classes of non-2-power order
    constexpr std::uint32_t unknown = 0xffffffffu, never = 0xfffffffeu, busy = 0xfffffffdu;
    std::vector<std::uint32_t> level(h, unknown);
    level[id] = 0;
    std::vector<std::uint32_t> path;
    for (std::size_t x = 0; x < h; ++x) {
        if (level[x] != unknown) continue;
        path.clear();
        std::uint32_t y = static_cast<std::uint32_t>(x);
        while (level[y] == unknown) {
            level[y] = busy;
            path.push_back(y);
            y = sq[y];
        }
        std::uint32_t base = level[y] == busy ? never : level[y];
        for (auto it = path.rbegin(); it != path.rend(); ++it) {
            base = base >= never - 1 ? never : base + 1;
            level[*it] = base;
        }
    }
    std::vector<std::uint64_t> count;  // count[k] = |Cl[2^k]|
    for (unsigned k = 0;; ++k) {
        std::uint64_t c = 0;
        for (auto l : level) c += l <= k;
        count.push_back(c);
        if (c == two_part) break;
        if (k > 63) throw std::logic_error("2-part never reached");
    }
    // |Cl[2^k]| / |Cl[2^{k-1}]| = 2^{r_k}
    std::vector<unsigned> r;
    for (std::size_t k = 1; k < count.size(); ++k)
        r.push_back(static_cast<unsigned>(std::countr_zero(count[k] / count[k - 1])));
    for (std::size_t k = 0; k < r.size(); ++k) {
        unsigned next = k + 1 < r.size() ? r[k + 1] : 0;
        for (unsigned i = next; i < r[k]; ++i) t.exponents.push_back(static_cast<unsigned>(k + 1));
    }
    std::sort(t.exponents.rbegin(), t.exponents.rend());
    return t;
}

// Prime discriminants whose product is the fundamental discriminant disc.
inline std::vector<std::int64_t> prime_discriminants(std::int64_t disc) {
    if (!is_valid_negative_discriminant(disc)) throw precondition_error("invalid discriminant");
    std::vector<std::int64_t> out;
    std::int64_t rest = disc;
    for (auto [p, e] : factorize(static_cast<std::uint64_t>(-disc))) {
        if (p == 2) continue;
        if (e != 1) throw precondition_error("not a fundamental discriminant");
        auto sp = static_cast<std::int64_t>(p);
        std::int64_t ps = (p % 4 == 1) ? sp : -sp;
        out.push_back(ps);
        rest /= ps;
    }
    if (rest != 1) {
        if (rest != -4 && rest != 8 && rest != -8) throw precondition_error("not a fundamental discriminant");
        out.insert(out.begin(), rest);
    }
    return out;
}

// Redei matrix: row i belongs to the prime p_i under d_i, entry (i,j) for i != j
// records (d_j / p_i) = -1, diagonal chosen so each row sums to zero.
inline BitMatrix redei_matrix(std::int64_t disc) {
    auto ds = prime_discriminants(disc);
    const std::size_t t = ds.size();
    BitMatrix m(t, t);
    for (std::size_t i = 0; i < t; ++i) {
        std::int64_t p = ds[i] % 2 == 0 ? 2 : std::abs(ds[i]);
        bool sum = false;
        for (std::size_t j = 0; j < t; ++j) {
            if (i == j) continue;
            bool bit = kronecker_symbol(ds[j], p) == -1;
            m.set(i, j, bit);
            sum ^= bit;
        }
        m.set(i, i, sum);
    }
    return m;
}

inline unsigned redei_4rank(std::int64_t disc) {
    auto m = redei_matrix(disc);
    if (m.rows() == 0) return 0;
    return static_cast<unsigned>(m.rows() - 1 - rank(m));
}

struct ClassSurvey {
    unsigned k_max = 0;
    std::uint64_t fields = 0;
    std::map<std::vector<unsigned>, std::uint64_t> joint;  // (r_1, ..., r_kmax) -> count
    std::uint64_t genus_mismatches = 0;
    std::uint64_t redei_mismatches = 0;

    // Empirical P(r_{k+1} = j | r_k = n) as a map j -> fraction, plus the
    // number of fields conditioned on.
    std::pair<std::map<unsigned, double>, std::uint64_t> conditional(unsigned k, unsigned n) const {
        if (k < 1 || k + 1 > k_max) throw precondition_error("conditional needs 1 <= k < k_max");
        std::map<unsigned, std::uint64_t> c;
        std::uint64_t total = 0;
        for (auto& [key, cnt] : joint)
            if (key[k - 1] == n) {
                c[key[k]] += cnt;
                total += cnt;
            }
        std::map<unsigned, double> out;
        for (auto& [j, cnt] : c) out[j] = static_cast<double>(cnt) / static_cast<double>(total);
        return {out, total};
    }
};

struct ClassSurveyOptions {
    bool check_redei = true;
};

inline ClassSurvey class_survey(std::uint64_t d_max, unsigned k_max, ClassSurveyOptions opt = {}) {
    if (k_max < 1) throw precondition_error("k_max must be at least 1");
    if (d_max > 5000000) throw capacity_error("class_survey: d_max beyond 5e6");
    ClassSurvey out;
    out.k_max = k_max;
    if (d_max == 0) return out;
    const PrimeTable table(std::max<std::uint64_t>(4 * d_max / 3 + 2, 16));

    auto chunk = [&](parallel::Range r) {
        ClassSurvey part;
        part.k_max = k_max;
        for (std::uint64_t d = r.begin + 1; d <= r.end; ++d) {
            if (!is_squarefree(d, table)) continue;
            const std::int64_t disc = d % 4 == 3 ? -static_cast<std::int64_t>(d) : -4 * static_cast<std::int64_t>(d);
            auto type = two_sylow_ranks(disc, &table);
            ++part.fields;
            ++part.joint[type.ranks(k_max)];
            const auto t = prime_discriminants(disc).size();
            if (type.two_rank() + 1 != t) ++part.genus_mismatches;
            if (opt.check_redei && redei_4rank(disc) != type.four_rank()) ++part.redei_mismatches;
        }
        return part;
    };
    auto merge = [](ClassSurvey a, ClassSurvey b) {
        a.fields += b.fields;
        a.genus_mismatches += b.genus_mismatches;
        a.redei_mismatches += b.redei_mismatches;
        for (auto& [k, v] : b.joint) a.joint[k] += v;
        return a;
    };
    return parallel::chunked_reduce<ClassSurvey>(d_max, chunk, merge, out, 256);
}

}  // namespace twistlab
