#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "arithmetic.hpp"
#include "errors.hpp"
#include "f2linalg.hpp"
#include "parallel.hpp"

namespace twistlab {

// y^2 = x (x + a)(x + b); twists d y^2 = x (x + a)(x + b).
struct CurveE {
    std::int64_t a = 0, b = 0;
    std::vector<std::uint64_t> bad_primes;  // primes dividing 2 a b (a - b)
};

inline CurveE validate_curve(std::int64_t a, std::int64_t b) {
    if (a == 0 || b == 0 || a == b)
        throw hypothesis_error("degenerate curve: need a, b nonzero and distinct (a=" + std::to_string(a) +
                               ", b=" + std::to_string(b) + ")");
    const i128 ab = i128{a} * b, aab = i128{a} * (i128{a} - b), bba = i128{b} * (i128{b} - a);
    if (is_square(ab)) throw hypothesis_error("ab = " + std::to_string(static_cast<long long>(ab)) + " is a square");
    if (is_square(aab))
        throw hypothesis_error("a(a-b) = " + std::to_string(static_cast<long long>(aab)) + " is a square");
    if (is_square(bba))
        throw hypothesis_error("b(b-a) = " + std::to_string(static_cast<long long>(bba)) + " is a square");
    CurveE e{a, b, {}};
    std::set<std::uint64_t> ps{2};
    for (std::int64_t v : {a, b, a - b})
        for (auto p : prime_divisors(static_cast<std::uint64_t>(v < 0 ? -v : v))) ps.insert(p);
    e.bad_primes.assign(ps.begin(), ps.end());
    return e;
}

struct SelmerResult {
    std::int64_t d = 0;
    unsigned dim = 0;  // dim Sel^2, 2-torsion image included
    int n1() const { return static_cast<int>(dim) - 2; }
};

namespace selmer_detail {

// Width of the local square-class group Q_v^* / Q_v^*2 in bits.
inline unsigned class_width(Place v) { return v.is_real() ? 1 : (v.p == 2 ? 3 : 2); }

// Square class of a nonzero integer at v.
// real: sign. odd p: (valuation parity, unit is a non-residue).
// p = 2: (valuation parity, unit = 3 mod 4, unit = 3 or 5 mod 8).
inline unsigned local_class(i128 n, Place v) {
    if (n == 0) throw precondition_error("local_class(0)");
    if (v.is_real()) return n < 0 ? 1u : 0u;
    unsigned val = 0;
    if (v.p == 2) {
        while ((n & 1) == 0) {
            n >>= 1;
            ++val;
        }
        auto u = static_cast<unsigned>(((n % 8) + 8) % 8);
        return (val & 1u) | (u % 4 == 3 ? 2u : 0u) | ((u == 3 || u == 5) ? 4u : 0u);
    }
    const auto p = static_cast<i128>(v.p);
    while (n % p == 0) {
        n /= p;
        ++val;
    }
    i128 r = n % p;
    if (r < 0) r += p;
    return (val & 1u) | (legendre_symbol(static_cast<std::int64_t>(r), v.p) == -1 ? 2u : 0u);
}

struct Twist {
    i128 e[3];  // roots 0, -a d, -b d
    std::int64_t d;
};

inline Twist make_twist(const CurveE& E, std::int64_t d) {
    return {{0, -i128{E.a} * d, -i128{E.b} * d}, d};
}

// The three 2-torsion images as pairs (x - e1, x - e2) of integers.
inline std::array<std::pair<i128, i128>, 3> torsion_pairs(const Twist& t) {
    const i128 *e = t.e;
    return {{{(e[0] - e[1]) * (e[0] - e[2]), e[0] - e[1]},
             {e[1] - e[0], (e[1] - e[0]) * (e[1] - e[2])},
             {e[2] - e[0], e[2] - e[1]}}};
}

inline unsigned pack_pair(unsigned c1, unsigned c2, unsigned w) { return c1 | (c2 << w); }

// Incremental F2 span of small packed vectors.
struct Span {
    std::vector<unsigned> basis;  // reduced, distinct leading bits
    bool add(unsigned v) {
        for (auto b : basis) {
            unsigned hb = std::bit_floor(b);
            if (v & hb) v ^= b;
        }
        if (!v) return false;
        for (auto& b : basis)
            if (b & std::bit_floor(v)) b ^= v;
        basis.push_back(v);
        std::sort(basis.rbegin(), basis.rend());
        return true;
    }
    std::size_t dim() const { return basis.size(); }
    bool contains(unsigned v) const {
        for (auto b : basis)
            if (v & std::bit_floor(b)) v ^= b;
        return v == 0;
    }
};

inline unsigned expected_image_dim(Place v) { return v.is_real() ? 1 : (v.p == 2 ? 3 : 2); }

inline bool mul_ok(i128 a, i128 b, i128& out) { return !__builtin_mul_overflow(a, b, &out); }

// Image of the local Kummer map E(Q_v)/2 -> (Q_v^*/2)^2, found by searching
// points x = e_i + u p^k / p^(2j) until the span reaches its known dimension.
inline std::vector<unsigned> search_local_image(const Twist& t, Place v, std::size_t max_candidates = 200000) {
    const unsigned w = class_width(v);
    Span span;
    for (auto [x1, x2] : torsion_pairs(t)) span.add(pack_pair(local_class(x1, v), local_class(x2, v), w));
    const unsigned target = expected_image_dim(v);
    if (span.dim() >= target) return span.basis;

    const std::uint64_t p = v.is_real() ? 2 : v.p;
    const i128 emax = std::max({t.e[0] < 0 ? -t.e[0] : t.e[0], t.e[1] < 0 ? -t.e[1] : t.e[1],
                                t.e[2] < 0 ? -t.e[2] : t.e[2]}) + 1;
    // admissible powers p^0..p^kmax staying far from 128-bit overflow
    std::vector<i128> pw{1};
    const i128 cap = i128{1} << 100;
    while (pw.size() < 9) {
        i128 nx;
        if (!mul_ok(pw.back(), static_cast<i128>(p), nx) || nx > cap / emax / 1024) break;
        pw.push_back(nx);
    }
    const unsigned kmax = static_cast<unsigned>(pw.size() - 1);
    const std::uint64_t umax = p == 2 ? 64 : 4 * p;
    Rng rng(derive_seed(p * 0x9e37 + 17, static_cast<std::uint64_t>(t.d)));
    for (std::size_t cand = 0; cand < max_candidates; ++cand) {
        const unsigned i = static_cast<unsigned>(cand % 3);
        const unsigned k = static_cast<unsigned>(rng() % (kmax + 1));
        const unsigned j = static_cast<unsigned>(rng() % std::min(3u, kmax / 2 + 1));
        const i128 den = pw[2 * j];
        i128 u = static_cast<i128>(1 + rng() % umax);
        if (rng() & 1) u = -u;
        const i128 N = t.e[i] * den + u * pw[k];
        unsigned c[3];
        bool zero = false;
        for (int m = 0; m < 3; ++m) {
            i128 diff = N - t.e[m] * den;
            if (diff == 0) {
                zero = true;
                break;
            }
            c[m] = local_class(diff, v);
        }
        if (zero || (c[0] ^ c[1] ^ c[2]) != 0) continue;
        span.add(pack_pair(c[0], c[1], w));
        if (span.dim() >= target) return span.basis;
    }
    throw convergence_error("local image search at p=" + std::to_string(v.p) + " did not reach dimension " +
                            std::to_string(target));
}

// Image at an odd prime dividing d but not 2ab(a-b): spanned by torsion.
inline std::vector<unsigned> torsion_local_image(const Twist& t, Place v) {
    const unsigned w = class_width(v);
    Span span;
    for (auto [x1, x2] : torsion_pairs(t)) span.add(pack_pair(local_class(x1, v), local_class(x2, v), w));
    return span.basis;
}

// Basis of {lambda : lambda . x = 0 for x in the image}.
inline std::vector<unsigned> annihilator(const std::vector<unsigned>& image, unsigned width2) {
    Span ann;
    for (unsigned lam = 1; lam < (1u << width2); ++lam) {
        bool ok = true;
        for (auto x : image)
            if (std::popcount(lam & x) & 1) {
                ok = false;
                break;
            }
        if (ok) ann.add(lam);
    }
    return ann.basis;
}

struct Descent {
    std::vector<std::int64_t> basis;  // -1, 2, odd primes of S
    std::vector<Place> places;        // real, 2, odd primes of S
};

inline Descent make_descent(const CurveE& E, std::int64_t d) {
    std::set<std::uint64_t> ps(E.bad_primes.begin(), E.bad_primes.end());
    for (auto p : prime_divisors(static_cast<std::uint64_t>(d < 0 ? -d : d))) ps.insert(p);
    ps.insert(2);
    Descent s;
    s.basis.push_back(-1);
    s.places.push_back(Place::real());
    for (auto p : ps) {
        s.basis.push_back(static_cast<std::int64_t>(p));
        s.places.push_back(Place::prime(p));
    }
    return s;
}

// Exponent vector of n over the descent basis (n must be an S-unit up to squares).
inline std::vector<int> basis_vector(const Descent& s, i128 n) {
    std::vector<int> v(s.basis.size(), 0);
    if (n < 0) {
        v[0] = 1;
        n = -n;
    }
    for (std::size_t i = 1; i < s.basis.size(); ++i) {
        const i128 p = s.basis[i];
        while (n % p == 0) {
            n /= p;
            v[i] ^= 1;
        }
    }
    if (n != 1) throw std::logic_error("torsion value is not an S-unit");
    return v;
}

// Stack the local conditions into one square matrix; its kernel is Sel^2.
template <class ImageFn>
BitMatrix assemble(const CurveE& E, std::int64_t d, ImageFn&& image_at) {
    const Descent s = make_descent(E, d);
    const std::size_t nb = s.basis.size();
    std::vector<std::vector<unsigned>> rows_per_place;
    std::size_t total_rows = 0;
    for (auto v : s.places) {
        auto img = image_at(v);
        auto ann = annihilator(img, 2 * class_width(v));
        total_rows += ann.size();
        rows_per_place.push_back(std::move(ann));
    }
    BitMatrix m(total_rows, 2 * nb);
    std::size_t row = 0;
    for (std::size_t pi = 0; pi < s.places.size(); ++pi) {
        const Place v = s.places[pi];
        const unsigned w = class_width(v);
        std::vector<unsigned> loc(nb);
        for (std::size_t c = 0; c < nb; ++c) loc[c] = local_class(s.basis[c], v);
        for (auto lam : rows_per_place[pi]) {
            for (std::size_t c = 0; c < nb; ++c) {
                m.set(row, c, std::popcount(lam & loc[c]) & 1);
                m.set(row, nb + c, std::popcount(lam & (loc[c] << w)) & 1);
            }
            ++row;
        }
    }
    // the 2-torsion images must always satisfy every local condition
    const Twist t = make_twist(E, d);
    for (auto [x1, x2] : torsion_pairs(t)) {
        auto v1 = basis_vector(s, x1), v2 = basis_vector(s, x2);
        for (std::size_t r = 0; r < m.rows(); ++r) {
            int acc = 0;
            for (std::size_t c = 0; c < nb; ++c) acc ^= (m.get(r, c) & v1[c]) ^ (m.get(r, nb + c) & v2[c]);
            if (acc) throw std::logic_error("torsion image rejected by a local condition");
        }
    }
    return m;
}

inline void check_twist(std::int64_t d) {
    if (d == 0) throw precondition_error("twist parameter d must be nonzero");
    if (!is_squarefree(static_cast<std::uint64_t>(d < 0 ? -d : d)))
        throw precondition_error("twist parameter d=" + std::to_string(d) + " is not squarefree");
}

}  // namespace selmer_detail

// Full 2-descent: every local image is found by point search.
inline BitMatrix selmer_descent_matrix(const CurveE& E, std::int64_t d) {
    selmer_detail::check_twist(d);
    const auto t = selmer_detail::make_twist(E, d);
    return selmer_detail::assemble(E, d, [&](Place v) { return selmer_detail::search_local_image(t, v); });
}

inline SelmerResult sel2_dim(const CurveE& E, std::int64_t d) {
    auto m = selmer_descent_matrix(E, d);
    return {d, static_cast<unsigned>(kernel_rank(m))};
}

// Caches local images at the fixed places (real, 2, primes of ab(a-b)) by the
// square class of d there; primes dividing d only contribute torsion spans,
// whose entries are Legendre symbols among the primes of d.
class SelmerMatrixBuilder {
public:
    explicit SelmerMatrixBuilder(CurveE E) : E_(std::move(E)) {
        for (auto p : E_.bad_primes) fixed_.insert(p);
    }

    const CurveE& curve() const { return E_; }

    BitMatrix matrix(std::int64_t d) {
        selmer_detail::check_twist(d);
        const auto t = selmer_detail::make_twist(E_, d);
        return selmer_detail::assemble(E_, d, [&](Place v) -> std::vector<unsigned> {
            if (!v.is_real() && !fixed_.count(v.p)) return selmer_detail::torsion_local_image(t, v);
            auto key = std::make_pair(v.p, selmer_detail::local_class(d, v));
            auto it = cache_.find(key);
            if (it != cache_.end()) return it->second;
            auto img = selmer_detail::search_local_image(t, v);
            cache_.emplace(key, img);
            return img;
        });
    }

    SelmerResult result(std::int64_t d) { return {d, static_cast<unsigned>(kernel_rank(matrix(d)))}; }

private:
    CurveE E_;
    std::set<std::uint64_t> fixed_;
    std::map<std::pair<std::uint64_t, unsigned>, std::vector<unsigned>> cache_;
};

// Kernel rank equals sel2_dim(E, d).dim; twists sharing primes with
// 2ab(a-b) go through the cached search images.
inline BitMatrix sel2_matrix(const CurveE& E, std::int64_t d) {
    SelmerMatrixBuilder b(E);
    return b.matrix(d);
}

inline constexpr int sel2_matrix_offset = 2;  // kernel_rank(sel2_matrix) - (dim - 2)

struct SelmerSurvey {
    std::map<int, std::uint64_t> histogram;  // n1 -> count
    std::uint64_t processed = 0;

    double fraction(int n1) const {
        auto it = histogram.find(n1);
        return processed && it != histogram.end() ? static_cast<double>(it->second) / processed : 0.0;
    }
};

// Squarefree d in [1, d_max] whose residue mod 8 is in the filter; each is kept
// with probability sample_fraction, decided by a hash of (seed, d).
inline bool survey_keeps(std::uint64_t d, const std::set<int>& residues, double sample_fraction,
                         std::uint64_t seed) {
    if (!residues.count(static_cast<int>(d % 8))) return false;
    if (sample_fraction >= 1.0) return true;
    double u = static_cast<double>(derive_seed(seed, d) >> 11) * 0x1.0p-53;
    return u < sample_fraction;
}

inline std::vector<std::uint64_t> survey_domain(std::uint64_t d_max, const std::set<int>& residues,
                                                double sample_fraction = 1.0, std::uint64_t seed = default_seed) {
    std::vector<std::uint64_t> out;
    for (std::uint64_t d = 1; d <= d_max; ++d)
        if (survey_keeps(d, residues, sample_fraction, seed) && is_squarefree(d)) out.push_back(d);
    return out;
}

inline SelmerSurvey selmer_survey(const CurveE& E, std::uint64_t d_max, const std::set<int>& residues,
                                  double sample_fraction = 1.0, std::uint64_t seed = default_seed) {
    if (d_max < 1) throw precondition_error("d_max must be at least 1");
    auto chunk = [&](parallel::Range r) {
        SelmerSurvey part;
        SelmerMatrixBuilder builder(E);
        for (std::uint64_t d = r.begin + 1; d <= r.end; ++d) {
            if (!survey_keeps(d, residues, sample_fraction, seed) || !is_squarefree(d)) continue;
            ++part.histogram[builder.result(static_cast<std::int64_t>(d)).n1()];
            ++part.processed;
        }
        return part;
    };
    auto merge = [](SelmerSurvey a, SelmerSurvey b) {
        a.processed += b.processed;
        for (auto& [k, v] : b.histogram) a.histogram[k] += v;
        return a;
    };
    return parallel::chunked_reduce<SelmerSurvey>(d_max, chunk, merge, SelmerSurvey{}, 128);
}

}  // namespace twistlab
