#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "errors.hpp"
#include "f2linalg.hpp"
#include "parallel.hpp"

namespace twistlab {

using Point = std::vector<std::uint32_t>;

// X_1 x ... x X_d with X_i = {0, ..., sizes[i]-1}; coordinates keep the sets disjoint.
struct Grid {
    std::vector<std::uint32_t> sizes;

    Grid() = default;
    explicit Grid(std::vector<std::uint32_t> s) : sizes(std::move(s)) {
        if (sizes.empty()) throw precondition_error("grid needs at least one component");
        if (sizes.size() > 16) throw capacity_error("grid dimension above 16");
        for (auto n : sizes)
            if (n == 0) throw precondition_error("grid components must be nonempty");
    }
    std::size_t d() const { return sizes.size(); }
    std::uint64_t point_count() const {
        std::uint64_t c = 1;
        for (auto n : sizes) c *= n;
        return c;
    }
    std::uint32_t min_size() const { return *std::min_element(sizes.begin(), sizes.end()); }
};

inline std::uint64_t point_index(const Grid& g, const Point& x) {
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < g.d(); ++i) idx = idx * g.sizes[i] + x[i];
    return idx;
}

inline Point point_at(const Grid& g, std::uint64_t idx) {
    Point x(g.d());
    for (std::size_t i = g.d(); i-- > 0;) {
        x[i] = static_cast<std::uint32_t>(idx % g.sizes[i]);
        idx /= g.sizes[i];
    }
    return x;
}

using CoordSet = std::uint32_t;  // bit i set means coordinate i is in the set

// An element of Xbar_S: a pair in every coordinate of S, a single value elsewhere.
struct Cube {
    CoordSet S = 0;
    std::vector<std::pair<std::uint32_t, std::uint32_t>> coords;

    bool in_S(std::size_t i) const { return (S >> i) & 1u; }
    bool degenerate(std::size_t i) const { return in_S(i) && coords[i].first == coords[i].second; }
    bool full() const {
        for (std::size_t i = 0; i < coords.size(); ++i)
            if (degenerate(i)) return false;
        return true;
    }
    friend bool operator==(const Cube&, const Cube&) = default;
};

inline Cube point_cube(const Point& x) {
    Cube c;
    for (auto v : x) c.coords.emplace_back(v, v);
    return c;
}

inline std::uint64_t cube_count(const Grid& g, CoordSet S) {
    std::uint64_t c = 1;
    for (std::size_t i = 0; i < g.d(); ++i) c *= ((S >> i) & 1u) ? std::uint64_t{g.sizes[i]} * g.sizes[i] : g.sizes[i];
    return c;
}

inline std::uint64_t cube_index(const Grid& g, const Cube& c) {
    std::uint64_t idx = 0;
    for (std::size_t i = 0; i < g.d(); ++i) {
        const std::uint64_t n = g.sizes[i];
        if (c.in_S(i))
            idx = idx * n * n + c.coords[i].first * n + c.coords[i].second;
        else
            idx = idx * n + c.coords[i].first;
    }
    return idx;
}

inline Cube cube_at(const Grid& g, CoordSet S, std::uint64_t idx) {
    Cube c;
    c.S = S;
    c.coords.resize(g.d());
    for (std::size_t i = g.d(); i-- > 0;) {
        const std::uint64_t n = g.sizes[i];
        if ((S >> i) & 1u) {
            const auto v = idx % (n * n);
            idx /= n * n;
            c.coords[i] = {static_cast<std::uint32_t>(v / n), static_cast<std::uint32_t>(v % n)};
        } else {
            const auto v = static_cast<std::uint32_t>(idx % n);
            idx /= n;
            c.coords[i] = {v, v};
        }
    }
    return c;
}

// xhat(T): collapse each coordinate of S - T to one of its two entries.
inline std::vector<Cube> cube_faces(const Cube& c, CoordSet T) {
    if ((T & ~c.S) != 0) throw precondition_error("face set T must be contained in S");
    const CoordSet U = c.S & ~T;
    std::vector<Cube> out;
    Cube base = c;
    base.S = T;
    out.push_back(base);
    for (std::size_t i = 0; i < c.coords.size(); ++i) {
        if (!((U >> i) & 1u)) continue;
        const auto [a, b] = c.coords[i];
        const std::size_t m = out.size();
        for (std::size_t j = 0; j < m; ++j) {
            out[j].coords[i] = {a, a};
            if (a != b) {
                Cube alt = out[j];
                alt.coords[i] = {b, b};
                out.push_back(std::move(alt));
            }
        }
    }
    return out;
}

inline std::vector<Point> cube_vertices(const Cube& c) {
    std::vector<Point> out;
    for (auto& f : cube_faces(c, 0)) {
        Point p;
        for (auto& [a, b] : f.coords) p.push_back(a);
        out.push_back(std::move(p));
    }
    return out;
}

// Function Z -> F2 stored over all grid points; -1 marks points outside Z.
using VertexFunction = std::vector<std::int8_t>;

// dF(c): sum over the vertices when the cube is full, else 0.
inline int cube_sum_dF(const Grid& g, const VertexFunction& F, const Cube& c) {
    int s = 0;
    for (auto& v : cube_vertices(c)) {
        const auto val = F[point_index(g, v)];
        if (val < 0) throw precondition_error("cube vertex lies outside Z");
        s ^= val & 1;
    }
    return c.full() ? s : 0;
}

// ---- subgrid search ----

enum class SubgridStatus { found, absent, unknown };

inline const char* to_string(SubgridStatus s) {
    return s == SubgridStatus::found ? "found" : s == SubgridStatus::absent ? "absent" : "unknown";
}

struct SubgridSearch {
    SubgridStatus status = SubgridStatus::unknown;
    std::vector<std::vector<std::uint32_t>> Z;
    bool exact = false;  // search was allowed to run to completion
    std::uint64_t nodes = 0;
};

inline constexpr std::uint64_t subgrid_exact_limit = std::uint64_t{1} << 18;

namespace detail {

struct SubgridSearcher {
    const Grid& g;
    const std::vector<bool>& Y;
    std::uint32_t r;
    std::uint64_t budget;
    std::uint64_t nodes = 0;
    bool out_of_budget = false;
    std::vector<std::vector<std::uint32_t>> Z;

    // every point of Z_0 x ... x Z_{j-1} x {x} x (anything later) lies in Y for at least r^(d-1-j) completions
    bool viable(std::size_t j, std::uint32_t x) const {
        std::vector<Point> prefix{Point{}};
        for (std::size_t i = 0; i < j; ++i) {
            std::vector<Point> next;
            for (auto& p : prefix)
                for (auto z : Z[i]) {
                    auto q = p;
                    q.push_back(z);
                    next.push_back(std::move(q));
                }
            prefix = std::move(next);
        }
        std::uint64_t need = 1;
        for (std::size_t i = j + 1; i < g.d(); ++i) need *= r;
        for (auto& p : prefix) {
            auto q = p;
            q.push_back(x);
            // count completions of q inside Y
            std::uint64_t tail = 1;
            for (std::size_t i = j + 1; i < g.d(); ++i) tail *= g.sizes[i];
            std::uint64_t base = 0;
            for (std::size_t i = 0; i <= j; ++i) base = base * g.sizes[i] + q[i];
            std::uint64_t hits = 0;
            for (std::uint64_t t = 0; t < tail && hits < need; ++t) hits += Y[base * tail + t];
            if (hits < need) return false;
        }
        return true;
    }

    bool choose(std::size_t j) {
        if (j == g.d()) return true;
        std::vector<std::uint32_t> cand;
        for (std::uint32_t x = 0; x < g.sizes[j]; ++x)
            if (viable(j, x)) cand.push_back(x);
        if (cand.size() < r) return false;
        // r-subsets of cand in lexicographic order
        std::vector<std::size_t> idx(r);
        for (std::uint32_t i = 0; i < r; ++i) idx[i] = i;
        while (true) {
            if (++nodes > budget) {
                out_of_budget = true;
                return false;
            }
            Z[j].clear();
            for (auto k : idx) Z[j].push_back(cand[k]);
            if (j + 1 == g.d() || choose(j + 1)) return true;
            if (out_of_budget) return false;
            std::size_t k = r;
            while (k-- > 0 && idx[k] == cand.size() - r + k) {
            }
            if (k == static_cast<std::size_t>(-1)) break;
            ++idx[k];
            for (std::size_t m = k + 1; m < r; ++m) idx[m] = idx[m - 1] + 1;
        }
        return false;
    }
};

}  // namespace detail

// Z_i subset of X_i with |Z_i| = r and Z_1 x ... x Z_d inside Y.
inline SubgridSearch find_subgrid(const Grid& g, const std::vector<bool>& Y, std::uint32_t r,
                                  std::uint64_t budget = 1'000'000) {
    if (r == 0) throw precondition_error("r must be at least 1");
    if (Y.size() != g.point_count()) throw dimension_error("Y must have one flag per grid point");
    SubgridSearch out;
    out.exact = g.point_count() <= subgrid_exact_limit;
    detail::SubgridSearcher s{g, Y, r, out.exact ? ~std::uint64_t{0} : budget, 0, false, {}};
    s.Z.assign(g.d(), {});
    const bool ok = s.choose(0);
    out.nodes = s.nodes;
    if (ok) {
        out.status = SubgridStatus::found;
        out.Z = s.Z;
    } else {
        out.status = s.out_of_budget ? SubgridStatus::unknown : SubgridStatus::absent;
    }
    return out;
}

inline double binomial(std::uint64_t n, std::uint64_t k) {
    if (k > n) return 0;
    double c = 1;
    for (std::uint64_t i = 0; i < k; ++i) c = c * static_cast<double>(n - i) / static_cast<double>(i + 1);
    return c;
}

// N(r, Y): number of (Z_1, ..., Z_d) with |Z_i| = r and product inside Y; d <= 2.
inline std::uint64_t count_subgrids(const Grid& g, const std::vector<bool>& Y, std::uint32_t r) {
    if (g.d() > 2) throw capacity_error("exhaustive subgrid count supports d <= 2");
    if (g.d() == 1) {
        return static_cast<std::uint64_t>(std::llround(binomial(std::count(Y.begin(), Y.end(), true), r)));
    }
    const std::uint32_t n0 = g.sizes[0], n1 = g.sizes[1];
    if (n0 > 20) throw capacity_error("exhaustive subgrid count supports |X_1| <= 20");
    std::uint64_t total = 0;
    std::vector<std::uint32_t> rows(r);
    // r-subsets of X_1 as bitmasks
    for (std::uint32_t mask = 0; mask < (1u << n0); ++mask) {
        if (static_cast<std::uint32_t>(std::popcount(mask)) != r) continue;
        std::uint64_t cols = 0;
        for (std::uint32_t c = 0; c < n1; ++c) {
            bool all = true;
            for (std::uint32_t a = 0; a < n0 && all; ++a)
                if ((mask >> a) & 1u) all = Y[std::uint64_t{a} * n1 + c];
            cols += all;
        }
        total += static_cast<std::uint64_t>(std::llround(binomial(cols, r)));
    }
    return total;
}

struct SubgridBound {
    bool precondition = false;
    double bound = 0;
};

// d = 1: the base case (delta n - r)^r / r!, valid once delta n >= r.
// d >= 2: (2^{-d-1} delta)^{(r^{d+1}-r)/(r-1)} n^{rd} / (r!)^d under (2^{-d-1} delta)^{2 r^{d-1}} n / r >= 1.
inline SubgridBound subgrid_bound(std::uint32_t n, std::uint32_t r, std::size_t d, double delta) {
    SubgridBound b;
    double rf = 1;
    for (std::uint32_t i = 2; i <= r; ++i) rf *= i;
    if (d == 1) {
        b.precondition = delta * n >= r;
        b.bound = b.precondition ? std::pow(delta * n - r, r) / rf : 0;
        return b;
    }
    if (r < 2) throw precondition_error("the counting bound needs r >= 2 for d >= 2");
    const double base = std::pow(2.0, -static_cast<double>(d) - 1) * delta;
    const double rd1 = std::pow(static_cast<double>(r), static_cast<double>(d) - 1);
    b.precondition = std::pow(base, 2 * rd1) * n / r >= 1;
    const double expo = (std::pow(static_cast<double>(r), static_cast<double>(d) + 1) - r) / (r - 1.0);
    b.bound = std::pow(base, expo) * std::pow(static_cast<double>(n), static_cast<double>(r * d)) /
              std::pow(rf, static_cast<double>(d));
    return b;
}

struct SubgridCheck {
    std::uint64_t instances = 0;
    std::uint64_t checked = 0;     // precondition met
    std::uint64_t skipped = 0;     // precondition not met
    std::uint64_t violations = 0;  // N(r, Y) below the bound with the precondition met
    std::uint64_t violations_without_precondition = 0;  // informative only
    double min_ratio = INFINITY;   // min N / bound over checked instances
};

inline void guard_subgrid_check(std::uint32_t n, std::uint32_t r, std::size_t d) {
    if (n > 6 || d > 2 || d < 1 || r != 2) throw capacity_error("subgrid check supports n <= 6, d <= 2, r = 2");
}

inline void tally_subgrid(SubgridCheck& c, const Grid& g, const std::vector<bool>& Y, std::uint32_t n,
                          std::uint32_t r) {
    const double delta = static_cast<double>(std::count(Y.begin(), Y.end(), true)) / static_cast<double>(Y.size());
    const auto b = subgrid_bound(n, r, g.d(), delta);
    const auto N = static_cast<double>(count_subgrids(g, Y, r));
    ++c.instances;
    if (!b.precondition) {
        ++c.skipped;
        if (N < b.bound) ++c.violations_without_precondition;
        return;
    }
    ++c.checked;
    if (N < b.bound) ++c.violations;
    if (b.bound > 0) c.min_ratio = std::min(c.min_ratio, N / b.bound);
}

// Random Y of random density, compared against the counting bound.
inline SubgridCheck count_subgrids_check(std::uint32_t n, std::uint32_t r, std::size_t d, std::uint64_t trials,
                                         std::uint64_t seed) {
    guard_subgrid_check(n, r, d);
    Grid g(std::vector<std::uint32_t>(d, n));
    Rng rng(seed);
    SubgridCheck c;
    std::uniform_real_distribution<double> unit(0, 1);
    for (std::uint64_t t = 0; t < trials; ++t) {
        const double p = unit(rng);
        std::vector<bool> Y(g.point_count());
        for (std::size_t i = 0; i < Y.size(); ++i) Y[i] = unit(rng) < p;
        tally_subgrid(c, g, Y, n, r);
    }
    return c;
}

// Every Y subset of X.
inline SubgridCheck subgrid_sweep(std::uint32_t n, std::uint32_t r, std::size_t d) {
    guard_subgrid_check(n, r, d);
    Grid g(std::vector<std::uint32_t>(d, n));
    const std::uint64_t P = g.point_count();
    if (P > 25) throw capacity_error("sweep over all Y needs |X| <= 25");
    return parallel::chunked_reduce<SubgridCheck>(
        std::uint64_t{1} << P,
        [&](parallel::Range rg) {
            SubgridCheck c;
            std::vector<bool> Y(P);
            for (auto m = rg.begin; m < rg.end; ++m) {
                for (std::uint64_t i = 0; i < P; ++i) Y[i] = (m >> i) & 1u;
                tally_subgrid(c, g, Y, n, r);
            }
            return c;
        },
        [](SubgridCheck a, SubgridCheck b) {
            a.instances += b.instances;
            a.checked += b.checked;
            a.skipped += b.skipped;
            a.violations += b.violations;
            a.violations_without_precondition += b.violations_without_precondition;
            a.min_ratio = std::min(a.min_ratio, b.min_ratio);
            return a;
        },
        SubgridCheck{});
}

// ---- additive-restrictive systems ----

struct ARLevel {
    CoordSet S = 0;
    unsigned group_bits = 0;            // |A_S| = 2^group_bits
    std::vector<std::uint8_t> in_Y;     // over Xbar_S
    std::vector<std::uint8_t> in_Ycirc;
    std::vector<std::uint32_t> F;       // F_S, meaningful on Y_S
    std::uint64_t y_count = 0, ycirc_count = 0;

    double ycirc_density() const { return static_cast<double>(ycirc_count) / static_cast<double>(in_Y.size()); }
};

struct ARSystem {
    Grid grid;
    std::vector<ARLevel> levels;  // indexed by S

    const ARLevel& level(CoordSet S) const { return levels.at(S); }
    unsigned max_group_bits() const {
        unsigned b = 0;
        for (auto& l : levels) b = std::max(b, l.group_bits);
        return b;
    }
};

inline constexpr std::uint64_t ar_cube_limit = std::uint64_t{1} << 24;

// F_S(xbar) = sum over the 2^|S| vertex choices (with multiplicity) of G_S(vertex).
// Additive in each coordinate: the (p1,p2) and (p2,p3) sums meet in p2 twice.
inline ARSystem ar_system_from_potentials(const Grid& g, const std::vector<unsigned>& bits,
                                          const std::vector<std::vector<std::uint32_t>>& G) {
    const std::size_t d = g.d();
    if (d > 4) throw capacity_error("AR systems support d <= 4");
    for (auto n : g.sizes)
        if (n > 8) throw capacity_error("AR systems support |X_i| <= 8");
    const CoordSet full = (CoordSet{1} << d) - 1;
    if (bits.size() != full + 1u || G.size() != full + 1u) throw dimension_error("one group per subset of [d]");
    ARSystem sys;
    sys.grid = g;
    sys.levels.resize(full + 1);
    std::vector<CoordSet> order(full + 1);
    for (CoordSet S = 0; S <= full; ++S) order[S] = S;
    std::stable_sort(order.begin(), order.end(),
                     [](CoordSet a, CoordSet b) { return std::popcount(a) < std::popcount(b); });
    for (CoordSet S : order) {
        ARLevel& L = sys.levels[S];
        L.S = S;
        L.group_bits = bits[S];
        if (bits[S] > 16) throw capacity_error("group bits above 16");
        const std::uint32_t mask = (std::uint32_t{1} << bits[S]) - 1;
        const std::uint64_t count = cube_count(g, S);
        if (count > ar_cube_limit) throw capacity_error("too many cubes");
        L.in_Y.assign(count, 0);
        L.in_Ycirc.assign(count, 0);
        L.F.assign(count, 0);
        for (std::uint64_t idx = 0; idx < count; ++idx) {
            const Cube c = cube_at(g, S, idx);
            bool inY = true;
            // codimension-one faces suffice: lower faces are faces of faces
            for (std::size_t s = 0; s < d && inY; ++s) {
                if (!((S >> s) & 1u)) continue;
                const CoordSet T = S & ~(CoordSet{1} << s);
                for (auto& f : cube_faces(c, T))
                    if (!sys.levels[T].in_Ycirc[cube_index(g, f)]) {
                        inY = false;
                        break;
                    }
            }
            if (!inY) continue;
            std::uint32_t val = 0;
            // all 2^|S| vertex tuples, repeats included
            std::vector<std::uint32_t> coordsS;
            for (std::size_t i = 0; i < d; ++i)
                if ((S >> i) & 1u) coordsS.push_back(static_cast<std::uint32_t>(i));
            for (std::uint32_t choice = 0; choice < (1u << coordsS.size()); ++choice) {
                Point v(d);
                for (std::size_t i = 0; i < d; ++i) v[i] = c.coords[i].first;
                for (std::size_t k = 0; k < coordsS.size(); ++k)
                    if ((choice >> k) & 1u) v[coordsS[k]] = c.coords[coordsS[k]].second;
                val ^= G[S][point_index(g, v)];
            }
            val &= mask;
            L.in_Y[idx] = 1;
            L.F[idx] = val;
            ++L.y_count;
            if (val == 0) {
                L.in_Ycirc[idx] = 1;
                ++L.ycirc_count;
            }
        }
    }
    return sys;
}

// bits_per_level[k] is the group size exponent for |S| = k (last entry repeats).
inline ARSystem ar_random_system(const Grid& g, const std::vector<unsigned>& bits_per_level, Rng& rng) {
    if (bits_per_level.empty()) throw precondition_error("need at least one group size");
    const CoordSet full = (CoordSet{1} << g.d()) - 1;
    std::vector<unsigned> bits(full + 1);
    std::vector<std::vector<std::uint32_t>> G(full + 1);
    for (CoordSet S = 0; S <= full; ++S) {
        const auto k = static_cast<std::size_t>(std::popcount(S));
        bits[S] = bits_per_level[std::min(k, bits_per_level.size() - 1)];
        const std::uint32_t mask = (std::uint32_t{1} << bits[S]) - 1;
        G[S].resize(g.point_count());
        for (auto& x : G[S]) x = static_cast<std::uint32_t>(rng()) & mask;
    }
    return ar_system_from_potentials(g, bits, G);
}

// Literal membership test for Y_S: every face xhat(T), T a proper subset of S, in Ycirc_T.
inline bool ar_in_Y_literal(const ARSystem& sys, const Cube& c) {
    for (CoordSet T = 0; T < (CoordSet{1} << sys.grid.d()); ++T) {
        if ((T & ~c.S) != 0 || T == c.S) continue;
        for (auto& f : cube_faces(c, T))
            if (!sys.levels[T].in_Ycirc[cube_index(sys.grid, f)]) return false;
    }
    return true;
}

struct ARTripleScan {
    std::uint64_t triples = 0, violations = 0;
};

// Additivity on every triple (p1,p2), (p2,p3), (p1,p3) lying in Y_S.
inline ARTripleScan ar_additivity_scan(const ARSystem& sys) {
    ARTripleScan scan;
    const Grid& g = sys.grid;
    for (const auto& L : sys.levels) {
        for (std::size_t s = 0; s < g.d(); ++s) {
            if (!((L.S >> s) & 1u)) continue;
            const std::uint32_t n = g.sizes[s];
            for (std::uint64_t idx = 0; idx < L.in_Y.size(); ++idx) {
                Cube c = cube_at(g, L.S, idx);
                if (c.coords[s] != std::pair<std::uint32_t, std::uint32_t>{0, 0}) continue;  // one per fiber
                auto at = [&](std::uint32_t a, std::uint32_t b) {
                    c.coords[s] = {a, b};
                    return cube_index(g, c);
                };
                for (std::uint32_t p1 = 0; p1 < n; ++p1)
                    for (std::uint32_t p2 = 0; p2 < n; ++p2)
                        for (std::uint32_t p3 = 0; p3 < n; ++p3) {
                            const auto i1 = at(p1, p2), i2 = at(p2, p3), i3 = at(p1, p3);
                            if (!L.in_Y[i1] || !L.in_Y[i2] || !L.in_Y[i3]) continue;
                            ++scan.triples;
                            scan.violations += (L.F[i1] ^ L.F[i2]) != L.F[i3];
                        }
            }
        }
    }
    return scan;
}

struct AREquivalenceScan {
    std::uint64_t fibers = 0, reflexive_failures = 0, symmetric_failures = 0, transitive_failures = 0;
};

// Within a fiber (everything fixed but coordinate s), p ~ q iff the cube with pair (p, q) at s is in Ycirc_S;
// the relation lives on V = {p : the collapsed cube is in Ycirc_{S - s}}.
inline AREquivalenceScan ar_equivalence_scan(const ARSystem& sys) {
    AREquivalenceScan scan;
    const Grid& g = sys.grid;
    for (const auto& L : sys.levels) {
        for (std::size_t s = 0; s < g.d(); ++s) {
            if (!((L.S >> s) & 1u)) continue;
            const CoordSet T = L.S & ~(CoordSet{1} << s);
            const auto& low = sys.levels[T];
            const std::uint32_t n = g.sizes[s];
            for (std::uint64_t idx = 0; idx < L.in_Y.size(); ++idx) {
                Cube c = cube_at(g, L.S, idx);
                if (c.coords[s] != std::pair<std::uint32_t, std::uint32_t>{0, 0}) continue;
                ++scan.fibers;
                Cube lowc = c;
                lowc.S = T;
                std::vector<bool> inV(n);
                for (std::uint32_t p = 0; p < n; ++p) {
                    lowc.coords[s] = {p, p};
                    inV[p] = low.in_Ycirc[cube_index(g, lowc)];
                }
                auto rel = [&](std::uint32_t p, std::uint32_t q) {
                    c.coords[s] = {p, q};
                    return L.in_Ycirc[cube_index(g, c)] != 0;
                };
                for (std::uint32_t p = 0; p < n; ++p) {
                    if (!inV[p]) continue;
                    scan.reflexive_failures += !rel(p, p);
                    for (std::uint32_t q = 0; q < n; ++q) {
                        if (!inV[q]) continue;
                        const bool pq = rel(p, q);
                        scan.symmetric_failures += pq != rel(q, p);
                        if (!pq) continue;
                        for (std::uint32_t t = 0; t < n; ++t)
                            if (inV[t] && rel(q, t) && !rel(p, t)) ++scan.transitive_failures;
                    }
                }
            }
        }
    }
    return scan;
}

struct ARDensity {
    double density = 0, bound = 0, delta = 0;
    std::uint64_t max_group = 1;
    bool ok = false;
};

// Density of Ycirc_S in Xbar_S against delta^{2^|S|} |A|^{-3^|S|}.
inline ARDensity ar_density_check(const ARSystem& sys, CoordSet S) {
    ARDensity r;
    r.delta = sys.level(0).ycirc_density();
    r.max_group = std::uint64_t{1} << sys.max_group_bits();
    const int k = std::popcount(S);
    r.density = sys.level(S).ycirc_density();
    r.bound = std::pow(r.delta, std::pow(2.0, k)) * std::pow(static_cast<double>(r.max_group), -std::pow(3.0, k));
    // exact zero bound when delta = 0; tiny slack for rounding in the power
    r.ok = r.density >= r.bound * (1 - 1e-12);
    return r;
}

// ---- imbalance of dF ----

struct ImbalanceResult {
    double ratio_estimate = 0;
    double stated_bound = 0;
    std::size_t rank = 0, kernel_dim = 0;
    std::uint64_t full_cubes = 0;
    std::size_t cube_free_subset = 0;  // size of a greedy maximal Z' containing no full cube
    std::uint64_t samples = 0;
    bool exhaustive = false;
};

enum class ScanMode { exhaustive, mc };

inline constexpr std::size_t imbalance_exhaustive_limit = 20;

namespace detail {

// Rows: full cubes in Xbar_S with all vertices in Z; columns: points of Z.
inline BitMatrix differential_matrix(const Grid& g, CoordSet S, const std::vector<std::uint64_t>& Z,
                                     std::uint64_t& full_cubes) {
    std::unordered_map<std::uint64_t, std::size_t> col;
    for (std::size_t j = 0; j < Z.size(); ++j) col[Z[j]] = j;
    std::vector<std::vector<std::size_t>> rows;
    const std::uint64_t count = cube_count(g, S);
    for (std::uint64_t idx = 0; idx < count; ++idx) {
        const Cube c = cube_at(g, S, idx);
        if (!c.full()) continue;
        std::vector<std::size_t> r;
        bool inside = true;
        for (auto& v : cube_vertices(c)) {
            auto it = col.find(point_index(g, v));
            if (it == col.end()) {
                inside = false;
                break;
            }
            r.push_back(it->second);
        }
        if (inside) rows.push_back(std::move(r));
    }
    full_cubes = rows.size();
    BitMatrix m(rows.size(), Z.size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (auto j : rows[i]) m.flip(i, j);
    return m;
}

}  // namespace detail

// Greedy maximal subset of Z (in the given order) with no full cube inside.
inline std::vector<std::uint64_t> maximal_cube_free_subset(const Grid& g, CoordSet S,
                                                           const std::vector<std::uint64_t>& Z) {
    std::vector<std::uint64_t> kept;
    for (auto z : Z) {
        kept.push_back(z);
        std::uint64_t full = 0;
        detail::differential_matrix(g, S, kept, full);
        if (full > 0) kept.pop_back();
    }
    return kept;
}

// |G_S(eps, Z)| / |G_S(Z)| by scanning (or sampling) F: Z -> F2.
inline ImbalanceResult dF_imbalance_ratio(const Grid& g, CoordSet S, const std::vector<std::uint64_t>& Z, double eps,
                                          ScanMode mode, std::uint64_t samples, std::uint64_t seed) {
    if (std::popcount(S) < 2) throw precondition_error("S needs at least two coordinates");
    if (Z.empty()) throw precondition_error("Z must be nonempty");
    const CoordSet full = (CoordSet{1} << g.d()) - 1;
    if ((S & ~full) != 0) throw precondition_error("S outside [d]");
    // pi_{[d]-S}(Z) must be a single point
    {
        const Point z0 = point_at(g, Z.front());
        for (auto z : Z) {
            const Point p = point_at(g, z);
            for (std::size_t i = 0; i < g.d(); ++i)
                if (!((S >> i) & 1u) && p[i] != z0[i]) throw precondition_error("Z does not project to one point");
        }
    }
    const std::size_t m = Z.size();
    if (mode == ScanMode::exhaustive && m > imbalance_exhaustive_limit)
        throw capacity_error("exhaustive scan needs |Z| <= 20");
    if (m > 62) throw capacity_error("|Z| above 62");
    ImbalanceResult res;
    const BitMatrix M = detail::differential_matrix(g, S, Z, res.full_cubes);
    res.rank = M.rows() ? rank(M) : 0;
    res.kernel_dim = m - res.rank;
    res.cube_free_subset = maximal_cube_free_subset(g, S, Z).size();

    // kernel basis as masks, fully reduced, pivot = highest bit
    std::vector<std::uint64_t> ker;
    {
        const BitMatrix K = M.rows() ? nullspace(M) : BitMatrix::identity(m);
        for (std::size_t i = 0; i < K.rows(); ++i) {
            std::uint64_t v = 0;
            for (std::size_t j = 0; j < m; ++j)
                if (K.get(i, j)) v |= std::uint64_t{1} << j;
            ker.push_back(v);
        }
        for (std::size_t i = 0; i < ker.size(); ++i) {
            std::sort(ker.begin() + static_cast<std::ptrdiff_t>(i), ker.end(), std::greater<>());
            if (ker[i] == 0) {
                ker.resize(i);
                break;
            }
            const std::uint64_t top = std::bit_floor(ker[i]);
            for (std::size_t j = 0; j < ker.size(); ++j)
                if (j != i && (ker[j] & top)) ker[j] ^= ker[i];
        }
    }
    auto canonical = [&](std::uint64_t F) {
        for (auto b : ker)
            if (F & std::bit_floor(b)) F ^= b;
        return F;
    };
    const double hi = (0.5 + eps) * static_cast<double>(m), lo = (0.5 - eps) * static_cast<double>(m);
    auto imbalanced = [&](std::uint64_t F) {
        const double w = std::popcount(F);
        return w > hi || w < lo;
    };

    std::size_t pi_S = 1, n = ~std::size_t{0};
    for (std::size_t i = 0; i < g.d(); ++i)
        if ((S >> i) & 1u) {
            pi_S *= g.sizes[i];
            n = std::min<std::size_t>(n, g.sizes[i]);
        }
    const double delta = static_cast<double>(m) / static_cast<double>(pi_S);
    const int k = std::popcount(S);
    res.stated_bound = std::exp(static_cast<double>(pi_S) *
                               (-delta * eps * eps + std::pow(2.0, k + 2) * std::pow(static_cast<double>(n), -std::pow(2.0, -k))));

    if (mode == ScanMode::exhaustive) {
        res.exhaustive = true;
        std::vector<bool> hit(std::size_t{1} << m, false);
        std::uint64_t distinct = 0;
        for (std::uint64_t F = 0; F < (std::uint64_t{1} << m); ++F) {
            if (!imbalanced(F)) continue;
            const auto c = canonical(F);
            if (!hit[c]) {
                hit[c] = true;
                ++distinct;
            }
        }
        res.ratio_estimate = static_cast<double>(distinct) / std::pow(2.0, static_cast<double>(res.rank));
        res.samples = std::uint64_t{1} << m;
        return res;
    }
    if (ker.size() > 22) throw capacity_error("kernel too large for coset scans");
    Rng rng(seed);
    std::unordered_map<std::uint64_t, bool> memo;
    std::uint64_t yes = 0;
    const std::uint64_t mask = m == 64 ? ~std::uint64_t{0} : (std::uint64_t{1} << m) - 1;
    for (std::uint64_t t = 0; t < samples; ++t) {
        const auto c = canonical(rng() & mask);
        auto it = memo.find(c);
        if (it == memo.end()) {
            bool any = false;
            for (std::uint64_t sub = 0; sub < (std::uint64_t{1} << ker.size()) && !any; ++sub) {
                std::uint64_t F = c;
                for (std::size_t b = 0; b < ker.size(); ++b)
                    if ((sub >> b) & 1u) F ^= ker[b];
                any = imbalanced(F);
            }
            it = memo.emplace(c, any).first;
        }
        yes += it->second;
    }
    res.samples = samples;
    res.ratio_estimate = samples ? static_cast<double>(yes) / static_cast<double>(samples) : 0;
    return res;
}

}  // namespace twistlab
