#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "arithmetic.hpp"
#include "errors.hpp"
#include "parallel.hpp"
#include "rankdist.hpp"

namespace twistlab {

// Ordered prime divisors of a squarefree integer.
struct FactorProfile {
    std::uint64_t n = 1;
    std::vector<std::uint64_t> primes;
    std::vector<double> loglogs;

    std::size_t r() const { return primes.size(); }
};

inline FactorProfile profile_from_primes(std::vector<std::uint64_t> primes) {
    if (primes.empty()) throw precondition_error("a profile needs at least one prime");
    std::sort(primes.begin(), primes.end());
    FactorProfile f;
    for (std::size_t i = 0; i < primes.size(); ++i) {
        if (i && primes[i] == primes[i - 1]) throw precondition_error("repeated prime in profile");
        if (primes[i] < 2) throw precondition_error("profile entries must be primes");
        f.n *= primes[i];
        f.loglogs.push_back(std::log(std::log(static_cast<double>(primes[i]))));
    }
    f.primes = std::move(primes);
    return f;
}

inline FactorProfile factor_profile(std::uint64_t n) {
    if (n < 2) throw precondition_error("profile of n < 2 has no primes");
    std::vector<std::uint64_t> ps;
    for (auto [p, e] : factorize(n)) {
        if (e > 1) throw precondition_error(std::to_string(n) + " is not squarefree");
        ps.push_back(p);
    }
    return profile_from_primes(std::move(ps));
}

struct SpacingParams {
    double N = 1e7, D = 3, D1 = 10, C0 = 2;
};

struct SpacingFlags {
    bool comfortable = true;
    bool regular = true;
    bool extravagant = false;
    std::optional<std::size_t> witness_m;  // 1-based
    bool r_in_range = true;
    std::vector<std::string> warnings;
};

// |r - log(log N / log D)| <= log(log N / log D)^(2/3)
inline bool r_in_range(std::size_t r, double N, double D) {
    const double x = std::log(std::log(N) / std::log(D));
    if (!(x > 0)) return false;
    return std::abs(static_cast<double>(r) - x) <= std::pow(x, 2.0 / 3.0);
}

inline bool comfortably_spaced(std::span<const std::uint64_t> p, double D1) {
    for (std::size_t i = 0; i + 1 < p.size(); ++i) {
        const double pi = static_cast<double>(p[i]);
        if (pi <= D1) continue;
        if (!(4 * D1 < 2 * pi && 2 * pi < static_cast<double>(p[i + 1]))) return false;
    }
    return true;
}

inline bool regular_profile(const FactorProfile& f, double D, double C0) {
    const double lld = std::log(std::log(D));
    for (std::size_t i = 1; 3 * i <= f.r(); ++i) {
        const double di = static_cast<double>(i);
        if (!(std::abs(f.loglogs[i - 1] - lld - di) <
              std::pow(C0, 0.2) * std::pow(std::max(di, C0), 0.8)))
            return false;
    }
    return true;
}

// Smallest m in (r^(1/2)/2, r/2) with
// log p_m >= log(log p_m / log D) * sqrt(log log log N) * sum_{i<m} log p_i.
inline std::optional<std::size_t> extravagant_witness(const FactorProfile& f, double N, double D) {
    const double lll = std::log(std::log(std::log(N)));
    const double root = lll > 0 ? std::sqrt(lll) : 0.0;
    const double r = static_cast<double>(f.r());
    double prefix = 0;
    for (std::size_t m = 1; m <= f.r(); ++m) {
        const double lp = std::log(static_cast<double>(f.primes[m - 1]));
        const double dm = static_cast<double>(m);
        if (dm > 0.5 * std::sqrt(r) && dm < 0.5 * r) {
            if (lp >= std::log(lp / std::log(D)) * root * prefix) return m;
        }
        prefix += lp;
    }
    return std::nullopt;
}

inline SpacingFlags spacing_flags(const FactorProfile& f, const SpacingParams& prm) {
    SpacingFlags out;
    out.comfortable = comfortably_spaced(f.primes, prm.D1);
    out.regular = regular_profile(f, prm.D, prm.C0);
    out.witness_m = extravagant_witness(f, prm.N, prm.D);
    out.extravagant = out.witness_m.has_value();
    out.r_in_range = r_in_range(f.r(), prm.N, prm.D);
    if (!out.r_in_range)
        out.warnings.push_back("r=" + std::to_string(f.r()) + " is outside the admissible window for N, D");
    return out;
}

// ---- Poisson model ----

struct PoissonSample {
    double L = 0;
    std::vector<double> order_stats;
};

inline PoissonSample sample_poisson(std::size_t n, double L, Rng& rng) {
    PoissonSample s{L, std::vector<double>(n)};
    std::uniform_real_distribution<double> u(0.0, L);
    for (auto& x : s.order_stats) x = u(rng);
    std::sort(s.order_stats.begin(), s.order_stats.end());
    return s;
}

// U_(i+1) - U_(i) >= delta * exp(-U_(i)) whenever U_(i) >= L0
inline bool comfortably_spaced(const PoissonSample& s, double delta, double L0) {
    const auto& u = s.order_stats;
    for (std::size_t i = 0; i + 1 < u.size(); ++i) {
        if (u[i] < L0) continue;
        if (u[i + 1] - u[i] < delta * std::exp(-u[i])) return false;
    }
    return true;
}

inline bool regular_sample(const PoissonSample& s, double C0) {
    const auto& u = s.order_stats;
    for (std::size_t i = 1; i <= u.size(); ++i) {
        const double di = static_cast<double>(i);
        if (!(std::abs(u[i - 1] - di) < std::pow(C0, 0.2) * std::pow(std::max(di, C0), 0.8))) return false;
    }
    return true;
}

// some m >= sqrt(n): exp(U_m) >= U_m * sqrt(log L) * sum_{i<m} exp(U_i), in log space
inline std::optional<std::size_t> extravagant_witness(const PoissonSample& s) {
    const auto& u = s.order_stats;
    const double half_lll = 0.5 * std::log(std::log(s.L));
    double lse = -INFINITY;  // log sum exp of U_1..U_{m-1}
    for (std::size_t m = 1; m <= u.size(); ++m) {
        if (static_cast<double>(m * m) >= static_cast<double>(u.size())) {
            if (u[m - 1] <= 0 || lse == -INFINITY) return m;
            if (u[m - 1] >= std::log(u[m - 1]) + half_lll + lse) return m;
        }
        const double x = u[m - 1];
        lse = lse == -INFINITY ? x : std::max(lse, x) + std::log1p(std::exp(-std::abs(lse - x)));
    }
    return std::nullopt;
}

struct PoissonReport {
    std::size_t n = 0;
    double L = 0, L0 = 0, delta = 0, C0 = 0;
    std::uint64_t trials = 0;
    std::uint64_t comfortable_failures = 0, regular_failures = 0, extravagant_failures = 0;
    ProbabilityEstimate comfortable, regular, extravagant;
};

inline PoissonReport poisson_experiment(std::size_t n, double L, double L0, double delta, double C0,
                                        std::uint64_t trials, std::uint64_t seed) {
    if (!(L > 2)) throw precondition_error("interval length must exceed 2");
    if (!(std::abs(L - static_cast<double>(n)) < std::pow(L, 0.75)))
        throw precondition_error("need |L - n| < L^(3/4)");
    if (!(L0 >= 0 && L0 < L)) throw precondition_error("need 0 <= L0 < L");
    if (delta < 0 || C0 <= 0) throw precondition_error("need delta >= 0 and C0 > 0");
    struct Tally {
        std::uint64_t c = 0, g = 0, x = 0;
    };
    auto t = parallel::chunked_reduce<Tally>(
        trials,
        [&](parallel::Range r) {
            Tally t;
            Rng rng(derive_seed(seed, r.index));
            for (auto i = r.begin; i < r.end; ++i) {
                auto s = sample_poisson(n, L, rng);
                t.c += !comfortably_spaced(s, delta, L0);
                t.g += !regular_sample(s, C0);
                t.x += !extravagant_witness(s).has_value();
            }
            return t;
        },
        [](Tally a, Tally b) { return Tally{a.c + b.c, a.g + b.g, a.x + b.x}; }, Tally{});
    PoissonReport rep{n, L, L0, delta, C0, trials, t.c, t.g, t.x, {}, {}, {}};
    rep.comfortable = wilson_interval(t.c, trials);
    rep.regular = wilson_interval(t.g, trials);
    rep.extravagant = wilson_interval(t.x, trials);
    return rep;
}

// ---- Ramanujan integral ----

struct RamanujanValue {
    double value = 0, asymptotic = 0, bound_rhs = 0;
};

namespace detail {

struct Simpson {
    std::uint64_t budget;
    std::uint64_t evals = 0;

    template <class F>
    double integrate(F&& f, double a, double b, double tol) {
        if (!(b > a)) return 0.0;
        const double fa = f(a), fb = f(b), m = 0.5 * (a + b), fm = f(m);
        evals += 3;
        const double whole = (b - a) / 6 * (fa + 4 * fm + fb);
        return step(f, a, b, fa, fm, fb, whole, tol, 0);
    }

    template <class F>
    double step(F& f, double a, double b, double fa, double fm, double fb, double whole, double eps,
                int depth) {
        const double m = 0.5 * (a + b), lm = 0.5 * (a + m), rm = 0.5 * (m + b);
        const double flm = f(lm), frm = f(rm);
        evals += 2;
        if (evals > budget) throw convergence_error("quadrature budget exhausted");
        const double left = (m - a) / 6 * (fa + 4 * flm + fm);
        const double right = (b - m) / 6 * (fm + 4 * frm + fb);
        const double diff = left + right - whole;
        // below ~1e-15 relative the estimate is rounding noise
        const double floor = 1e-15 * (std::abs(left) + std::abs(right));
        if (depth >= 4 && std::abs(diff) <= std::max(15 * eps, floor)) return left + right + diff / 15;
        if (depth >= 60) throw convergence_error("quadrature tolerance not reachable");
        return step(f, a, m, fa, flm, fm, left, eps / 2, depth + 1) +
               step(f, m, b, fm, frm, fb, right, eps / 2, depth + 1);
    }
};

// I_k(u) with absolute tolerance tol.
inline double ramanujan_level(unsigned k, double u, double tol, Simpson& q) {
    if (k == 0) return u >= 0 ? 1.0 : 0.0;
    if (u < k) return 0.0;
    const double top = u - k + 1;  // t ranges over [1, top]
    const double mid = std::clamp(u / 2, 1.0, top);
    const double inner_tol = tol / 8;
    // t in [1, mid] with t = e^s
    double lower = q.integrate(
        [&](double s) { return ramanujan_level(k - 1, u - std::exp(s), inner_tol, q); }, 0.0, std::log(mid),
        tol / 2);
    if (mid >= top) return lower;
    // t in [mid, top] with v = u - t in [k-1, u - mid]
    double upper;
    if (k == 1) {
        upper = q.integrate([&](double v) { return 1.0 / (u - v); }, 0.0, u - mid, tol / 2);
    } else {
        upper = q.integrate(
            [&](double w) {
                const double v = std::exp(w);
                return ramanujan_level(k - 1, v, inner_tol, q) * v / (u - v);
            },
            std::log(static_cast<double>(k - 1)), std::log(u - mid), tol / 2);
    }
    return lower + upper;
}

}  // namespace detail

inline constexpr unsigned ramanujan_max_k = 5;

// I_k(u) over t_i >= 1, sum t_i <= u, measure prod dt_i / t_i; tol is relative to (log u)^k.
inline RamanujanValue ramanujan_I(unsigned k, double u, double tol = 1e-8) {
    if (!(u > 0)) throw precondition_error("ramanujan_I needs u > 0");
    if (!(tol > 0)) throw precondition_error("tolerance must be positive");
    if (k > ramanujan_max_k) throw capacity_error("ramanujan_I supports k <= 5");
    RamanujanValue out;
    const double lu = std::log(u);
    if (k == 0) {
        out.value = 1;
        out.asymptotic = 1;
        return out;
    }
    if (u < k) {
        out.value = 0;
    } else {
        detail::Simpson q{200'000'000};
        out.value = detail::ramanujan_level(k, u, tol * std::max(1.0, std::pow(lu, k)), q);
    }
    if (lu > 0) {
        const double alpha = k / lu;
        out.asymptotic = std::exp(-std::numbers::egamma * alpha) / std::tgamma(1 + alpha) * std::pow(lu, k);
        const double lll = lu > 1 ? std::log(lu) : 0.0;
        out.bound_rhs = (alpha + 1) * std::pow(lu, k) * lll * lll * lll / lu;
    }
    return out;
}

// ---- S_r(N, D) sums ----

struct SrndResult {
    std::uint64_t members = 0;          // squarefree n < N, r distinct primes all > D
    double F_r = 0;                     // sum over ordered tuples of 1/(p_1...p_r)
    double G_r = 0;                     // sum of log(p_1...p_r)
    std::uint64_t H_r = 0;              // ordered tuples, repeats allowed
    std::uint64_t distinct_tuples = 0;  // ordered tuples with distinct entries
    double u = 0;                       // log N / exp(F(D) - B1)
    double G_estimate = 0, H_estimate = 0;
};

inline constexpr std::uint64_t srnd_limit = 10'000'000;

namespace detail {

inline std::uint64_t factorial(unsigned r) {
    std::uint64_t f = 1;
    for (unsigned i = 2; i <= r; ++i) f *= i;
    return f;
}

// Visits nondecreasing prime tuples with product < N; fn(tuple, product).
template <class Fn>
void walk_tuples(const std::vector<std::uint32_t>& primes, std::size_t first, std::uint64_t N, unsigned r,
                 std::vector<std::uint64_t>& cur, std::uint64_t prod, Fn& fn) {
    if (cur.size() == r) {
        fn(cur, prod);
        return;
    }
    const unsigned left = r - static_cast<unsigned>(cur.size());
    for (std::size_t i = first; i < primes.size(); ++i) {
        // smallest completion uses p for every remaining slot
        std::uint64_t p = primes[i], q = prod;
        bool fits = true;
        for (unsigned j = 0; j < left; ++j) {
            if (q >= (N + p - 1) / p) {
                fits = false;
                break;
            }
            q *= p;
        }
        if (!fits || q >= N) break;
        cur.push_back(p);
        walk_tuples(primes, i, N, r, cur, prod * p, fn);
        cur.pop_back();
    }
}

}  // namespace detail

// Calls fn(primes) for each member of S_r(N, D) in increasing order of smallest prime.
template <class Fn>
void for_each_srnd_member(std::uint64_t N, double D, unsigned r, const PrimeTable& table, Fn&& fn) {
    std::vector<std::uint32_t> primes;
    for (auto p : table.primes())
        if (p > D && p < N) primes.push_back(p);
    std::vector<std::uint64_t> cur;
    auto visit = [&](const std::vector<std::uint64_t>& t, std::uint64_t) {
        for (std::size_t i = 1; i < t.size(); ++i)
            if (t[i] == t[i - 1]) return;
        fn(std::span<const std::uint64_t>(t));
    };
    detail::walk_tuples(primes, 0, N, r, cur, 1, visit);
}

inline SrndResult srnd_enumerate(std::uint64_t N, double D, unsigned r) {
    if (N > srnd_limit) throw capacity_error("srnd_enumerate is limited to N <= 10^7");
    if (r == 0) throw precondition_error("r must be at least 1");
    if (r > 20) throw capacity_error("r too large for factorial weights");
    SrndResult res;
    if (N >= 3) {
        PrimeTable table(std::max<std::uint64_t>(N, 2));
        std::vector<std::uint32_t> primes;
        for (auto p : table.primes())
            if (p > D && p < N) primes.push_back(p);
        const std::uint64_t rfact = detail::factorial(r);
        struct Acc {
            std::uint64_t members = 0, H = 0, distinct = 0;
            double F = 0, G = 0;
        };
        auto acc = parallel::chunked_reduce<Acc>(
            primes.size(),
            [&](parallel::Range rg) {
                Acc a;
                std::vector<std::uint64_t> cur;
                auto visit = [&](const std::vector<std::uint64_t>& t, std::uint64_t prod) {
                    // multinomial weight r! / prod(mult!)
                    std::uint64_t w = rfact;
                    bool distinct = true;
                    for (std::size_t i = 0, j; i < t.size(); i = j) {
                        j = i;
                        while (j < t.size() && t[j] == t[i]) ++j;
                        w /= detail::factorial(static_cast<unsigned>(j - i));
                        distinct &= j - i == 1;
                    }
                    const double dw = static_cast<double>(w);
                    a.H += w;
                    a.F += dw / static_cast<double>(prod);
                    a.G += dw * std::log(static_cast<double>(prod));
                    if (distinct) {
                        ++a.members;
                        a.distinct += w;
                    }
                };
                for (auto i = rg.begin; i < rg.end; ++i) {
                    // tuples whose smallest prime is primes[i]
                    std::vector<std::uint32_t> tail(primes.begin() + static_cast<std::ptrdiff_t>(i),
                                                    primes.end());
                    if (tail.empty()) break;
                    std::uint64_t p = tail[0], q = 1;
                    bool fits = true;
                    for (unsigned j = 0; j < r && fits; ++j) {
                        if (q >= (N + p - 1) / p) fits = false;
                        else q *= p;
                    }
                    if (!fits || q >= N) break;
                    cur.assign(1, p);
                    detail::walk_tuples(tail, 0, N, r, cur, p, visit);
                }
                return a;
            },
            [](Acc x, Acc y) {
                return Acc{x.members + y.members, x.H + y.H, x.distinct + y.distinct, x.F + y.F, x.G + y.G};
            },
            Acc{});
        res.members = acc.members;
        res.H_r = acc.H;
        res.distinct_tuples = acc.distinct;
        res.F_r = acc.F;
        res.G_r = acc.G;
    }
    const double FD = D >= 2 ? mertens_sum(static_cast<std::uint64_t>(D)) : 0.0;
    const double lN = std::log(static_cast<double>(N));
    res.u = lN / std::exp(FD - mertens_constant);
    if (r - 1 <= ramanujan_max_k) {
        const double I = ramanujan_I(r - 1, res.u, 1e-7).value;
        res.G_estimate = r * static_cast<double>(N) * I;
        res.H_estimate = res.G_estimate / lN;
    }
    return res;
}

struct SpacingSurvey {
    std::uint64_t members = 0;
    std::uint64_t not_comfortable = 0, not_regular = 0, not_extravagant = 0;
    bool r_in_range = true;
};

inline SpacingSurvey spacing_survey(std::uint64_t N, unsigned r, const SpacingParams& prm) {
    if (N > srnd_limit) throw capacity_error("spacing survey is limited to N <= 10^7");
    SpacingSurvey s;
    s.r_in_range = r_in_range(r, static_cast<double>(N), prm.D);
    if (N < 3) return s;
    PrimeTable table(N);
    for_each_srnd_member(N, prm.D, r, table, [&](std::span<const std::uint64_t> ps) {
        auto f = profile_from_primes({ps.begin(), ps.end()});
        ++s.members;
        s.not_comfortable += !comfortably_spaced(f.primes, prm.D1);
        s.not_regular += !regular_profile(f, prm.D, prm.C0);
        s.not_extravagant += !extravagant_witness(f, prm.N, prm.D).has_value();
    });
    return s;
}

// ---- boxes ----

// Fixed small primes times closed intervals [t_i, t'_i] for the large ones.
struct Box {
    std::vector<std::uint64_t> fixed_primes;
    std::vector<double> t, t_prime;
    double N = 0, D = 0, D1 = 0;
    std::size_t r = 0;

    std::size_t k() const { return fixed_primes.size(); }
};

inline double box_widening(std::size_t i, std::size_t k, double D1) {
    return 1.0 / (std::exp(static_cast<double>(i - k)) * std::log(D1));
}

inline double box_measure(std::size_t k, std::size_t r, double D1) {
    if (k > r) throw precondition_error("k exceeds r");
    if (!(D1 > 1)) throw precondition_error("D1 must exceed 1");
    double m = 1;
    for (std::size_t i = k + 1; i <= r; ++i) m *= std::log1p(box_widening(i, k, D1));
    return m;
}

inline Box make_box(double N, double D, double D1, const FactorProfile& anchor) {
    if (!(D1 > 1)) throw precondition_error("D1 must exceed 1");
    if (!comfortably_spaced(anchor.primes, D1))
        throw precondition_error("anchor is not comfortably spaced above D1");
    Box b;
    b.N = N;
    b.D = D;
    b.D1 = D1;
    b.r = anchor.r();
    for (auto p : anchor.primes)
        if (static_cast<double>(p) < D1) b.fixed_primes.push_back(p);
    const std::size_t k = b.k();
    for (std::size_t i = k + 1; i <= b.r; ++i) {
        const double ti = static_cast<double>(anchor.primes[i - 1]);
        b.t.push_back(ti);
        b.t_prime.push_back(ti * (1 + box_widening(i, k, D1)));
    }
    for (std::size_t j = 0; j + 1 < b.t.size(); ++j)
        if (!(b.t_prime[j] < b.t[j + 1])) throw precondition_error("box intervals overlap");
    return b;
}

inline bool box_contains(const Box& b, const FactorProfile& f) {
    if (f.r() != b.r) return false;
    for (std::size_t i = 0; i < b.k(); ++i)
        if (f.primes[i] != b.fixed_primes[i]) return false;
    for (std::size_t j = 0; j < b.t.size(); ++j) {
        const double p = static_cast<double>(f.primes[b.k() + j]);
        if (p < b.t[j] || p > b.t_prime[j]) return false;
    }
    return true;
}

// Primes in the closed interval [lo, hi].
inline std::vector<std::uint64_t> primes_in_interval(double lo, double hi) {
    std::vector<std::uint64_t> out;
    const auto a = static_cast<std::uint64_t>(std::ceil(std::max(lo, 2.0)));
    const auto b = static_cast<std::uint64_t>(std::floor(hi));
    if (b < a) return out;
    std::vector<bool> comp(b - a + 1, false);
    for (std::uint64_t p = 2; p * p <= b; ++p) {
        std::uint64_t start = std::max(p * p, (a + p - 1) / p * p);
        for (std::uint64_t m = start; m <= b; m += p) comp[m - a] = true;
    }
    for (std::uint64_t x = a; x <= b; ++x)
        if (!comp[x - a]) out.push_back(x);
    return out;
}

// The prime sets X_{k+1}, ..., X_r of a box.
inline std::vector<std::vector<std::uint64_t>> box_prime_sets(const Box& b) {
    std::vector<std::vector<std::uint64_t>> out;
    for (std::size_t j = 0; j < b.t.size(); ++j) out.push_back(primes_in_interval(b.t[j], b.t_prime[j]));
    return out;
}

}  // namespace twistlab
