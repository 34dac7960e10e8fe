#pragma once

#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <vector>

#include "classgroup.hpp"
#include "errors.hpp"
#include "grids.hpp"
#include "legendre_equi.hpp"
#include "parallel.hpp"
#include "rankdist.hpp"
#include "report.hpp"
#include "selmer.hpp"
#include "spacing.hpp"

namespace twistlab::experiments {

// status: 0 success, 2 a check found violations
struct Outcome {
    Report report;
    int status = 0;
};

namespace detail {

template <class T>
std::string join(const std::vector<T>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        if constexpr (std::is_floating_point_v<T>)
            s += format_double(v[i]);
        else
            s += std::to_string(v[i]);
    }
    return s;
}

inline Report start(const std::string& cmd, std::uint64_t seed) {
    Report r;
    r.command = cmd;
    r.set("seed", seed);
    return r;
}

inline void finish_check(Outcome& o, std::uint64_t violations) {
    o.report.set("violations", violations);
    o.report.set("result", std::string(violations == 0 ? "pass" : "fail"));
    o.status = violations == 0 ? 0 : 2;
}

}  // namespace detail

// ---- rankdist ----

struct RankdistParams {
    std::size_t n = 2;
    std::string kind = "alternating";  // alternating | general
    std::string mode = "exact";        // exact | mc
    std::uint64_t samples = 100000;
};

inline MatrixKind parse_kind(const std::string& s) {
    if (s == "alternating" || s == "alt") return MatrixKind::alternating;
    if (s == "general" || s == "mat") return MatrixKind::general;
    throw precondition_error("unknown matrix kind '" + s + "'");
}

inline Outcome run_rankdist(const RankdistParams& p, std::uint64_t seed) {
    const MatrixKind kind = parse_kind(p.kind);
    if (p.mode != "exact" && p.mode != "mc") throw precondition_error("mode must be exact or mc");
    if (p.mode == "mc" && p.samples == 0) throw precondition_error("samples must be positive");
    Rng rng(seed);
    const bool exact = p.mode == "exact";
    auto d = kernel_rank_dist(p.n, kind, exact ? RankMode::exact : RankMode::mc, p.samples, rng);
    Outcome o{detail::start("rankdist", seed)};
    auto& r = o.report;
    r.set("n", std::uint64_t{p.n});
    r.set("kind", std::string(to_string(kind)));
    r.set("mode", p.mode);
    if (!exact) r.set("samples", p.samples);
    r.columns = {"kernel_rank", "probability", "count", "exact"};
    for (std::size_t j = 0; j < d.counts.size(); ++j) {
        if (d.counts[j] == 0) continue;
        r.add_row({std::uint64_t{j}, d.probability(j), d.counts[j],
                   exact ? d.exact_probability(j).str() : std::string()});
    }
    return o;
}

// ---- selmer-survey ----

struct SelmerSurveyParams {
    std::int64_t a = -1, b = 1;
    std::uint64_t dmax = 1000;
    std::vector<int> residues{1, 2, 3};
    double sample_fraction = 1.0;
};

inline Outcome run_selmer_survey(const SelmerSurveyParams& p, std::uint64_t seed) {
    if (!(p.sample_fraction > 0 && p.sample_fraction <= 1)) throw precondition_error("sample fraction in (0, 1]");
    std::set<int> res;
    for (int x : p.residues) {
        if (x < 0 || x > 7) throw precondition_error("residues are taken mod 8");
        res.insert(x);
    }
    const CurveE E = validate_curve(p.a, p.b);
    auto s = selmer_survey(E, p.dmax, res, p.sample_fraction, seed);
    Outcome o{detail::start("selmer-survey", seed)};
    auto& r = o.report;
    r.set("curve", std::to_string(p.a) + "," + std::to_string(p.b));
    r.set("dmax", p.dmax);
    r.set("residues", detail::join(std::vector<int>(res.begin(), res.end())));
    r.set("sample_fraction", p.sample_fraction);
    r.set("twists", s.processed);
    r.columns = {"n1", "sel2_dim", "count", "fraction"};
    for (auto& [n1, c] : s.histogram)
        r.add_row({std::int64_t{n1}, std::int64_t{n1 + 2}, c, s.fraction(n1)});
    return o;
}

// ---- class-survey ----

struct ClassSurveyParams {
    std::uint64_t dmax = 10000;
    unsigned kmax = 3;
    bool check_redei = true;
};

inline Outcome run_class_survey(const ClassSurveyParams& p, std::uint64_t seed) {
    ClassSurveyOptions opt;
    opt.check_redei = p.check_redei;
    auto s = class_survey(p.dmax, p.kmax, opt);
    Outcome o{detail::start("class-survey", seed)};
    auto& r = o.report;
    r.set("dmax", p.dmax);
    r.set("kmax", std::uint64_t{p.kmax});
    r.set("check_redei", p.check_redei);
    r.set("fields", s.fields);
    r.set("genus_mismatches", s.genus_mismatches);
    r.set("redei_mismatches", s.redei_mismatches);
    if (p.kmax >= 3) {
        auto [dist, total] = s.conditional(2, 1);
        double pos = 0;
        for (auto& [j, f] : dist)
            if (j >= 1) pos += f;
        r.set("fields_r4_eq_1", total);
        r.set("frac_r8_pos_given_r4_eq_1", pos);
    }
    for (unsigned k = 1; k <= p.kmax; ++k) r.columns.push_back("r" + std::to_string(1u << k));
    r.columns.push_back("count");
    r.columns.push_back("fraction");
    for (auto& [key, c] : s.joint) {
        std::vector<Cell> row;
        for (auto v : key) row.emplace_back(std::uint64_t{v});
        row.emplace_back(c);
        row.emplace_back(static_cast<double>(c) / static_cast<double>(s.fields));
        r.add_row(std::move(row));
    }
    detail::finish_check(o, s.genus_mismatches + s.redei_mismatches);
    return o;
}

// ---- spacing ----

struct SpacingCmdParams {
    std::string model = "poisson";  // poisson | integers
    std::size_t n = 200;
    double L = 200, L0 = 3, delta = 0.5, C0 = 2;
    std::uint64_t trials = 10000;
    std::uint64_t N = 1000000;
    unsigned r = 3;
    double D = 2, D1 = 100;
};

inline Outcome run_spacing(const SpacingCmdParams& p, std::uint64_t seed) {
    Outcome o{detail::start("spacing", seed)};
    auto& r = o.report;
    r.set("model", p.model);
    r.columns = {"predicate", "failures", "total", "rate", "lo", "hi"};
    if (p.model == "poisson") {
        auto rep = poisson_experiment(p.n, p.L, p.L0, p.delta, p.C0, p.trials, seed);
        r.set("n", std::uint64_t{p.n});
        r.set("L", p.L);
        r.set("L0", p.L0);
        r.set("delta", p.delta);
        r.set("C0", p.C0);
        r.set("trials", p.trials);
        auto row = [&](const char* name, std::uint64_t f, const ProbabilityEstimate& e) {
            r.add_row({std::string(name), f, p.trials, e.p, e.lo, e.hi});
        };
        row("comfortable", rep.comfortable_failures, rep.comfortable);
        row("regular", rep.regular_failures, rep.regular);
        row("extravagant", rep.extravagant_failures, rep.extravagant);
    } else if (p.model == "integers") {
        SpacingParams prm{static_cast<double>(p.N), p.D, p.D1, p.C0};
        auto s = spacing_survey(p.N, p.r, prm);
        r.set("N", p.N);
        r.set("r", std::uint64_t{p.r});
        r.set("D", p.D);
        r.set("D1", p.D1);
        r.set("C0", p.C0);
        r.set("r_in_range", s.r_in_range);
        auto row = [&](const char* name, std::uint64_t f) {
            auto e = wilson_interval(f, s.members);
            r.add_row({std::string(name), f, s.members, e.p, e.lo, e.hi});
        };
        row("comfortable", s.not_comfortable);
        row("regular", s.not_regular);
        row("extravagant", s.not_extravagant);
    } else {
        throw precondition_error("spacing model must be poisson or integers");
    }
    return o;
}

// ---- ramanujan ----

struct RamanujanParams {
    std::vector<unsigned> k{1, 2, 3};
    std::vector<double> u{1e2, 1e4, 1e8};
    double tol = 1e-8;
};

inline Outcome run_ramanujan(const RamanujanParams& p, std::uint64_t seed) {
    Outcome o{detail::start("ramanujan", seed)};
    auto& r = o.report;
    r.set("k", detail::join(p.k));
    r.set("u", detail::join(p.u));
    r.set("tol", p.tol);
    r.columns = {"k", "u", "value", "asymptotic", "relative_error", "bound_rhs"};
    for (auto k : p.k)
        for (auto u : p.u) {
            auto v = ramanujan_I(k, u, p.tol);
            const double rel = v.asymptotic != 0 ? std::abs(v.value / v.asymptotic - 1) : std::nan("");
            r.add_row({std::uint64_t{k}, u, v.value, v.asymptotic, rel, v.bound_rhs});
        }
    return o;
}

// ---- subgrid ----

struct SubgridParams {
    std::uint32_t n = 3, r = 2;
    std::size_t d = 2;
    std::uint64_t trials = 0;  // 0: every Y
};

inline Outcome run_subgrid(const SubgridParams& p, std::uint64_t seed) {
    auto c = p.trials == 0 ? subgrid_sweep(p.n, p.r, p.d) : count_subgrids_check(p.n, p.r, p.d, p.trials, seed);
    Outcome o{detail::start("subgrid", seed)};
    auto& r = o.report;
    r.set("n", std::uint64_t{p.n});
    r.set("r", std::uint64_t{p.r});
    r.set("d", std::uint64_t{p.d});
    r.set("trials", p.trials);
    r.set("mode", std::string(p.trials == 0 ? "exhaustive" : "random"));
    r.columns = {"instances", "checked", "skipped", "violations", "violations_without_precondition", "min_ratio"};
    r.add_row({c.instances, c.checked, c.skipped, c.violations, c.violations_without_precondition,
               c.checked ? c.min_ratio : std::nan("")});
    detail::finish_check(o, c.violations);
    return o;
}

// ---- ar-check ----

struct ARCheckParams {
    std::uint64_t systems = 100;
    std::size_t d_max = 3;
    std::uint32_t size_max = 6;
    unsigned bits_max = 2;  // |A_T| <= 2^bits_max
};

inline Outcome run_ar_check(const ARCheckParams& p, std::uint64_t seed) {
    if (p.d_max < 1 || p.size_max < 1) throw precondition_error("need d_max >= 1 and size_max >= 1");
    struct Tally {
        std::uint64_t checks = 0, violations = 0, additivity = 0, equivalence = 0;
        std::vector<std::uint64_t> by_level;
        double min_ratio = INFINITY;
    };
    auto t = parallel::chunked_reduce<Tally>(
        p.systems,
        [&](parallel::Range rg) {
            Tally t;
            t.by_level.assign(p.d_max + 1, 0);
            for (auto i = rg.begin; i < rg.end; ++i) {
                Rng rng(derive_seed(seed, i));
                const std::size_t d = 1 + rng() % p.d_max;
                std::vector<std::uint32_t> sizes(d);
                for (auto& s : sizes) s = 1 + static_cast<std::uint32_t>(rng() % p.size_max);
                std::vector<unsigned> bits(d + 1);
                for (auto& b : bits) b = static_cast<unsigned>(rng() % (p.bits_max + 1));
                Grid g(sizes);
                auto sys = ar_random_system(g, bits, rng);
                for (CoordSet S = 0; S < (CoordSet{1} << d); ++S) {
                    auto c = ar_density_check(sys, S);
                    ++t.checks;
                    if (!c.ok) {
                        ++t.violations;
                        ++t.by_level[std::popcount(S)];
                    }
                    if (c.bound > 0) t.min_ratio = std::min(t.min_ratio, c.density / c.bound);
                }
                t.additivity += ar_additivity_scan(sys).violations;
                auto eq = ar_equivalence_scan(sys);
                t.equivalence += eq.reflexive_failures + eq.symmetric_failures + eq.transitive_failures;
            }
            return t;
        },
        [](Tally a, Tally b) {
            a.checks += b.checks;
            a.violations += b.violations;
            a.additivity += b.additivity;
            a.equivalence += b.equivalence;
            for (std::size_t k = 0; k < a.by_level.size(); ++k) a.by_level[k] += b.by_level[k];
            a.min_ratio = std::min(a.min_ratio, b.min_ratio);
            return a;
        },
        Tally{0, 0, 0, 0, std::vector<std::uint64_t>(p.d_max + 1, 0), INFINITY});
    Outcome o{detail::start("ar-check", seed)};
    auto& r = o.report;
    r.set("systems", p.systems);
    r.set("d_max", std::uint64_t{p.d_max});
    r.set("size_max", std::uint64_t{p.size_max});
    r.set("group_max", std::uint64_t{1} << p.bits_max);
    r.set("density_checks", t.checks);
    r.set("additivity_failures", t.additivity);
    r.set("equivalence_failures", t.equivalence);
    r.set("min_density_over_bound", t.min_ratio);
    r.columns = {"level", "density_violations"};
    for (std::size_t k = 0; k <= p.d_max; ++k) r.add_row({std::uint64_t{k}, t.by_level[k]});
    detail::finish_check(o, t.violations + t.additivity + t.equivalence);
    return o;
}

// ---- perm-moment ----

struct PermMomentParams {
    std::size_t r = 5, k0 = 0, k1 = 0, k2 = 4, P = 1;
    std::uint64_t trials = 20;
    bool all = false;  // every (k0, k1) meeting the hypothesis
};

inline Outcome run_perm_moment(const PermMomentParams& p, std::uint64_t seed) {
    std::vector<PermMomentReport> reps;
    if (p.all) {
        for (std::size_t k1 = 0; k1 <= p.k2; ++k1)
            for (std::size_t k0 = 0; k0 <= k1; ++k0) {
                auto probe = perm_moment_check(p.r, k0, k1, p.k2, p.P, 0, seed);
                if (probe.hypothesis) reps.push_back(perm_moment_check(p.r, k0, k1, p.k2, p.P, p.trials, seed));
            }
    } else {
        reps.push_back(perm_moment_check(p.r, p.k0, p.k1, p.k2, p.P, p.trials, seed));
    }
    Outcome o{detail::start("perm-moment", seed)};
    auto& r = o.report;
    r.set("r", std::uint64_t{p.r});
    r.set("k2", std::uint64_t{p.k2});
    r.set("P", std::uint64_t{p.P});
    r.set("trials", p.trials);
    r.set("all", p.all);
    if (!p.all) {
        r.set("k0", std::uint64_t{p.k0});
        r.set("k1", std::uint64_t{p.k1});
    }
    r.columns = {"k0", "k1", "m_C", "hypothesis", "trials", "violations", "max_ratio"};
    std::uint64_t v = 0;
    for (auto& x : reps) {
        r.add_row({std::uint64_t{x.k0}, std::uint64_t{x.k1}, x.m_C, x.hypothesis, x.trials, x.violations,
                   x.max_ratio});
        if (x.hypothesis) v += x.violations;
    }
    detail::finish_check(o, v);
    return o;
}

// ---- box-equi ----

struct BoxEquiParams {
    std::size_t r = 3;
    std::uint64_t start = 1000000, width = 10000;
    std::size_t m = 1, mp = 0;
    std::vector<std::int64_t> P{-1};
};

// r consecutive disjoint intervals (start + i w, start + (i+1) w].
inline PrimeGrid consecutive_prime_grid(std::size_t r, std::uint64_t start, std::uint64_t width) {
    if (r < 1 || width < 1) throw precondition_error("need r >= 1 and width >= 1");
    PrimeGrid X;
    for (std::size_t i = 0; i < r; ++i) {
        auto ps = primes_in_interval(static_cast<double>(start + i * width + 1),
                                     static_cast<double>(start + (i + 1) * width));
        std::erase(ps, std::uint64_t{2});
        if (ps.empty()) throw precondition_error("an interval contains no odd prime");
        X.push_back(std::move(ps));
    }
    return X;
}

inline Outcome run_box_equi(const BoxEquiParams& p, std::uint64_t seed) {
    if (p.P.empty() || p.P.front() != -1) throw precondition_error("P must start with -1");
    auto X = consecutive_prime_grid(p.r, p.start, p.width);
    auto rep = box_equi_experiment(X, p.m, p.mp, p.P, seed);
    Outcome o{detail::start("box-equi", seed)};
    auto& r = o.report;
    r.set("r", std::uint64_t{p.r});
    r.set("start", p.start);
    r.set("width", p.width);
    r.set("m", std::uint64_t{p.m});
    r.set("mp", std::uint64_t{p.mp});
    r.set("P", detail::join(p.P));
    std::string conds;
    for (auto [i, j] : rep.assignment.M) conds += "(x" + std::to_string(i + 1) + "/x" + std::to_string(j + 1) + ")";
    for (auto [i, d] : rep.assignment.MP) conds += "(" + std::to_string(d) + "/x" + std::to_string(i + 1) + ")";
    r.set("conditions", conds);
    r.set("points", rep.points);
    r.set("expected", rep.expected);
    r.set("max_deviation", rep.max_deviation);
    r.set("max_relative_deviation", rep.max_relative_deviation);
    r.set("chi_square", rep.chi_square);
    r.set("p_value", rep.p_value);
    r.set("conserved", rep.conserved);
    r.set("siegel_less_assumed", rep.siegel_less_assumed);
    r.columns = {"a", "count", "relative_deviation"};
    for (std::size_t s = 0; s < rep.fibers.size(); ++s) {
        std::string a;
        for (std::size_t k = 0; k < rep.conditions; ++k) a += ((s >> k) & 1u) ? '-' : '+';
        const double rel = rep.expected > 0 ? (static_cast<double>(rep.fibers[s]) - rep.expected) / rep.expected : 0;
        r.add_row({a, rep.fibers[s], rel});
    }
    detail::finish_check(o, rep.conserved ? 0 : 1);
    return o;
}

}  // namespace twistlab::experiments
