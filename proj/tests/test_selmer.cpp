#include <gtest/gtest.h>

#include <algorithm>

#include "oracles/monsky.hpp"
#include "oracles/torsor_search.hpp"
#include "twistlab/selmer.hpp"

using namespace twistlab;

namespace {

unsigned log2_exact(unsigned long long n) {
    unsigned k = std::countr_zero(n);
    EXPECT_EQ(n, 1ULL << k) << "accepted pairs do not form a group";
    return k;
}

std::vector<std::int64_t> squarefree_upto(std::int64_t n) {
    std::vector<std::int64_t> out;
    for (std::int64_t d = 1; d <= n; ++d)
        if (is_squarefree(static_cast<std::uint64_t>(d))) out.push_back(d);
    return out;
}

}  // namespace

TEST(ValidateCurve, Examples) {
    auto e = validate_curve(-1, 1);
    EXPECT_EQ(e.bad_primes, (std::vector<std::uint64_t>{2}));
    EXPECT_THROW(validate_curve(1, 4), hypothesis_error);
    EXPECT_THROW(validate_curve(0, 1), hypothesis_error);
    EXPECT_THROW(validate_curve(3, 3), hypothesis_error);
    try {
        validate_curve(1, 4);
    } catch (const hypothesis_error& err) {
        EXPECT_NE(std::string(err.what()).find("ab"), std::string::npos);
    }
    // a(a-b) = 9 * ... : a = 9, b = 8 gives a(a-b) = 9
    EXPECT_THROW(validate_curve(9, 8), hypothesis_error);
    // b(b-a) = 4: a = -3, b = 1
    EXPECT_THROW(validate_curve(-3, 1), hypothesis_error);
    EXPECT_EQ(validate_curve(3, -5).bad_primes, (std::vector<std::uint64_t>{2, 3, 5}));
}

TEST(ValidateCurve, HalfPointCriterion) {
    // x(P)^2 = ab for a point P with 2P = (0,0): check by searching rational x
    // with x^2 = ab directly against the square test in validate_curve
    for (std::int64_t a = -12; a <= 12; ++a)
        for (std::int64_t b = -12; b <= 12; ++b) {
            if (a == 0 || b == 0 || a == b) continue;
            bool half = false;
            for (std::int64_t x = 0; x <= 12; ++x)
                half |= x * x == a * b || x * x == a * (a - b) || x * x == b * (b - a);
            if (half) {
                EXPECT_THROW(validate_curve(a, b), hypothesis_error) << a << "," << b;
            } else {
                EXPECT_NO_THROW(validate_curve(a, b)) << a << "," << b;
            }
        }
}

TEST(LocalClass, GroupHomomorphism) {
    Rng rng(1);
    for (std::uint64_t p : {0u, 2u, 3u, 5u, 7u, 13u}) {
        Place v{p};
        for (int t = 0; t < 2000; ++t) {
            i128 x = static_cast<i128>(rng() % 100000) - 50000, y = static_cast<i128>(rng() % 100000) - 50000;
            if (x == 0 || y == 0) continue;
            ASSERT_EQ(selmer_detail::local_class(x * y, v),
                      selmer_detail::local_class(x, v) ^ selmer_detail::local_class(y, v));
            ASSERT_EQ(selmer_detail::local_class(x * x * y, v), selmer_detail::local_class(y, v));
            bool square = oracle::square_status(x, p == 0 ? 2 : p, 120) == 1;
            if (p == 0) square = x > 0;
            ASSERT_EQ(selmer_detail::local_class(x, v) == 0, square) << static_cast<long long>(x) << " p=" << p;
        }
    }
}

TEST(Sel2Dim, KnownTwistsOfCongruentNumberCurve) {
    auto E = validate_curve(-1, 1);
    EXPECT_EQ(sel2_dim(E, 1).dim, 2u);
    EXPECT_EQ(sel2_dim(E, 1).n1(), 0);
    EXPECT_EQ(sel2_dim(E, 6).dim, 3u);
    EXPECT_EQ(sel2_dim(E, 6).n1(), 1);
    EXPECT_EQ(sel2_dim(E, 5).dim, 3u);   // 5 is congruent
    EXPECT_EQ(sel2_dim(E, 7).dim, 3u);   // 7 is congruent
    EXPECT_EQ(sel2_dim(E, 3).dim, 2u);   // 3 is not
    EXPECT_EQ(sel2_dim(E, 34).dim, 4u);  // rank 0, Sha[2] of order 4
}

TEST(Sel2Dim, RejectsBadTwists) {
    auto E = validate_curve(-1, 1);
    EXPECT_THROW(sel2_dim(E, 0), precondition_error);
    EXPECT_THROW(sel2_dim(E, 12), precondition_error);
}

TEST(Sel2Dim, MatchesTorsorSearchOracle) {
    struct Case {
        std::int64_t a, b;
        std::int64_t dmax;
    };
    for (auto c : {Case{-1, 1, 70}, Case{1, -2, 30}, Case{3, -5, 15}, Case{2, 5, 15}}) {
        auto E = validate_curve(c.a, c.b);
        for (std::int64_t d : squarefree_upto(c.dmax)) {
            for (std::int64_t sd : {d, -d}) {
                auto count = oracle::selmer_pair_count(c.a, c.b, sd);
                ASSERT_EQ(sel2_dim(E, sd).dim, log2_exact(count)) << c.a << "," << c.b << " d=" << sd;
            }
        }
    }
}

TEST(Sel2Dim, MatchesLegendreMatrixFormulaForCongruentNumberCurve) {
    const auto E = validate_curve(-1, 1);
    std::size_t checked = 0;
    for (std::uint64_t d = 3; d <= 20000; ++d) {
        if (!is_squarefree(d)) continue;
        ASSERT_EQ(static_cast<int>(sel2_dim(E, static_cast<std::int64_t>(d)).dim) - 2, oracle::monsky_selmer_rank(d))
            << "d=" << d;
        ++checked;
    }
    EXPECT_GT(checked, 12000u);
    // scattered large d
    Rng rng(8);
    for (int k = 0; k < 2000; ++k) {
        const std::uint64_t d = 3 + rng() % 1000000000000ull;
        if (!is_squarefree(d)) continue;
        ASSERT_EQ(static_cast<int>(sel2_dim(E, static_cast<std::int64_t>(d)).dim) - 2, oracle::monsky_selmer_rank(d))
            << "d=" << d;
    }
}

TEST(LocalImage, MatchesTorsorSearchOnRandomInstances) {
    Rng rng(2);
    const std::pair<std::int64_t, std::int64_t> curves[] = {{-1, 1}, {1, -2}, {3, -5}, {2, 5}, {-7, 4}};
    int checked = 0;
    while (checked < 10000) {
        auto [a, b] = curves[rng() % 5];
        std::int64_t d = 1 + static_cast<std::int64_t>(rng() % 60);
        if (!is_squarefree(static_cast<std::uint64_t>(d))) continue;
        if (rng() & 1) d = -d;
        auto E = validate_curve(a, b);
        auto t = selmer_detail::make_twist(E, d);
        auto s = selmer_detail::make_descent(E, d);
        const Place v = s.places[rng() % s.places.size()];
        auto img = selmer_detail::search_local_image(t, v);
        selmer_detail::Span span;
        for (auto x : img) span.add(x);
        const unsigned w = selmer_detail::class_width(v);
        for (int rep = 0; rep < 8; ++rep) {
            i128 d1 = 1, d2 = 1;
            for (auto q : s.basis) {
                if (rng() & 1) d1 *= q;
                if (rng() & 1) d2 *= q;
            }
            unsigned packed = selmer_detail::pack_pair(selmer_detail::local_class(d1, v),
                                                       selmer_detail::local_class(d2, v), w);
            ASSERT_EQ(span.contains(packed), oracle::torsor_solvable(t.e, d1, d2, static_cast<long long>(v.p)))
                << a << "," << b << " d=" << d << " p=" << v.p;
            ++checked;
        }
    }
}

TEST(Sel2Matrix, AgreesWithDescentOnCoprimeTwists) {
    auto E = validate_curve(-1, 1);
    SelmerMatrixBuilder builder(E);
    std::size_t mismatches = 0, checked = 0;
    for (std::int64_t d = 1; d <= 5000; ++d) {
        if (d % 2 == 0 || d % 3 == 0 || !is_squarefree(static_cast<std::uint64_t>(d))) continue;
        auto fast = builder.matrix(d);
        EXPECT_EQ(fast.rows(), fast.cols());
        mismatches += kernel_rank(fast) != sel2_dim(E, d).dim - 2 + sel2_matrix_offset;
        ++checked;
    }
    EXPECT_EQ(mismatches, 0u);
    EXPECT_GT(checked, 1500u);
}

TEST(Sel2Matrix, PrimesThreeModEight) {
    auto E = validate_curve(-1, 1);
    for (std::int64_t p : {3, 11, 19, 43, 59, 67, 83, 107, 131, 139})
        EXPECT_EQ(kernel_rank(sel2_matrix(E, p)), sel2_dim(E, p).dim) << p;
}

TEST(Sel2Matrix, FallbackForNonCoprimeTwists) {
    auto E = validate_curve(-1, 1);
    for (std::int64_t d : {2, 6, 10, 14, 30, 34, 66, 210})
        EXPECT_EQ(kernel_rank(sel2_matrix(E, d)), sel2_dim(E, d).dim) << d;
}

TEST(Sel2Matrix, OtherCurvesAgree) {
    for (auto [a, b] : {std::pair<std::int64_t, std::int64_t>{1, -2}, {3, -5}, {-7, 4}}) {
        auto E = validate_curve(a, b);
        SelmerMatrixBuilder builder(E);
        for (std::int64_t d = -300; d <= 300; ++d) {
            if (d == 0 || !is_squarefree(static_cast<std::uint64_t>(std::abs(d)))) continue;
            ASSERT_EQ(kernel_rank(builder.matrix(d)), sel2_dim(E, d).dim) << a << "," << b << " d=" << d;
        }
    }
}

TEST(Sel2Matrix, PrimeRelabelingInvariant) {
    // permuting the odd primes of d permutes rows and columns only
    auto E = validate_curve(-1, 1);
    for (std::int64_t d : {5 * 7 * 11, 5 * 13 * 17, 7 * 11 * 13 * 17}) {
        auto m = sel2_matrix(E, d);
        Rng rng(static_cast<std::uint64_t>(d));
        for (int t = 0; t < 20; ++t) {
            BitMatrix p = m;
            std::vector<std::size_t> perm(m.cols());
            std::iota(perm.begin(), perm.end(), 0);
            std::shuffle(perm.begin(), perm.end(), rng);
            BitMatrix q(m.rows(), m.cols());
            for (std::size_t i = 0; i < m.rows(); ++i)
                for (std::size_t j = 0; j < m.cols(); ++j) q.set(i, perm[j], p.get(i, j));
            for (int s = 0; s < 10; ++s) q.swap_rows(rng() % q.rows(), rng() % q.rows());
            EXPECT_EQ(kernel_rank(q), kernel_rank(m));
        }
    }
}

TEST(Sel2Dim, AtLeastTwoAndTorsionAccepted) {
    // assemble() throws if a torsion image fails a local condition
    for (auto [a, b] : {std::pair<std::int64_t, std::int64_t>{-1, 1}, {1, -2}, {5, -11}}) {
        auto E = validate_curve(a, b);
        for (std::int64_t d = 1; d <= 400; ++d) {
            if (!is_squarefree(static_cast<std::uint64_t>(d))) continue;
            EXPECT_GE(sel2_dim(E, d).dim, 2u);
        }
    }
}

TEST(SelmerSurvey, Domain) {
    EXPECT_EQ(survey_domain(10, {1, 2, 3}), (std::vector<std::uint64_t>{1, 2, 3, 10}));
    auto E = validate_curve(-1, 1);
    auto s = selmer_survey(E, 10, {1, 2, 3});
    EXPECT_EQ(s.processed, 4u);
    auto empty = selmer_survey(E, 100, {});
    EXPECT_EQ(empty.processed, 0u);
    EXPECT_TRUE(empty.histogram.empty());
}

TEST(SelmerSurvey, DeterministicAndThreadIndependent) {
    auto E = validate_curve(-1, 1);
    parallel::set_thread_count(1);
    auto a = selmer_survey(E, 3000, {1, 2, 3}, 0.5, 42);
    parallel::set_thread_count(4);
    auto b = selmer_survey(E, 3000, {1, 2, 3}, 0.5, 42);
    parallel::set_thread_count(0);
    EXPECT_EQ(a.histogram, b.histogram);
    EXPECT_EQ(a.processed, survey_domain(3000, {1, 2, 3}, 0.5, 42).size());
    EXPECT_LT(a.processed, survey_domain(3000, {1, 2, 3}).size());
}

TEST(SelmerSurvey, HistogramMatchesDirectDescent) {
    auto E = validate_curve(-1, 1);
    auto s = selmer_survey(E, 600, {1, 2, 3, 5, 6, 7});
    std::map<int, std::uint64_t> direct;
    for (auto d : survey_domain(600, {1, 2, 3, 5, 6, 7})) ++direct[sel2_dim(E, static_cast<std::int64_t>(d)).n1()];
    EXPECT_EQ(s.histogram, direct);
}
