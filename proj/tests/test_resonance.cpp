#include "doctest.h"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

#include "quasispec/resonance.hpp"

using namespace quasispec;

namespace {

LatticeIndex idx(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) { return {{a, b}, {c, d}}; }

AnalyticFamily scalar_family(std::function<cplx(cplx)> f, std::function<cplx(cplx)> df, std::string id) {
    AnalyticFamily fam;
    fam.id = std::move(id);
    fam.matrix = [f](cplx z) { return CMatrix::Constant(1, 1, f(z)); };
    fam.derivative = [df](cplx z) { return CMatrix::Constant(1, 1, df(z)); };
    return fam;
}

ResonanceThresholds desk(double k, double t_inner, double t_outer, double range) {
    ResonanceThresholds th;
    th.mode = ThresholdMode::Desk;
    th.k = k;
    th.t_inner = t_inner;
    th.t_outer = t_outer;
    th.inner_range = range;
    return th;
}

double angle_gap(double a, double b) {
    double d = std::fabs(reduce_angle(a) - reduce_angle(b));
    return std::min(d, kTwoPi - d);
}

}  // namespace

TEST_CASE("phi_roots examples") {
    QuasiLattice g;
    CHECK(phi_roots(g, 1.0, idx(5, 0, 0, 0)).empty());
    auto r = phi_roots(g, 10.0, idx(1, 0, 0, 0));
    REQUIRE(r.size() == 2);
    const double a = std::acos(-M_PI / 10);
    // 30-digit reference value of arccos(−π/10)
    CHECK(a == doctest::Approx(1.8903672801021563).epsilon(1e-14));
    CHECK(r[0] == doctest::Approx(a).epsilon(1e-14));
    CHECK(r[1] == doctest::Approx(kTwoPi - a).epsilon(1e-14));
    for (double phi : r) CHECK(std::fabs(resonance_function(g, 10.0, phi, idx(1, 0, 0, 0))) < 1e-12);
}

TEST_CASE("roots approach a quarter turn from the index direction for large k") {
    QuasiLattice g;
    for (const auto& m : enumerate_indices(2)) {
        if (m.is_zero()) continue;
        const double k = 500.0, p = g.p_norm(m);
        auto r = phi_roots(g, k, m);
        REQUIRE(r.size() == 2);
        CHECK(angle_gap(r[0], g.p_angle(m) + M_PI / 2) <= 2 * p / k);
        CHECK(angle_gap(r[1], g.p_angle(m) - M_PI / 2) <= 2 * p / k);
    }
}

TEST_CASE("level-1 discs are symmetric under a half turn") {
    QuasiLattice g;
    for (auto mode : {ThresholdMode::Paper, ThresholdMode::Desk}) {
        ResonanceThresholds th = desk(12.0, 3.0, 0.5, 2.5);
        th.mode = mode;
        th.delta = 0.001;
        auto set = resonance_discs_level1(g, th, 1.0);
        REQUIRE(!set.discs.empty());
        for (const auto& d : set.discs) {
            bool found = false;
            for (const auto& e : set.discs)
                if (angle_gap(d.center.real() + M_PI, e.center.real()) < 1e-13 && e.radius == d.radius) found = true;
            CHECK(found);
        }
        // real arcs map onto themselves
        for (const auto& a : set.real_arcs) {
            double mid = 0.5 * (a.start + a.end);
            CHECK(set.contains(mid + M_PI));
        }
    }
}

TEST_CASE("desk real arcs clear every threshold on a dense grid") {
    QuasiLattice g;
    const double k = 9.0, range = 3.0;
    auto th = desk(k, 0.6, 0.1, range);
    auto set = resonance_discs_level1(g, th, 1.0);
    auto ms = enumerate_indices(range);
    std::size_t checked = 0;
    for (int i = 0; i < 10000; ++i) {
        double phi = kTwoPi * (i + 0.5) / 10000;
        if (!set.contains(phi)) continue;
        ++checked;
        for (const auto& m : ms) {
            if (m.is_zero()) continue;
            double f = std::fabs(resonance_function(g, k, phi, m));
            if (!(f >= th.threshold_for(m, 1.0))) FAIL("threshold violated at phi=" << phi << " m=" << m.str());
        }
    }
    CHECK(checked > 0);
}

TEST_CASE("empty working range keeps the whole circle") {
    QuasiLattice g;
    auto set = resonance_discs_level1(g, desk(5.0, 1.0, 1.0, 0.0), 1.0);
    CHECK(set.discs.empty());
    REQUIRE(set.real_arcs.size() == 1);
    CHECK(nonresonant_measure(set) == kTwoPi);
}

TEST_CASE("measure by interval arithmetic") {
    AngleSetLevel s;
    s.real_arcs = {{0.0, kTwoPi}};
    CHECK(nonresonant_measure(s) == kTwoPi);
    auto d = make_disc(1.0, 0.05, "t", 1);
    s.real_arcs = subtract_arcs(s.real_arcs, disc_shadow(d));
    CHECK(nonresonant_measure(s) == doctest::Approx(kTwoPi - 0.1).epsilon(1e-15));
    // wrapped shadow
    auto w = disc_shadow(make_disc(0.01, 0.05, "w", 1));
    REQUIRE(w.size() == 2);
    CHECK(w[0].length() + w[1].length() == doctest::Approx(0.1).epsilon(1e-12));
    // off-axis disc: half-width √(r² − Im²)
    auto o = disc_shadow(make_disc(cplx(2.0, 0.03), 0.05, "o", 1));
    REQUIRE(o.size() == 1);
    CHECK(o[0].length() == doctest::Approx(0.08).epsilon(1e-12));
    CHECK(disc_shadow(make_disc(cplx(2.0, 0.06), 0.05, "x", 1)).empty());
}

TEST_CASE("measure of overlapping discs matches Monte-Carlo") {
    QuasiLattice g;
    auto set = resonance_discs_level1(g, desk(6.0, 6.0, 1.0, 2.0), 1.0);
    const double m = nonresonant_measure(set);
    std::mt19937_64 rng(2024);
    std::uniform_real_distribution<double> u(0, kTwoPi);
    const int N = 1000000;
    int hits = 0;
    for (int i = 0; i < N; ++i) {
        double phi = u(rng);
        bool in_disc = false;
        for (const auto& d : set.discs) {
            double im = d.center.imag();
            if (std::fabs(im) >= d.radius) continue;
            if (angle_gap(phi, d.center.real()) < std::sqrt(d.radius * d.radius - im * im)) {
                in_disc = true;
                break;
            }
        }
        if (!in_disc) ++hits;
    }
    const double p = m / kTwoPi;
    const double sigma = std::sqrt(p * (1 - p) / N);
    CHECK(std::fabs(double(hits) / N - p) <= 3 * sigma);
    auto rep = nonresonant_measure_report(set, 0.01, 2.0);
    CHECK(rep.removed == doctest::Approx(kTwoPi - m));
}

TEST_CASE("pole_scan on factored scalar determinants") {
    const cplx a(1.0, 0.1), b(1.6, -0.05);
    auto fam = scalar_family([=](cplx z) { return (z - a) * (z - b); }, [=](cplx z) { return 2.0 * z - a - b; }, "ab");
    auto res = pole_scan(fam, make_disc(1.0, 0.3, "d", 2), 0.0);
    CHECK(res.winding == 1);
    REQUIRE(res.poles.size() == 1);
    CHECK(std::abs(res.poles[0].location - a) < 1e-12);
    CHECK(res.poles[0].multiplicity == 1);

    auto both = pole_scan(fam, make_disc(1.3, 0.6, "d", 2), 0.0);
    CHECK(both.winding == 2);
    REQUIRE(both.poles.size() == 2);
    CHECK(std::abs(both.poles[0].location - a) < 1e-12);
    CHECK(std::abs(both.poles[1].location - b) < 1e-12);

    auto sq = scalar_family([=](cplx z) { return (z - a) * (z - a); }, [=](cplx z) { return 2.0 * (z - a); }, "aa");
    auto r2 = pole_scan(sq, make_disc(1.05, 0.2, "d", 2), 0.0);
    CHECK(r2.winding == 2);
    REQUIRE(r2.poles.size() == 1);
    CHECK(r2.poles[0].multiplicity == 2);
    CHECK(std::abs(r2.poles[0].location - a) < 1e-6);
}

TEST_CASE("pole_scan reports contour-through-zero") {
    auto fam = scalar_family([](cplx z) { return z - 1.0; }, [](cplx) { return cplx(1.0); }, "lin");
    CHECK_THROWS_AS(pole_scan(fam, make_disc(0.5, 0.5, "d", 2), 0.0), ContourThroughZero);
}

TEST_CASE("pole_scan on a one-index fiber block matches scalar Newton") {
    QuasiLattice g;
    const double k = 8.0;
    const int l = 2;
    for (const auto& m : {idx(1, 0, 0, 0), idx(0, 1, 1, 0), idx(0, 0, 0, -1)}) {
        auto fam = fiber_family(g, TrigPotential::zero(), l, k, IndexProjector({m}), "m");
        auto roots = phi_roots(g, k, m);
        REQUIRE(roots.size() == 2);
        // scalar Newton on p² + 2kp cos(φ − φ_m)
        const double p = g.p_norm(m), pm = g.p_angle(m);
        double z = roots[0] + 0.01;
        for (int i = 0; i < 60; ++i) z -= (p * p + 2 * k * p * std::cos(z - pm)) / (-2 * k * p * std::sin(z - pm));
        auto res = pole_scan(fam, make_disc(roots[0], 0.05, "w", 2), std::pow(k, 2 * l));
        CHECK(res.winding == 1);
        REQUIRE(res.poles.size() == 1);
        CHECK(angle_gap(res.poles[0].location.real(), z) < 1e-6);
        CHECK(std::fabs(res.poles[0].location.imag()) < 1e-6);
    }
}

TEST_CASE("winding equals real eigenvalue crossings on small Hermitian families") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(-1, 1);
    int compared = 0;
    for (int t = 0; t < 12; ++t) {
        const int n = 3;
        Eigen::VectorXd slope(n), off(n);
        for (int i = 0; i < n; ++i) {
            slope(i) = 1.0 + 0.5 * i + 0.2 * u(rng);
            off(i) = 0.3 * u(rng);
        }
        CMatrix C = CMatrix::Zero(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = i + 1; j < n; ++j) {
                C(i, j) = cplx(0.01 * u(rng), 0.01 * u(rng));
                C(j, i) = std::conj(C(i, j));
            }
        AnalyticFamily fam;
        fam.id = "syn";
        fam.matrix = [=](cplx z) {
            CMatrix A = C;
            for (int i = 0; i < n; ++i) A(i, i) += slope(i) * z + off(i);
            return A;
        };
        fam.derivative = [=](cplx) {
            CMatrix D = CMatrix::Zero(n, n);
            for (int i = 0; i < n; ++i) D(i, i) = slope(i);
            return D;
        };
        const double c = 0.2 * u(rng), r = 0.35;
        // crossings of the real eigenvalues with E = 0 along the diameter
        int crossings = 0;
        const int N = 4000;
        Eigen::VectorXd prev;
        for (int j = 0; j <= N; ++j) {
            double x = c - r + 2 * r * j / N;
            Eigen::SelfAdjointEigenSolver<CMatrix> es(fam.matrix(x), Eigen::EigenvaluesOnly);
            Eigen::VectorXd ev = es.eigenvalues();
            if (j > 0)
                for (int i = 0; i < n; ++i)
                    if ((prev(i) < 0) != (ev(i) < 0)) ++crossings;
            prev = ev;
        }
        try {
            int w = winding_number(fam, c, r, 0.0);
            CHECK(w == crossings);
            ++compared;
        } catch (const ContourThroughZero&) {
        }
    }
    CHECK(compared >= 10);
}

TEST_CASE("resonant_set_next geometry") {
    AngleSetLevel prev;
    prev.level = 1;
    prev.real_arcs = {{0.5, 3.0}, {3.5, 6.0}};
    auto same = resonant_set_next(prev, {}, 0.0, 0.01);
    CHECK(same.real_arcs == prev.real_arcs);
    CHECK(same.level == 2);

    auto fam = scalar_family([](cplx z) { return z - 2.0; }, [](cplx) { return cplx(1.0); }, "one");
    auto next = resonant_set_next(prev, {{fam, make_disc(2.1, 0.3, "w0", 2)}}, 0.0, 0.01);
    CHECK(nonresonant_measure(next) == doctest::Approx(nonresonant_measure(prev) - 0.02).epsilon(1e-12));
    CHECK(arcs_subset(next.real_arcs, prev.real_arcs));
    REQUIRE(next.discs.size() == 1);
    CHECK(next.discs[0].source == "pole:one#0");
}

TEST_CASE("free one-index blocks away from resonance add no poles") {
    QuasiLattice g;
    const double k = 7.0;
    auto th = desk(k, 2.0, 0.5, 2.0);
    auto lvl1 = resonance_discs_level1(g, th, 1.0);
    std::vector<WindowBlock> blocks;
    int w = 0;
    for (const auto& a : lvl1.real_arcs) {
        if (a.length() < 0.02) continue;
        double c = 0.5 * (a.start + a.end);
        double r = 0.4 * a.length();
        for (const auto& m : enumerate_indices(2.0)) {
            if (m.is_zero()) continue;
            // scalar sign check on the window: no sign change of the resonance function
            double f0 = resonance_function(g, k, c - r, m), f1 = resonance_function(g, k, c + r, m);
            if ((f0 < 0) != (f1 < 0)) continue;
            if (std::fabs(f0) < 1e-3 || std::fabs(f1) < 1e-3) continue;
            blocks.push_back({fiber_family(g, TrigPotential::zero(), 2, k, IndexProjector({m}), m.str()),
                              make_disc(c, r, "w" + std::to_string(w), 2)});
        }
        ++w;
    }
    REQUIRE(!blocks.empty());
    auto next = resonant_set_next(lvl1, blocks, std::pow(k, 4), 1e-3);
    CHECK(next.real_arcs == lvl1.real_arcs);
}
