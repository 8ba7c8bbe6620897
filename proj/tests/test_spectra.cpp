#include "doctest.h"

#include <Eigen/Eigenvalues>

#include <cfloat>
#include <cmath>
#include <random>

#include "quasispec/spectra.hpp"

using namespace quasispec;

namespace {

LatticeIndex idx(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) { return {{a, b}, {c, d}}; }

CVec2 cvec(double kap, double phi) { return {kap * std::cos(phi), kap * std::sin(phi)}; }
Vec2 rvec(double kap, double phi) { return {kap * std::cos(phi), kap * std::sin(phi)}; }

// Smallest distance from the center diagonal entry to the others.
double diag_gap(const FiberMatrix& H0) {
    auto z = *H0.indexset.position(LatticeIndex{});
    double c = H0.entries(Eigen::Index(z), Eigen::Index(z)).real(), g = INFINITY;
    for (Eigen::Index i = 0; i < H0.entries.rows(); ++i)
        if (i != Eigen::Index(z)) g = std::min(g, std::fabs(H0.entries(i, i).real() - c));
    return g;
}

// Brute-force Kato sum for r ≤ 3:
// g_r = ((−1)^r / r) Σ_{k1+..+kr = r−1} Tr(W S^{k1} ... W S^{kr}), S^0 = −P0.
double kato_term(const CMatrix& H0, const CMatrix& W, Eigen::Index i0, int r) {
    const Eigen::Index n = H0.rows();
    const double l0 = H0(i0, i0).real();
    auto Sk = [&](int k) {
        CMatrix S = CMatrix::Zero(n, n);
        if (k == 0) {
            S(i0, i0) = -1.0;
            return S;
        }
        for (Eigen::Index i = 0; i < n; ++i)
            if (i != i0) S(i, i) = std::pow(1.0 / (H0(i, i).real() - l0), k);
        return S;
    };
    cplx total = 0;
    std::vector<int> ks(static_cast<std::size_t>(r), 0);
    std::function<void(int, int)> rec = [&](int pos, int left) {
        if (pos == r - 1) {
            ks[static_cast<std::size_t>(pos)] = left;
            CMatrix M = CMatrix::Identity(n, n);
            for (int j = 0; j < r; ++j) M = M * W * Sk(ks[static_cast<std::size_t>(j)]);
            total += M.trace();
            return;
        }
        for (int k = 0; k <= left; ++k) {
            ks[static_cast<std::size_t>(pos)] = k;
            rec(pos + 1, left - k);
        }
    };
    rec(0, r - 1);
    return ((r % 2 == 0) ? 1.0 : -1.0) / r * total.real();
}

}  // namespace

TEST_CASE("free eigenpair at the origin") {
    QuasiLattice g;
    auto H = build_fiber(g, TrigPotential::zero(), {2.0, 0.0}, 2, IndexProjector::ball(1));
    auto p = eigenvalue_in_interval(H, 16.0, 1.0);
    CHECK(p.lambda == 16.0);
    auto z = *p.indexset.position(LatticeIndex{});
    for (Eigen::Index i = 0; i < p.vector.size(); ++i)
        CHECK(p.vector(i) == (i == Eigen::Index(z) ? cplx(1.0) : cplx(0.0)));
    CHECK_THROWS_AS(eigenvalue_in_interval(H, 3.0, 0.5), NoneInInterval);
}

TEST_CASE("exact degeneracy is a resonant collision") {
    QuasiLattice g;
    const LatticeIndex m = idx(1, 0, 0, 0);
    Vec2 p = g.p_vec(m);
    CVec2 kap{-0.5 * p[0], -0.5 * p[1]};
    auto H = build_fiber(g, TrigPotential::zero(), kap, 2, IndexProjector({LatticeIndex{}, m}));
    const double c = std::pow(0.5 * g.p_norm(m), 4);
    CHECK_THROWS_AS(eigenvalue_in_interval(H, c, 1e-6 * c), ResonantCollision);
}

TEST_CASE("eigenpair phase and residual conventions") {
    QuasiLattice g;
    auto pot = TrigPotential(1.0, {{idx(1, 0, 0, 0), cplx(0.05, 0.02)}, {idx(0, 0, 0, 1), cplx(0.0, 0.03)}});
    auto H = build_fiber(g, pot, cvec(6.0, 0.7), 2, IndexProjector::ball(2));
    auto p = eigenvalue_in_interval(H, std::pow(6.0, 4), 20.0);
    Eigen::Index best = 0;
    p.vector.cwiseAbs().maxCoeff(&best);
    CHECK(p.vector(best).imag() == 0.0);
    CHECK(p.vector(best).real() > 0.0);
    CHECK(p.vector.norm() == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(p.residual <= 1e-10 * std::max(1.0, p.lambda));
    // projection E = v v* is idempotent with unit trace
    CMatrix E = p.vector * p.vector.adjoint();
    CHECK((E * E - E).cwiseAbs().maxCoeff() < 1e-12);
    CHECK(std::abs(E.trace() - 1.0) < 1e-12);
}

TEST_CASE("g2 explicit forms") {
    QuasiLattice g;
    auto P = IndexProjector::ball(1);
    CHECK(g2_explicit(g, TrigPotential::zero(), {5.0, 1.0}, 2, P) == 0.0);
    const LatticeIndex q = idx(0, 1, 0, 0);
    const cplx v(0.03, -0.04);
    auto pot = TrigPotential::single_harmonic(q, v);
    Vec2 kap = rvec(5.0, 0.3);
    Vec2 pq = g.p_vec(q);
    auto pw = [&](double s) {
        double x = kap[0] + s * pq[0], y = kap[1] + s * pq[1];
        return std::pow(x * x + y * y, 2);
    };
    const double a0 = std::pow(25.0, 2);
    const double expect = std::norm(v) * (1 / (a0 - pw(1)) + 1 / (a0 - pw(-1)));
    CHECK(g2_explicit(g, pot, kap, 2, P) == doctest::Approx(expect).epsilon(1e-13));

    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 20; ++t) {
        std::vector<PotentialTerm> terms;
        for (const auto& m : enumerate_indices(1.5))
            if (!m.is_zero() && m < -m && u(rng) > 0) terms.push_back({m, cplx(0.05 * u(rng), 0.05 * u(rng))});
        TrigPotential rp(1.5, terms);
        auto f = g2_forms(g, rp, rvec(4 + 3 * std::fabs(u(rng)), 3 * u(rng)), 2 + t % 2, IndexProjector::ball(1.5));
        CHECK(f.direct == doctest::Approx(f.symmetrized).epsilon(1e-10));
    }
    // exact small denominator: κ = −p_q/2
    CHECK_THROWS_AS(g2_explicit(g, pot, {-0.5 * pq[0], -0.5 * pq[1]}, 2, P), SmallDenominator);
}

TEST_CASE("second-order agreement with a fitted constant") {
    QuasiLattice g;
    const LatticeIndex q = idx(1, 0, 0, 0);
    auto P = IndexProjector::ball(2);
    const double kap = 2.0;
    struct Sample {
        double series_ratio;  // Σ_{r≥3} g_r / g2², free of cancellation
        double dense_rem;     // λ − κ⁴ − g2 from the dense eigensolve
        double g2, roundoff;
    };
    auto sample = [&](double amp, double phi) {
        auto pot = TrigPotential::single_harmonic(q, amp);
        auto H0 = build_free_fiber(g, cvec(kap, phi), 2, P);
        const double rad = 0.5 * diag_gap(H0);
        auto rep = series_terms(H0.entries, potential_matrix(pot, P), std::pow(kap, 4), rad);
        double high = 0;
        for (std::size_t r = 2; r < rep.terms.size(); ++r) high += rep.terms[r];
        auto H = build_fiber(g, pot, cvec(kap, phi), 2, P);
        auto pair = eigenvalue_in_interval(H, std::pow(kap, 4), rad);
        double g2 = g2_explicit(g, pot, rvec(kap, phi), 2, P);
        return Sample{std::fabs(high) / (g2 * g2), std::fabs(pair.lambda - std::pow(kap, 4) - g2), g2,
                      rep.roundoff_bound};
    };
    double C = 0;
    for (double phi : {0.3, 1.1, 2.0})
        for (double amp : {0.2, 0.1, 0.05}) C = std::max(C, sample(amp, phi).series_ratio);
    REQUIRE(C > 0);
    // fourth-order remainder: the ratio is flat under amplitude changes
    for (double phi : {0.3, 1.1, 2.0})
        CHECK(sample(0.05, phi).series_ratio == doctest::Approx(sample(0.2, phi).series_ratio).epsilon(0.1));
    // the dense eigenvalue obeys the fitted bound on fresh amplitudes, up to its own roundoff
    for (double phi : {0.3, 1.1, 2.0})
        for (double amp : {0.15, 0.07}) {
            auto s = sample(amp, phi);
            CHECK(s.dense_rem <= 1.01 * C * s.g2 * s.g2 + s.roundoff);
        }
}

TEST_CASE("series terms") {
    QuasiLattice g;
    auto P = IndexProjector::ball(2);
    const double kap = 10.0, phi = 0.9;
    auto H0 = build_free_fiber(g, cvec(kap, phi), 2, P);
    const double c = std::pow(kap, 4), rad = 0.5 * diag_gap(H0);

    auto zero = series_terms(H0.entries, CMatrix::Zero(H0.entries.rows(), H0.entries.cols()), c, rad);
    for (double t : zero.terms) CHECK(t == 0.0);
    CHECK(zero.sum == c);

    for (double amp : {0.01, 0.05, 0.1}) {
        auto pot = TrigPotential(1.0, {{idx(1, 0, 0, 0), amp}, {idx(0, 0, 1, 0), cplx(0, amp)}});
        CMatrix W = potential_matrix(pot, P);
        auto rep = series_terms(H0.entries, W, c, rad);
        CHECK(rep.terms[0] == 0.0);
        REQUIRE(rep.converged);
        FiberMatrix H = H0;
        H.entries += W;
        auto pair = eigenvalue_in_interval(H, c, rad);
        CHECK(std::fabs(rep.sum - pair.lambda) <= rep.tail_bound + rep.roundoff_bound);
        CHECK(rep.terms[1] == doctest::Approx(g2_explicit(g, pot, rvec(kap, phi), 2, P)).epsilon(1e-12));
        // brute-force Kato sums for r = 2, 3
        auto z = *P.position(LatticeIndex{});
        CHECK(rep.terms[1] == doctest::Approx(kato_term(H0.entries, W, Eigen::Index(z), 2)).epsilon(1e-12));
        CHECK(rep.terms[2] == doctest::Approx(kato_term(H0.entries, W, Eigen::Index(z), 3)).epsilon(1e-10));
    }
}

TEST_CASE("series stopped early still reports every term and a finite tail") {
    QuasiLattice g;
    auto P = IndexProjector::ball(2);
    const double kap = 30.0, phi = 1.0;
    auto H0 = build_free_fiber(g, cvec(kap, phi), 2, P);
    const double c = std::pow(kap, 4), rad = 0.5 * diag_gap(H0);
    auto pot = TrigPotential::single_harmonic(idx(1, 0, 0, 0), 0.01);
    auto rep = series_terms(H0.entries, potential_matrix(pot, P), c, rad, 12);
    // g2 alone is below 1e-14 |λ|: the sum stops at r = 2
    CHECK(rep.r_last == 2);
    REQUIRE(rep.terms.size() == 12);
    CHECK(rep.terms[3] != 0.0);
    CHECK(rep.converged);
    CHECK(rep.tail_bound >= std::fabs(rep.terms[3] + rep.terms[5]));
    CHECK(rep.tail_bound < std::fabs(rep.terms[1]));
    FiberMatrix H = H0;
    H.entries += potential_matrix(pot, P);
    CHECK(std::fabs(rep.sum - eigenvalue_in_interval(H, c, rad).lambda) <= rep.tail_bound + rep.roundoff_bound);
}

TEST_CASE("series contour checks") {
    CMatrix H = CMatrix::Zero(3, 3);
    H(0, 0) = 1;
    H(1, 1) = 2;
    H(2, 2) = 5;
    CMatrix W = CMatrix::Zero(3, 3);
    CHECK_THROWS_AS(series_terms(H, W, 1.0, 1.0), EigenvalueOnContour);
    CHECK_THROWS_AS(series_terms(H, W, 1.5, 0.8), ContourMultiplicity);
    CHECK_NOTHROW(series_terms(H, W, 1.0, 0.5));
}

TEST_CASE("series on a non-diagonal block operator agrees with the dense eigensolve") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(-1, 1);
    const int n = 8;
    CMatrix H = CMatrix::Zero(n, n);
    // two coupled blocks {0,1,2} and {3..7}
    for (int i = 0; i < n; ++i) H(i, i) = 3.0 * i;
    H(0, 1) = cplx(0.4, 0.1);
    H(1, 0) = std::conj(H(0, 1));
    H(4, 6) = 0.3;
    H(6, 4) = 0.3;
    CMatrix W = CMatrix::Zero(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = i + 1; j < n; ++j) {
            W(i, j) = cplx(0.05 * u(rng), 0.05 * u(rng));
            W(j, i) = std::conj(W(i, j));
        }
    Eigen::SelfAdjointEigenSolver<CMatrix> es0(H);
    const double target = es0.eigenvalues()(4);
    auto rep = series_terms(H, W, target, 1.0);
    REQUIRE(rep.converged);
    CHECK(rep.center_eigenvalue == doctest::Approx(target).epsilon(1e-14));
    Eigen::SelfAdjointEigenSolver<CMatrix> es(H + W);
    double best = INFINITY;
    for (int i = 0; i < n; ++i) best = std::min(best, std::fabs(es.eigenvalues()(i) - rep.sum));
    CHECK(best <= rep.tail_bound + rep.roundoff_bound);
}

TEST_CASE("projection series: sparsity of partial sums and agreement with v v*") {
    QuasiLattice g;
    auto P = IndexProjector::ball(3);
    const double kap = 10.0, phi = 0.4;
    auto H0 = build_free_fiber(g, cvec(kap, phi), 2, P);
    auto pot = TrigPotential::single_harmonic(idx(1, 0, 0, 0), 0.05);
    CMatrix W = potential_matrix(pot, P);
    const double c = std::pow(kap, 4), rad = 0.5 * diag_gap(H0);
    const int R = 4;
    auto G = projection_terms(H0.entries, W, c, rad, R);
    REQUIRE(G.size() == std::size_t(R + 1));
    const auto& mem = P.members();
    CMatrix partial = CMatrix::Zero(W.rows(), W.cols());
    int zeros_checked = 0;
    for (int r = 0; r <= R; ++r) {
        partial += G[std::size_t(r)];
        for (std::size_t i = 0; i < mem.size(); ++i)
            for (std::size_t j = 0; j < mem.size(); ++j)
                if (r * pot.Q() < norm_triple(mem[i]) + norm_triple(mem[j])) {
                    CHECK(G[std::size_t(r)](Eigen::Index(i), Eigen::Index(j)) == cplx(0.0));
                    CHECK(partial(Eigen::Index(i), Eigen::Index(j)) == cplx(0.0));
                    ++zeros_checked;
                }
    }
    CHECK(zeros_checked > 0);
    FiberMatrix H = H0;
    H.entries += W;
    auto pair = eigenvalue_in_interval(H, c, rad);
    CMatrix E = pair.vector * pair.vector.adjoint();
    double scale = std::pow(0.05 / rad * 50, R + 1);
    CHECK((partial - E).cwiseAbs().maxCoeff() < std::max(1e-10, scale));
}

TEST_CASE("projection decay report") {
    QuasiLattice g;
    auto P = IndexProjector::ball(3);
    DecayRate rate{10.0, 2.0, 0.0, 1.0, 2};
    auto free = build_fiber(g, TrigPotential::zero(), cvec(10.0, 0.4), 2, P);
    auto p0 = eigenvalue_in_interval(free, 1e4, 1.0);
    auto r0 = projection_decay_report(p0, 1.0, rate);
    CHECK(r0.rows.empty());
    auto pot = TrigPotential(1.0, {{idx(1, 0, 0, 0), 0.05}, {idx(0, 0, 1, 0), 0.05}});
    auto H = build_fiber(g, pot, cvec(10.0, 0.4), 2, P);
    auto p = eigenvalue_in_interval(H, 1e4, 0.5 * diag_gap(free));
    auto rep = projection_decay_report(p, 1.0, rate);
    CHECK(rep.rows.size() > 5);
    CHECK(rep.decaying);
    CHECK(rep.fitted_slope < 0);
    CHECK(rep.predicted_slope == doctest::Approx(-3.0 * std::log(10.0)).epsilon(1e-14));
}

TEST_CASE("resolvent norm") {
    QuasiLattice g;
    auto H = build_fiber(g, TrigPotential::zero(), {1.5, 0.0}, 2, IndexProjector({LatticeIndex{}}));
    const double d = std::pow(1.5, 4);
    CHECK(resolvent_norm(H, cplx(2.0, 0.5), H.indexset) == doctest::Approx(1.0 / std::abs(d - cplx(2.0, 0.5))).epsilon(1e-14));
    CHECK(std::isinf(resolvent_norm(H, d, H.indexset)));
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u(-1, 1);
    for (int t = 0; t < 20; ++t) {
        FiberMatrix R;
        R.indexset = IndexProjector::ball(1);
        const int n = int(R.indexset.size());
        CMatrix A(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) A(i, j) = cplx(u(rng), u(rng));
        R.entries = A + A.adjoint();
        cplx z(u(rng), 0.1 * u(rng));
        CMatrix Z = R.entries - z * CMatrix::Identity(n, n);
        Eigen::JacobiSVD<CMatrix> svd(Z.inverse());
        CHECK(resolvent_norm(R, z, R.indexset) == doctest::Approx(svd.singularValues()(0)).epsilon(1e-8));
    }
}

TEST_CASE("eigenfunction residual identity and support") {
    QuasiLattice g;
    auto pot = TrigPotential(1.0, {{idx(1, 0, 0, 0), 0.08}, {idx(0, 0, 0, 1), cplx(0.0, 0.05)}});
    const double kap = 6.0, phi = 0.8;
    std::vector<double> l1;
    for (double R : {1.0, 2.0, 3.0}) {
        auto P = IndexProjector::ball(R);
        auto H = build_fiber(g, pot, cvec(kap, phi), 2, P);
        auto pair = eigenvalue_in_interval(H, std::pow(kap, 4), 0.5 * diag_gap(build_free_fiber(g, cvec(kap, phi), 2, P)));
        auto rep = eigenfunction_residual(pair, pot, g, R);
        CHECK(rep.support_ok);
        l1.push_back(rep.l1_norm);
        // H on the next-larger ball applied to the zero-padded vector
        auto big = IndexProjector::ball(R + pot.Q());
        auto Hb = build_fiber(g, pot, cvec(kap, phi), 2, big);
        CVector ext = CVector::Zero(Eigen::Index(big.size()));
        for (std::size_t i = 0; i < P.size(); ++i) ext(Eigen::Index(*big.position(P.members()[i]))) = pair.vector(Eigen::Index(i));
        CVector res = Hb.entries * ext - pair.lambda * ext;
        for (std::size_t i = 0; i < big.size(); ++i) {
            const auto& s = big.members()[i];
            if (P.contains(s)) continue;
            auto pos = rep.outer.position(s);
            cplx expect = pos ? rep.residual_coeffs(Eigen::Index(*pos)) : cplx(0.0);
            CHECK(std::abs(res(Eigen::Index(i)) - expect) <= 4 * DBL_EPSILON * std::abs(expect) + 1e-300);
        }
        for (const auto& s : rep.outer.members()) CHECK(big.contains(s));
    }
    CHECK(l1[1] < l1[0]);
    CHECK(l1[2] < l1[1]);

    auto free = build_fiber(g, TrigPotential::zero(), cvec(kap, phi), 2, IndexProjector::ball(2));
    auto fp = eigenvalue_in_interval(free, std::pow(kap, 4), 1.0);
    auto fr = eigenfunction_residual(fp, TrigPotential::zero(), g, 2);
    CHECK(fr.l1_norm == 0.0);
    CHECK(fr.residual_coeffs.size() == 0);
}

TEST_CASE("plane-wave evaluation") {
    QuasiLattice g;
    const Vec2 kap = rvec(3.0, 0.2);
    auto free = build_fiber(g, TrigPotential::zero(), cvec(3.0, 0.2), 2, IndexProjector::ball(1));
    auto fp = eigenvalue_in_interval(free, 81.0, 1.0);
    std::vector<Vec2> xs;
    for (int i = 0; i < 50; ++i) xs.push_back({0.37 * i, -0.11 * i});
    auto psi = evaluate_psi(fp, g, kap, xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        CHECK(std::abs(psi[i]) == doctest::Approx(1.0).epsilon(1e-14));
        CHECK(std::abs(psi[i] - std::polar(1.0, kap[0] * xs[i][0] + kap[1] * xs[i][1])) < 1e-13);
    }
    auto pot = TrigPotential::single_harmonic(idx(1, 0, 0, 0), 0.2);
    auto H = build_fiber(g, pot, cvec(3.0, 0.2), 2, IndexProjector::ball(2));
    auto p = eigenvalue_in_interval(H, 81.0, 5.0);
    auto at0 = evaluate_psi(p, g, kap, {{0.0, 0.0}});
    CHECK(std::abs(at0[0] - p.vector.sum()) < 1e-14);
    // sup over a grid against the ℓ¹ tail
    auto z = *p.indexset.position(LatticeIndex{});
    double tail = p.vector.cwiseAbs().sum() - std::abs(p.vector(Eigen::Index(z)));
    auto vals = evaluate_psi(p, g, kap, xs);
    for (std::size_t i = 0; i < xs.size(); ++i) {
        cplx plane = p.vector(Eigen::Index(z)) * std::polar(1.0, kap[0] * xs[i][0] + kap[1] * xs[i][1]);
        CHECK(std::abs(vals[i] - plane) <= tail + 1e-14);
    }
}

TEST_CASE("eigenvalue derivative along the radial direction") {
    QuasiLattice g;
    auto pot = TrigPotential::single_harmonic(idx(1, 0, 0, 0), 0.02);
    auto P = IndexProjector::ball(2);
    const double kap = 8.0, phi = 1.3, h = 1e-4;
    auto lam = [&](double k) {
        auto H = build_fiber(g, pot, cvec(k, phi), 2, P);
        return eigenvalue_in_interval(H, std::pow(k, 4), 10.0).lambda;
    };
    const double d = (lam(kap + h) - lam(kap - h)) / (2 * h);
    const double free = 4 * std::pow(kap, 3);
    const double g2 = std::fabs(g2_explicit(g, pot, rvec(kap, phi), 2, P));
    // truncation error h²·λ'''/6 with λ''' ≈ 24κ, plus roundoff
    const double fd = h * h * 24 * kap / 6 + 1e-16 * std::pow(kap, 4) / h;
    CHECK(std::fabs(d - free) <= 10 * (fd + g2));
}
