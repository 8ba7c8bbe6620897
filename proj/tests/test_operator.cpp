#include "doctest.h"

#include <cmath>
#include <random>

#include "quasispec/operator.hpp"

using namespace quasispec;

namespace {

LatticeIndex idx(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) { return {{a, b}, {c, d}}; }

double max_abs(const CMatrix& A) { return A.cwiseAbs().maxCoeff(); }

TrigPotential random_potential(std::mt19937_64& rng, double Q) {
    std::uniform_real_distribution<double> u(-1, 1);
    std::vector<PotentialTerm> terms;
    for (const auto& q : enumerate_indices(Q)) {
        if (q.is_zero() || !(q < -q)) continue;
        if (u(rng) < 0) terms.push_back({q, {0.1 * u(rng), 0.1 * u(rng)}});
    }
    return TrigPotential(Q, terms);
}

}  // namespace

TEST_CASE("free fiber diagonal entries") {
    QuasiLattice g;
    IndexProjector zero({LatticeIndex{}});
    auto H1 = build_fiber(g, TrigPotential::zero(), {1.0, 0.0}, 2, zero);
    CHECK(H1.entries.rows() == 1);
    CHECK(H1.entries(0, 0) == cplx(1.0));
    auto H2 = build_fiber(g, TrigPotential::zero(), {2.0, 0.0}, 2, zero);
    CHECK(H2.entries(0, 0) == cplx(16.0));
}

TEST_CASE("single harmonic off-diagonal pattern and Hermiticity") {
    QuasiLattice g;
    const LatticeIndex q = idx(1, 0, 0, 0);
    auto pot = TrigPotential::single_harmonic(q, 0.1);
    auto P = IndexProjector::ball(2);
    auto H = build_fiber(g, pot, {3.0, 0.5}, 2, P);
    const auto& mem = P.members();
    for (std::size_t i = 0; i < mem.size(); ++i)
        for (std::size_t j = 0; j < mem.size(); ++j) {
            if (i == j) continue;
            auto d = mem[i] - mem[j];
            cplx e = H.entries(Eigen::Index(i), Eigen::Index(j));
            if (d == q || d == -q) CHECK(e == cplx(0.1));
            else CHECK(e == cplx(0.0));
        }
    CHECK(max_abs(H.entries - H.entries.adjoint()) < 1e-14 * max_abs(H.entries));
}

TEST_CASE("potential validation") {
    CHECK_THROWS_AS(TrigPotential(1.0, {{LatticeIndex{}, 1.0}}), OperatorError);
    CHECK_THROWS_AS(TrigPotential(1.0, {{idx(2, 0, 0, 0), 1.0}}), OperatorError);
    CHECK_THROWS_AS(TrigPotential(1.0, {{idx(1, 0, 0, 0), 1.0}, {idx(-1, 0, 0, 0), 2.0}}), OperatorError);
    TrigPotential p(1.0, {{idx(1, 0, 0, 0), cplx(0.1, 0.2)}});
    CHECK(p.coeff(idx(-1, 0, 0, 0)) == cplx(0.1, -0.2));
    CHECK(p.coeff(idx(0, 1, 0, 0)) == cplx(0.0));
}

TEST_CASE("random potentials give Hermitian fibers with exact sparsity and correct diagonal") {
    QuasiLattice g;
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3, 3);
    for (int trial = 0; trial < 10; ++trial) {
        auto pot = random_potential(rng, 1.5);
        auto P = IndexProjector::ball(2.2);
        CVec2 kap{u(rng), u(rng)};
        auto H = build_fiber(g, pot, kap, 2 + trial % 2, P);
        CHECK(max_abs(H.entries - H.entries.adjoint()) <= 1e-14 * max_abs(H.entries));
        const auto& mem = P.members();
        for (std::size_t i = 0; i < mem.size(); ++i) {
            Vec2 p = g.p_vec(mem[i]);
            double x = kap[0].real() + p[0], y = kap[1].real() + p[1];
            double d = std::pow(x * x + y * y, H.l);
            CHECK(H.entries(Eigen::Index(i), Eigen::Index(i)).real() == doctest::Approx(d).epsilon(1e-12));
            for (std::size_t j = 0; j < mem.size(); ++j)
                if (norm_triple(mem[i] - mem[j]) > pot.Q())
                    CHECK(H.entries(Eigen::Index(i), Eigen::Index(j)) == cplx(0.0));
        }
    }
}

TEST_CASE("complexified_norm2 examples") {
    QuasiLattice g;
    CHECK(complexified_norm2(g, 1.0, 0.0, LatticeIndex{}) == cplx(1.0));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(0, kTwoPi);
    for (const auto& m : enumerate_indices(1.5)) {
        double kap = 0.5 + u(rng), phi = u(rng);
        Vec2 p = g.p_vec(m);
        double x = kap * std::cos(phi) + p[0], y = kap * std::sin(phi) + p[1];
        CHECK(complexified_norm2(g, kap, phi, m).real() == doctest::Approx(x * x + y * y).epsilon(1e-12));
        if (!m.is_zero()) {
            double pm = g.p_norm(m);
            cplx v = complexified_norm2(g, kap, g.p_angle(m) + M_PI / 2, m);
            CHECK(v.real() == doctest::Approx(kap * kap + pm * pm).epsilon(1e-12));
        }
    }
}

TEST_CASE("complexified_norm2 satisfies Cauchy-Riemann") {
    QuasiLattice g;
    const double h = 1e-5;
    for (const auto& m : enumerate_indices(1)) {
        for (double re = 0.3; re < 6; re += 1.1) {
            cplx z(re, 0.2);
            auto f = [&](cplx phi) { return complexified_norm2(g, 2.5, phi, m); };
            cplx fx = (f(z + h) - f(z - h)) / (2 * h);
            cplx fy = (f(z + cplx(0, h)) - f(z - cplx(0, h))) / (2 * h);
            // ∂f/∂z̄ = (f_x + i f_y)/2 vanishes for holomorphic f
            CHECK(std::abs(0.5 * (fx + cplx(0, 1) * fy)) < 1e-6);
        }
    }
}

TEST_CASE("restrict") {
    QuasiLattice g;
    auto pot = TrigPotential::single_harmonic(idx(0, 1, 0, 0), cplx(0.0, 0.3));
    auto P = IndexProjector::ball(2);
    auto H = build_fiber(g, pot, {1.5, -0.5}, 2, P);
    auto same = restrict(H, P);
    CHECK(same.entries == H.entries);
    auto z = restrict(H, IndexProjector({LatticeIndex{}}));
    CHECK(z.entries.rows() == 1);
    CHECK(z.entries(0, 0) == H.entries(Eigen::Index(*P.position(LatticeIndex{})), Eigen::Index(*P.position(LatticeIndex{}))));
    std::mt19937_64 rng(11);
    for (int t = 0; t < 10; ++t) {
        std::vector<LatticeIndex> a, b;
        for (const auto& m : P.members())
            if (rng() % 3) {
                a.push_back(m);
                if (rng() % 2) b.push_back(m);
            }
        if (b.empty()) continue;
        IndexProjector A(a), B(b);
        CHECK(restrict(restrict(H, A), B).entries == restrict(H, B).entries);
    }
    CHECK_THROWS_AS(restrict(H, IndexProjector({idx(9, 9, 9, 9)})), OperatorError);
}

TEST_CASE("projector membership and set algebra") {
    auto P = IndexProjector::ball(1);
    CHECK(P.size() == 9);
    CHECK(P.contains(idx(0, 0, 0, -1)));
    CHECK_FALSE(P.contains(idx(1, 0, 0, 1)));
    auto Q = IndexProjector({idx(1, 0, 0, 1), idx(0, 0, 0, 0)});
    CHECK(set_union(P, Q).size() == 10);
    CHECK(set_difference(P, Q).size() == 8);
    IndexProjector twice(P.members());
    CHECK(twice.members() == P.members());
}
