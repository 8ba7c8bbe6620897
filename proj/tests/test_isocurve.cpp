#include "doctest.h"

#include <cfloat>
#include <cmath>

#include "quasispec/isocurve.hpp"

using namespace quasispec;

namespace {

LatticeIndex idx(std::int64_t a, std::int64_t b, std::int64_t c, std::int64_t d) { return {{a, b}, {c, d}}; }

IsoContext free_context() {
    IsoContext ctx;
    ctx.pot = TrigPotential::zero();
    ctx.l = 2;
    ctx.levels = {{IndexProjector::ball(1), 1e-6}, {IndexProjector::ball(2), 1e-7}};
    return ctx;
}

IsoContext small_v_context(double amp) {
    IsoContext ctx;
    ctx.pot = TrigPotential(1.5, {{idx(1, 0, 0, 0), amp}, {idx(1, 1, 0, 0), cplx(0.0, amp)}});
    ctx.l = 2;
    ctx.levels = {{IndexProjector::ball(1), 40.0}, {IndexProjector::ball(2), 20.0}};
    return ctx;
}

}  // namespace

TEST_CASE("free operator: kappa is the 2l-th root of lambda") {
    auto ctx = free_context();
    for (int i = 0; i < 200; ++i) {
        double phi = kTwoPi * (i + 0.5) / 200;
        auto p = kappa_at(ctx, 1, 16.0, phi);
        CHECK(std::fabs(p.kappa - 2.0) <= 1e-12);
        CHECK(p.closure_residual <= 1e-10 * 16.0);
        auto p2 = kappa_at(ctx, 2, 16.0, phi);
        CHECK(std::fabs(p2.kappa - 2.0) <= 4 * DBL_EPSILON * 2.0);
    }
}

TEST_CASE("free curve is a circle at machine precision") {
    auto ctx = free_context();
    const double lambda = 81.0;
    auto c = trace_curve(ctx, 1, lambda, 64);
    CHECK(c.points.size() == 64);
    CHECK(c.failures.empty());
    double worst = 0;
    for (const auto& p : c.points) worst = std::max(worst, std::fabs(p.kappa - 3.0));
    CHECK(worst <= 4 * DBL_EPSILON * 3.0);
}

TEST_CASE("closure and bookkeeping under a small potential") {
    auto ctx = small_v_context(0.05);
    const double lambda = 1e4;
    ctx.angle_sets.resize(1);
    ctx.angle_sets[0].real_arcs = {{0.2, 0.9}, {2.0, 2.6}, {4.0, 5.5}};
    auto c = trace_curve(ctx, 1, lambda, 20);
    CHECK(c.points.size() + c.failures.size() == 60);
    CHECK(c.points.size() > 0);
    double prev = -1;
    for (const auto& p : c.points) {
        CHECK(p.closure_residual <= 1e-10 * lambda);
        CHECK(std::fabs(level_eigenvalue(ctx, 1, p.kappa, p.phi) - lambda) <= 1e-10 * lambda);
        CHECK(ctx.angle_sets[0].contains(p.phi));
        CHECK(p.phi > prev);
        prev = p.phi;
    }
    CHECK_THROWS_AS(kappa_at(ctx, 1, lambda, 1.5), ResonantAngle);
}

TEST_CASE("kappa grows with lambda at the free rate") {
    auto ctx = small_v_context(0.02);
    const double lambda = 1e4, dl = 1e-2;
    int checked = 0;
    for (double phi : {0.3, 0.7, 2.2, 4.1, 5.0}) {
        try {
            double k0 = kappa_at(ctx, 1, lambda, phi).kappa;
            double k1 = kappa_at(ctx, 1, lambda + dl, phi).kappa;
            CHECK(k1 > k0);
            double slope = (k1 - k0) / dl;
            double expect = 1.0 / (4.0 * std::pow(k0, 3));
            CHECK(slope == doctest::Approx(expect).epsilon(0.01));
            ++checked;
        } catch (const SpectraError&) {
        }
    }
    CHECK(checked >= 3);
}

TEST_CASE("level-2 displacement obeys the chain-rule bound") {
    auto ctx = small_v_context(0.05);
    const double lambda = 1e4;
    std::vector<Arc> arcs = {{0.2, 1.2}, {3.4, 4.4}};
    auto c1 = trace_at(ctx, 1, lambda, arcs, 16);
    auto c2 = trace_at(ctx, 2, lambda, arcs, 16);
    auto d = curve_diff(c1, c2);
    // λ⁽²⁾(κ₂) − λ⁽²⁾(κ₁) = λ⁽¹⁾(κ₁) − λ⁽²⁾(κ₁) up to the two closure residuals
    double max_dl = 0, min_slope = INFINITY;
    for (const auto& row : d.rows) {
        double k1 = 0, closure = 0;
        for (const auto& p : c1.points)
            if (p.phi == row.phi) {
                k1 = p.kappa;
                closure += p.closure_residual;
            }
        for (const auto& p : c2.points)
            if (p.phi == row.phi) closure += p.closure_residual;
        max_dl = std::max(max_dl, std::fabs(level_eigenvalue(ctx, 2, k1, row.phi) - level_eigenvalue(ctx, 1, k1, row.phi)) + closure);
        const double h = 1e-6;
        double s = (level_eigenvalue(ctx, 2, k1 + h, row.phi) - level_eigenvalue(ctx, 2, k1 - h, row.phi)) / (2 * h);
        min_slope = std::min(min_slope, std::fabs(s));
    }
    REQUIRE(!d.rows.empty());
    CHECK(d.max_abs > 0);
    CHECK(d.max_abs <= max_dl / min_slope);
}

TEST_CASE("curve_diff trivial cases and amplitude trend") {
    auto free = free_context();
    auto a = trace_curve(free, 1, 16.0, 32);
    auto same = curve_diff(a, a);
    CHECK(same.max_abs == 0.0);
    auto b = trace_curve(free, 2, 16.0, 32);
    auto fd = curve_diff(a, b);
    CHECK(fd.max_abs <= 4 * DBL_EPSILON * 2.0);

    std::vector<Arc> arcs = {{0.2, 1.2}, {3.4, 4.4}};
    auto h_of = [&](double amp) {
        auto ctx = small_v_context(amp);
        return curve_diff(trace_at(ctx, 1, 1e4, arcs, 8), trace_at(ctx, 2, 1e4, arcs, 8)).max_abs;
    };
    const double ratio = h_of(0.04) / h_of(0.02);
    CHECK(ratio >= 3.0);
    CHECK(ratio <= 5.0);

    IsoCurve empty;
    empty.lambda = 16.0;
    CHECK_THROWS_AS(curve_diff(a, empty), EmptyIntersection);
}

TEST_CASE("derivative in phi is absent only when a neighbour fails") {
    auto ctx = small_v_context(0.05);
    auto c = trace_at(ctx, 1, 1e4, {{0.3, 0.8}}, 10);
    const double h = 0.5 / 100;
    int with = 0;
    for (const auto& p : c.points) {
        bool neighbour_fails = false;
        for (double x : {p.phi - h, p.phi + h}) {
            try {
                kappa_at(ctx, 1, 1e4, x);
            } catch (const std::exception&) {
                neighbour_fails = true;
            }
        }
        CHECK(neighbour_fails == !p.dkappa_dphi.has_value());
        if (p.dkappa_dphi) {
            ++with;
            const double fd = (kappa_at(ctx, 1, 1e4, p.phi + h).kappa - kappa_at(ctx, 1, 1e4, p.phi - h).kappa) / (2 * h);
            CHECK(*p.dkappa_dphi == fd);
        }
    }
    CHECK(with >= 5);
}
