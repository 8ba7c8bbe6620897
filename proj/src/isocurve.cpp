#include "quasispec/isocurve.hpp"

#include <boost/math/tools/roots.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "quasispec/parallel.hpp"

namespace quasispec {

namespace {

double pow_int(double x, int n) {
    double r = 1.0;
    for (int i = 0; i < n; ++i) r *= x;
    return r;
}

const LevelSpec& level_spec(const IsoContext& ctx, int level) {
    if (level < 1 || level > static_cast<int>(ctx.levels.size()))
        throw IsoCurveError("level " + std::to_string(level) + " is not configured");
    return ctx.levels[static_cast<std::size_t>(level - 1)];
}

// index of the arc containing phi, or -1
int arc_of(const std::vector<Arc>& arcs, double phi) {
    for (std::size_t i = 0; i < arcs.size(); ++i)
        if (arcs[i].start <= phi && phi <= arcs[i].end) return static_cast<int>(i);
    return -1;
}

}  // namespace

double level_eigenvalue(const IsoContext& ctx, int level, double kappa, double phi) {
    const LevelSpec& spec = level_spec(ctx, level);
    const double center = level == 1 ? pow_int(kappa, 2 * ctx.l) : level_eigenvalue(ctx, level - 1, kappa, phi);
    CVec2 kv{kappa * std::cos(phi), kappa * std::sin(phi)};
    FiberMatrix H = build_fiber(ctx.lat, ctx.pot, kv, ctx.l, spec.indexset);
    return eigenvalue_only_in_interval(H, center, spec.half_width);
}

IsoCurvePoint kappa_at(const IsoContext& ctx, int level, double lambda, double phi) {
    if (!(lambda > 0)) throw IsoCurveError("lambda must be positive");
    level_spec(ctx, level);
    if (static_cast<int>(ctx.angle_sets.size()) >= level &&
        !ctx.angle_sets[static_cast<std::size_t>(level - 1)].contains(phi)) {
        std::ostringstream os;
        os << "resonant-angle: phi=" << phi << " is outside the level-" << level << " arcs";
        throw ResonantAngle(os.str());
    }
    const int twol = 2 * ctx.l;
    double seed, w0;
    auto f = [&](double k) { return level_eigenvalue(ctx, level, k, phi) - lambda; };
    const double base = std::pow(lambda, 1.0 / twol);
    if (level == 1) {
        seed = base;
        w0 = 0;
    } else {
        IsoCurvePoint prev = kappa_at(ctx, level - 1, lambda, phi);
        seed = prev.kappa;
        const double s = twol * pow_int(seed, twol - 1);
        const double gap = std::fabs(level_eigenvalue(ctx, level, seed, phi) - level_eigenvalue(ctx, level - 1, seed, phi));
        w0 = 10.0 * (prev.closure_residual + gap) / s;
    }
    IsoCurvePoint pt;
    pt.phi = phi;
    pt.level = level;
    const double f0 = f(seed);
    if (f0 == 0.0) {
        pt.kappa = seed;
        pt.closure_residual = 0.0;
        return pt;
    }
    // Newton-centred bracket, widened by 4× until the sign changes; capped at [½, 3/2]·λ^{1/2l}
    const double slope = twol * pow_int(seed, twol - 1);
    const double mid = seed - f0 / slope;
    double w = std::max({w0, 4.0 * std::fabs(mid - seed), 1e-12 * seed});
    const double cap_lo = 0.5 * base, cap_hi = 1.5 * base;
    double a = 0, b = 0, fa = 0, fb = 0;
    for (;;) {
        a = std::max(cap_lo, mid - w);
        b = std::min(cap_hi, mid + w);
        fa = f(a);
        fb = f(b);
        if (fa <= 0.0 && fb >= 0.0) break;
        if (a == cap_lo && b == cap_hi) {
            std::ostringstream os;
            os << "no-root-in-bracket: phi=" << phi << " level " << level;
            throw NoRootInBracket(os.str());
        }
        w *= 4.0;
    }
    // strict monotonicity on the bracket (uniqueness of the root)
    double last = fa;
    for (int i = 1; i <= 8; ++i) {
        double x = i == 8 ? b : a + (b - a) * i / 8.0;
        double v = i == 8 ? fb : f(x);
        if (!(v > last) && !(v == last && v == 0.0)) {
            std::ostringstream os;
            os << "non-monotone map on the bracket at phi=" << phi << " level " << level;
            throw NoRootInBracket(os.str());
        }
        last = v;
    }
    double root;
    if (fa == 0.0) {
        root = a;
    } else if (fb == 0.0) {
        root = b;
    } else {
        std::uintmax_t iters = 200;
        auto tol = [](double x, double y) { return std::fabs(x - y) <= 2.0 * std::numeric_limits<double>::epsilon() * std::fabs(x); };
        auto r = boost::math::tools::toms748_solve(f, a, b, fa, fb, tol, iters);
        const double fr1 = f(r.first), fr2 = f(r.second);
        root = std::fabs(fr1) <= std::fabs(fr2) ? r.first : r.second;
    }
    pt.kappa = root;
    pt.closure_residual = std::fabs(f(root));
    if (pt.closure_residual > 1e-10 * lambda) {
        std::ostringstream os;
        os << "closure residual " << pt.closure_residual << " above tolerance at phi=" << phi;
        throw IsoCurveError(os.str());
    }
    return pt;
}

std::vector<double> arc_samples(const std::vector<Arc>& arcs, int samples_per_arc) {
    std::vector<double> out;
    for (const auto& a : arcs)
        for (int i = 0; i < samples_per_arc; ++i) out.push_back(a.start + (i + 0.5) * a.length() / samples_per_arc);
    return out;
}

IsoCurve trace_at(const IsoContext& ctx, int level, double lambda, const std::vector<Arc>& arcs,
                  int samples_per_arc) {
    if (samples_per_arc < 1) throw IsoCurveError("samples_per_arc must be >= 1");
    IsoCurve curve;
    curve.lambda = lambda;
    curve.level = level;
    curve.arcs = arcs;
    struct Slot {
        std::optional<IsoCurvePoint> pt;
        std::string error;
        double phi = 0;
    };
    std::vector<Slot> slots;
    std::vector<double> steps;
    for (const auto& a : arcs)
        for (int i = 0; i < samples_per_arc; ++i) {
            slots.push_back({std::nullopt, {}, a.start + (i + 0.5) * a.length() / samples_per_arc});
            steps.push_back(a.length() / (10.0 * samples_per_arc));
        }
    parallel_for(slots.size(), ctx.threads, [&](std::size_t i) {
        Slot& s = slots[i];
        try {
            IsoCurvePoint p = kappa_at(ctx, level, lambda, s.phi);
            try {
                const double h = steps[i];
                double kp = kappa_at(ctx, level, lambda, s.phi + h).kappa;
                double km = kappa_at(ctx, level, lambda, s.phi - h).kappa;
                p.dkappa_dphi = (kp - km) / (2.0 * h);
            } catch (const std::exception&) {
            }
            s.pt = p;
        } catch (const std::exception& e) {
            s.error = e.what();
        }
    });
    for (auto& s : slots) {
        if (s.pt) curve.points.push_back(*s.pt);
        else curve.failures.push_back({s.phi, s.error});
    }
    return curve;
}

IsoCurve trace_curve(const IsoContext& ctx, int level, double lambda, int samples_per_arc) {
    std::vector<Arc> arcs = {{0.0, kTwoPi}};
    if (static_cast<int>(ctx.angle_sets.size()) >= level) arcs = ctx.angle_sets[static_cast<std::size_t>(level - 1)].real_arcs;
    return trace_at(ctx, level, lambda, arcs, samples_per_arc);
}

CurveDiff curve_diff(const IsoCurve& a, const IsoCurve& b) {
    if (a.lambda != b.lambda) throw IsoCurveError("curve_diff needs curves at the same lambda");
    std::map<double, double> ka;
    for (const auto& p : a.points) ka[p.phi] = p.kappa;
    CurveDiff out;
    for (const auto& p : b.points) {
        auto it = ka.find(p.phi);
        if (it == ka.end()) continue;
        out.rows.push_back({p.phi, p.kappa - it->second, std::nullopt});
    }
    if (out.rows.empty()) throw EmptyIntersection("empty-intersection: no shared sample angles");
    std::sort(out.rows.begin(), out.rows.end(), [](const CurveDiffRow& x, const CurveDiffRow& y) { return x.phi < y.phi; });
    for (std::size_t i = 0; i < out.rows.size(); ++i) {
        out.max_abs = std::max(out.max_abs, std::fabs(out.rows[i].h));
        out.mean_abs += std::fabs(out.rows[i].h);
        if (i == 0 || i + 1 == out.rows.size()) continue;
        const int arc = arc_of(b.arcs, out.rows[i].phi);
        if (arc < 0 || arc_of(b.arcs, out.rows[i - 1].phi) != arc || arc_of(b.arcs, out.rows[i + 1].phi) != arc) continue;
        out.rows[i].dh_dphi = (out.rows[i + 1].h - out.rows[i - 1].h) / (out.rows[i + 1].phi - out.rows[i - 1].phi);
    }
    out.mean_abs /= static_cast<double>(out.rows.size());
    return out;
}

}  // namespace quasispec
