#include "quasispec/lattice.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "bigfloat.hpp"

namespace quasispec {

using detail::BigFloat;

namespace {

// error-free transforms
inline void two_sum(double a, double b, double& s, double& e) {
    s = a + b;
    double bb = s - a;
    e = (a - (s - bb)) + (b - bb);
}

inline void two_prod(double a, double b, double& p, double& e) {
    p = a * b;
    e = std::fma(a, b, -p);
}

struct DD {
    double hi, lo;
};

inline DD dd_add(DD a, DD b) {
    double s, e;
    two_sum(a.hi, b.hi, s, e);
    e += a.lo + b.lo;
    double hi, lo;
    two_sum(s, e, hi, lo);
    return {hi, lo};
}

inline DD dd_mul(DD a, DD b) {
    double p, e;
    two_prod(a.hi, b.hi, p, e);
    e += a.hi * b.lo + a.lo * b.hi;
    double hi, lo;
    two_sum(p, e, hi, lo);
    return {hi, lo};
}

inline DD dd_from_int(std::int64_t v) {
    double hi = static_cast<double>(v);
    double lo = static_cast<double>(v - static_cast<std::int64_t>(hi));
    return {hi, lo};
}

constexpr DD kTwoPiDD{6.283185307179586232e+00, 2.449293598294706414e-16};

void split_dd(const BigFloat& x, double& hi, double& lo) {
    hi = x.to_double();
    BigFloat r(x.prec());
    mpfr_sub_d(r.get(), x.get(), hi, MPFR_RNDN);
    lo = r.to_double();
}

}  // namespace

std::string LatticeIndex::str() const {
    std::ostringstream os;
    os << "(" << s1[0] << "," << s1[1] << ";" << s2[0] << "," << s2[1] << ")";
    return os.str();
}

std::size_t LatticeIndexHash::operator()(const LatticeIndex& m) const noexcept {
    std::uint64_t h = 1469598103934665603ull;
    for (std::int64_t v : {m.s1[0], m.s1[1], m.s2[0], m.s2[1]}) {
        h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h *= 1099511628211ull;
    }
    return static_cast<std::size_t>(h);
}

double euclid(const Int2& v) {
    double x = static_cast<double>(v[0]), y = static_cast<double>(v[1]);
    return std::sqrt(x * x + y * y);
}

double norm_triple(const LatticeIndex& m) { return euclid(m.s1) + euclid(m.s2); }

bool AlphaSpec::is_rational() const {
    switch (kind) {
        case Kind::Golden: return false;
        case Kind::Literal: return true;
        case Kind::ContinuedFraction: return cf_period.empty();
    }
    return false;
}

std::string AlphaSpec::describe() const {
    std::ostringstream os;
    switch (kind) {
        case Kind::Golden: os << "golden"; break;
        case Kind::Literal: os << literal; break;
        case Kind::ContinuedFraction: {
            os << "[";
            for (std::size_t i = 0; i < cf_prefix.size(); ++i) os << (i ? (i == 1 ? "; " : ", ") : "") << cf_prefix[i];
            if (!cf_period.empty()) {
                os << (cf_prefix.empty() ? "(" : ", (");
                for (std::size_t i = 0; i < cf_period.size(); ++i) os << (i ? ", " : "") << cf_period[i];
                os << ")";
            }
            os << "]";
            break;
        }
    }
    return os.str();
}

struct QuasiLattice::Impl {
    BigFloat alpha;
    explicit Impl(mpfr_prec_t prec) : alpha(prec) {}
};

namespace {

// value of the periodic tail y = [b1; b2, ..., bm, y]
void periodic_tail(const std::vector<std::int64_t>& b, BigFloat& y) {
    mpfr_prec_t prec = y.prec();
    BigFloat p0(prec), p1(prec), q0(prec), q1(prec), t(prec);
    mpfr_set_ui(p0.get(), 1, MPFR_RNDN);  // P_{-1}
    mpfr_set_ui(q0.get(), 0, MPFR_RNDN);  // Q_{-1}
    mpfr_set_si(p1.get(), b[0], MPFR_RNDN);
    mpfr_set_ui(q1.get(), 1, MPFR_RNDN);
    for (std::size_t i = 1; i < b.size(); ++i) {
        mpfr_mul_si(t.get(), p1.get(), b[i], MPFR_RNDN);
        mpfr_add(t.get(), t.get(), p0.get(), MPFR_RNDN);
        p0 = p1;
        p1 = t;
        mpfr_mul_si(t.get(), q1.get(), b[i], MPFR_RNDN);
        mpfr_add(t.get(), t.get(), q0.get(), MPFR_RNDN);
        q0 = q1;
        q1 = t;
    }
    // Q y^2 + (Q' - P) y - P' = 0 with (P, P', Q, Q') = (p1, p0, q1, q0)
    BigFloat bcoef(prec), disc(prec), tmp(prec);
    mpfr_sub(bcoef.get(), q0.get(), p1.get(), MPFR_RNDN);
    mpfr_sqr(disc.get(), bcoef.get(), MPFR_RNDN);
    mpfr_mul(tmp.get(), q1.get(), p0.get(), MPFR_RNDN);
    mpfr_mul_ui(tmp.get(), tmp.get(), 4, MPFR_RNDN);
    mpfr_add(disc.get(), disc.get(), tmp.get(), MPFR_RNDN);
    mpfr_sqrt(disc.get(), disc.get(), MPFR_RNDN);
    mpfr_sub(y.get(), disc.get(), bcoef.get(), MPFR_RNDN);
    mpfr_div(y.get(), y.get(), q1.get(), MPFR_RNDN);
    mpfr_div_ui(y.get(), y.get(), 2, MPFR_RNDN);
}

}  // namespace

QuasiLattice::QuasiLattice(const AlphaSpec& spec, double mu, int precision)
    : spec_(spec), mu_(mu), precision_(precision) {
    if (precision < 17) throw LatticeError("precision must be at least 17 decimal digits");
    if (!(mu >= 2.0)) throw LatticeError("irrationality measure mu must be >= 2");
    impl_ = std::make_unique<Impl>(detail::bits_for_digits(precision));
    BigFloat& a = impl_->alpha;
    switch (spec.kind) {
        case AlphaSpec::Kind::Golden:
            mpfr_sqrt_ui(a.get(), 5, MPFR_RNDN);
            mpfr_sub_ui(a.get(), a.get(), 1, MPFR_RNDN);
            mpfr_div_ui(a.get(), a.get(), 2, MPFR_RNDN);
            break;
        case AlphaSpec::Kind::Literal:
            if (spec.literal.empty() || mpfr_set_str(a.get(), spec.literal.c_str(), 10, MPFR_RNDN) != 0)
                throw LatticeError("alpha literal is not a decimal number: '" + spec.literal + "'");
            break;
        case AlphaSpec::Kind::ContinuedFraction: {
            const auto& pre = spec.cf_prefix;
            const auto& per = spec.cf_period;
            if (pre.empty() && per.empty()) throw LatticeError("empty continued fraction");
            for (std::size_t i = 1; i < pre.size(); ++i)
                if (pre[i] < 1) throw LatticeError("continued fraction partial quotients must be >= 1");
            for (auto b : per)
                if (b < 1) throw LatticeError("continued fraction partial quotients must be >= 1");
            BigFloat x(a.prec());
            bool have = false;
            if (!per.empty()) {
                periodic_tail(per, x);
                have = true;
            }
            for (std::size_t i = pre.size(); i-- > 0;) {
                if (have) {
                    mpfr_ui_div(x.get(), 1, x.get(), MPFR_RNDN);
                    mpfr_add_si(x.get(), x.get(), pre[i], MPFR_RNDN);
                } else {
                    mpfr_set_si(x.get(), pre[i], MPFR_RNDN);
                    have = true;
                }
            }
            a = x;
            break;
        }
    }
    if (!(mpfr_cmp_ui(a.get(), 0) > 0 && mpfr_cmp_ui(a.get(), 1) < 0))
        throw LatticeError("alpha must lie in (0,1), got " + a.to_string(20));
    split_dd(a, alpha_hi_, alpha_lo_);
}

QuasiLattice::~QuasiLattice() = default;
QuasiLattice::QuasiLattice(const QuasiLattice& o)
    : impl_(std::make_unique<Impl>(*o.impl_)),
      spec_(o.spec_),
      mu_(o.mu_),
      precision_(o.precision_),
      alpha_hi_(o.alpha_hi_),
      alpha_lo_(o.alpha_lo_) {}
QuasiLattice& QuasiLattice::operator=(const QuasiLattice& o) {
    if (this != &o) {
        impl_ = std::make_unique<Impl>(*o.impl_);
        spec_ = o.spec_;
        mu_ = o.mu_;
        precision_ = o.precision_;
        alpha_hi_ = o.alpha_hi_;
        alpha_lo_ = o.alpha_lo_;
    }
    return *this;
}
QuasiLattice::QuasiLattice(QuasiLattice&&) noexcept = default;
QuasiLattice& QuasiLattice::operator=(QuasiLattice&&) noexcept = default;

std::string QuasiLattice::alpha_string(int digits) const { return impl_->alpha.to_string(digits); }

Vec2 QuasiLattice::x_vec(const LatticeIndex& m) const {
    Vec2 out{};
    DD a{alpha_hi_, alpha_lo_};
    for (int j = 0; j < 2; ++j) {
        DD v = dd_add(dd_from_int(m.s1[j]), dd_mul(a, dd_from_int(m.s2[j])));
        out[j] = v.hi + v.lo;
    }
    return out;
}

Vec2 QuasiLattice::p_vec(const LatticeIndex& m) const {
    Vec2 out{};
    DD a{alpha_hi_, alpha_lo_};
    for (int j = 0; j < 2; ++j) {
        DD v = dd_add(dd_from_int(m.s1[j]), dd_mul(a, dd_from_int(m.s2[j])));
        DD p = dd_mul(kTwoPiDD, v);
        out[j] = p.hi + p.lo;
    }
    return out;
}

double QuasiLattice::p_norm(const LatticeIndex& m) const {
    Vec2 p = p_vec(m);
    return std::sqrt(p[0] * p[0] + p[1] * p[1]);
}

double QuasiLattice::p_angle(const LatticeIndex& m) const {
    if (m.is_zero()) return 0.0;
    // φ_{−m} is defined as φ_m + π so that ±m pairs are exactly antipodal
    if (m < -m) {
        double a = p_angle(-m) + M_PI;
        return a >= kTwoPi ? a - kTwoPi : a;
    }
    Vec2 p = p_vec(m);
    double a = std::atan2(p[1], p[0]);
    return a < 0 ? a + kTwoPi : a;
}

RationalApprox QuasiLattice::evaluate(std::int64_t p, std::int64_t q) const {
    if (q <= 0) throw LatticeError("denominator must be positive");
    BigFloat r(impl_->alpha.prec()), e(impl_->alpha.prec());
    mpfr_mul_si(r.get(), impl_->alpha.get(), q, MPFR_RNDN);
    mpfr_add_si(r.get(), r.get(), p, MPFR_RNDN);
    mpfr_div_si(e.get(), r.get(), q, MPFR_RNDN);
    RationalApprox out;
    out.p = p;
    out.q = q;
    out.eps_q = e.to_double();
    out.abs_residual = std::fabs(r.to_double());
    return out;
}

std::vector<std::int64_t> QuasiLattice::partial_quotients(std::size_t count) const {
    std::vector<std::int64_t> out;
    mpfr_prec_t prec = impl_->alpha.prec();
    BigFloat x(impl_->alpha), fl(prec);
    // expansion stops once the remainder is at the noise floor of the working precision
    const long floor_exp = -static_cast<long>(prec) + 24;
    for (std::size_t i = 0; i < count; ++i) {
        mpfr_floor(fl.get(), x.get());
        if (mpfr_cmp_d(fl.get(), 9.0e18) > 0) break;
        out.push_back(mpfr_get_si(fl.get(), MPFR_RNDN));
        mpfr_sub(x.get(), x.get(), fl.get(), MPFR_RNDN);
        if (mpfr_zero_p(x.get()) || mpfr_get_exp(x.get()) < floor_exp) break;
        mpfr_ui_div(x.get(), 1, x.get(), MPFR_RNDN);
    }
    return out;
}

void CEpsilonTable::insert(const CEpsilonEntry& e) {
    for (auto& x : entries_)
        if (x.eps == e.eps) {
            x = e;
            return;
        }
    entries_.push_back(e);
}

std::optional<CEpsilonEntry> CEpsilonTable::find(double eps) const {
    for (const auto& x : entries_)
        if (x.eps == eps) return x;
    return std::nullopt;
}

CEpsilonEntry fit_c_epsilon(const QuasiLattice& lat, double eps, double range) {
    if (!(eps > 0)) throw LatticeError("eps must be positive");
    CEpsilonEntry best;
    best.eps = eps;
    best.range = range;
    best.C = std::numeric_limits<double>::infinity();
    const double expo = lat.mu() - 1.0 + eps;
    for_each_index(range, [&](const LatticeIndex& m) {
        if (m.is_zero()) return;
        double c = lat.p_norm(m) * std::pow(norm_triple(m), expo) / kTwoPi;
        if (c < best.C) {
            best.C = c;
            best.argmin = m;
        }
    });
    // keep the certificate strictly on the safe side of rounding in the bound evaluation
    best.C *= (1.0 - 1e-12);
    return best;
}

double pnorm_lower_bound(const QuasiLattice& lat, const CEpsilonTable& table, const LatticeIndex& m, double eps) {
    if (m.is_zero()) throw LatticeError("pnorm_lower_bound needs m != 0");
    if (!(eps > 0)) throw LatticeError("eps must be positive");
    auto e = table.find(eps);
    if (!e) throw LatticeError("missing-C_eps: no constant for eps = " + std::to_string(eps));
    return kTwoPi * e->C * std::pow(norm_triple(m), -(lat.mu() - 1.0 + eps));
}

RationalApprox best_rational(const QuasiLattice& lat, std::int64_t q_bound) {
    if (q_bound < 1) throw LatticeError("q_bound must be >= 1");
    // convergents h/k of α; the minimizer of |αq − h| over q ≤ bound is among them
    auto a = lat.partial_quotients(200);
    std::vector<std::pair<std::int64_t, std::int64_t>> conv;  // (h, k)
    __int128 h0 = 1, k0 = 0, h1 = a[0], k1 = 1;
    conv.emplace_back(static_cast<std::int64_t>(h1), 1);
    for (std::size_t i = 1; i < a.size(); ++i) {
        __int128 h2 = a[i] * h1 + h0, k2 = a[i] * k1 + k0;
        if (k2 > q_bound) {
            // semiconvergents below the next convergent, for safety at the start of the expansion
            for (std::int64_t t = 1; t < a[i]; ++t) {
                __int128 hs = t * h1 + h0, ks = t * k1 + k0;
                if (ks > q_bound) break;
                conv.emplace_back(static_cast<std::int64_t>(hs), static_cast<std::int64_t>(ks));
            }
            break;
        }
        conv.emplace_back(static_cast<std::int64_t>(h2), static_cast<std::int64_t>(k2));
        h0 = h1;
        k0 = k1;
        h1 = h2;
        k1 = k2;
    }
    // q = 1 candidates with both neighbours of α
    conv.emplace_back(0, 1);
    conv.emplace_back(1, 1);

    mpfr_prec_t prec = detail::bits_for_digits(lat.precision());
    BigFloat alpha(prec);
    mpfr_set_str(alpha.get(), lat.alpha_string(lat.precision() + 10).c_str(), 10, MPFR_RNDN);
    BigFloat best(prec), cur(prec);
    bool have = false;
    std::int64_t bp = 0, bq = 1;
    for (auto [h, k] : conv) {
        if (k < 1 || k > q_bound) continue;
        std::int64_t g = std::gcd(h < 0 ? -h : h, k);
        if (g != 1) continue;
        mpfr_mul_si(cur.get(), alpha.get(), k, MPFR_RNDN);
        mpfr_sub_si(cur.get(), cur.get(), h, MPFR_RNDN);
        mpfr_abs(cur.get(), cur.get(), MPFR_RNDN);
        int c = have ? mpfr_cmp(cur.get(), best.get()) : -1;
        if (c < 0 || (c == 0 && k < bq)) {
            best = cur;
            bp = -h;
            bq = k;
            have = true;
        }
    }
    return lat.evaluate(bp, bq);
}

void for_each_index(double radius_triple, const std::function<void(const LatticeIndex&)>& fn) {
    if (!(radius_triple >= 0)) return;
    const std::int64_t a = static_cast<std::int64_t>(std::floor(radius_triple + 1e-9));
    LatticeIndex m;
    for (std::int64_t x1 = -a; x1 <= a; ++x1) {
        for (std::int64_t y1 = -a; y1 <= a; ++y1) {
            m.s1 = {x1, y1};
            double n1 = euclid(m.s1);
            if (n1 > radius_triple) continue;
            const std::int64_t b = static_cast<std::int64_t>(std::floor(radius_triple - n1 + 1e-9));
            for (std::int64_t x2 = -b; x2 <= b; ++x2) {
                for (std::int64_t y2 = -b; y2 <= b; ++y2) {
                    m.s2 = {x2, y2};
                    if (n1 + euclid(m.s2) <= radius_triple) fn(m);
                }
            }
        }
    }
}

std::vector<LatticeIndex> enumerate_indices(double radius_triple) {
    std::vector<LatticeIndex> out;
    for_each_index(radius_triple, [&](const LatticeIndex& m) { out.push_back(m); });
    return out;
}

void split_s2(const Int2& s2, std::int64_t q, Int2& s2p, Int2& s2pp) {
    for (int j = 0; j < 2; ++j) {
        std::int64_t r = s2[j] % q;
        if (r < 0) r += q;
        s2pp[j] = r;
        s2p[j] = (s2[j] - r) / q;
    }
}

namespace {

double sup_dist(const QuasiLattice& lat, const LatticeIndex& a, const LatticeIndex& b) {
    Vec2 d = lat.x_vec(a - b);
    return std::max(std::fabs(d[0]), std::fabs(d[1]));
}

}  // namespace

ClusterDecomposition decompose_clusters(const QuasiLattice& lat, const std::vector<LatticeIndex>& indices,
                                        const RationalApprox& approx) {
    ClusterDecomposition out;
    out.approx = approx;
    const std::int64_t q = approx.q;
    const std::int64_t p = approx.p;
    out.step = std::fabs(approx.eps_q) * static_cast<double>(q);

    double smax = 0;
    for (const auto& m : indices) {
        Int2 s2p, s2pp;
        split_s2(m.s2, q, s2p, s2pp);
        ClusterKey key{{m.s1[0] - p * s2p[0], m.s1[1] - p * s2p[1]}, s2pp};
        out.clusters[key].push_back(m);
        smax = std::max({smax, euclid(m.s1), euclid(m.s2)});
    }
    out.scale_K = std::max(static_cast<double>(q), smax) / 4.0;
    out.smallness_holds = std::fabs(approx.eps_q) <= 1.0 / (64.0 * static_cast<double>(q) * out.scale_K);

    // per-cluster sup-norm boxes, relative to a reference point
    struct Box {
        const std::vector<LatticeIndex>* pts;
        Vec2 lo, hi;
    };
    std::vector<Box> boxes;
    boxes.reserve(out.clusters.size());
    for (auto& [key, pts] : out.clusters) {
        std::sort(pts.begin(), pts.end());
        Vec2 ref = lat.x_vec(pts.front());
        Vec2 rlo{0, 0}, rhi{0, 0};
        for (const auto& m : pts) {
            Vec2 d = lat.x_vec(m - pts.front());
            for (int j = 0; j < 2; ++j) {
                rlo[j] = std::min(rlo[j], d[j]);
                rhi[j] = std::max(rhi[j], d[j]);
            }
        }
        Box b{&pts, {ref[0] + rlo[0], ref[1] + rlo[1]}, {ref[0] + rhi[0], ref[1] + rhi[1]}};
        out.max_diameter = std::max({out.max_diameter, rhi[0] - rlo[0], rhi[1] - rlo[1]});
        boxes.push_back(b);
    }

    // closest pair between different clusters, probed up to 1/q
    const double h = 1.0 / static_cast<double>(q);
    out.min_separation = h;
    out.separation_is_lower_bound = true;
    std::unordered_map<std::int64_t, std::vector<std::uint32_t>> grid;
    auto cell_key = [](std::int64_t cx, std::int64_t cy) { return cx * 2000003ll + cy; };
    for (std::uint32_t i = 0; i < boxes.size(); ++i) {
        auto cx0 = static_cast<std::int64_t>(std::floor(boxes[i].lo[0] / h));
        auto cx1 = static_cast<std::int64_t>(std::floor(boxes[i].hi[0] / h));
        auto cy0 = static_cast<std::int64_t>(std::floor(boxes[i].lo[1] / h));
        auto cy1 = static_cast<std::int64_t>(std::floor(boxes[i].hi[1] / h));
        for (auto cx = cx0; cx <= cx1; ++cx)
            for (auto cy = cy0; cy <= cy1; ++cy) grid[cell_key(cx, cy)].push_back(i);
    }
    std::unordered_set<std::uint64_t> seen;
    for (std::uint32_t i = 0; i < boxes.size(); ++i) {
        auto cx0 = static_cast<std::int64_t>(std::floor(boxes[i].lo[0] / h)) - 1;
        auto cx1 = static_cast<std::int64_t>(std::floor(boxes[i].hi[0] / h)) + 1;
        auto cy0 = static_cast<std::int64_t>(std::floor(boxes[i].lo[1] / h)) - 1;
        auto cy1 = static_cast<std::int64_t>(std::floor(boxes[i].hi[1] / h)) + 1;
        for (auto cx = cx0; cx <= cx1; ++cx) {
            for (auto cy = cy0; cy <= cy1; ++cy) {
                auto it = grid.find(cell_key(cx, cy));
                if (it == grid.end()) continue;
                for (std::uint32_t j : it->second) {
                    if (j <= i) continue;
                    std::uint64_t pk = (static_cast<std::uint64_t>(i) << 32) | j;
                    if (!seen.insert(pk).second) continue;
                    double gap = 0;
                    for (int c = 0; c < 2; ++c)
                        gap = std::max(gap, std::max(boxes[j].lo[c] - boxes[i].hi[c], boxes[i].lo[c] - boxes[j].hi[c]));
                    if (gap >= out.min_separation + 1e-12) continue;
                    for (const auto& a : *boxes[i].pts)
                        for (const auto& b : *boxes[j].pts) {
                            double d = sup_dist(lat, a, b);
                            if (d < out.min_separation) {
                                out.min_separation = d;
                                out.separation_is_lower_bound = false;
                            }
                        }
                }
            }
        }
    }
    if (out.clusters.size() < 2) out.min_separation = std::numeric_limits<double>::infinity();

    if (out.smallness_holds) {
        const double qd = static_cast<double>(q);
        if (!(out.max_diameter < 1.0 / (8.0 * qd)) || !(out.min_separation > 1.0 / (2.0 * qd))) {
            std::ostringstream os;
            os << "separation-violated: q=" << q << " diameter=" << out.max_diameter
               << " separation=" << out.min_separation;
            throw LatticeError(os.str());
        }
    }
    return out;
}

ShortVectorReport count_short_vectors(const QuasiLattice& lat, double radius_triple, double p_threshold,
                                      std::optional<ScaleParams> params) {
    if (!(radius_triple > 0)) throw LatticeError("radius_triple must be positive");
    ShortVectorReport rep;
    constexpr std::size_t kMaxWitnesses = 10000;
    for_each_index(radius_triple, [&](const LatticeIndex& m) {
        if (m.is_zero() || !(norm_triple(m) < radius_triple)) return;
        if (lat.p_norm(m) < p_threshold) {
            ++rep.count;
            if (rep.witnesses.size() < kMaxWitnesses) rep.witnesses.push_back(m);
        }
    });
    if (params) {
        rep.has_lemma_params = true;
        rep.k = params->k;
        rep.r1 = params->r1;
        const double K = std::pow(params->k, params->r1);
        auto approx = best_rational(lat, static_cast<std::int64_t>(std::floor(4.0 * K)));
        rep.q = approx.q;
        rep.eps_q = approx.eps_q;
        const double qd = static_cast<double>(approx.q);
        rep.cluster_bound = std::pow(params->k, 2.0 * params->r1 / 3.0);
        rep.large_q_bound = 4096.0 * rep.cluster_bound;
        const bool in_range = radius_triple <= 2.0 * K;
        const bool smallness = std::fabs(approx.eps_q) <= 1.0 / (64.0 * qd * K);
        rep.cluster_hypothesis =
            in_range && smallness && p_threshold <= std::fabs(approx.eps_q) * qd * std::pow(params->k, params->r1 / 3.0);
        rep.large_q_hypothesis = in_range && qd > rep.cluster_bound &&
                                 p_threshold <= std::pow(params->k, -2.0 * params->r1 / 3.0);
        rep.cluster_holds = static_cast<double>(rep.count) <= rep.cluster_bound;
        rep.large_q_holds = static_cast<double>(rep.count) <= rep.large_q_bound;
    }
    return rep;
}

}  // namespace quasispec
