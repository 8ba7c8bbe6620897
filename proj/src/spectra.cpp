#include "quasispec/spectra.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cfloat>
#include <cmath>
#include <map>
#include <numeric>

namespace quasispec {

namespace {

bool is_real_kappa(const CVec2& k) { return k[0].imag() == 0.0 && k[1].imag() == 0.0; }

void fix_phase(CVector& v) {
    Eigen::Index best = 0;
    for (Eigen::Index i = 1; i < v.size(); ++i)
        if (std::abs(v(i)) > std::abs(v(best))) best = i;
    if (v.size() == 0 || v(best) == cplx(0.0)) return;
    cplx ph = std::abs(v(best)) / v(best);
    v *= ph;
    v(best) = cplx(std::abs(v(best)), 0.0);
}

double pow_l(double x, int l) {
    double r = 1.0;
    for (int i = 0; i < l; ++i) r *= x;
    return r;
}

double row_sum_norm(const CMatrix& A) {
    double m = 0;
    for (Eigen::Index i = 0; i < A.rows(); ++i) m = std::max(m, A.row(i).cwiseAbs().sum());
    return m;
}

// Eigen-decomposition of a Hermitian matrix that respects its block pattern:
// connected components of the nonzero graph are diagonalized separately.
struct BlockEigen {
    Eigen::VectorXd values;
    CMatrix vectors;
};

BlockEigen block_eigen(const CMatrix& H) {
    const Eigen::Index n = H.rows();
    std::vector<int> comp(static_cast<std::size_t>(n), -1);
    int ncomp = 0;
    for (Eigen::Index s = 0; s < n; ++s) {
        if (comp[static_cast<std::size_t>(s)] >= 0) continue;
        std::vector<Eigen::Index> stack{s};
        comp[static_cast<std::size_t>(s)] = ncomp;
        while (!stack.empty()) {
            Eigen::Index i = stack.back();
            stack.pop_back();
            for (Eigen::Index j = 0; j < n; ++j) {
                if (comp[static_cast<std::size_t>(j)] < 0 && (H(i, j) != cplx(0.0) || H(j, i) != cplx(0.0))) {
                    comp[static_cast<std::size_t>(j)] = ncomp;
                    stack.push_back(j);
                }
            }
        }
        ++ncomp;
    }
    BlockEigen out;
    out.values.resize(n);
    out.vectors = CMatrix::Zero(n, n);
    Eigen::Index col = 0;
    for (int c = 0; c < ncomp; ++c) {
        std::vector<Eigen::Index> idx;
        for (Eigen::Index i = 0; i < n; ++i)
            if (comp[static_cast<std::size_t>(i)] == c) idx.push_back(i);
        const auto m = static_cast<Eigen::Index>(idx.size());
        CMatrix B(m, m);
        for (Eigen::Index a = 0; a < m; ++a)
            for (Eigen::Index b = 0; b < m; ++b) B(a, b) = H(idx[a], idx[b]);
        Eigen::SelfAdjointEigenSolver<CMatrix> es(B);
        if (es.info() != Eigen::Success) throw SpectraError("eigensolve failed");
        for (Eigen::Index j = 0; j < m; ++j, ++col) {
            out.values(col) = es.eigenvalues()(j);
            for (Eigen::Index a = 0; a < m; ++a) out.vectors(idx[a], col) = es.eigenvectors()(a, j);
        }
    }
    return out;
}

// Rayleigh–Schrödinger vectors v_0..v_R and energies g_1..g_R in the eigenbasis of Htilde.
struct RSExpansion {
    BlockEigen be;
    Eigen::Index inner = 0;
    std::vector<CVector> v;
    std::vector<cplx> g;  // g[r], g[0] unused
};

RSExpansion rs_expand(const CMatrix& Htilde, const CMatrix& W, double center, double radius, int R) {
    if (Htilde.rows() != Htilde.cols() || W.rows() != Htilde.rows() || W.cols() != Htilde.cols())
        throw SpectraError("dimension mismatch between Htilde and W");
    if (!(radius > 0)) throw SpectraError("contour radius must be positive");
    RSExpansion rs;
    rs.be = block_eigen(Htilde);
    const Eigen::Index n = Htilde.rows();
    const double scale = std::max({1.0, std::abs(center), radius});
    int inside = 0;
    for (Eigen::Index i = 0; i < n; ++i) {
        double d = std::abs(rs.be.values(i) - center);
        if (std::abs(d - radius) <= 1e-12 * scale) throw EigenvalueOnContour("eigenvalue-on-contour");
        if (d < radius) {
            ++inside;
            rs.inner = i;
        }
    }
    if (inside != 1)
        throw ContourMultiplicity("contour encloses " + std::to_string(inside) + " eigenvalues of Htilde; exactly 1 required");
    const CMatrix& U = rs.be.vectors;
    CMatrix Wt = U.adjoint() * W * U;
    const double l0 = rs.be.values(rs.inner);
    rs.v.push_back(CVector::Unit(n, rs.inner));
    rs.g.push_back(0.0);
    for (int r = 1; r <= R; ++r) {
        CVector Wv = Wt * rs.v[static_cast<std::size_t>(r - 1)];
        rs.g.push_back(Wv(rs.inner));
        CVector rhs = -Wv;
        for (int j = 1; j < r; ++j) rhs += rs.g[static_cast<std::size_t>(j)] * rs.v[static_cast<std::size_t>(r - j)];
        CVector vr = CVector::Zero(n);
        for (Eigen::Index i = 0; i < n; ++i)
            if (i != rs.inner) vr(i) = rhs(i) / (rs.be.values(i) - l0);
        rs.v.push_back(vr);
    }
    return rs;
}

}  // namespace

EigenPair eigenvalue_in_interval(const FiberMatrix& H, double center, double half_width, int level) {
    if (!(half_width > 0)) throw SpectraError("half_width must be positive");
    if (!is_real_kappa(H.kappa)) throw SpectraError("eigenvalue_in_interval requires real kappa");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(H.entries);
    if (es.info() != Eigen::Success) throw SpectraError("eigensolve failed");
    const auto& ev = es.eigenvalues();
    std::vector<Eigen::Index> hits;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (std::abs(ev(i) - center) < half_width) hits.push_back(i);
    if (hits.empty()) throw NoneInInterval("none-in-interval: no eigenvalue within " + std::to_string(half_width) + " of " + std::to_string(center));
    if (hits.size() > 1) throw ResonantCollision("resonant-collision: " + std::to_string(hits.size()) + " eigenvalues in interval");
    EigenPair p;
    p.lambda = ev(hits[0]);
    p.vector = es.eigenvectors().col(hits[0]);
    p.vector.normalize();
    fix_phase(p.vector);
    p.indexset = H.indexset;
    p.level = level;
    p.residual = (H.entries * p.vector - p.lambda * p.vector).norm();
    if (p.residual > 1e-10 * std::max(1.0, std::abs(p.lambda)))
        throw SpectraError("eigen-residual " + std::to_string(p.residual) + " above tolerance");
    return p;
}

double eigenvalue_only_in_interval(const FiberMatrix& H, double center, double half_width) {
    if (!(half_width > 0)) throw SpectraError("half_width must be positive");
    if (!is_real_kappa(H.kappa)) throw SpectraError("eigenvalue_in_interval requires real kappa");
    Eigen::SelfAdjointEigenSolver<CMatrix> es(H.entries, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw SpectraError("eigensolve failed");
    const auto& ev = es.eigenvalues();
    int hits = 0;
    double lambda = 0;
    for (Eigen::Index i = 0; i < ev.size(); ++i)
        if (std::abs(ev(i) - center) < half_width) {
            ++hits;
            lambda = ev(i);
        }
    if (hits == 0) throw NoneInInterval("none-in-interval: no eigenvalue within " + std::to_string(half_width) + " of " + std::to_string(center));
    if (hits > 1) throw ResonantCollision("resonant-collision: " + std::to_string(hits) + " eigenvalues in interval");
    return lambda;
}

G2Forms g2_forms(const QuasiLattice& lat, const TrigPotential& pot, const Vec2& kappa, int l,
                 const IndexProjector& proj) {
    const double a0 = pow_l(kappa[0] * kappa[0] + kappa[1] * kappa[1], l);
    auto shifted = [&](const LatticeIndex& q, double sign) {
        Vec2 p = lat.p_vec(q);
        double x = kappa[0] + sign * p[0], y = kappa[1] + sign * p[1];
        return pow_l(x * x + y * y, l);
    };
    G2Forms out;
    for (const auto& q : proj.members()) {
        if (q.is_zero()) continue;
        cplx v = pot.coeff(q);
        if (v == cplx(0.0)) continue;
        const double w = std::norm(v);
        const double ap = shifted(q, 1.0), am = shifted(q, -1.0);
        if (std::abs(a0 - ap) < 1e-8 * a0 || std::abs(a0 - am) < 1e-8 * a0)
            throw SmallDenominator("small-denominator at q = " + q.str());
        out.direct += w / (a0 - ap);
        out.symmetrized += -0.5 * w * (ap + am - 2.0 * a0) / ((a0 - ap) * (a0 - am));
    }
    const double scale = std::max(std::abs(out.direct), std::abs(out.symmetrized));
    if (std::abs(out.direct - out.symmetrized) > 1e-10 * scale)
        throw SpectraError("g2 representations disagree");
    return out;
}

double g2_explicit(const QuasiLattice& lat, const TrigPotential& pot, const Vec2& kappa, int l,
                   const IndexProjector& proj) {
    return g2_forms(lat, pot, kappa, l, proj).direct;
}

SeriesReport series_terms(const CMatrix& Htilde, const CMatrix& W, double contour_center, double contour_radius,
                          int r_max) {
    if (r_max < 1) throw SpectraError("r_max must be >= 1");
    RSExpansion rs = rs_expand(Htilde, W, contour_center, contour_radius, r_max);
    SeriesReport rep;
    rep.r_max = r_max;
    rep.center_eigenvalue = rs.be.values(rs.inner);
    double acc = 0;
    for (int r = 1; r <= r_max; ++r) rep.terms.push_back(rs.g[static_cast<std::size_t>(r)].real());
    for (int r = 1; r <= r_max; ++r) {
        const double g = rep.terms[static_cast<std::size_t>(r - 1)];
        acc += g;
        rep.r_last = r;
        const double lam = std::abs(rep.center_eigenvalue + acc);
        // two consecutive small terms: odd orders vanish identically for some potentials
        if (r >= 2 && std::abs(g) < 1e-14 * lam && std::abs(rep.terms[static_cast<std::size_t>(r - 2)]) < 1e-14 * lam)
            break;
    }
    rep.sum = rep.center_eigenvalue + acc;
    // ratio from the last two nonzero computed terms, anchored at the last summed nonzero term
    std::vector<int> nz;
    for (int r = 1; r <= r_max; ++r)
        if (rep.terms[static_cast<std::size_t>(r - 1)] != 0.0) nz.push_back(r);
    int anchor = 0;
    for (int r : nz)
        if (r <= rep.r_last) anchor = r;
    auto abs_term = [&](int r) { return std::abs(rep.terms[static_cast<std::size_t>(r - 1)]); };
    if (nz.empty()) {
        rep.tail_bound = 0;
        rep.converged = true;
    } else if (nz.size() == 1) {
        // a single nonzero term: exact unless it is the last computed one
        rep.tail_bound = nz[0] == r_max ? INFINITY : nz[0] <= rep.r_last ? 0.0 : abs_term(nz[0]);
        rep.converged = std::isfinite(rep.tail_bound);
    } else {
        const int last = nz.back(), prev = nz[nz.size() - 2];
        const double rho = std::pow(abs_term(last) / abs_term(prev), 1.0 / (last - prev));
        if (rho < 1.0) {
            rep.tail_bound = anchor > 0 ? abs_term(anchor) * rho / (1.0 - rho) : abs_term(nz.front()) / (1.0 - rho);
            rep.converged = true;
        } else {
            rep.tail_bound = INFINITY;
            rep.converged = false;
        }
    }
    const double n = static_cast<double>(Htilde.rows());
    // backward-stable Hermitian eigensolve: error ≲ c·√n·ε·‖A‖₂, with the row-sum norm as an upper bound for ‖A‖₂
    rep.roundoff_bound = 8.0 * std::sqrt(n) * DBL_EPSILON * row_sum_norm(Htilde + W);
    return rep;
}

std::vector<CMatrix> projection_terms(const CMatrix& Htilde, const CMatrix& W, double contour_center,
                                      double contour_radius, int R) {
    if (R < 0) throw SpectraError("R must be >= 0");
    RSExpansion rs = rs_expand(Htilde, W, contour_center, contour_radius, R);
    const CMatrix& U = rs.be.vectors;
    std::vector<CVector> v;
    for (const auto& x : rs.v) v.push_back(U * x);
    // E = v v*/(v*v) expanded in powers of the coupling
    std::vector<cplx> nrm(static_cast<std::size_t>(R + 1), 0.0), inv(static_cast<std::size_t>(R + 1), 0.0);
    for (int r = 0; r <= R; ++r)
        for (int a = 0; a <= r; ++a) nrm[static_cast<std::size_t>(r)] += v[static_cast<std::size_t>(r - a)].dot(v[static_cast<std::size_t>(a)]);
    inv[0] = 1.0 / nrm[0];
    for (int r = 1; r <= R; ++r) {
        cplx s = 0;
        for (int j = 1; j <= r; ++j) s += nrm[static_cast<std::size_t>(j)] * inv[static_cast<std::size_t>(r - j)];
        inv[static_cast<std::size_t>(r)] = -s / nrm[0];
    }
    const Eigen::Index n = Htilde.rows();
    std::vector<CMatrix> A;
    for (int r = 0; r <= R; ++r) {
        CMatrix M = CMatrix::Zero(n, n);
        for (int a = 0; a <= r; ++a) M += v[static_cast<std::size_t>(a)] * v[static_cast<std::size_t>(r - a)].adjoint();
        A.push_back(M);
    }
    std::vector<CMatrix> G;
    for (int r = 0; r <= R; ++r) {
        CMatrix M = CMatrix::Zero(n, n);
        for (int a = 0; a <= r; ++a) {
            cplx c = inv[static_cast<std::size_t>(r - a)];
            if (c != cplx(0.0)) M += c * A[static_cast<std::size_t>(a)];
        }
        G.push_back(M);
    }
    return G;
}

DecayReport projection_decay_report(const EigenPair& pair, double Q, const DecayRate& rate) {
    auto zero = pair.indexset.position(LatticeIndex{});
    if (!zero) throw SpectraError("index set does not contain the origin");
    DecayReport rep;
    const cplx v0 = pair.vector(static_cast<Eigen::Index>(*zero));
    const auto& mem = pair.indexset.members();
    for (std::size_t i = 0; i < mem.size(); ++i) {
        if (mem[i].is_zero()) continue;
        double a = std::abs(v0 * std::conj(pair.vector(static_cast<Eigen::Index>(i))));
        if (a > 0) rep.rows.push_back({mem[i], norm_triple(mem[i]), std::log(a)});
    }
    std::sort(rep.rows.begin(), rep.rows.end(), [](const DecayRow& a, const DecayRow& b) {
        return a.norm != b.norm ? a.norm < b.norm : a.s < b.s;
    });
    rep.predicted_slope = -(2.0 * rate.l - 1.0 - 44.0 * rate.mu * rate.delta) * std::log(rate.C * rate.k) / Q;
    if (rep.rows.size() >= 2) {
        double mx = 0, my = 0;
        for (const auto& r : rep.rows) {
            mx += r.norm;
            my += r.log_abs;
        }
        mx /= static_cast<double>(rep.rows.size());
        my /= static_cast<double>(rep.rows.size());
        double sxx = 0, sxy = 0;
        for (const auto& r : rep.rows) {
            sxx += (r.norm - mx) * (r.norm - mx);
            sxy += (r.norm - mx) * (r.log_abs - my);
        }
        if (sxx > 0) {
            rep.fitted_slope = sxy / sxx;
            rep.fitted_intercept = my - rep.fitted_slope * mx;
            rep.decaying = rep.fitted_slope < 0;
        }
    }
    return rep;
}

double resolvent_norm(const FiberMatrix& H, cplx z, const IndexProjector& proj) {
    FiberMatrix B = restrict(H, proj);
    Eigen::SelfAdjointEigenSolver<CMatrix> es(B.entries, Eigen::EigenvaluesOnly);
    if (es.info() != Eigen::Success) throw SpectraError("eigensolve failed");
    double dmin = INFINITY;
    for (Eigen::Index i = 0; i < es.eigenvalues().size(); ++i)
        dmin = std::min(dmin, std::abs(cplx(es.eigenvalues()(i)) - z));
    return dmin == 0.0 ? INFINITY : 1.0 / dmin;
}

ResidualReport eigenfunction_residual(const EigenPair& pair, const TrigPotential& pot, const QuasiLattice&,
                                      double boundary_radius) {
    std::map<LatticeIndex, cplx> acc;
    const auto& mem = pair.indexset.members();
    for (std::size_t i = 0; i < mem.size(); ++i) {
        const cplx vn = pair.vector(static_cast<Eigen::Index>(i));
        for (const auto& [q, v] : pot.coeffs()) {
            LatticeIndex s = mem[i] + q;
            if (pair.indexset.contains(s)) continue;
            acc[s] += v * vn;
        }
    }
    std::vector<LatticeIndex> outer;
    for (const auto& [s, c] : acc) outer.push_back(s);
    ResidualReport rep;
    rep.outer = IndexProjector(outer, "residual-support");
    rep.residual_coeffs = CVector::Zero(static_cast<Eigen::Index>(outer.size()));
    rep.support_ok = true;
    const double upper = boundary_radius + pot.Q();
    for (std::size_t i = 0; i < outer.size(); ++i) {
        const cplx c = acc[outer[i]];
        rep.residual_coeffs(static_cast<Eigen::Index>(i)) = c;
        rep.l1_norm += std::abs(c);
        if (c != cplx(0.0)) {
            const double nt = norm_triple(outer[i]);
            // the triangle inequality may be lost to the last bit of the square roots
            if (!(nt > boundary_radius) || nt > upper * (1.0 + 4.0 * DBL_EPSILON)) rep.support_ok = false;
        }
    }
    rep.linf_function_norm_bound = rep.l1_norm;
    return rep;
}

std::vector<cplx> evaluate_psi(const EigenPair& pair, const QuasiLattice& lat, const Vec2& kappa,
                               const std::vector<Vec2>& x_points) {
    const auto& mem = pair.indexset.members();
    std::vector<Vec2> waves;
    waves.reserve(mem.size());
    for (const auto& m : mem) {
        Vec2 p = lat.p_vec(m);
        waves.push_back({kappa[0] + p[0], kappa[1] + p[1]});
    }
    std::vector<cplx> out;
    out.reserve(x_points.size());
    for (const auto& x : x_points) {
        cplx s = 0;
        for (std::size_t i = 0; i < waves.size(); ++i)
            s += pair.vector(static_cast<Eigen::Index>(i)) * std::polar(1.0, waves[i][0] * x[0] + waves[i][1] * x[1]);
        out.push_back(s);
    }
    return out;
}

}  // namespace quasispec
