#include "quasispec/resonance.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include "quasispec/parallel.hpp"

namespace quasispec {

double reduce_angle(double phi) {
    double r = std::fmod(phi, kTwoPi);
    if (r < 0) r += kTwoPi;
    if (r >= kTwoPi) r = 0.0;
    return r;
}

AngularDisc make_disc(cplx center, double radius, std::string source, int level) {
    if (!(radius > 0)) throw ResonanceError("disc radius must be positive");
    return {cplx(reduce_angle(center.real()), center.imag()), radius, std::move(source), level};
}

bool AngleSetLevel::contains(double phi) const {
    double x = reduce_angle(phi);
    auto it = std::upper_bound(real_arcs.begin(), real_arcs.end(), x,
                               [](double v, const Arc& a) { return v < a.start; });
    if (it == real_arcs.begin()) return false;
    --it;
    return x <= it->end;
}

std::vector<Arc> disc_shadow(const AngularDisc& d) {
    const double im = d.center.imag();
    if (!(std::fabs(im) < d.radius)) return {};
    const double w = std::sqrt(d.radius * d.radius - im * im);
    const double c = reduce_angle(d.center.real());
    const double a = c - w, b = c + w;
    if (b - a >= kTwoPi) return {{0.0, kTwoPi}};
    if (a < 0) return {{0.0, b}, {a + kTwoPi, kTwoPi}};
    if (b > kTwoPi) return {{0.0, b - kTwoPi}, {a, kTwoPi}};
    return {{a, b}};
}

std::vector<Arc> merge_arcs(std::vector<Arc> arcs) {
    std::sort(arcs.begin(), arcs.end(), [](const Arc& x, const Arc& y) {
        return x.start < y.start || (x.start == y.start && x.end < y.end);
    });
    std::vector<Arc> out;
    for (const auto& a : arcs) {
        if (!(a.end > a.start)) continue;
        if (!out.empty() && a.start <= out.back().end)
            out.back().end = std::max(out.back().end, a.end);
        else
            out.push_back(a);
    }
    return out;
}

std::vector<Arc> subtract_arcs(const std::vector<Arc>& base, const std::vector<Arc>& removed) {
    auto rem = merge_arcs(removed);
    std::vector<Arc> out;
    for (const auto& b : base) {
        double cur = b.start;
        for (const auto& r : rem) {
            if (r.end <= cur) continue;
            if (r.start >= b.end) break;
            if (r.start > cur) out.push_back({cur, r.start});
            cur = std::max(cur, r.end);
            if (cur >= b.end) break;
        }
        if (cur < b.end) out.push_back({cur, b.end});
    }
    return out;
}

bool arcs_subset(const std::vector<Arc>& inner, const std::vector<Arc>& outer) {
    for (const auto& a : inner) {
        bool ok = false;
        for (const auto& b : outer)
            if (b.start <= a.start && a.end <= b.end) {
                ok = true;
                break;
            }
        if (!ok) return false;
    }
    return true;
}

double ResonanceThresholds::inner(double tau) const {
    if (mode == ThresholdMode::Paper) return tau * std::pow(k, 1.0 - 40.0 * mu * delta);
    return tau * t_inner;
}

double ResonanceThresholds::outer(double tau) const {
    if (mode == ThresholdMode::Paper) return tau * std::pow(k, -40.0 * mu * delta);
    return tau * t_outer;
}

double ResonanceThresholds::working_range() const {
    return inner_range >= 0 ? inner_range : 4.0 * std::pow(k, delta);
}

double ResonanceThresholds::threshold_for(const LatticeIndex& m, double tau) const {
    return norm_triple(m) <= working_range() ? inner(tau) : outer(tau);
}

double resonance_function(const QuasiLattice& lat, double k, double phi, const LatticeIndex& m) {
    const double p = lat.p_norm(m);
    return p * p + 2.0 * k * p * std::cos(phi - lat.p_angle(m));
}

std::vector<double> phi_roots(const QuasiLattice& lat, double k, const LatticeIndex& m) {
    if (!(k > 0)) throw ResonanceError("k must be positive");
    if (m.is_zero()) throw ResonanceError("phi_roots needs m != 0");
    const double p = lat.p_norm(m);
    const double c = -p / (2.0 * k);
    if (std::fabs(c) > 1.0) return {};
    const double th = std::acos(c);
    const double phim = lat.p_angle(m);
    return {reduce_angle(phim + th), reduce_angle(phim - th)};
}

std::vector<AngularDisc> resonance_discs_for(const QuasiLattice& lat, const ResonanceThresholds& th, double tau,
                                             const LatticeIndex& m, int level) {
    std::vector<AngularDisc> out;
    const double k = th.k;
    const double p = lat.p_norm(m);
    const double phim = lat.p_angle(m);
    const double T = th.threshold_for(m, tau);
    const std::string src = "m:" + m.str();
    const double full = M_PI * (1.0 + 1e-12) + 1e-12;

    if (th.mode == ThresholdMode::Paper) {
        if (p > 4.0 * k) return out;
        if (p * (2.0 * k + p) <= T) {
            out.push_back(make_disc(phim, full, src, level));
            return out;
        }
        if (std::fabs(4.0 * k * k - p * p) <= 4.0 * T) {
            out.push_back(make_disc(phim + M_PI, 32.0 * std::sqrt(tau * T) / k, src, level));
            return out;
        }
        if (p > 2.0 * k) return out;
        const double s = std::sqrt(1.0 - p * p / (4.0 * k * k));
        const double r = T / (k * p * s);
        const double t0 = std::acos(-p / (2.0 * k));
        out.push_back(make_disc(phim + t0, r, src, level));
        out.push_back(make_disc(phim - t0, r, src, level));
        return out;
    }

    // desk mode: invert the cosine exactly, |f| ≤ T ⇔ cos(φ − φ_m) ∈ [cl, ch]
    const double cl = (-T - p * p) / (2.0 * k * p);
    const double ch = (T - p * p) / (2.0 * k * p);
    if (ch < -1.0 || cl > 1.0) return out;
    const double a_hi = ch >= 1.0 ? 0.0 : std::acos(ch);
    const double a_lo = cl <= -1.0 ? M_PI : std::acos(cl);
    auto grow = [](double w) { return w * (1.0 + 1e-9) + 1e-15; };
    if (a_hi == 0.0 && a_lo == M_PI) {
        out.push_back(make_disc(phim, full, src, level));
    } else if (a_hi == 0.0) {
        out.push_back(make_disc(phim, grow(a_lo), src, level));
    } else if (a_lo == M_PI) {
        out.push_back(make_disc(phim + M_PI, grow(M_PI - a_hi), src, level));
    } else {
        double t0 = 0.5 * (a_hi + a_lo);
        if (p <= 2.0 * k) t0 = std::acos(-p / (2.0 * k));
        const double r = grow(std::max(t0 - a_hi, a_lo - t0));
        out.push_back(make_disc(phim + t0, r, src, level));
        out.push_back(make_disc(phim - t0, r, src, level));
    }
    return out;
}

AngleSetLevel resonance_discs_level1(const QuasiLattice& lat, const ResonanceThresholds& th, double tau) {
    if (!(th.k > 0)) throw ResonanceError("k must be positive");
    AngleSetLevel set;
    set.level = 1;
    set.k = th.k;
    set.tau = tau;
    for (const auto& m : enumerate_indices(th.working_range())) {
        if (m.is_zero()) continue;
        auto d = resonance_discs_for(lat, th, tau, m, 1);
        set.discs.insert(set.discs.end(), d.begin(), d.end());
    }
    std::vector<Arc> removed;
    for (const auto& d : set.discs) {
        auto s = disc_shadow(d);
        removed.insert(removed.end(), s.begin(), s.end());
    }
    set.real_arcs = subtract_arcs({{0.0, kTwoPi}}, removed);
    return set;
}

double nonresonant_measure(const AngleSetLevel& set) {
    double total = 0;
    for (const auto& a : set.real_arcs) total += a.length();
    return total;
}

MeasureReport nonresonant_measure_report(const AngleSetLevel& set, double delta, double mu, double C) {
    MeasureReport r;
    r.measure = nonresonant_measure(set);
    r.removed = kTwoPi - r.measure;
    r.lemma_bound = C * std::pow(set.k, -37.0 * delta * mu);
    r.within_bound = r.removed <= r.lemma_bound;
    return r;
}

AnalyticFamily fiber_family(const QuasiLattice& lat, const TrigPotential& pot, int l, double kappa,
                            const IndexProjector& proj, std::string id) {
    struct Data {
        std::vector<double> p, phi;
        CMatrix V;
        double kappa;
        int l;
    };
    auto d = std::make_shared<Data>();
    for (const auto& m : proj.members()) {
        d->p.push_back(m.is_zero() ? 0.0 : lat.p_norm(m));
        d->phi.push_back(m.is_zero() ? 0.0 : lat.p_angle(m));
    }
    d->V = potential_matrix(pot, proj);
    d->kappa = kappa;
    d->l = l;
    AnalyticFamily f;
    f.id = std::move(id);
    f.matrix = [d](cplx phi) {
        CMatrix A = d->V;
        for (std::size_t i = 0; i < d->p.size(); ++i) {
            const double p = d->p[i];
            cplx g = d->kappa * d->kappa + p * p + 2.0 * d->kappa * p * std::cos(phi - d->phi[i]);
            cplx v(1.0);
            for (int j = 0; j < d->l; ++j) v *= g;
            A(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) += v;
        }
        return A;
    };
    f.derivative = [d](cplx phi) {
        const auto n = static_cast<Eigen::Index>(d->p.size());
        CMatrix D = CMatrix::Zero(n, n);
        for (std::size_t i = 0; i < d->p.size(); ++i) {
            const double p = d->p[i];
            cplx g = d->kappa * d->kappa + p * p + 2.0 * d->kappa * p * std::cos(phi - d->phi[i]);
            cplx gp = -2.0 * d->kappa * p * std::sin(phi - d->phi[i]);
            cplx v(1.0);
            for (int j = 0; j < d->l - 1; ++j) v *= g;
            D(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(i)) = static_cast<double>(d->l) * v * gp;
        }
        return D;
    };
    return f;
}

namespace {

struct NodeValue {
    cplx logder;
    double min_pivot;
    double max_entry;
};

NodeValue eval_node(const AnalyticFamily& block, cplx phi, double energy) {
    CMatrix A = block.matrix(phi);
    A.diagonal().array() -= energy;
    Eigen::PartialPivLU<CMatrix> lu(A);
    const CMatrix& LU = lu.matrixLU();
    double mp = std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < LU.rows(); ++i) mp = std::min(mp, std::abs(LU(i, i)));
    NodeValue v;
    v.min_pivot = mp;
    v.max_entry = A.cwiseAbs().maxCoeff();
    if (mp == 0.0 || !std::isfinite(mp)) {
        v.logder = cplx(std::numeric_limits<double>::infinity());
        return v;
    }
    CMatrix Ad = block.derivative(phi);
    v.logder = lu.solve(Ad).trace();
    return v;
}

struct Contour {
    cplx center;
    double radius;
    std::vector<cplx> logder;  // at θ_j = 2πj/N
    double min_pivot = std::numeric_limits<double>::infinity();
    double max_entry = 0;
};

void extend_nodes(const AnalyticFamily& block, Contour& c, double energy, int n_new) {
    // refine from N to n_new = 2N points, keeping the existing nodes at even positions
    std::vector<cplx> out(static_cast<std::size_t>(n_new));
    const int n_old = static_cast<int>(c.logder.size());
    for (int j = 0; j < n_new; ++j) {
        if (n_old > 0 && j % 2 == 0 && n_new == 2 * n_old) {
            out[static_cast<std::size_t>(j)] = c.logder[static_cast<std::size_t>(j / 2)];
            continue;
        }
        const double th = kTwoPi * j / n_new;
        cplx phi = c.center + c.radius * cplx(std::cos(th), std::sin(th));
        NodeValue v = eval_node(block, phi, energy);
        c.min_pivot = std::min(c.min_pivot, v.min_pivot);
        c.max_entry = std::max(c.max_entry, v.max_entry);
        out[static_cast<std::size_t>(j)] = v.logder;
    }
    c.logder = std::move(out);
}

// (2πi)⁻¹∮ w^p D'/D dφ with w = (φ − c)/r, by the trapezoid rule
cplx moment(const Contour& c, int p) {
    const int n = static_cast<int>(c.logder.size());
    cplx s(0.0);
    for (int j = 0; j < n; ++j) {
        const double th = kTwoPi * j / n;
        cplx w(std::cos(th), std::sin(th));
        cplx wp(1.0);
        for (int i = 0; i < p + 1; ++i) wp *= w;
        s += c.logder[static_cast<std::size_t>(j)] * wp;
    }
    return s * c.radius / static_cast<double>(n);
}

Contour converged_contour(const AnalyticFamily& block, cplx center, double radius, double energy,
                          const PoleScanOptions& opt, int& winding) {
    Contour c{center, radius, {}};
    int n = opt.initial_points;
    extend_nodes(block, c, energy, n);
    long prev = std::numeric_limits<long>::min();
    for (int it = 0;; ++it) {
        if (c.min_pivot < opt.zero_rel_tol * c.max_entry) {
            std::ostringstream os;
            os << "contour-through-zero: block " << block.id << ", disc center " << center << ", radius " << radius;
            throw ContourThroughZero(os.str());
        }
        cplx s = moment(c, 0);
        const long r = std::lround(s.real());
        const bool near_int = std::fabs(s.real() - static_cast<double>(r)) < 0.1 && std::fabs(s.imag()) < 0.1;
        if (near_int && r == prev) {
            winding = static_cast<int>(r);
            return c;
        }
        prev = near_int ? r : std::numeric_limits<long>::min();
        if (it >= opt.max_doublings) {
            std::ostringstream os;
            os << "winding integral did not settle: block " << block.id << ", value " << s;
            throw ResonanceError(os.str());
        }
        n *= 2;
        extend_nodes(block, c, energy, n);
    }
}

}  // namespace

int winding_number(const AnalyticFamily& block, cplx center, double radius, double level_energy,
                   const PoleScanOptions& opt, int* points_used) {
    int w = 0;
    Contour c = converged_contour(block, center, radius, level_energy, opt, w);
    if (points_used) *points_used = static_cast<int>(c.logder.size());
    return w;
}

PoleScanResult pole_scan(const AnalyticFamily& block, const AngularDisc& disc, double level_energy,
                         const PoleScanOptions& opt) {
    PoleScanResult res;
    Contour c = converged_contour(block, disc.center, disc.radius, level_energy, opt, res.winding);
    res.quadrature_points = static_cast<int>(c.logder.size());
    const int n = res.winding;
    if (n <= 0) return res;

    // power sums of the zeros in w = (φ − c)/r, then Newton's identities
    std::vector<cplx> s(static_cast<std::size_t>(n) + 1), e(static_cast<std::size_t>(n) + 1);
    for (int p = 1; p <= n; ++p) s[static_cast<std::size_t>(p)] = moment(c, p);
    e[0] = 1.0;
    for (int kk = 1; kk <= n; ++kk) {
        cplx acc(0.0);
        for (int i = 1; i <= kk; ++i) {
            cplx term = e[static_cast<std::size_t>(kk - i)] * s[static_cast<std::size_t>(i)];
            acc += (i % 2 == 1) ? term : -term;
        }
        e[static_cast<std::size_t>(kk)] = acc / static_cast<double>(kk);
    }
    std::vector<cplx> roots;
    if (n == 1) {
        roots.push_back(e[1]);
    } else {
        CMatrix comp = CMatrix::Zero(n, n);
        for (int i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
        for (int kk = 1; kk <= n; ++kk) {
            cplx coef = ((kk % 2 == 1) ? 1.0 : -1.0) * e[static_cast<std::size_t>(kk)];
            comp(0, kk - 1) = coef;
        }
        Eigen::ComplexEigenSolver<CMatrix> es(comp);
        for (Eigen::Index i = 0; i < n; ++i) roots.push_back(es.eigenvalues()(i));
    }
    std::sort(roots.begin(), roots.end(), [](cplx a, cplx b) {
        return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
    });

    // group near-coincident roots, refine each group with multiplicity-aware Newton
    std::vector<Pole> groups;
    std::vector<bool> used(roots.size(), false);
    for (std::size_t i = 0; i < roots.size(); ++i) {
        if (used[i]) continue;
        cplx sum = roots[i];
        int mult = 1;
        used[i] = true;
        for (std::size_t j = i + 1; j < roots.size(); ++j)
            if (!used[j] && std::abs(roots[j] - roots[i]) < 1e-3) {
                used[j] = true;
                sum += roots[j];
                ++mult;
            }
        groups.push_back({disc.center + disc.radius * (sum / static_cast<double>(mult)), mult});
    }
    for (auto& g : groups) {
        cplx z = g.location;
        bool ok = false;
        double last = 0;
        for (int it = 0; it < opt.newton_max_iter; ++it) {
            NodeValue v = eval_node(block, z, level_energy);
            if (!std::isfinite(std::abs(v.logder))) {
                ok = true;
                break;
            }
            cplx step = static_cast<double>(g.multiplicity) / v.logder;
            if (std::abs(step) > 0.5 * disc.radius) step *= 0.5 * disc.radius / std::abs(step);
            z -= step;
            last = std::abs(step);
            if (last < opt.newton_tol * std::max(1.0, std::abs(z))) {
                ok = true;
                break;
            }
        }
        if (!ok && last > 1e-6 * disc.radius) {
            std::ostringstream os;
            os << "Newton refinement did not converge near " << g.location << " in block " << block.id;
            throw NewtonNonConvergence(os.str());
        }
        g.location = z;
    }
    // multiplicities from local winding around each refined zero
    if (groups.size() > 1 || groups.front().multiplicity > 1) {
        for (std::size_t i = 0; i < groups.size(); ++i) {
            double dmin = disc.radius;
            for (std::size_t j = 0; j < groups.size(); ++j)
                if (j != i) dmin = std::min(dmin, std::abs(groups[i].location - groups[j].location));
            const double rho = 0.25 * dmin;
            if (!(rho > 0)) continue;
            try {
                PoleScanOptions lo = opt;
                lo.initial_points = 64;
                int w = winding_number(block, groups[i].location, rho, level_energy, lo);
                if (w > 0) groups[i].multiplicity = w;
            } catch (const ResonanceError&) {
            }
        }
    }
    for (const auto& g : groups) {
        cplx w = (g.location - disc.center) / disc.radius;
        if (std::abs(w) <= 1.0 + 1e-9) res.poles.push_back(g);
    }
    std::sort(res.poles.begin(), res.poles.end(), [](const Pole& a, const Pole& b) {
        return a.location.real() < b.location.real() ||
               (a.location.real() == b.location.real() && a.location.imag() < b.location.imag());
    });
    return res;
}

AngleSetLevel resonant_set_next(const AngleSetLevel& prev, const std::vector<WindowBlock>& blocks,
                                double level_energy, double radius, const NextLevelOptions& opt) {
    if (!(radius > 0)) throw ResonanceError("disc radius must be positive");
    std::vector<std::vector<Pole>> found(blocks.size());
    parallel_for(blocks.size(), opt.threads, [&](std::size_t b) {
        AngularDisc win = blocks[b].window;
        for (int attempt = 0;; ++attempt) {
            try {
                found[b] = pole_scan(blocks[b].family, win, level_energy, opt.scan).poles;
                return;
            } catch (const ContourThroughZero& e) {
                if (attempt >= opt.max_window_growth)
                    throw ResonanceError(std::string(e.what()) + " [window " + blocks[b].window.source + "]");
                win.radius *= 1.05;
            } catch (const ResonanceError& e) {
                throw ResonanceError(std::string(e.what()) + " [window " + blocks[b].window.source + ", block " +
                                     blocks[b].family.id + "]");
            }
        }
    });
    AngleSetLevel next;
    next.level = prev.level + 1;
    next.k = prev.k;
    next.tau = prev.tau;
    next.discs = prev.discs;
    std::vector<Arc> removed;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        for (std::size_t i = 0; i < found[b].size(); ++i) {
            std::string src = "pole:" + blocks[b].family.id + "#" + std::to_string(i);
            AngularDisc d = make_disc(found[b][i].location, radius, src, next.level);
            auto s = disc_shadow(d);
            removed.insert(removed.end(), s.begin(), s.end());
            next.discs.push_back(d);
        }
    }
    next.real_arcs = subtract_arcs(prev.real_arcs, removed);
    return next;
}

}  // namespace quasispec
