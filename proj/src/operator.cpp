#include "quasispec/operator.hpp"

#include <algorithm>
#include <cmath>

namespace quasispec {

TrigPotential::TrigPotential(double Q, const std::vector<PotentialTerm>& terms) : Q_(Q) {
    if (!(Q > 0)) throw OperatorError("potential support radius Q must be positive");
    std::map<LatticeIndex, cplx> given;
    for (const auto& t : terms) {
        if (t.q.is_zero()) {
            if (t.value != cplx(0.0)) throw OperatorError("V_0 must vanish (zero-mean potential)");
            continue;
        }
        if (norm_triple(t.q) > Q) throw OperatorError("term " + t.q.str() + " lies outside the support radius Q");
        if (given.count(t.q)) throw OperatorError("duplicate term " + t.q.str());
        given[t.q] = t.value;
    }
    for (const auto& [q, v] : given) {
        auto it = given.find(-q);
        if (it != given.end()) {
            cplx partner = std::conj(it->second);
            double scale = std::max({std::abs(v), std::abs(partner), 1e-300});
            if (std::abs(v - partner) > 1e-14 * scale)
                throw OperatorError("terms " + q.str() + " and " + (-q).str() + " are not complex conjugates");
        }
        if (v == cplx(0.0)) continue;
        coeffs_[q] = v;
        coeffs_[-q] = std::conj(v);
    }
    // a listed pair keeps the value of its lexicographically smaller member
    for (auto& [q, v] : coeffs_)
        if (-q < q) v = std::conj(coeffs_.at(-q));
}

TrigPotential TrigPotential::single_harmonic(const LatticeIndex& q, cplx v, double Q) {
    return TrigPotential(Q, {{q, v}});
}

cplx TrigPotential::coeff(const LatticeIndex& q) const {
    auto it = coeffs_.find(q);
    return it == coeffs_.end() ? cplx(0.0) : it->second;
}

TrigPotential TrigPotential::scaled(double s) const {
    TrigPotential out = *this;
    for (auto& [q, v] : out.coeffs_) v *= s;
    if (s == 0.0) out.coeffs_.clear();
    return out;
}

IndexProjector::IndexProjector(std::vector<LatticeIndex> members, std::string label)
    : members_(std::move(members)), label_(std::move(label)) {
    std::sort(members_.begin(), members_.end());
    members_.erase(std::unique(members_.begin(), members_.end()), members_.end());
}

IndexProjector IndexProjector::ball(double radius_triple, std::string label) {
    return IndexProjector(enumerate_indices(radius_triple), std::move(label));
}

bool IndexProjector::contains(const LatticeIndex& m) const {
    return std::binary_search(members_.begin(), members_.end(), m);
}

std::optional<std::size_t> IndexProjector::position(const LatticeIndex& m) const {
    auto it = std::lower_bound(members_.begin(), members_.end(), m);
    if (it == members_.end() || *it != m) return std::nullopt;
    return static_cast<std::size_t>(it - members_.begin());
}

bool IndexProjector::is_subset_of(const IndexProjector& other) const {
    return std::includes(other.members_.begin(), other.members_.end(), members_.begin(), members_.end());
}

IndexProjector set_union(const IndexProjector& a, const IndexProjector& b, std::string label) {
    std::vector<LatticeIndex> out;
    std::set_union(a.members().begin(), a.members().end(), b.members().begin(), b.members().end(),
                   std::back_inserter(out));
    return IndexProjector(std::move(out), std::move(label));
}

IndexProjector set_difference(const IndexProjector& a, const IndexProjector& b, std::string label) {
    std::vector<LatticeIndex> out;
    std::set_difference(a.members().begin(), a.members().end(), b.members().begin(), b.members().end(),
                        std::back_inserter(out));
    return IndexProjector(std::move(out), std::move(label));
}

cplx bilinear_norm2(const CVec2& kappa, const Vec2& p) {
    cplx a = kappa[0] + p[0];
    cplx b = kappa[1] + p[1];
    return a * a + b * b;
}

cplx complexified_norm2(const QuasiLattice& lat, cplx kappa_scalar, cplx phi, const LatticeIndex& m) {
    if (m.is_zero()) return kappa_scalar * kappa_scalar;
    double pm = lat.p_norm(m);
    double phim = lat.p_angle(m);
    return kappa_scalar * kappa_scalar + pm * pm + 2.0 * kappa_scalar * pm * std::cos(phi - phim);
}

namespace {

cplx ipow(cplx z, int l) {
    cplx r(1.0);
    for (int i = 0; i < l; ++i) r *= z;
    return r;
}

}  // namespace

CMatrix potential_matrix(const TrigPotential& pot, const IndexProjector& proj) {
    const auto n = static_cast<Eigen::Index>(proj.size());
    CMatrix V = CMatrix::Zero(n, n);
    const auto& mem = proj.members();
    for (Eigen::Index i = 0; i < n; ++i) {
        for (const auto& [q, v] : pot.coeffs()) {
            auto j = proj.position(mem[static_cast<std::size_t>(i)] - q);
            if (j) V(i, static_cast<Eigen::Index>(*j)) = v;
        }
    }
    return V;
}

FiberMatrix build_free_fiber(const QuasiLattice& lat, const CVec2& kappa, int l, const IndexProjector& proj) {
    if (l < 2) throw OperatorError("l must be an integer >= 2");
    if (proj.empty()) throw OperatorError("index set is empty");
    FiberMatrix H;
    H.kappa = kappa;
    H.l = l;
    H.indexset = proj;
    const auto n = static_cast<Eigen::Index>(proj.size());
    H.entries = CMatrix::Zero(n, n);
    const bool real_kappa = kappa[0].imag() == 0.0 && kappa[1].imag() == 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
        cplx d = ipow(bilinear_norm2(kappa, lat.p_vec(proj.members()[static_cast<std::size_t>(i)])), l);
        if (real_kappa) d = cplx(d.real(), 0.0);
        H.entries(i, i) = d;
    }
    return H;
}

FiberMatrix build_fiber(const QuasiLattice& lat, const TrigPotential& pot, const CVec2& kappa, int l,
                        const IndexProjector& proj) {
    FiberMatrix H = build_free_fiber(lat, kappa, l, proj);
    CMatrix V = potential_matrix(pot, proj);
    H.entries += V;
    return H;
}

FiberMatrix restrict(const FiberMatrix& matrix, const IndexProjector& proj) {
    std::vector<Eigen::Index> pos;
    pos.reserve(proj.size());
    for (const auto& m : proj.members()) {
        auto p = matrix.indexset.position(m);
        if (!p) throw OperatorError("not-a-subset: index " + m.str() + " is not in the matrix index set");
        pos.push_back(static_cast<Eigen::Index>(*p));
    }
    FiberMatrix out;
    out.kappa = matrix.kappa;
    out.l = matrix.l;
    out.indexset = proj;
    const auto n = static_cast<Eigen::Index>(pos.size());
    out.entries.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j) out.entries(i, j) = matrix.entries(pos[i], pos[j]);
    return out;
}

}  // namespace quasispec
