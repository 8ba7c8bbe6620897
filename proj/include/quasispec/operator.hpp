#pragma once

#include <Eigen/Dense>

#include <complex>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quasispec/lattice.hpp"

namespace quasispec {

using cplx = std::complex<double>;
using CVec2 = std::array<cplx, 2>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

class OperatorError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

struct PotentialTerm {
    LatticeIndex q;
    cplx value;
};

// Trigonometric polynomial V = Σ V_q e^{i⟨p_q,x⟩} with V_0 = 0 and V_{-q} = conj(V_q).
class TrigPotential {
  public:
    TrigPotential() = default;
    // Missing partners −q are filled in by conjugation; inconsistent pairs are rejected.
    TrigPotential(double Q, const std::vector<PotentialTerm>& terms);

    static TrigPotential zero(double Q = 1.0) { return TrigPotential(Q, {}); }
    static TrigPotential single_harmonic(const LatticeIndex& q, cplx v, double Q = 1.0);

    double Q() const { return Q_; }
    cplx coeff(const LatticeIndex& q) const;
    const std::map<LatticeIndex, cplx>& coeffs() const { return coeffs_; }
    bool is_zero() const { return coeffs_.empty(); }
    TrigPotential scaled(double s) const;

  private:
    double Q_ = 1.0;
    std::map<LatticeIndex, cplx> coeffs_;
};

class IndexProjector {
  public:
    IndexProjector() = default;
    IndexProjector(std::vector<LatticeIndex> members, std::string label = {});
    static IndexProjector ball(double radius_triple, std::string label = {});

    const std::vector<LatticeIndex>& members() const { return members_; }
    const std::string& label() const { return label_; }
    std::size_t size() const { return members_.size(); }
    bool empty() const { return members_.empty(); }
    bool contains(const LatticeIndex& m) const;
    // position in canonical order, or nullopt
    std::optional<std::size_t> position(const LatticeIndex& m) const;
    bool is_subset_of(const IndexProjector& other) const;

  private:
    std::vector<LatticeIndex> members_;
    std::string label_;
};

IndexProjector set_union(const IndexProjector& a, const IndexProjector& b, std::string label = {});
IndexProjector set_difference(const IndexProjector& a, const IndexProjector& b, std::string label = {});

struct FiberMatrix {
    CVec2 kappa{};
    int l = 2;
    IndexProjector indexset;
    CMatrix entries;
};

// |κ + p|_ℝ² with the complex bilinear form a₁b₁ + a₂b₂
cplx bilinear_norm2(const CVec2& kappa, const Vec2& p);

// κ² + p_m² + 2κp_m cos(φ − φ_m)
cplx complexified_norm2(const QuasiLattice& lat, cplx kappa_scalar, cplx phi, const LatticeIndex& m);

inline CVec2 kappa_vec(cplx kappa_scalar, cplx phi) {
    return {kappa_scalar * std::cos(phi), kappa_scalar * std::sin(phi)};
}

FiberMatrix build_fiber(const QuasiLattice& lat, const TrigPotential& pot, const CVec2& kappa, int l,
                        const IndexProjector& proj);

// Free part only (V = 0) on the same index set.
FiberMatrix build_free_fiber(const QuasiLattice& lat, const CVec2& kappa, int l, const IndexProjector& proj);

FiberMatrix restrict(const FiberMatrix& matrix, const IndexProjector& proj);

// Potential matrix V_{m−n} on an index set (the P V P block).
CMatrix potential_matrix(const TrigPotential& pot, const IndexProjector& proj);

}  // namespace quasispec
