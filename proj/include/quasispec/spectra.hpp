#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "quasispec/lattice.hpp"
#include "quasispec/operator.hpp"

namespace quasispec {

class SpectraError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};
class NoneInInterval : public SpectraError {
  public:
    using SpectraError::SpectraError;
};
class ResonantCollision : public SpectraError {
  public:
    using SpectraError::SpectraError;
};
class SmallDenominator : public SpectraError {
  public:
    using SpectraError::SpectraError;
};
class EigenvalueOnContour : public SpectraError {
  public:
    using SpectraError::SpectraError;
};
class ContourMultiplicity : public SpectraError {
  public:
    using SpectraError::SpectraError;
};
class SeriesNotConverged : public SpectraError {
  public:
    using SpectraError::SpectraError;
};

struct EigenPair {
    double lambda = 0;
    CVector vector;
    IndexProjector indexset;
    int level = 1;
    double residual = 0;  // ‖Hv − λv‖
};

// Full Hermitian eigensolve; the unique eigenpair with |λ − center| < half_width.
EigenPair eigenvalue_in_interval(const FiberMatrix& H, double center, double half_width, int level = 1);

// Same selection without eigenvectors.
double eigenvalue_only_in_interval(const FiberMatrix& H, double center, double half_width);

struct G2Forms {
    double direct = 0;
    double symmetrized = 0;
};

G2Forms g2_forms(const QuasiLattice& lat, const TrigPotential& pot, const Vec2& kappa, int l,
                 const IndexProjector& proj);
double g2_explicit(const QuasiLattice& lat, const TrigPotential& pot, const Vec2& kappa, int l,
                   const IndexProjector& proj);

struct SeriesReport {
    std::vector<double> terms;  // terms[r-1] = g_r for every r ≤ r_max
    int r_max = 12;
    int r_last = 0;             // last term in the sum
    double tail_bound = 0;
    bool converged = false;
    double center_eigenvalue = 0;  // eigenvalue of Htilde inside the contour
    double sum = 0;                // center_eigenvalue + Σ g_r
    double roundoff_bound = 0;     // floating-point scale of a dense eigensolve of Htilde + W
};

// g_r = ((−1)^r/(2πi r)) Tr∮(W(Htilde − z)⁻¹)^r dz by residues at the single enclosed eigenvalue.
SeriesReport series_terms(const CMatrix& Htilde, const CMatrix& W, double contour_center, double contour_radius,
                          int r_max = 12);

// Coefficients G_r of the spectral projection, r = 0..R (same residue expansion).
std::vector<CMatrix> projection_terms(const CMatrix& Htilde, const CMatrix& W, double contour_center,
                                      double contour_radius, int R);

struct DecayRate {
    double k = 1, mu = 2, delta = 0, C = 1;
    int l = 2;
};

struct DecayRow {
    LatticeIndex s;
    double norm = 0;
    double log_abs = 0;
};

struct DecayReport {
    std::vector<DecayRow> rows;
    double fitted_slope = 0;     // d log|E_0s| / d|||p_s|||
    double fitted_intercept = 0;
    double predicted_slope = 0;  // −(2l−1−44μδ) ln(Ck) / Q
    bool decaying = false;
};

DecayReport projection_decay_report(const EigenPair& pair, double Q, const DecayRate& rate);

double resolvent_norm(const FiberMatrix& H, cplx z, const IndexProjector& proj);

struct ResidualReport {
    IndexProjector outer;
    CVector residual_coeffs;
    bool support_ok = false;
    double l1_norm = 0;
    double linf_function_norm_bound = 0;
};

ResidualReport eigenfunction_residual(const EigenPair& pair, const TrigPotential& pot, const QuasiLattice& lat,
                                      double boundary_radius);

std::vector<cplx> evaluate_psi(const EigenPair& pair, const QuasiLattice& lat, const Vec2& kappa,
                               const std::vector<Vec2>& x_points);

}  // namespace quasispec
