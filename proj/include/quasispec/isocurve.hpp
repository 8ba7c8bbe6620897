#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quasispec/resonance.hpp"
#include "quasispec/spectra.hpp"

namespace quasispec {

class IsoCurveError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};
class ResonantAngle : public IsoCurveError {
  public:
    using IsoCurveError::IsoCurveError;
};
class NoRootInBracket : public IsoCurveError {
  public:
    using IsoCurveError::IsoCurveError;
};
class EmptyIntersection : public IsoCurveError {
  public:
    using IsoCurveError::IsoCurveError;
};

// Truncation and eigenvalue window for one level.
struct LevelSpec {
    IndexProjector indexset;
    // λ⁽ⁿ⁾ is the unique eigenvalue within half_width of κ^{2l} (n = 1) or of λ⁽ⁿ⁻¹⁾ (n ≥ 2)
    double half_width = 1.0;
};

struct IsoContext {
    QuasiLattice lat;
    TrigPotential pot;
    int l = 2;
    std::vector<LevelSpec> levels;         // levels[n-1]
    std::vector<AngleSetLevel> angle_sets; // optional; when present φ must lie in the level's arcs
    int threads = 1;
};

// λ⁽ⁿ⁾(κν(φ)); throws the spectra errors when the level window is not simple.
double level_eigenvalue(const IsoContext& ctx, int level, double kappa, double phi);

struct IsoCurvePoint {
    double phi = 0;
    double kappa = 0;
    int level = 1;
    double closure_residual = 0;
    std::optional<double> dkappa_dphi;
};

struct SampleFailure {
    double phi = 0;
    std::string reason;
};

struct IsoCurve {
    double lambda = 0;
    int level = 1;
    std::vector<IsoCurvePoint> points;
    std::vector<Arc> arcs;
    std::vector<SampleFailure> failures;  // holes within arcs, distinct from resonance holes
};

IsoCurvePoint kappa_at(const IsoContext& ctx, int level, double lambda, double phi);

// Sample points a + (i + ½)(b − a)/N inside each arc.
std::vector<double> arc_samples(const std::vector<Arc>& arcs, int samples_per_arc);

IsoCurve trace_curve(const IsoContext& ctx, int level, double lambda, int samples_per_arc);

// Trace at given angles (used to align grids between levels); arcs are recorded for derivative steps.
IsoCurve trace_at(const IsoContext& ctx, int level, double lambda, const std::vector<Arc>& arcs,
                  int samples_per_arc);

struct CurveDiffRow {
    double phi = 0;
    double h = 0;
    std::optional<double> dh_dphi;
};

struct CurveDiff {
    std::vector<CurveDiffRow> rows;
    double max_abs = 0;
    double mean_abs = 0;
};

CurveDiff curve_diff(const IsoCurve& a, const IsoCurve& b);

}  // namespace quasispec
