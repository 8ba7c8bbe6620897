#pragma once

#include <functional>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quasispec/lattice.hpp"
#include "quasispec/operator.hpp"

namespace quasispec {

class ResonanceError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

class ContourThroughZero : public ResonanceError {
  public:
    using ResonanceError::ResonanceError;
};

class NewtonNonConvergence : public ResonanceError {
  public:
    using ResonanceError::ResonanceError;
};

double reduce_angle(double phi);  // into [0, 2π)

struct AngularDisc {
    cplx center;
    double radius = 0;
    std::string source;
    int level = 1;
};

AngularDisc make_disc(cplx center, double radius, std::string source, int level);

struct Arc {
    double start = 0;
    double end = 0;
    double length() const { return end - start; }
    bool operator==(const Arc&) const = default;
};

struct AngleSetLevel {
    int level = 1;
    double k = 0;
    double tau = 1;
    std::vector<AngularDisc> discs;
    std::vector<Arc> real_arcs;

    bool contains(double phi) const;
};

// Real shadow of a disc as arcs inside [0, 2π) (wrapped, possibly empty).
std::vector<Arc> disc_shadow(const AngularDisc& d);
std::vector<Arc> merge_arcs(std::vector<Arc> arcs);
std::vector<Arc> subtract_arcs(const std::vector<Arc>& base, const std::vector<Arc>& removed);
bool arcs_subset(const std::vector<Arc>& inner, const std::vector<Arc>& outer);

enum class ThresholdMode { Paper, Desk };

// Right-hand sides of the resonance inequalities.
struct ResonanceThresholds {
    ThresholdMode mode = ThresholdMode::Desk;
    double k = 1;
    double mu = 2;
    double delta = 0;
    double t_inner = 0;  // desk: threshold for |||m||| ≤ 4k^δ at τ = 1
    double t_outer = 0;  // desk: threshold for larger m at τ = 1
    double inner_range = -1;  // working range of the level-1 set; default 4k^δ

    double inner(double tau) const;  // paper: τk^{1−40μδ}
    double outer(double tau) const;  // paper: τk^{−40μδ}
    double working_range() const;
    double threshold_for(const LatticeIndex& m, double tau) const;
};

// Solutions of p_m² + 2k p_m cos(φ − φ_m) = 0 in [0, 2π).
std::vector<double> phi_roots(const QuasiLattice& lat, double k, const LatticeIndex& m);

// p_m² + 2k p_m cos(φ − φ_m) = |k(φ) + p_m|² − k²
double resonance_function(const QuasiLattice& lat, double k, double phi, const LatticeIndex& m);

// Covering discs of O_m(k, τ) for one index (disc-geometry cases; desk mode adds the exact real extent).
std::vector<AngularDisc> resonance_discs_for(const QuasiLattice& lat, const ResonanceThresholds& th, double tau,
                                             const LatticeIndex& m, int level = 1);

AngleSetLevel resonance_discs_level1(const QuasiLattice& lat, const ResonanceThresholds& th, double tau);

struct MeasureReport {
    double measure = 0;       // total arc length
    double removed = 0;       // 2π − measure
    double lemma_bound = 0;   // C k^{−37δμ}
    bool within_bound = false;
};

double nonresonant_measure(const AngleSetLevel& set);
MeasureReport nonresonant_measure_report(const AngleSetLevel& set, double delta, double mu, double C = 1.0);

// An analytic matrix family φ ↦ A(φ) with its φ-derivative.
struct AnalyticFamily {
    std::function<CMatrix(cplx)> matrix;
    std::function<CMatrix(cplx)> derivative;
    std::string id;
};

// P(H(κν(φ)))P with fixed scalar κ and complex angle φ.
AnalyticFamily fiber_family(const QuasiLattice& lat, const TrigPotential& pot, int l, double kappa,
                            const IndexProjector& proj, std::string id = {});

struct PoleScanOptions {
    int initial_points = 256;
    int max_doublings = 10;
    double newton_tol = 1e-12;
    int newton_max_iter = 50;
    double zero_rel_tol = 1e-12;
};

struct Pole {
    cplx location;
    int multiplicity = 1;
};

struct PoleScanResult {
    int winding = 0;
    std::vector<Pole> poles;
    int quadrature_points = 0;
};

// Winding of det(A(φ) − E) around the disc, then Newton-refined zeros.
PoleScanResult pole_scan(const AnalyticFamily& block, const AngularDisc& disc, double level_energy,
                         const PoleScanOptions& opt = {});

// Only the winding number (no zero location).
int winding_number(const AnalyticFamily& block, cplx center, double radius, double level_energy,
                   const PoleScanOptions& opt = {}, int* points_used = nullptr);

struct WindowBlock {
    AnalyticFamily family;
    AngularDisc window;
};

struct NextLevelOptions {
    PoleScanOptions scan;
    int threads = 1;
    int max_window_growth = 6;   // retries with a 5% larger window on contour-through-zero
};

AngleSetLevel resonant_set_next(const AngleSetLevel& prev, const std::vector<WindowBlock>& blocks,
                                double level_energy, double radius, const NextLevelOptions& opt = {});

}  // namespace quasispec
