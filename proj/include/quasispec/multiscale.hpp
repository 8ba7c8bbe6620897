#pragma once

#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "quasispec/isocurve.hpp"
#include "quasispec/resonance.hpp"
#include "quasispec/spectra.hpp"

namespace quasispec {

class MultiscaleError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};
class Phi0Resonant : public MultiscaleError {
  public:
    using MultiscaleError::MultiscaleError;
};
class BlockLeak : public MultiscaleError {
  public:
    using MultiscaleError::MultiscaleError;
};

using IndexSet = std::set<LatticeIndex>;

// floor(k^e), at least 1
double size_from_exponent(double k, double e);

// |f(φ₀, m)| < T(m, τ): φ₀ ∈ O_m(k, τ)
bool in_resonance_set(const QuasiLattice& lat, const ResonanceThresholds& th, double tau, double phi0,
                      const LatticeIndex& m);

// Every 0 < |||m||| ≤ radius with φ₀ ∈ O_m(k, τ), found without scanning the whole ball.
IndexSet resonant_indices(const QuasiLattice& lat, const ResonanceThresholds& th, double tau, double phi0,
                          double radius_triple);

struct ChainWitness {
    std::vector<LatticeIndex> chain;  // each entry within k^δ of an earlier one
};

struct ResonantIndexSets {
    IndexSet M, M_prime, M1, M2;
    std::vector<IndexSet> classes;  // M′-classes containing an M₂ element, ordered by smallest member
    double phi0 = 0, k = 0, r1 = 0, delta = 0;
    double chain_distance = 0;  // k^δ
    std::vector<ChainWitness> oversized;  // classes with more than 4 members
};

// threshold mode and τ come from `th`; radii are k^{r1} and 2k^{r1}
ResonantIndexSets build_resonant_sets(const QuasiLattice& lat, double phi0, double r1, const ResonanceThresholds& th);

// Diagonal blocks to check: pairwise orthogonal, V-decoupled, and PHP = ⊕ blocks.
struct BlockPartition {
    std::vector<IndexProjector> blocks;
    std::optional<IndexProjector> p_delta;  // P(δ), must be V-decoupled from every block
    // interior points (closed ball of this radius inside the block) must not couple to the complement of the union
    std::optional<double> boundary_width;
};

// M̃_m for m ∈ M₁ and M̃₂^j, neighbourhoods of radius k^δ/3; P(δ) on |||m||| ≤ k^δ
BlockPartition blocks_from(const ResonantIndexSets& sets);

struct BlockLeakEntry {
    std::string kind;  // "overlap", "PVP", "P(delta)", "boundary", "PHP"
    std::size_t block_a = 0, block_b = 0;
    LatticeIndex row, col;
    cplx value;
};

struct BlockReport {
    bool ok = true;
    std::size_t blocks = 0;
    std::size_t indices = 0;
    std::size_t entries_checked = 0;
    bool dense_checked = false;
    std::vector<BlockLeakEntry> leaks;  // first 64
    std::size_t leak_count = 0;
};

BlockReport verify_block_structure(const BlockPartition& part, const QuasiLattice& lat, const TrigPotential& pot,
                                   const CVec2& kappa, int l);

// throws BlockLeak naming the first offending entry
void require_block_structure(const BlockReport& report);

struct M2Context {
    QuasiLattice lat;
    TrigPotential pot;
    int l = 2;
    double kappa = 0;      // κ⁽ⁿ⁻¹⁾(φ₀), held fixed for complex φ
    double energy = 0;     // k^{2l}
    double delta = 0;      // component scale k^δ
    ResonanceThresholds thresholds;  // first-order membership M(φ₀, r₂)
    std::optional<AngleSetLevel> previous;  // φ₀ must lie in its real arcs
    PoleScanOptions scan;
    int threads = 1;
};

struct M2Detection {
    IndexSet members;
    IndexSet candidates;                 // M(φ₀, r_high) outside Ω(r_low)
    std::vector<IndexProjector> components;  // k^δ-components of the candidates
    std::vector<int> winding;            // per component
};

M2Detection detect_M2_level(double phi0, double k, double r_low, double r_high, double pole_radius,
                            const M2Context& ctx);

enum class Color { Core, Simple, Black, Grey, White, Nonres, Outside };
std::string color_name(Color c);

struct RegionParams {
    double k = 0, r1 = 0, r2 = 0, gamma = 0.2, delta0 = 0.002, delta = 0;
    double R1 = 0, R2 = 0;              // k^{r1}, k^{r2}
    double simple_threshold = 0;        // Ω_s: 0 < p_m ≤ this
    double simple_nbhd = 1;             // k^{r1/2}
    double big_box = 1;                 // k^{γr1}
    double black_count = 0;             // more than k^{γr1/2+δ0r1} points
    double black_nbhd = 1;              // k^{γr1/2+δ0r1}
    double small_box = 1;               // k^{γr1/2+2δ0r1}
    double grey_count = 0;              // more than k^{γr1/6−δ0r1} points
    double grey_nbhd = 1;               // k^{γr1/2+2δ0r1}
    double white_nbhd = 1;              // k^{γr1/6}
    double nonres_nbhd = 1;             // k^δ/3
    double nonres_merge = 1;            // k^δ
    // component separations
    double sep_black = 1;               // k^{γr1+δ0r1}
    double sep_grey = 1;                // k^{γr1/2+2δ0r1}
    double sep_white = 1;               // k^{γr1/6}
    double sep_nonres = 1;              // k^δ/3
    double sep_simple = 1;              // k^{γr1}

    // sizes from exponents; simple_threshold defaults to k^{−5r′₁} with r′₁ = 40μr₁ + 2l
    static RegionParams derive(double k, double r1, double r2, double delta, double gamma = 0.2,
                               std::optional<double> simple_threshold = std::nullopt, double mu = 2.0, int l = 2);
    double separation(Color c) const;
};

struct RegionContext {
    QuasiLattice lat;
    IndexSet first_order;  // M(φ₀, r₂)
};

struct RegionComponent {
    Color color = Color::Outside;
    int id = 0;
    std::vector<LatticeIndex> members;
    std::size_t m2_count = 0;
    LatticeIndex lo, hi;  // coordinate bounding box
};

struct RegionColoring {
    RegionParams params;
    std::map<LatticeIndex, Color> assignment;  // every index of Ω(r₂)
    std::vector<RegionComponent> components;   // colored components; core is one component
    int merge_passes = 0;
    // reports
    bool simple_isolated = true;          // no other Ω_s point within k^{r1}
    double simple_to_m2 = 0;              // |||·|||-distance from Π_s to M⁽²⁾ (∞ if either empty)
};

RegionColoring color_regions(const IndexSet& m2_level, const RegionParams& params, const RegionContext& ctx);

// One pass of the boundary adjustment on a finished coloring; returns the number of recolored indices.
std::size_t adjust_boundaries(RegionColoring& coloring, const IndexSet& m2_level);

// Recomputes components of every color from the assignment.
void extract_components(RegionColoring& coloring, const IndexSet& m2_level);

BlockPartition blocks_from(const RegionColoring& coloring, double boundary_width);

enum class CountMode { CurveDistance, ResolventThreshold };

struct ResolventBlock {
    QuasiLattice lat;
    TrigPotential pot;
    int l = 2;
    double energy = 0;
    IndexProjector indexset;  // P around the shifted point
};

struct CountReport {
    std::size_t count = 0;
    std::vector<LatticeIndex> witnesses;
    std::size_t enumerated = 0;
    // 1000 k^{2r₁/3+1} with k^{r₁} = radius_triple
    double lemma_k = 0;
    double lemma_bound = 0;
    bool lemma_hypothesis = false;  // ε₀ ≤ k^{−5μr₁}
    bool within_bound = false;
};

// κ̂(φ) by linear interpolation between samples of the arc containing φ, constant beyond the end samples
std::optional<double> curve_radius_at(const IsoCurve& curve, double phi);

CountReport count_near_curve(const IsoCurve& curve, const QuasiLattice& lat, const Vec2& center,
                             double radius_triple, double eps0, double k = 0, double mu = 2.0);

CountReport count_near_resolvent(const ResolventBlock& block, const Vec2& center, double radius_triple,
                                 double eps0, double k = 0, double mu = 2.0);

struct Inequality {
    std::string name;
    double lhs = 0, rhs = 0;
    bool holds = false;
};

struct LevelRange {
    int n = 1;
    double r = 0, r_lo = 0, r_hi = 0;     // r_n and its admissible range
    double rp = 0, rp_lo = 0, rp_hi = 0;  // r′_n
    bool feasible = false;
};

struct ParamSchedule {
    double k = 0, delta = 0, mu = 0, Q = 0, gamma = 0.2, delta0 = 0.002, beta = 0;
    int l = 2;
    bool paper_regime = false;
    std::vector<LevelRange> levels;  // levels[0] is r₁, r′₁
    std::vector<Inequality> checks;
    std::vector<std::string> warnings;
};

ParamSchedule parameter_schedule(double k, double delta, double mu, int l, double Q, int n_levels, double r1,
                                 bool paper_regime = false, double gamma = 0.2);

}  // namespace quasispec
