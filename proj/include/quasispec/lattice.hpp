#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace quasispec {

using Int2 = std::array<std::int64_t, 2>;
using Vec2 = std::array<double, 2>;

inline constexpr double kTwoPi = 6.283185307179586476925286766559;

// Index s = (s1, s2) of the quasi-lattice point p_s = 2π(s1 + α s2).
struct LatticeIndex {
    Int2 s1{0, 0};
    Int2 s2{0, 0};

    auto operator<=>(const LatticeIndex&) const = default;

    bool is_zero() const { return s1[0] == 0 && s1[1] == 0 && s2[0] == 0 && s2[1] == 0; }
    LatticeIndex operator-() const { return {{-s1[0], -s1[1]}, {-s2[0], -s2[1]}}; }
    LatticeIndex operator+(const LatticeIndex& o) const {
        return {{s1[0] + o.s1[0], s1[1] + o.s1[1]}, {s2[0] + o.s2[0], s2[1] + o.s2[1]}};
    }
    LatticeIndex operator-(const LatticeIndex& o) const { return *this + (-o); }
    std::string str() const;
};

struct LatticeIndexHash {
    std::size_t operator()(const LatticeIndex& m) const noexcept;
};

double euclid(const Int2& v);

// |||p_m||| = |s1| + |s2| (Euclidean in each slot).
double norm_triple(const LatticeIndex& m);

class LatticeError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// How α is given: the golden mean, a decimal literal, or an eventually
// periodic continued fraction [0; prefix..., (period...)].
struct AlphaSpec {
    enum class Kind { Golden, Literal, ContinuedFraction };
    Kind kind = Kind::Golden;
    std::string literal;
    std::vector<std::int64_t> cf_prefix;
    std::vector<std::int64_t> cf_period;

    static AlphaSpec golden() { return {}; }
    static AlphaSpec decimal(std::string s) { return {Kind::Literal, std::move(s), {}, {}}; }
    static AlphaSpec continued_fraction(std::vector<std::int64_t> prefix, std::vector<std::int64_t> period) {
        return {Kind::ContinuedFraction, {}, std::move(prefix), std::move(period)};
    }
    // a finite decimal (or a finite continued fraction) is rational
    bool is_rational() const;
    std::string describe() const;
};

struct RationalApprox {
    std::int64_t p = 0;
    std::int64_t q = 1;
    double eps_q = 0.0;       // α + p/q
    double abs_residual = 0;  // |αq + p|
};

class QuasiLattice {
  public:
    explicit QuasiLattice(const AlphaSpec& spec = AlphaSpec::golden(), double mu = 2.0, int precision = 60);
    ~QuasiLattice();
    QuasiLattice(const QuasiLattice&);
    QuasiLattice& operator=(const QuasiLattice&);
    QuasiLattice(QuasiLattice&&) noexcept;
    QuasiLattice& operator=(QuasiLattice&&) noexcept;

    double alpha() const { return alpha_hi_; }
    double mu() const { return mu_; }
    int precision() const { return precision_; }
    const AlphaSpec& spec() const { return spec_; }
    std::string alpha_string(int digits) const;

    // 2π(s1 + α s2), correctly rounded from a double-double evaluation
    Vec2 p_vec(const LatticeIndex& m) const;
    // s1 + α s2, the point (2π)⁻¹ p_m
    Vec2 x_vec(const LatticeIndex& m) const;
    double p_norm(const LatticeIndex& m) const;
    double p_angle(const LatticeIndex& m) const;

    // sign of αq + p evaluated at full precision, plus |αq + p| and α + p/q
    RationalApprox evaluate(std::int64_t p, std::int64_t q) const;
    // partial quotients of α (up to `count` terms or until α is exhausted)
    std::vector<std::int64_t> partial_quotients(std::size_t count) const;

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
    AlphaSpec spec_;
    double mu_;
    int precision_;
    double alpha_hi_ = 0, alpha_lo_ = 0;
};

// Range-certified constant C_ε with p_m ≥ 2πC_ε|||p_m|||^{−(μ−1+ε)} for 0 < |||p_m||| ≤ range.
struct CEpsilonEntry {
    double eps = 0;
    double range = 0;
    double C = 0;
    LatticeIndex argmin;
};

class CEpsilonTable {
  public:
    void insert(const CEpsilonEntry& e);
    std::optional<CEpsilonEntry> find(double eps) const;
    const std::vector<CEpsilonEntry>& entries() const { return entries_; }

  private:
    std::vector<CEpsilonEntry> entries_;
};

CEpsilonEntry fit_c_epsilon(const QuasiLattice& lat, double eps, double range);

double pnorm_lower_bound(const QuasiLattice& lat, const CEpsilonTable& table, const LatticeIndex& m, double eps);

RationalApprox best_rational(const QuasiLattice& lat, std::int64_t q_bound);

// Canonical-order enumeration of {m : |||p_m||| ≤ r}.
std::vector<LatticeIndex> enumerate_indices(double radius_triple);
void for_each_index(double radius_triple, const std::function<void(const LatticeIndex&)>& fn);

struct ClusterKey {
    Int2 s{0, 0};
    Int2 s2pp{0, 0};
    auto operator<=>(const ClusterKey&) const = default;
};

struct ClusterDecomposition {
    RationalApprox approx;
    std::map<ClusterKey, std::vector<LatticeIndex>> clusters;
    double step = 0;          // |ε_q|·q
    double scale_K = 0;       // k^{r1} implied by q ≤ 4K and |s_j| ≤ 4K
    bool smallness_holds = false; // |ε_q| ≤ 1/(64 q K)
    double max_diameter = 0;  // sup norm on s1 + α s2
    double min_separation = 0;
    bool separation_is_lower_bound = false;  // no pair found within the probe radius 1/q
};

// s2 = q s2' + s2'' with 0 ≤ s2''_j < q
void split_s2(const Int2& s2, std::int64_t q, Int2& s2p, Int2& s2pp);

ClusterDecomposition decompose_clusters(const QuasiLattice& lat, const std::vector<LatticeIndex>& indices,
                                        const RationalApprox& approx);

struct ShortVectorReport {
    std::size_t count = 0;
    std::vector<LatticeIndex> witnesses;
    bool has_lemma_params = false;
    double k = 0, r1 = 0;
    std::int64_t q = 0;
    double eps_q = 0;
    double cluster_bound = 0;          // k^{2r1/3}
    double large_q_bound = 0;          // 2^12 k^{2r1/3}
    bool cluster_hypothesis = false;   // radius = 2k^{r1}, threshold = |ε_q|q k^{r1/3}
    bool large_q_hypothesis = false;   // q > k^{2r1/3}, threshold = k^{-2r1/3}
    bool cluster_holds = false;
    bool large_q_holds = false;
};

struct ScaleParams {
    double k;
    double r1;
};

ShortVectorReport count_short_vectors(const QuasiLattice& lat, double radius_triple, double p_threshold,
                                      std::optional<ScaleParams> params = std::nullopt);

}  // namespace quasispec
