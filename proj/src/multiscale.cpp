#include "quasispec/multiscale.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "quasispec/parallel.hpp"

namespace quasispec {

namespace {

using Key4 = std::array<std::int64_t, 4>;

struct Key4Hash {
    std::size_t operator()(const Key4& k) const noexcept {
        std::uint64_t h = 1469598103934665603ull;
        for (auto v : k) {
            h ^= static_cast<std::uint64_t>(v) + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
            h *= 1099511628211ull;
        }
        return static_cast<std::size_t>(h);
    }
};

using HashSet = std::unordered_set<LatticeIndex, LatticeIndexHash>;

Key4 coords(const LatticeIndex& m) { return {m.s1[0], m.s1[1], m.s2[0], m.s2[1]}; }

Key4 cell_of(const LatticeIndex& m, double size) {
    Key4 c = coords(m);
    for (auto& v : c) v = static_cast<std::int64_t>(std::floor(static_cast<double>(v) / size));
    return c;
}

template <class Fn>
void for_each_neighbor_cell(const Key4& c, Fn&& fn) {
    for (int a = -1; a <= 1; ++a)
        for (int b = -1; b <= 1; ++b)
            for (int d = -1; d <= 1; ++d)
                for (int e = -1; e <= 1; ++e) fn(Key4{c[0] + a, c[1] + b, c[2] + d, c[3] + e});
}

// Buckets of side ≥ d: every pair at |||·|||-distance < d lies in adjacent buckets,
// since |||x||| bounds each coordinate.
class PointGrid {
  public:
    explicit PointGrid(double d) : cell_(std::max(1.0, d)) {}
    template <class It>
    PointGrid(double d, It first, It last) : PointGrid(d) {
        for (; first != last; ++first) add(*first);
    }
    void add(const LatticeIndex& m) { cells_[cell_of(m, cell_)].push_back(m); }

    // calls fn(y) for stored y with |||x − y||| < d (or ≤ d when inclusive)
    template <class Fn>
    void near(const LatticeIndex& x, double d, bool inclusive, Fn&& fn) const {
        for_each_neighbor_cell(cell_of(x, cell_), [&](const Key4& c) {
            auto it = cells_.find(c);
            if (it == cells_.end()) return;
            for (const auto& y : it->second) {
                const double r = norm_triple(x - y);
                if (inclusive ? r <= d : r < d) fn(y);
            }
        });
    }
    bool any_near(const LatticeIndex& x, double d) const {
        bool hit = false;
        near(x, d, false, [&](const LatticeIndex&) { hit = true; });
        return hit;
    }

  private:
    double cell_;
    std::unordered_map<Key4, std::vector<LatticeIndex>, Key4Hash> cells_;
};

struct UnionFind {
    std::vector<std::size_t> parent;
    explicit UnionFind(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
    std::size_t find(std::size_t x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
    }
};

// Offsets o with |||o||| < r (≤ r when inclusive).
std::vector<LatticeIndex> offsets_within(double r, bool inclusive) {
    std::vector<LatticeIndex> out;
    for (const auto& m : enumerate_indices(r))
        if (inclusive || norm_triple(m) < r) out.push_back(m);
    return out;
}

// Components of `pts` under |||a − b||| < d (≤ d when inclusive); each sorted, ordered by first member.
std::vector<std::vector<LatticeIndex>> chain_components(const std::vector<LatticeIndex>& pts, double d,
                                                        bool inclusive) {
    std::unordered_map<LatticeIndex, std::size_t, LatticeIndexHash> pos;
    for (std::size_t i = 0; i < pts.size(); ++i) pos[pts[i]] = i;
    UnionFind uf(pts.size());
    // dense sets: probe the offset ball (half of it, by symmetry); sparse sets: bucket grid
    std::unordered_map<Key4, std::size_t, Key4Hash> occupancy;
    const double cell = std::max(1.0, d);
    for (const auto& m : pts) ++occupancy[cell_of(m, cell)];
    const double per_cell = occupancy.empty() ? 0.0 : static_cast<double>(pts.size()) / static_cast<double>(occupancy.size());
    const double ball = std::pow(d + 1.0, 4.0) * 4.9;  // ≈ (π²/2)(d+1)⁴ lattice points
    if (81.0 * per_cell > 0.5 * ball) {
        std::vector<LatticeIndex> half;
        for (const auto& o : offsets_within(d, inclusive))
            if (LatticeIndex{} < o) half.push_back(o);
        for (std::size_t i = 0; i < pts.size(); ++i)
            for (const auto& o : half) {
                auto it = pos.find(pts[i] + o);
                if (it != pos.end()) uf.unite(i, it->second);
            }
    } else {
        PointGrid grid(d, pts.begin(), pts.end());
        for (std::size_t i = 0; i < pts.size(); ++i)
            grid.near(pts[i], d, inclusive, [&](const LatticeIndex& y) { uf.unite(i, pos[y]); });
    }
    std::map<std::size_t, std::vector<LatticeIndex>> groups;
    for (std::size_t i = 0; i < pts.size(); ++i) groups[uf.find(i)].push_back(pts[i]);
    std::vector<std::vector<LatticeIndex>> out;
    for (auto& [root, g] : groups) {
        std::sort(g.begin(), g.end());
        out.push_back(std::move(g));
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.front() < b.front(); });
    return out;
}

std::vector<LatticeIndex> open_ball(double r) { return offsets_within(r, false); }

std::vector<LatticeIndex> neighbourhood_union(const std::vector<LatticeIndex>& seeds, double r) {
    const auto offs = open_ball(r);
    HashSet out;
    for (const auto& s : seeds)
        for (const auto& o : offs) out.insert(s + o);
    std::vector<LatticeIndex> v(out.begin(), out.end());
    std::sort(v.begin(), v.end());
    return v;
}

}  // namespace

double size_from_exponent(double k, double e) { return std::max(1.0, std::floor(std::pow(k, e))); }

bool in_resonance_set(const QuasiLattice& lat, const ResonanceThresholds& th, double tau, double phi0,
                      const LatticeIndex& m) {
    return std::fabs(resonance_function(lat, th.k, phi0, m)) < th.threshold_for(m, tau);
}

IndexSet resonant_indices(const QuasiLattice& lat, const ResonanceThresholds& th, double tau, double phi0,
                          double radius_triple) {
    IndexSet out;
    if (radius_triple <= 0) return out;
    const double k = th.k;
    const double T = std::max(th.inner(tau), th.outer(tau));
    // |f| < T forces p_m(p_m − 2k) < T
    const double pmax = k + std::sqrt(k * k + T);
    const double rho = pmax / kTwoPi * (1 + 1e-9) + 1e-9;
    const double alpha = lat.alpha();
    const auto R = static_cast<std::int64_t>(std::floor(radius_triple));
    for (std::int64_t a = -R; a <= R; ++a)
        for (std::int64_t b = -R; b <= R; ++b) {
            const Int2 s2{a, b};
            const double n2 = euclid(s2);
            if (n2 > radius_triple) continue;
            const double cx = -alpha * a, cy = -alpha * b;
            // |s1| ≤ radius − |s2| as well
            const double r1 = radius_triple - n2;
            const auto lo = [&](double c) { return static_cast<std::int64_t>(std::floor(std::max(c - rho, -r1))); };
            const auto hi = [&](double c) { return static_cast<std::int64_t>(std::ceil(std::min(c + rho, r1))); };
            for (auto x = lo(cx); x <= hi(cx); ++x)
                for (auto y = lo(cy); y <= hi(cy); ++y) {
                    LatticeIndex m{{x, y}, s2};
                    if (m.is_zero()) continue;
                    if (norm_triple(m) > radius_triple) continue;
                    if (std::hypot(x - cx, y - cy) > rho) continue;
                    if (in_resonance_set(lat, th, tau, phi0, m)) out.insert(m);
                }
        }
    return out;
}

ResonantIndexSets build_resonant_sets(const QuasiLattice& lat, double phi0, double r1, const ResonanceThresholds& th) {
    const double k = th.k;
    auto bad = resonant_indices(lat, th, 8.0, phi0, th.working_range());
    if (!bad.empty()) {
        std::ostringstream os;
        os << "phi0-resonant: phi0=" << phi0 << " lies in O_m(k, 8) for m=" << bad.begin()->str();
        throw Phi0Resonant(os.str());
    }
    ResonantIndexSets s;
    s.phi0 = phi0;
    s.k = k;
    s.r1 = r1;
    s.delta = th.delta;
    s.chain_distance = std::pow(k, th.delta);
    const double R = std::pow(k, r1);
    s.M_prime = resonant_indices(lat, th, 1.0, phi0, 2.0 * R);
    for (const auto& m : s.M_prime)
        if (norm_triple(m) <= R) s.M.insert(m);

    std::vector<LatticeIndex> mp(s.M_prime.begin(), s.M_prime.end());
    PointGrid grid(s.chain_distance, mp.begin(), mp.end());
    for (const auto& m : s.M) {
        bool isolated = true;
        grid.near(m, s.chain_distance, true, [&](const LatticeIndex& y) {
            if (y != m) isolated = false;
        });
        (isolated ? s.M1 : s.M2).insert(m);
    }
    for (auto& comp : chain_components(mp, s.chain_distance, true)) {
        const bool has_m2 = std::any_of(comp.begin(), comp.end(), [&](const LatticeIndex& m) { return s.M2.count(m) > 0; });
        if (!has_m2) continue;
        s.classes.emplace_back(comp.begin(), comp.end());
    }
    for (const auto& cls : s.classes) {
        if (cls.size() <= 4) continue;
        // breadth-first order from the smallest M₂ member is a chain in the sense of the relation
        LatticeIndex start = *std::find_if(cls.begin(), cls.end(), [&](const LatticeIndex& m) { return s.M2.count(m) > 0; });
        ChainWitness w;
        std::set<LatticeIndex> seen{start};
        std::deque<LatticeIndex> queue{start};
        while (!queue.empty()) {
            LatticeIndex x = queue.front();
            queue.pop_front();
            w.chain.push_back(x);
            for (const auto& y : cls)
                if (!seen.count(y) && norm_triple(x - y) <= s.chain_distance) {
                    seen.insert(y);
                    queue.push_back(y);
                }
        }
        s.oversized.push_back(std::move(w));
    }
    return s;
}

BlockPartition blocks_from(const ResonantIndexSets& sets) {
    BlockPartition part;
    const double r = sets.chain_distance / 3.0;
    for (const auto& m : sets.M1) part.blocks.emplace_back(neighbourhood_union({m}, r), "M1:" + m.str());
    for (std::size_t j = 0; j < sets.classes.size(); ++j)
        part.blocks.emplace_back(neighbourhood_union({sets.classes[j].begin(), sets.classes[j].end()}, r),
                                 "M2^" + std::to_string(j + 1));
    part.p_delta = IndexProjector::ball(sets.chain_distance, "P(delta)");
    return part;
}

BlockReport verify_block_structure(const BlockPartition& part, const QuasiLattice& lat, const TrigPotential& pot,
                                   const CVec2& kappa, int l) {
    BlockReport rep;
    rep.blocks = part.blocks.size();
    auto leak = [&](BlockLeakEntry e) {
        ++rep.leak_count;
        if (rep.leaks.size() < 64) rep.leaks.push_back(std::move(e));
    };
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();
    std::unordered_map<LatticeIndex, std::size_t, LatticeIndexHash> owner;
    for (std::size_t b = 0; b < part.blocks.size(); ++b)
        for (const auto& m : part.blocks[b].members()) {
            auto [it, fresh] = owner.emplace(m, b);
            if (!fresh) leak({"overlap", it->second, b, m, m, cplx(1.0)});
        }
    rep.indices = owner.size();
    for (std::size_t b = 0; b < part.blocks.size(); ++b)
        for (const auto& n : part.blocks[b].members())
            for (const auto& [q, v] : pot.coeffs()) {
                const LatticeIndex m = n + q;
                ++rep.entries_checked;
                auto it = owner.find(m);
                if (it != owner.end() && it->second != b) leak({"PVP", it->second, b, m, n, v});
                if (part.p_delta && part.p_delta->contains(m)) leak({"P(delta)", none, b, m, n, v});
            }
    if (part.boundary_width) {
        const auto offs = offsets_within(*part.boundary_width, true);
        for (std::size_t b = 0; b < part.blocks.size(); ++b) {
            const auto& blk = part.blocks[b];
            for (const auto& n : blk.members()) {
                const bool interior = std::all_of(offs.begin(), offs.end(), [&](const LatticeIndex& o) { return blk.contains(n + o); });
                if (!interior) continue;
                for (const auto& [q, v] : pot.coeffs())
                    if (!owner.count(n + q)) leak({"boundary", none, b, n + q, n, v});
            }
        }
    }
    if (rep.indices > 0 && rep.indices <= 1500) {
        std::vector<LatticeIndex> all;
        for (const auto& [m, b] : owner) all.push_back(m);
        IndexProjector U(all);
        FiberMatrix direct = build_fiber(lat, pot, kappa, l, U);
        CMatrix assembled = CMatrix::Zero(direct.entries.rows(), direct.entries.cols());
        for (const auto& blk : part.blocks) {
            FiberMatrix fb = build_fiber(lat, pot, kappa, l, blk);
            std::vector<std::size_t> at;
            for (const auto& m : blk.members()) at.push_back(*U.position(m));
            for (std::size_t i = 0; i < at.size(); ++i)
                for (std::size_t j = 0; j < at.size(); ++j)
                    assembled(static_cast<Eigen::Index>(at[i]), static_cast<Eigen::Index>(at[j])) =
                        fb.entries(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
        }
        for (Eigen::Index i = 0; i < assembled.rows(); ++i)
            for (Eigen::Index j = 0; j < assembled.cols(); ++j)
                if (assembled(i, j) != direct.entries(i, j))
                    leak({"PHP", owner[U.members()[static_cast<std::size_t>(i)]], owner[U.members()[static_cast<std::size_t>(j)]],
                          U.members()[static_cast<std::size_t>(i)], U.members()[static_cast<std::size_t>(j)],
                          direct.entries(i, j) - assembled(i, j)});
        rep.dense_checked = true;
    }
    rep.ok = rep.leak_count == 0;
    return rep;
}

void require_block_structure(const BlockReport& report) {
    if (report.ok) return;
    const auto& e = report.leaks.front();
    std::ostringstream os;
    os << "block-leak: " << report.leak_count << " offending entries; first " << e.kind << " at (" << e.row.str()
       << ", " << e.col.str() << ") value " << e.value;
    throw BlockLeak(os.str());
}

M2Detection detect_M2_level(double phi0, double k, double r_low, double r_high, double pole_radius,
                            const M2Context& ctx) {
    if (ctx.previous && !ctx.previous->contains(phi0)) {
        std::ostringstream os;
        os << "phi0-resonant: phi0=" << phi0 << " is outside the level-" << ctx.previous->level << " arcs";
        throw Phi0Resonant(os.str());
    }
    M2Detection out;
    const double Rlo = std::pow(k, r_low);
    for (const auto& m : resonant_indices(ctx.lat, ctx.thresholds, 1.0, phi0, std::pow(k, r_high)))
        if (norm_triple(m) > Rlo) out.candidates.insert(m);
    const double box = std::pow(k, ctx.delta);
    std::vector<LatticeIndex> cand(out.candidates.begin(), out.candidates.end());
    auto comps = chain_components(cand, 3.0 * box, false);
    for (std::size_t j = 0; j < comps.size(); ++j)
        out.components.emplace_back(neighbourhood_union(comps[j], box), "k^delta-component " + std::to_string(j + 1));
    out.winding.assign(comps.size(), 0);
    if (!(pole_radius > 0)) return out;
    std::vector<std::string> errors(comps.size());
    parallel_for(comps.size(), ctx.threads, [&](std::size_t j) {
        try {
            AnalyticFamily fam = fiber_family(ctx.lat, ctx.pot, ctx.l, ctx.kappa, out.components[j], out.components[j].label());
            out.winding[j] = winding_number(fam, cplx(phi0, 0.0), pole_radius, ctx.energy, ctx.scan);
        } catch (const std::exception& e) {
            errors[j] = e.what();
        }
    });
    for (std::size_t j = 0; j < comps.size(); ++j)
        if (!errors[j].empty()) throw MultiscaleError(out.components[j].label() + ": " + errors[j]);
    for (std::size_t j = 0; j < comps.size(); ++j)
        if (out.winding[j] > 0) out.members.insert(comps[j].begin(), comps[j].end());
    return out;
}

std::string color_name(Color c) {
    switch (c) {
        case Color::Core: return "core";
        case Color::Simple: return "simple";
        case Color::Black: return "black";
        case Color::Grey: return "grey";
        case Color::White: return "white";
        case Color::Nonres: return "nonres";
        case Color::Outside: return "outside";
    }
    return "?";
}

RegionParams RegionParams::derive(double k, double r1, double r2, double delta, double gamma,
                                  std::optional<double> simple_threshold, double mu, int l) {
    RegionParams p;
    p.k = k;
    p.r1 = r1;
    p.r2 = r2;
    p.delta = delta;
    p.gamma = gamma;
    p.delta0 = gamma / 100.0;
    const double g = gamma * r1, d0 = p.delta0 * r1;
    p.R1 = std::pow(k, r1);
    p.R2 = std::pow(k, r2);
    const double r1p = 40.0 * mu * r1 + 2.0 * l;
    p.simple_threshold = simple_threshold ? *simple_threshold : std::pow(k, -5.0 * r1p);
    p.simple_nbhd = size_from_exponent(k, r1 / 2);
    p.big_box = size_from_exponent(k, g);
    p.black_count = std::pow(k, g / 2 + d0);
    p.black_nbhd = size_from_exponent(k, g / 2 + d0);
    p.small_box = size_from_exponent(k, g / 2 + 2 * d0);
    p.grey_count = std::pow(k, g / 6 - d0);
    p.grey_nbhd = size_from_exponent(k, g / 2 + 2 * d0);
    p.white_nbhd = size_from_exponent(k, g / 6);
    p.nonres_nbhd = std::max(1.0, std::floor(std::pow(k, delta) / 3.0));
    p.nonres_merge = size_from_exponent(k, delta);
    p.sep_black = size_from_exponent(k, g + d0);
    p.sep_grey = size_from_exponent(k, g / 2 + 2 * d0);
    p.sep_white = size_from_exponent(k, g / 6);
    p.sep_nonres = p.nonres_nbhd;
    p.sep_simple = size_from_exponent(k, g);
    // keep every region scale at least k^δ/3, the ordering the construction relies on
    for (double* v : {&p.simple_nbhd, &p.black_nbhd, &p.grey_nbhd, &p.white_nbhd, &p.nonres_merge, &p.sep_black,
                      &p.sep_grey, &p.sep_white, &p.sep_simple})
        *v = std::max(*v, p.nonres_nbhd);
    return p;
}

double RegionParams::separation(Color c) const {
    switch (c) {
        case Color::Black: return sep_black;
        case Color::Grey: return sep_grey;
        case Color::White: return sep_white;
        case Color::Nonres: return sep_nonres;
        case Color::Simple: return sep_simple;
        default: return 1.0;
    }
}

namespace {

std::vector<LatticeIndex> points_of(const RegionColoring& c, Color col) {
    std::vector<LatticeIndex> out;
    for (const auto& [m, cc] : c.assignment)
        if (cc == col) out.push_back(m);
    return out;
}

int lightness(Color c) {
    switch (c) {
        case Color::White: return 0;
        case Color::Grey: return 1;
        case Color::Black: return 2;
        case Color::Simple: return 3;
        default: return 9;
    }
}

}  // namespace

std::size_t adjust_boundaries(RegionColoring& col, const IndexSet& m2_level) {
    (void)m2_level;
    const RegionParams& p = col.params;
    std::size_t changed = 0;
    auto recolor = [&](const std::vector<LatticeIndex>& pts, Color to) {
        for (const auto& m : pts) {
            auto& c = col.assignment[m];
            if (c != to) {
                c = to;
                ++changed;
            }
        }
    };
    // Absorb each component of `from` (chain distance sep) lying within `dist` of a target color;
    // the lightest target wins.
    auto absorb = [&](Color from, double sep, double dist, const std::vector<Color>& targets) {
        const auto pts = points_of(col, from);
        if (pts.empty()) return;
        std::vector<std::pair<Color, PointGrid>> grids;
        for (Color t : targets) {
            auto tp = points_of(col, t);
            grids.emplace_back(t, PointGrid(dist, tp.begin(), tp.end()));
        }
        std::vector<std::pair<std::vector<LatticeIndex>, Color>> moves;
        for (auto& comp : chain_components(pts, sep, false)) {
            std::optional<Color> best;
            for (auto& [t, grid] : grids) {
                const bool hit = std::any_of(comp.begin(), comp.end(), [&](const LatticeIndex& x) { return grid.any_near(x, dist); });
                if (hit && (!best || lightness(t) < lightness(*best))) best = t;
            }
            if (best) moves.emplace_back(std::move(comp), *best);
        }
        for (auto& [comp, t] : moves) recolor(comp, t);
    };
    absorb(Color::Nonres, p.sep_nonres, p.nonres_merge, {Color::White, Color::Grey, Color::Black, Color::Simple});
    absorb(Color::White, p.sep_white, p.sep_white, {Color::Grey, Color::Black});
    absorb(Color::Grey, p.sep_grey, p.sep_grey, {Color::Black});
    // the core gives up its points near colored regions; they join the free complement
    const auto core = points_of(col, Color::Core);
    if (!core.empty()) {
        std::vector<LatticeIndex> drop;
        const std::vector<std::pair<Color, double>> reach = {{Color::White, p.white_nbhd}, {Color::Grey, p.grey_nbhd},
                                                            {Color::Black, p.black_nbhd}, {Color::Nonres, p.nonres_nbhd},
                                                            {Color::Simple, p.simple_nbhd}};
        std::vector<std::pair<double, PointGrid>> grids;
        for (const auto& [c, d] : reach) {
            auto tp = points_of(col, c);
            grids.emplace_back(d, PointGrid(d, tp.begin(), tp.end()));
        }
        for (const auto& m : core)
            for (auto& [d, grid] : grids)
                if (grid.any_near(m, d)) {
                    drop.push_back(m);
                    break;
                }
        recolor(drop, Color::Outside);
    }
    return changed;
}

void extract_components(RegionColoring& col, const IndexSet& m2_level) {
    col.components.clear();
    for (Color c : {Color::Core, Color::Simple, Color::Black, Color::Grey, Color::White, Color::Nonres}) {
        const auto pts = points_of(col, c);
        if (pts.empty()) continue;
        std::vector<std::vector<LatticeIndex>> comps;
        if (c == Color::Core) comps.push_back(pts);
        else comps = chain_components(pts, col.params.separation(c), false);
        int id = 0;
        for (auto& g : comps) {
            RegionComponent rc;
            rc.color = c;
            rc.id = ++id;
            rc.lo = rc.hi = g.front();
            for (const auto& m : g) {
                if (m2_level.count(m)) ++rc.m2_count;
                auto a = coords(m), lo = coords(rc.lo), hi = coords(rc.hi);
                for (int i = 0; i < 4; ++i) {
                    lo[i] = std::min(lo[i], a[i]);
                    hi[i] = std::max(hi[i], a[i]);
                }
                rc.lo = {{lo[0], lo[1]}, {lo[2], lo[3]}};
                rc.hi = {{hi[0], hi[1]}, {hi[2], hi[3]}};
            }
            rc.members = std::move(g);
            col.components.push_back(std::move(rc));
        }
    }
}

RegionColoring color_regions(const IndexSet& m2_level, const RegionParams& p, const RegionContext& ctx) {
    RegionColoring col;
    col.params = p;
    const auto omega = enumerate_indices(p.R2);
    HashSet in_omega(omega.begin(), omega.end());
    auto within = [&](const std::vector<LatticeIndex>& v) {
        std::vector<LatticeIndex> out;
        for (const auto& m : v)
            if (in_omega.count(m)) out.push_back(m);
        return out;
    };
    HashSet core;
    for (const auto& m : omega)
        if (norm_triple(m) <= p.R1) core.insert(m);

    std::vector<LatticeIndex> simple_pts;
    for (const auto& m : omega) {
        if (m.is_zero()) continue;
        const double pm = ctx.lat.p_norm(m);
        if (pm > 0 && pm <= p.simple_threshold) simple_pts.push_back(m);
    }
    const auto simple_region = within(neighbourhood_union(simple_pts, p.simple_nbhd));
    HashSet simple_set(simple_region.begin(), simple_region.end());

    // D = Ω(r₂) \ (Ω(r₁) ∪ Π_s)
    std::vector<LatticeIndex> D;
    for (const auto& m : omega)
        if (!core.count(m) && !simple_set.count(m)) D.push_back(m);
    std::unordered_map<Key4, std::size_t, Key4Hash> big_count, small_count;
    std::unordered_map<Key4, std::vector<LatticeIndex>, Key4Hash> big_pts;
    for (const auto& m : D) {
        big_pts[cell_of(m, p.big_box)].push_back(m);
        if (m2_level.count(m)) ++big_count[cell_of(m, p.big_box)];
    }
    auto neighbour_sum = [](const std::unordered_map<Key4, std::size_t, Key4Hash>& cnt, const Key4& c) {
        std::size_t s = 0;
        for_each_neighbor_cell(c, [&](const Key4& n) {
            auto it = cnt.find(n);
            if (it != cnt.end()) s += it->second;
        });
        return s;
    };
    std::vector<LatticeIndex> black_seed, white_big_pts;
    for (const auto& [cell, pts] : big_pts) {
        auto& dst = static_cast<double>(neighbour_sum(big_count, cell)) > p.black_count ? black_seed : white_big_pts;
        dst.insert(dst.end(), pts.begin(), pts.end());
    }
    std::sort(black_seed.begin(), black_seed.end());
    std::sort(white_big_pts.begin(), white_big_pts.end());
    auto black_region = within(neighbourhood_union(black_seed, p.black_nbhd));
    black_region.insert(black_region.end(), black_seed.begin(), black_seed.end());

    std::unordered_map<Key4, std::vector<LatticeIndex>, Key4Hash> small_pts;
    for (const auto& m : white_big_pts) {
        small_pts[cell_of(m, p.small_box)].push_back(m);
        if (m2_level.count(m)) ++small_count[cell_of(m, p.small_box)];
    }
    std::vector<LatticeIndex> grey_seed, white_seed;
    for (const auto& [cell, pts] : small_pts) {
        const bool grey = static_cast<double>(neighbour_sum(small_count, cell)) > p.grey_count;
        for (const auto& m : pts) {
            if (grey) grey_seed.push_back(m);
            else if (m2_level.count(m)) white_seed.push_back(m);
        }
    }
    std::sort(grey_seed.begin(), grey_seed.end());
    std::sort(white_seed.begin(), white_seed.end());
    auto grey_region = within(neighbourhood_union(grey_seed, p.grey_nbhd));
    grey_region.insert(grey_region.end(), grey_seed.begin(), grey_seed.end());
    auto white_region = within(neighbourhood_union(white_seed, p.white_nbhd));

    std::vector<LatticeIndex> nonres_seed;
    HashSet simple_pt_set(simple_pts.begin(), simple_pts.end());
    for (const auto& m : ctx.first_order)
        if (in_omega.count(m) && norm_triple(m) > p.R1 && !m2_level.count(m) && !simple_pt_set.count(m)) nonres_seed.push_back(m);
    auto nonres_region = within(neighbourhood_union(nonres_seed, p.nonres_nbhd));

    for (const auto& m : omega) col.assignment.emplace(m, core.count(m) ? Color::Core : Color::Outside);
    // lowest priority first; later writes win
    for (const auto& m : nonres_region) col.assignment[m] = Color::Nonres;
    for (const auto& m : white_region) col.assignment[m] = Color::White;
    for (const auto& m : grey_region) col.assignment[m] = Color::Grey;
    for (const auto& m : black_region) col.assignment[m] = Color::Black;
    for (const auto& m : simple_region) col.assignment[m] = Color::Simple;

    while (adjust_boundaries(col, m2_level) > 0) ++col.merge_passes;
    extract_components(col, m2_level);

    PointGrid sgrid(p.R1, simple_pts.begin(), simple_pts.end());
    for (const auto& m : simple_pts)
        sgrid.near(m, p.R1, false, [&](const LatticeIndex& y) {
            if (y != m) col.simple_isolated = false;
        });
    col.simple_to_m2 = std::numeric_limits<double>::infinity();
    for (const auto& a : simple_region)
        for (const auto& b : m2_level) col.simple_to_m2 = std::min(col.simple_to_m2, norm_triple(a - b));
    return col;
}

BlockPartition blocks_from(const RegionColoring& coloring, double boundary_width) {
    BlockPartition part;
    for (const auto& c : coloring.components)
        part.blocks.emplace_back(c.members, color_name(c.color) + ":" + std::to_string(c.id));
    part.boundary_width = boundary_width;
    return part;
}

std::optional<double> curve_radius_at(const IsoCurve& curve, double phi) {
    for (const auto& arc : curve.arcs) {
        if (phi < arc.start || phi > arc.end) continue;
        std::vector<std::pair<double, double>> s;
        for (const auto& p : curve.points)
            if (p.phi >= arc.start && p.phi <= arc.end) s.emplace_back(p.phi, p.kappa);
        if (s.empty()) return std::nullopt;
        std::sort(s.begin(), s.end());
        if (phi <= s.front().first) return s.front().second;
        if (phi >= s.back().first) return s.back().second;
        auto hi = std::lower_bound(s.begin(), s.end(), std::make_pair(phi, -std::numeric_limits<double>::infinity()));
        auto lo = hi - 1;
        const double t = (phi - lo->first) / (hi->first - lo->first);
        return lo->second + t * (hi->second - lo->second);
    }
    return std::nullopt;
}

namespace {

std::vector<LatticeIndex> count_domain(double radius_triple) {
    std::vector<LatticeIndex> out;
    for (const auto& m : enumerate_indices(std::max(0.0, radius_triple)))
        if (m.is_zero() || norm_triple(m) < radius_triple) out.push_back(m);
    if (out.empty()) out.push_back(LatticeIndex{});
    return out;
}

void fill_lemma(CountReport& r, double radius_triple, double eps0, double k, double mu) {
    if (!(k > 1) || !(radius_triple > 1)) return;
    const double r1 = std::log(radius_triple) / std::log(k);
    r.lemma_k = k;
    r.lemma_bound = 1000.0 * std::pow(k, 2.0 * r1 / 3.0 + 1.0);
    r.lemma_hypothesis = eps0 <= std::pow(k, -5.0 * mu * r1);
    r.within_bound = static_cast<double>(r.count) < r.lemma_bound;
}

}  // namespace

CountReport count_near_curve(const IsoCurve& curve, const QuasiLattice& lat, const Vec2& center,
                             double radius_triple, double eps0, double k, double mu) {
    CountReport r;
    for (const auto& n : count_domain(radius_triple)) {
        ++r.enumerated;
        const Vec2 p = lat.p_vec(n);
        const double x = center[0] + p[0], y = center[1] + p[1];
        const double phi = reduce_angle(std::atan2(y, x));
        auto kh = curve_radius_at(curve, phi);
        if (kh && std::fabs(std::hypot(x, y) - *kh) < eps0) {
            ++r.count;
            r.witnesses.push_back(n);
        }
    }
    fill_lemma(r, radius_triple, eps0, k, mu);
    return r;
}

CountReport count_near_resolvent(const ResolventBlock& block, const Vec2& center, double radius_triple,
                                 double eps0, double k, double mu) {
    CountReport r;
    const double threshold = 1.0 / eps0;
    for (const auto& n : count_domain(radius_triple)) {
        ++r.enumerated;
        const Vec2 p = block.lat.p_vec(n);
        const CVec2 z{cplx(center[0] + p[0]), cplx(center[1] + p[1])};
        FiberMatrix H = build_fiber(block.lat, block.pot, z, block.l, block.indexset);
        if (resolvent_norm(H, cplx(block.energy), block.indexset) > threshold) {
            ++r.count;
            r.witnesses.push_back(n);
        }
    }
    fill_lemma(r, radius_triple, eps0, k, mu);
    return r;
}

ParamSchedule parameter_schedule(double k, double delta, double mu, int l, double Q, int n_levels, double r1,
                                 bool paper_regime, double gamma) {
    if (n_levels < 1) throw MultiscaleError("n_levels must be >= 1");
    ParamSchedule s;
    s.k = k;
    s.delta = delta;
    s.mu = mu;
    s.l = l;
    s.Q = Q;
    s.gamma = gamma;
    s.delta0 = gamma / 100.0;
    s.beta = 2.0 * l - 2.0 - 41.0 * mu * delta;
    s.paper_regime = paper_regime;
    const double dmax = 1.0 / (100.0 * mu);
    if (!(delta < dmax)) {
        if (paper_regime) throw MultiscaleError("paper regime requires delta < 1/(100 mu)");
        s.warnings.push_back("delta >= 1/(100 mu): desk parameters, paper inequalities are reported only");
    }
    auto check = [&](std::string name, double lhs, double rhs) { s.checks.push_back({std::move(name), lhs, rhs, lhs < rhs}); };
    auto mid = [](double lo, double hi) { return lo < hi ? std::exp(0.5 * (std::log(lo) + std::log(hi))) : lo; };

    LevelRange L1;
    L1.n = 1;
    L1.r = r1;
    L1.r_lo = 2.0;
    L1.r_hi = std::pow(k, delta / 8.0);
    L1.rp = L1.rp_lo = L1.rp_hi = 40.0 * mu * r1 + 2.0 * l;
    L1.feasible = L1.r_lo < r1 && r1 < L1.r_hi;
    s.levels.push_back(L1);

    check("delta < 1/(100 mu)", delta, dmax);
    check("2 < r1", 2.0, r1);
    check("r1 < k^(delta/8)", r1, L1.r_hi);
    check("45 r1' + 2l < k^delta", 45.0 * L1.rp + 2.0 * l, std::pow(k, delta));
    check("100 < delta0 r1", 100.0, s.delta0 * r1);
    check("Q < k^delta / 3", Q, std::pow(k, delta) / 3.0);
    check("delta0 < gamma/24", s.delta0, gamma / 24.0);
    check("gamma < 1/3", gamma, 1.0 / 3.0);
    check("0 < beta", 0.0, s.beta);

    for (int n = 2; n <= n_levels; ++n) {
        const LevelRange& prev = s.levels.back();
        LevelRange L;
        L.n = n;
        if (n == 2) {
            L.r_lo = std::pow(k, delta);
            L.r_hi = std::pow(k, gamma * 1e-7 * r1);
        } else {
            L.r_lo = std::pow(k, s.levels[static_cast<std::size_t>(n - 3)].r);
            L.r_hi = std::pow(k, gamma * 1e-7 * prev.r);
        }
        L.r = mid(L.r_lo, L.r_hi);
        if (n == 2) {
            L.rp_lo = 5.0 * mu * L.r;
            L.rp_hi = s.beta / 128.0 * std::pow(k, s.delta0 * r1 - delta - 3.0);
        } else {
            L.rp_lo = std::pow(k, 2.0 * gamma * 1e-4 * prev.r);
            L.rp_hi = std::pow(k, s.delta0 * prev.r / 2.0);
        }
        L.rp = mid(L.rp_lo, L.rp_hi);
        L.feasible = L.r_lo < L.r_hi && L.rp_lo < L.rp_hi;
        check("r_" + std::to_string(n) + " range nonempty", L.r_lo, L.r_hi);
        check("r'_" + std::to_string(n) + " range nonempty", L.rp_lo, L.rp_hi);
        s.levels.push_back(L);
    }
    return s;
}

}  // namespace quasispec
