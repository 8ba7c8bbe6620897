#include "quasispec/pipeline.hpp"

#include "json.hpp"
#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <regex>
#include <set>
#include <sstream>

#include "quasispec/parallel.hpp"

namespace quasispec {

namespace fs = std::filesystem;
using json = nlohmann::json;

ConfigError::ConfigError(std::vector<std::string> problems)
    : std::runtime_error([&] {
          std::string s = "config-invalid:";
          for (const auto& p : problems) s += "\n  " + p;
          return s;
      }()),
      problems_(std::move(problems)) {}

double RunConfig::energy() const { return lambda ? *lambda : std::pow(k, 2 * l); }

ResonanceThresholds RunConfig::thresholds(const ThresholdConfig& t) const {
    ResonanceThresholds th;
    th.mode = paper_regime ? ThresholdMode::Paper : ThresholdMode::Desk;
    th.k = k;
    th.mu = mu;
    th.delta = delta;
    th.t_inner = t.t_inner;
    th.t_outer = t.t_outer;
    th.inner_range = t.inner_range;
    return th;
}

namespace {

// ---------------------------------------------------------------- config reading

class Reader {
  public:
    explicit Reader(std::vector<std::string>& errs) : errs_(errs) {}

    void error(const std::string& path, const std::string& msg) { errs_.push_back(path + ": " + msg); }

    bool object(const json& j, const std::string& path) {
        if (j.is_object()) return true;
        error(path, "must be an object");
        return false;
    }

    void keys(const json& j, const std::string& path, const std::set<std::string>& allowed) {
        for (auto it = j.begin(); it != j.end(); ++it)
            if (!allowed.count(it.key())) error(path + "/" + it.key(), "unknown key");
    }

    double number(const json& j, const std::string& path, const std::string& key, double def,
                  const std::function<bool(double)>& ok = {}, const std::string& rule = {}) {
        if (!j.contains(key)) return def;
        const json& v = j.at(key);
        if (!v.is_number()) {
            error(path + "/" + key, "must be a number");
            return def;
        }
        const double x = v.get<double>();
        if (!std::isfinite(x) || (ok && !ok(x))) {
            error(path + "/" + key, rule.empty() ? "out of range" : rule);
            return def;
        }
        return x;
    }

    std::int64_t integer(const json& j, const std::string& path, const std::string& key, std::int64_t def,
                         const std::function<bool(std::int64_t)>& ok = {}, const std::string& rule = {}) {
        if (!j.contains(key)) return def;
        const json& v = j.at(key);
        if (!v.is_number_integer()) {
            error(path + "/" + key, "must be an integer");
            return def;
        }
        const auto x = v.get<std::int64_t>();
        if (ok && !ok(x)) {
            error(path + "/" + key, rule.empty() ? "out of range" : rule);
            return def;
        }
        return x;
    }

    std::string string(const json& j, const std::string& path, const std::string& key, const std::string& def) {
        if (!j.contains(key)) return def;
        if (!j.at(key).is_string()) {
            error(path + "/" + key, "must be a string");
            return def;
        }
        return j.at(key).get<std::string>();
    }

  private:
    std::vector<std::string>& errs_;
};

const auto positive = [](double x) { return x > 0; };
const auto nonneg = [](double x) { return x >= 0; };

std::vector<std::int64_t> int_list(Reader& rd, const json& j, const std::string& path, bool positive_only) {
    std::vector<std::int64_t> out;
    if (!j.is_array()) {
        rd.error(path, "must be an array of integers");
        return out;
    }
    for (std::size_t i = 0; i < j.size(); ++i) {
        if (!j[i].is_number_integer() || (positive_only && j[i].get<std::int64_t>() < 1)) {
            rd.error(path + "/" + std::to_string(i), positive_only ? "must be a positive integer" : "must be an integer");
            continue;
        }
        out.push_back(j[i].get<std::int64_t>());
    }
    return out;
}

AlphaSpec read_alpha(Reader& rd, const json& j) {
    const std::string path = "/alpha";
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s == "golden") return AlphaSpec::golden();
        static const std::regex dec(R"(^[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?$)");
        if (!std::regex_match(s, dec)) rd.error(path, "expected \"golden\", a decimal literal, or a continued fraction");
        return AlphaSpec::decimal(s);
    }
    if (j.is_array()) {
        auto terms = int_list(rd, j, path, false);
        for (std::size_t i = 1; i < terms.size(); ++i)
            if (terms[i] < 1) rd.error(path + "/" + std::to_string(i), "partial quotients after the first must be >= 1");
        if (terms.empty()) rd.error(path, "continued fraction must not be empty");
        return AlphaSpec::continued_fraction(terms, {});
    }
    if (j.is_object()) {
        rd.keys(j, path, {"cf", "period"});
        std::vector<std::int64_t> prefix, period;
        if (j.contains("cf")) prefix = int_list(rd, j.at("cf"), path + "/cf", false);
        else rd.error(path + "/cf", "required");
        if (j.contains("period")) period = int_list(rd, j.at("period"), path + "/period", true);
        for (std::size_t i = 1; i < prefix.size(); ++i)
            if (prefix[i] < 1) rd.error(path + "/cf/" + std::to_string(i), "partial quotients after the first must be >= 1");
        return AlphaSpec::continued_fraction(prefix, period);
    }
    rd.error(path, "expected \"golden\", a decimal literal, or a continued fraction");
    return AlphaSpec::golden();
}

ThresholdConfig read_thresholds(Reader& rd, const json& j, const std::string& path, bool required) {
    ThresholdConfig t;
    if (!rd.object(j, path)) return t;
    rd.keys(j, path, {"t_inner", "t_outer", "inner_range"});
    if (required) {
        for (const char* key : {"t_inner", "t_outer"})
            if (!j.contains(key)) rd.error(path + "/" + key, "required in desk mode");
    }
    t.t_inner = rd.number(j, path, "t_inner", 0, nonneg, "must be >= 0");
    t.t_outer = rd.number(j, path, "t_outer", 0, nonneg, "must be >= 0");
    t.inner_range = rd.number(j, path, "inner_range", -1);
    return t;
}

std::vector<PotentialTerm> read_terms(Reader& rd, const json& j, const std::string& path, double& Q) {
    std::vector<PotentialTerm> terms;
    if (!rd.object(j, path)) return terms;
    rd.keys(j, path, {"Q", "terms"});
    if (!j.contains("Q")) rd.error(path + "/Q", "required");
    Q = rd.number(j, path, "Q", 1.0, positive, "must be > 0");
    if (!j.contains("terms")) return terms;
    const json& t = j.at("terms");
    if (!t.is_array()) {
        rd.error(path + "/terms", "must be an array");
        return terms;
    }
    for (std::size_t i = 0; i < t.size(); ++i) {
        const std::string p = path + "/terms/" + std::to_string(i);
        if (!rd.object(t[i], p)) continue;
        rd.keys(t[i], p, {"q", "re", "im"});
        std::vector<std::int64_t> q;
        if (t[i].contains("q")) q = int_list(rd, t[i].at("q"), p + "/q", false);
        if (q.size() != 4) {
            rd.error(p + "/q", "must hold four integers s1x, s1y, s2x, s2y");
            continue;
        }
        PotentialTerm term;
        term.q = {{q[0], q[1]}, {q[2], q[3]}};
        term.value = cplx(rd.number(t[i], p, "re", 0.0), rd.number(t[i], p, "im", 0.0));
        if (term.q.is_zero()) rd.error(p + "/q", "V_0 must vanish");
        else if (norm_triple(term.q) > Q) rd.error(p + "/q", "|||q||| exceeds Q");
        terms.push_back(term);
    }
    return terms;
}

TrigPotential build_potential(Reader& rd, const json& j, const std::string& path) {
    double Q = 1.0;
    auto terms = read_terms(rd, j, path, Q);
    try {
        return TrigPotential(Q, terms);
    } catch (const std::exception& e) {
        rd.error(path, e.what());
        return TrigPotential::zero();
    }
}

json thresholds_json(const ThresholdConfig& t) {
    return {{"t_inner", t.t_inner}, {"t_outer", t.t_outer}, {"inner_range", t.inner_range}};
}

json potential_json(const TrigPotential& pot) {
    json terms = json::array();
    for (const auto& [q, v] : pot.coeffs())
        terms.push_back({{"q", {q.s1[0], q.s1[1], q.s2[0], q.s2[1]}}, {"re", v.real()}, {"im", v.imag()}});
    return {{"Q", pot.Q()}, {"terms", terms}};
}

// Everything that determines the outputs; parallelism and the output location are excluded.
json config_json(const RunConfig& c) {
    json levels = json::array();
    for (const auto& L : c.levels)
        levels.push_back({{"ball", L.ball},
                          {"half_width", L.half_width},
                          {"thresholds", thresholds_json(L.thresholds)},
                          {"window", L.window},
                          {"pole_radius", L.pole_radius},
                          {"r_low", L.r_low},
                          {"r_high", L.r_high}});
    json regions = {{"phi0", c.regions.phi0},
                    {"r1", c.regions.r1},
                    {"r2", c.regions.r2},
                    {"gamma", c.regions.gamma},
                    {"pole_radius", c.regions.pole_radius},
                    {"m2_source", c.regions.m2_from_first_order ? "first_order" : "detect"},
                    {"thresholds", thresholds_json(c.regions.thresholds)}};
    if (c.regions.simple_threshold) regions["simple_threshold"] = *c.regions.simple_threshold;
    if (c.regions.boundary_width) regions["boundary_width"] = *c.regions.boundary_width;
    return {{"alpha", c.alpha.describe()},
            {"mu", c.mu},
            {"precision", c.precision},
            {"l", c.l},
            {"potential", potential_json(c.potential)},
            {"k", c.k},
            {"delta", c.delta},
            {"tau", c.tau},
            {"mode", c.paper_regime ? "paper" : "desk"},
            {"levels", levels},
            {"seed", c.seed},
            {"lambda", c.energy()},
            {"samples_per_arc", c.samples_per_arc},
            {"scan", {{"initial_points", c.scan.initial_points}, {"max_doublings", c.scan.max_doublings}}},
            {"lattice", {{"radius", c.lattice.radius}, {"q_bounds", c.lattice.q_bounds}, {"cluster_q_bound", c.lattice.cluster_q_bound}}},
            {"spectrum", {{"phi_samples", c.spectrum.phi_samples}, {"r_max", c.spectrum.r_max}}},
            {"regions", regions},
            {"params", {{"n_levels", c.params.n_levels}, {"r1", c.params.r1}, {"Q", c.params.Q}}}};
}

// ---------------------------------------------------------------- output

std::string num(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string index_cols(const LatticeIndex& m) {
    return std::to_string(m.s1[0]) + "," + std::to_string(m.s1[1]) + "," + std::to_string(m.s2[0]) + "," +
           std::to_string(m.s2[1]);
}

json index_json(const LatticeIndex& m) { return {m.s1[0], m.s1[1], m.s2[0], m.s2[1]}; }

class Emitter {
  public:
    Emitter(const RunConfig& config, std::string command) : config_(config), dir_(config.output_dir), command_(std::move(command)) {
        fs::create_directories(dir_);
        start_ = std::chrono::steady_clock::now();
    }

    void write(const std::string& name, const std::string& content) {
        std::ofstream f(dir_ / name, std::ios::binary | std::ios::trunc);
        f << content;
        f.close();
        if (!f) throw std::runtime_error("cannot write " + (dir_ / name).string());
        files_.push_back({{"name", name}, {"bytes", content.size()}, {"sha256", sha256_hex(content)}});
        result_.files.push_back(name);
    }

    template <class Fn>
    auto timed(const std::string& phase, Fn&& fn) {
        const auto t0 = std::chrono::steady_clock::now();
        struct Stop {
            Emitter* e;
            std::string phase;
            std::chrono::steady_clock::time_point t0;
            ~Stop() { e->timings_[phase] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
        } stop{this, phase, t0};
        return fn();
    }

    void record_time(const std::string& phase, double seconds) { timings_[phase] = seconds; }

    void fail(const std::exception& e) { fail(e.what(), exit_code_for(e)); }
    void fail(const std::string& message, int code) {
        result_.errors.push_back(message);
        result_.partial = true;
        if (result_.exit_code == kExitOk) result_.exit_code = code;
    }

    json& results() { return results_; }

    CommandResult finish() {
        json manifest = {{"tool", "quasispec"},
                         {"version", kToolVersion},
                         {"command", command_},
                         {"config", config_json(config_)},
                         {"files", files_},
                         {"partial", result_.partial},
                         {"errors", result_.errors},
                         {"exit_code", result_.exit_code},
                         {"results", results_},
                         {"timings_file", "timings.json"}};
        json timings = {{"command", command_},
                        {"threads", config_.threads},
                        {"phases", timings_},
                        {"total_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count()}};
        auto dump = [&](const std::string& name, const json& j) {
            std::ofstream f(dir_ / name, std::ios::binary | std::ios::trunc);
            f << j.dump(2) << "\n";
        };
        dump("timings.json", timings);
        dump("manifest.json", manifest);
        result_.files.push_back("timings.json");
        result_.files.push_back("manifest.json");
        return result_;
    }

  private:
    const RunConfig& config_;
    fs::path dir_;
    std::string command_;
    json files_ = json::array();
    json results_ = json::object();
    std::map<std::string, double> timings_;
    std::chrono::steady_clock::time_point start_;
    CommandResult result_;
};

// Runs a command body; any escaping exception is recorded and the manifest still written.
template <class Fn>
CommandResult run_command(const RunConfig& config, const std::string& name, Fn&& body) {
    std::optional<Emitter> em;
    try {
        em.emplace(config, name);
    } catch (const std::exception& e) {
        CommandResult r;
        r.exit_code = kExitNumerical;
        r.errors.push_back(e.what());
        return r;
    }
    try {
        body(*em);
    } catch (const std::exception& e) {
        em->fail(e);
    }
    return em->finish();
}

std::string arcs_csv(const std::vector<AngleSetLevel>& sets) {
    std::ostringstream os;
    os << "level,arc_start,arc_end\n";
    for (const auto& s : sets)
        for (const auto& a : s.real_arcs) os << s.level << "," << num(a.start) << "," << num(a.end) << "\n";
    return os.str();
}

std::string discs_json(const std::vector<AngleSetLevel>& sets) {
    json out = json::array();
    for (const auto& s : sets)
        for (const auto& d : s.discs) {
            if (d.level != s.level) continue;  // each disc once, at the level that introduced it
            out.push_back({{"level", d.level},
                           {"center_re", d.center.real()},
                           {"center_im", d.center.imag()},
                           {"radius", d.radius},
                           {"source", d.source}});
        }
    return out.dump(2) + "\n";
}

std::string curve_csv(const IsoCurve& c) {
    std::ostringstream os;
    os << "phi,kappa,closure_residual,dkappa_dphi\n";
    for (const auto& p : c.points)
        os << num(p.phi) << "," << num(p.kappa) << "," << num(p.closure_residual) << ","
           << (p.dkappa_dphi ? num(*p.dkappa_dphi) : "") << "\n";
    return os.str();
}

std::string csv_field(const std::string& s) {
    std::string out = "\"";
    for (char ch : s) {
        if (ch == '"') out += '"';
        out += ch == '\n' ? ' ' : ch;
    }
    return out + "\"";
}

std::string holes_csv(const IsoCurve& c) {
    std::ostringstream os;
    os << "phi,reason\n";
    for (const auto& f : c.failures) os << num(f.phi) << "," << csv_field(f.reason) << "\n";
    return os.str();
}

std::string diff_csv(const CurveDiff& d) {
    std::ostringstream os;
    os << "phi,h,dh_dphi\n";
    for (const auto& r : d.rows) os << num(r.phi) << "," << num(r.h) << "," << (r.dh_dphi ? num(*r.dh_dphi) : "") << "\n";
    return os.str();
}

struct LevelFailure : std::runtime_error {
    int code;
    LevelFailure(const std::string& m, int c) : std::runtime_error(m), code(c) {}
};

AngleSetLevel next_level(const RunConfig& c, const IsoContext& ctx, double lambda, int n) {
    const LevelConfig& L = c.levels[static_cast<std::size_t>(n - 1)];
    const AngleSetLevel& prev = ctx.angle_sets[static_cast<std::size_t>(n - 2)];
    struct Window {
        double center, half;
    };
    std::vector<Window> windows;
    for (const auto& a : prev.real_arcs) {
        const int pieces = std::max(1, static_cast<int>(std::ceil(a.length() / L.window)));
        const double w = a.length() / pieces;
        for (int i = 0; i < pieces; ++i) windows.push_back({a.start + (i + 0.5) * w, 0.5 * w});
    }
    std::vector<std::vector<WindowBlock>> blocks(windows.size());
    std::vector<std::string> errors(windows.size());
    std::vector<int> codes(windows.size(), kExitOk);
    const ResonanceThresholds th = c.thresholds(L.thresholds);
    parallel_for(windows.size(), ctx.threads, [&](std::size_t j) {
        const Window& w = windows[j];
        try {
            const double kap = kappa_at(ctx, n - 1, lambda, w.center).kappa;
            M2Context mc{ctx.lat, ctx.pot, c.l, kap, lambda, c.delta, th, prev, c.scan, 1};
            const auto det = detect_M2_level(w.center, c.k, L.r_low, L.r_high, 0.0, mc);
            const std::string wid = "L" + std::to_string(n) + "w" + std::to_string(j + 1);
            for (const auto& comp : det.components)
                blocks[j].push_back({fiber_family(ctx.lat, ctx.pot, c.l, kap, comp, wid + "/" + comp.label()),
                                     make_disc(cplx(w.center, 0.0), w.half, wid, n)});
        } catch (const std::exception& e) {
            std::ostringstream os;
            os << "window " << j + 1 << " (phi0=" << w.center << "): " << e.what();
            errors[j] = os.str();
            codes[j] = exit_code_for(e);
        }
    });
    std::string message;
    int code = kExitOk, failed = 0;
    for (std::size_t j = 0; j < windows.size(); ++j)
        if (!errors[j].empty()) {
            if (!failed) code = codes[j];
            message += (failed++ ? "; " : "") + errors[j];
        }
    if (failed) throw LevelFailure("level " + std::to_string(n) + ": " + std::to_string(failed) + " window(s) failed: " + message, code);
    std::vector<WindowBlock> all;
    for (auto& b : blocks) all.insert(all.end(), b.begin(), b.end());
    NextLevelOptions opt;
    opt.scan = c.scan;
    opt.threads = ctx.threads;
    return resonant_set_next(prev, all, lambda, L.pole_radius, opt);
}

json block_report_json(const BlockReport& r) {
    json leaks = json::array();
    for (const auto& l : r.leaks)
        leaks.push_back({{"kind", l.kind},
                         {"block_a", l.block_a},
                         {"block_b", l.block_b},
                         {"row", index_json(l.row)},
                         {"col", index_json(l.col)},
                         {"value_re", l.value.real()},
                         {"value_im", l.value.imag()}});
    return {{"ok", r.ok},
            {"blocks", r.blocks},
            {"indices", r.indices},
            {"entries_checked", r.entries_checked},
            {"dense_checked", r.dense_checked},
            {"leak_count", r.leak_count},
            {"leaks", leaks}};
}

}  // namespace

// ---------------------------------------------------------------- public

std::string sha256_hex(const std::string& bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (!EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr)) throw std::runtime_error("sha256 failed");
    static const char* hex = "0123456789abcdef";
    std::string out;
    for (unsigned int i = 0; i < len; ++i) {
        out += hex[md[i] >> 4];
        out += hex[md[i] & 15];
    }
    return out;
}

TrigPotential parse_potential(const std::string& json_text) {
    std::vector<std::string> errs;
    Reader rd(errs);
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("/: ") + e.what()});
    }
    auto pot = build_potential(rd, j, "");
    if (!errs.empty()) throw ConfigError(errs);
    return pot;
}

std::string apply_overrides(const std::string& json_text, const std::vector<std::string>& overrides) {
    json j;
    try {
        j = json_text.empty() ? json::object() : json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("/: ") + e.what()});
    }
    std::vector<std::string> errs;
    for (const auto& o : overrides) {
        const auto eq = o.find('=');
        if (eq == std::string::npos || eq == 0) {
            errs.push_back("override '" + o + "': expected key=value");
            continue;
        }
        std::string pointer;
        std::stringstream keys(o.substr(0, eq));
        for (std::string part; std::getline(keys, part, '.');) pointer += "/" + part;
        const std::string value = o.substr(eq + 1);
        json v;
        try {
            v = json::parse(value);
        } catch (const json::parse_error&) {
            v = value;
        }
        try {
            j[json::json_pointer(pointer)] = v;
        } catch (const json::exception& e) {
            errs.push_back(pointer + ": " + e.what());
        }
    }
    if (!errs.empty()) throw ConfigError(errs);
    return j.dump();
}

RunConfig parse_config(const std::string& json_text, const fs::path& base_dir) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw ConfigError({std::string("/: ") + e.what()});
    }
    std::vector<std::string> errs;
    Reader rd(errs);
    RunConfig c;
    if (!rd.object(j, "")) throw ConfigError(errs);
    rd.keys(j, "", {"alpha", "mu", "precision", "l", "potential", "k", "delta", "tau", "mode", "levels", "output_dir",
                    "threads", "seed", "lambda", "samples_per_arc", "scan", "lattice", "spectrum", "regions", "params"});

    const std::string mode = rd.string(j, "", "mode", "desk");
    if (mode != "desk" && mode != "paper") rd.error("/mode", "must be \"desk\" or \"paper\"");
    c.paper_regime = mode == "paper";
    if (j.contains("alpha")) c.alpha = read_alpha(rd, j.at("alpha"));
    if (c.paper_regime && c.alpha.is_rational()) rd.error("/alpha", "rational alpha is not allowed in paper-regime mode");
    c.mu = rd.number(j, "", "mu", 2.0, [](double x) { return x >= 2; }, "must be >= 2");
    c.precision = static_cast<int>(rd.integer(j, "", "precision", 60, [](std::int64_t x) { return x >= 20 && x <= 10000; }, "must be in [20, 10000]"));
    c.l = static_cast<int>(rd.integer(j, "", "l", 2, [](std::int64_t x) { return x >= 1 && x <= 8; }, "must be in [1, 8]"));
    c.k = rd.number(j, "", "k", 10.0, [](double x) { return x > 1; }, "must be > 1");
    c.delta = rd.number(j, "", "delta", 0.1, nonneg, "must be >= 0");
    c.tau = rd.number(j, "", "tau", 1.0, positive, "must be > 0");
    if (c.paper_regime && !(c.delta < 1.0 / (100.0 * c.mu)))
        rd.error("/delta", "paper-regime mode requires delta < 1/(100 mu)");
    c.output_dir = rd.string(j, "", "output_dir", "out");
    if (c.output_dir.empty()) rd.error("/output_dir", "must not be empty");
    c.threads = static_cast<int>(rd.integer(j, "", "threads", default_threads(), [](std::int64_t x) { return x >= 1 && x <= 1024; }, "must be in [1, 1024]"));
    c.seed = static_cast<std::uint64_t>(rd.integer(j, "", "seed", 1, [](std::int64_t x) { return x >= 0; }, "must be >= 0"));
    if (j.contains("lambda")) c.lambda = rd.number(j, "", "lambda", 1.0, positive, "must be > 0");
    c.samples_per_arc = static_cast<int>(rd.integer(j, "", "samples_per_arc", 32, [](std::int64_t x) { return x >= 1; }, "must be >= 1"));

    if (j.contains("potential")) {
        const json& p = j.at("potential");
        if (p.is_string()) {
            fs::path path = p.get<std::string>();
            if (path.is_relative() && !base_dir.empty()) path = base_dir / path;
            c.potential_source = p.get<std::string>();
            std::ifstream f(path);
            if (!f) {
                rd.error("/potential", "cannot read " + path.string());
            } else {
                std::stringstream ss;
                ss << f.rdbuf();
                try {
                    c.potential = build_potential(rd, json::parse(ss.str()), "/potential(" + c.potential_source + ")");
                } catch (const json::parse_error& e) {
                    rd.error("/potential", e.what());
                }
            }
        } else {
            c.potential_source = "inline";
            c.potential = build_potential(rd, p, "/potential");
        }
    } else {
        c.potential_source = "zero";
    }

    if (j.contains("scan")) {
        const json& s = j.at("scan");
        if (rd.object(s, "/scan")) {
            rd.keys(s, "/scan", {"initial_points", "max_doublings"});
            c.scan.initial_points = static_cast<int>(rd.integer(s, "/scan", "initial_points", 256, [](std::int64_t x) { return x >= 8; }, "must be >= 8"));
            c.scan.max_doublings = static_cast<int>(rd.integer(s, "/scan", "max_doublings", 10, [](std::int64_t x) { return x >= 0 && x <= 20; }, "must be in [0, 20]"));
        }
    }

    const bool desk = !c.paper_regime;
    if (j.contains("levels")) {
        const json& ls = j.at("levels");
        if (!ls.is_array() || ls.empty()) rd.error("/levels", "must be a non-empty array");
        else
            for (std::size_t i = 0; i < ls.size(); ++i) {
                const std::string p = "/levels/" + std::to_string(i);
                LevelConfig L;
                if (rd.object(ls[i], p)) {
                    rd.keys(ls[i], p, {"ball", "half_width", "thresholds", "window", "pole_radius", "r_low", "r_high"});
                    L.ball = rd.number(ls[i], p, "ball", L.ball, nonneg, "must be >= 0");
                    L.half_width = rd.number(ls[i], p, "half_width", L.half_width, positive, "must be > 0");
                    if (ls[i].contains("thresholds")) L.thresholds = read_thresholds(rd, ls[i].at("thresholds"), p + "/thresholds", desk);
                    else if (desk) rd.error(p + "/thresholds", "required in desk mode");
                    if (i > 0) {
                        L.window = rd.number(ls[i], p, "window", L.window, positive, "must be > 0");
                        for (const char* key : {"pole_radius", "r_low", "r_high"})
                            if (!ls[i].contains(key)) rd.error(p + "/" + key, "required for levels >= 2");
                        L.pole_radius = rd.number(ls[i], p, "pole_radius", 0.0, positive, "must be > 0");
                        L.r_low = rd.number(ls[i], p, "r_low", 0.0, nonneg, "must be >= 0");
                        L.r_high = rd.number(ls[i], p, "r_high", 0.0, nonneg, "must be >= 0");
                        if (L.r_high <= L.r_low) rd.error(p + "/r_high", "must exceed r_low");
                    }
                }
                c.levels.push_back(L);
            }
    } else if (desk) {
        rd.error("/levels", "required in desk mode");
    } else {
        c.levels.push_back(LevelConfig{});
    }

    if (j.contains("lattice") && rd.object(j.at("lattice"), "/lattice")) {
        const json& s = j.at("lattice");
        rd.keys(s, "/lattice", {"radius", "q_bounds", "cluster_q_bound"});
        c.lattice.radius = rd.number(s, "/lattice", "radius", c.lattice.radius, nonneg, "must be >= 0");
        if (s.contains("q_bounds")) c.lattice.q_bounds = int_list(rd, s.at("q_bounds"), "/lattice/q_bounds", true);
        c.lattice.cluster_q_bound = rd.integer(s, "/lattice", "cluster_q_bound", 13, [](std::int64_t x) { return x >= 1; }, "must be >= 1");
    }
    if (j.contains("spectrum") && rd.object(j.at("spectrum"), "/spectrum")) {
        const json& s = j.at("spectrum");
        rd.keys(s, "/spectrum", {"phi_samples", "r_max"});
        c.spectrum.phi_samples = static_cast<int>(rd.integer(s, "/spectrum", "phi_samples", 64, [](std::int64_t x) { return x >= 1; }, "must be >= 1"));
        c.spectrum.r_max = static_cast<int>(rd.integer(s, "/spectrum", "r_max", 12, [](std::int64_t x) { return x >= 2 && x <= 64; }, "must be in [2, 64]"));
    }
    if (j.contains("regions") && rd.object(j.at("regions"), "/regions")) {
        const json& s = j.at("regions");
        rd.keys(s, "/regions", {"phi0", "r1", "r2", "gamma", "simple_threshold", "pole_radius", "boundary_width", "thresholds", "m2_source"});
        const std::string src = rd.string(s, "/regions", "m2_source", "detect");
        if (src != "detect" && src != "first_order") rd.error("/regions/m2_source", "must be \"detect\" or \"first_order\"");
        c.regions.m2_from_first_order = src == "first_order";
        c.regions.phi0 = rd.number(s, "/regions", "phi0", 0.0);
        c.regions.r1 = rd.number(s, "/regions", "r1", 0.0, positive, "must be > 0");
        c.regions.r2 = rd.number(s, "/regions", "r2", 0.0, positive, "must be > 0");
        c.regions.gamma = rd.number(s, "/regions", "gamma", 0.2, [](double x) { return x > 0 && x < 1; }, "must be in (0, 1)");
        if (s.contains("simple_threshold")) c.regions.simple_threshold = rd.number(s, "/regions", "simple_threshold", 0.0, nonneg, "must be >= 0");
        c.regions.pole_radius = rd.number(s, "/regions", "pole_radius", 0.1, positive, "must be > 0");
        if (s.contains("boundary_width")) c.regions.boundary_width = rd.number(s, "/regions", "boundary_width", 0.0, positive, "must be > 0");
        if (s.contains("thresholds")) c.regions.thresholds = read_thresholds(rd, s.at("thresholds"), "/regions/thresholds", desk);
        else if (desk) rd.error("/regions/thresholds", "required in desk mode");
    }
    if (j.contains("params") && rd.object(j.at("params"), "/params")) {
        const json& s = j.at("params");
        rd.keys(s, "/params", {"n_levels", "r1", "Q"});
        c.params.n_levels = static_cast<int>(rd.integer(s, "/params", "n_levels", 3, [](std::int64_t x) { return x >= 1 && x <= 64; }, "must be in [1, 64]"));
        c.params.r1 = rd.number(s, "/params", "r1", 3.0, positive, "must be > 0");
        c.params.Q = rd.number(s, "/params", "Q", 1.0, positive, "must be > 0");
    }
    if (!errs.empty()) throw ConfigError(errs);
    return c;
}

RunConfig load_config(const fs::path& path, const std::vector<std::string>& overrides) {
    std::ifstream f(path);
    if (!f) throw ConfigError({"/: cannot read config file " + path.string()});
    std::stringstream ss;
    ss << f.rdbuf();
    return parse_config(apply_overrides(ss.str(), overrides), path.parent_path());
}

int exit_code_for(const std::exception& e) {
    if (auto* lf = dynamic_cast<const LevelFailure*>(&e)) return lf->code;
    if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const LatticeError*>(&e) ||
        dynamic_cast<const OperatorError*>(&e))
        return kExitConfigInvalid;
    if (dynamic_cast<const ResonantAngle*>(&e) || dynamic_cast<const EmptyIntersection*>(&e) ||
        dynamic_cast<const Phi0Resonant*>(&e) || dynamic_cast<const ResonantCollision*>(&e) ||
        dynamic_cast<const NoneInInterval*>(&e) || dynamic_cast<const SmallDenominator*>(&e) ||
        dynamic_cast<const EigenvalueOnContour*>(&e) || dynamic_cast<const ContourMultiplicity*>(&e) ||
        dynamic_cast<const ContourThroughZero*>(&e))
        return kExitDegenerate;
    return kExitNumerical;
}

IsoContext iso_context(const RunConfig& c, int levels) {
    if (levels < 1) throw ConfigError({"/levels: at least one level is needed"});
    if (static_cast<int>(c.levels.size()) < levels)
        throw ConfigError({"/levels: " + std::to_string(levels) + " levels requested but " +
                           std::to_string(c.levels.size()) + " configured"});
    IsoContext ctx;
    ctx.lat = QuasiLattice(c.alpha, c.mu, c.precision);
    ctx.pot = c.potential;
    ctx.l = c.l;
    ctx.threads = c.threads;
    for (int n = 0; n < levels; ++n) {
        const auto& L = c.levels[static_cast<std::size_t>(n)];
        ctx.levels.push_back({IndexProjector::ball(L.ball, "level " + std::to_string(n + 1)), L.half_width});
    }
    return ctx;
}

LevelRun build_levels(const RunConfig& c, double lambda, int levels) {
    LevelRun run;
    auto clock = [&run, t0 = std::chrono::steady_clock::now()](const std::string& phase) mutable {
        const auto t1 = std::chrono::steady_clock::now();
        run.seconds[phase] = std::chrono::duration<double>(t1 - t0).count();
        t0 = t1;
    };
    IsoContext ctx = iso_context(c, levels);
    run.sets.push_back(resonance_discs_level1(ctx.lat, c.thresholds(c.levels[0].thresholds), c.tau));
    clock("angle_set_1");
    for (int n = 2; n <= levels; ++n) {
        ctx.angle_sets = run.sets;
        try {
            run.sets.push_back(next_level(c, ctx, lambda, n));
            clock("angle_set_" + std::to_string(n));
        } catch (const std::exception& e) {
            const std::string msg = e.what();
            run.errors.push_back(msg.rfind("level ", 0) == 0 ? msg : "level " + std::to_string(n) + ": " + msg);
            run.exit_code = exit_code_for(e);
            break;
        }
    }
    ctx.angle_sets = run.sets;
    const int built = static_cast<int>(run.sets.size());
    for (int n = 1; n <= built; ++n) {
        const auto& arcs = run.sets[static_cast<std::size_t>(n - 1)].real_arcs;
        run.curves.push_back(trace_at(ctx, n, lambda, arcs, c.samples_per_arc));
        clock("curve_" + std::to_string(n));
        if (n == 1) continue;
        const IsoCurve below = trace_at(ctx, n - 1, lambda, arcs, c.samples_per_arc);
        clock("diff_" + std::to_string(n));
        try {
            run.diffs.push_back(curve_diff(below, run.curves.back()));
        } catch (const EmptyIntersection& e) {
            run.errors.push_back("level " + std::to_string(n) + " curve_diff: " + e.what());
            if (run.exit_code == kExitOk) run.exit_code = kExitDegenerate;
            run.diffs.push_back({});
        }
    }
    return run;
}

CommandResult cmd_lattice(const RunConfig& c) {
    return run_command(c, "lattice", [&](Emitter& em) {
        QuasiLattice lat(c.alpha, c.mu, c.precision);
        em.timed("indices", [&] {
            std::ostringstream os;
            os << "s1x,s1y,s2x,s2y,norm_triple,p_x,p_y\n";
            const auto idx = enumerate_indices(c.lattice.radius);
            for (const auto& m : idx) {
                const Vec2 p = lat.p_vec(m);
                os << index_cols(m) << "," << num(norm_triple(m)) << "," << num(p[0]) << "," << num(p[1]) << "\n";
            }
            em.write("indices.csv", os.str());
            em.results()["index_count"] = idx.size();
        });
        em.timed("best_rational", [&] {
            std::ostringstream os;
            os << "q_bound,q,p,eps_q\n";
            for (auto qb : c.lattice.q_bounds) {
                const auto a = best_rational(lat, qb);
                os << qb << "," << a.q << "," << a.p << "," << num(a.eps_q) << "\n";
            }
            em.write("best_rational.csv", os.str());
        });
        em.timed("clusters", [&] {
            const auto approx = best_rational(lat, c.lattice.cluster_q_bound);
            const auto dec = decompose_clusters(lat, enumerate_indices(c.lattice.radius), approx);
            json clusters = json::array();
            for (const auto& [key, members] : dec.clusters)
                clusters.push_back({{"s", {key.s[0], key.s[1]}}, {"s2pp", {key.s2pp[0], key.s2pp[1]}}, {"size", members.size()}});
            json out = {{"q_bound", c.lattice.cluster_q_bound},
                        {"q", approx.q},
                        {"p", approx.p},
                        {"eps_q", approx.eps_q},
                        {"step", dec.step},
                        {"scale_K", dec.scale_K},
                        {"smallness_holds", dec.smallness_holds},
                        {"max_diameter", dec.max_diameter},
                        {"min_separation", dec.min_separation},
                        {"separation_is_lower_bound", dec.separation_is_lower_bound},
                        {"cluster_count", dec.clusters.size()},
                        {"clusters", clusters}};
            em.write("clusters.json", out.dump(2) + "\n");
        });
    });
}

CommandResult cmd_resonance(const RunConfig& c) {
    return run_command(c, "resonance", [&](Emitter& em) {
        if (c.levels.empty()) throw ConfigError({"/levels: level 1 is needed"});
        QuasiLattice lat(c.alpha, c.mu, c.precision);
        const auto set = em.timed("level1", [&] { return resonance_discs_level1(lat, c.thresholds(c.levels[0].thresholds), c.tau); });
        em.write("arcs.csv", arcs_csv({set}));
        em.write("discs.json", discs_json({set}));
        const auto rep = nonresonant_measure_report(set, c.delta, c.mu);
        em.results()["measure"] = {{"level", 1},
                                   {"measure", rep.measure},
                                   {"removed", rep.removed},
                                   {"lemma_bound", rep.lemma_bound},
                                   {"within_bound", rep.within_bound}};
        em.results()["disc_count"] = set.discs.size();
    });
}

CommandResult cmd_spectrum(const RunConfig& c) {
    return run_command(c, "spectrum", [&](Emitter& em) {
        if (c.levels.empty()) throw ConfigError({"/levels: level 1 is needed"});
        QuasiLattice lat(c.alpha, c.mu, c.precision);
        const LevelConfig& L = c.levels[0];
        const IndexProjector P = IndexProjector::ball(L.ball);
        const CMatrix W = potential_matrix(c.potential, P);
        const double center = std::pow(c.k, 2 * c.l);
        const int N = c.spectrum.phi_samples;
        struct Row {
            double phi = 0, direct = NAN, series = NAN, tail = NAN, roundoff = NAN, g2 = NAN;
            int r_last = 0;
            std::string status = "ok";
        };
        std::vector<Row> rows(static_cast<std::size_t>(N));
        em.timed("samples", [&] {
            parallel_for(rows.size(), c.threads, [&](std::size_t i) {
                Row& r = rows[i];
                r.phi = kTwoPi * (static_cast<double>(i) + 0.5) / N;
                try {
                    FiberMatrix H0 = build_free_fiber(lat, kappa_vec(c.k, r.phi), c.l, P);
                    const auto rep = series_terms(H0.entries, W, center, L.half_width, c.spectrum.r_max);
                    r.series = rep.sum;
                    r.tail = rep.tail_bound;
                    r.roundoff = rep.roundoff_bound;
                    r.g2 = rep.terms.size() > 1 ? rep.terms[1] : 0.0;
                    r.r_last = rep.r_last;
                    H0.entries += W;
                    r.direct = eigenvalue_in_interval(H0, center, L.half_width).lambda;
                    if (!rep.converged) r.status = "series-not-converged";
                } catch (const std::exception& e) {
                    r.status = e.what();
                }
            });
        });
        std::ostringstream os;
        os << "phi,lambda_direct,lambda_series,tail_bound,roundoff_bound,g2,r_last,status\n";
        std::size_t ok = 0, agree = 0;
        for (const auto& r : rows) {
            os << num(r.phi) << "," << num(r.direct) << "," << num(r.series) << "," << num(r.tail) << "," << num(r.roundoff)
               << "," << num(r.g2) << "," << r.r_last << "," << csv_field(r.status) << "\n";
            if (r.status == "ok") {
                ++ok;
                if (std::fabs(r.direct - r.series) <= r.tail + r.roundoff) ++agree;
            }
        }
        em.write("spectrum.csv", os.str());
        em.results()["samples"] = rows.size();
        em.results()["ok"] = ok;
        em.results()["series_agrees"] = agree;
    });
}

CommandResult cmd_isocurve(const RunConfig& c, double lambda, int levels) {
    return run_command(c, "isocurve", [&](Emitter& em) {
        if (!(lambda > 0)) throw ConfigError({"/lambda: must be > 0"});
        const LevelRun run = build_levels(c, lambda, levels);
        for (const auto& [phase, t] : run.seconds) em.record_time(phase, t);
        em.write("arcs.csv", arcs_csv(run.sets));
        em.write("discs.json", discs_json(run.sets));
        json per_level = json::array();
        for (std::size_t i = 0; i < run.curves.size(); ++i) {
            const int n = static_cast<int>(i) + 1;
            em.write("curve_level" + std::to_string(n) + ".csv", curve_csv(run.curves[i]));
            em.write("holes_level" + std::to_string(n) + ".csv", holes_csv(run.curves[i]));
            json entry = {{"level", n},
                          {"measure", nonresonant_measure(run.sets[i])},
                          {"arcs", run.sets[i].real_arcs.size()},
                          {"discs", run.sets[i].discs.size()},
                          {"points", run.curves[i].points.size()},
                          {"holes", run.curves[i].failures.size()}};
            if (n >= 2) {
                const CurveDiff& d = run.diffs[i - 1];
                em.write("diff_level" + std::to_string(n) + ".csv", diff_csv(d));
                entry["max_abs_h"] = d.max_abs;
                entry["mean_abs_h"] = d.mean_abs;
                em.results()["max_abs_h" + std::to_string(n)] = d.max_abs;
            }
            per_level.push_back(entry);
        }
        em.results()["lambda"] = lambda;
        em.results()["levels_requested"] = levels;
        em.results()["levels_built"] = run.sets.size();
        em.results()["levels"] = per_level;
        for (const auto& e : run.errors) em.fail(e, run.exit_code);
    });
}

CommandResult cmd_regions(const RunConfig& c, double r1, double r2) {
    return run_command(c, "regions", [&](Emitter& em) {
        if (!(r2 > r1) || !(r1 > 0)) throw ConfigError({"/regions/r2: must exceed r1 > 0"});
        const double lambda = c.energy();
        IsoContext ctx = iso_context(c, 1);
        ctx.angle_sets.push_back(resonance_discs_level1(ctx.lat, c.thresholds(c.levels[0].thresholds), c.tau));
        const double phi0 = c.regions.phi0;
        if (!ctx.angle_sets[0].contains(phi0)) {
            std::ostringstream os;
            os << "phi0-resonant: phi0=" << phi0 << " is outside the level-1 arcs";
            throw Phi0Resonant(os.str());
        }
        const double kap = kappa_at(ctx, 1, lambda, phi0).kappa;
        const ResonanceThresholds th = c.thresholds(c.regions.thresholds);
        M2Context mc{ctx.lat, ctx.pot, c.l, kap, lambda, c.delta, th, ctx.angle_sets[0], c.scan, c.threads};
        const auto det = em.timed("detect", [&] {
            return detect_M2_level(phi0, c.k, r1, r2, c.regions.m2_from_first_order ? 0.0 : c.regions.pole_radius, mc);
        });
        const IndexSet& m2 = c.regions.m2_from_first_order ? det.candidates : det.members;
        RegionContext rctx{ctx.lat, resonant_indices(ctx.lat, th, 1.0, phi0, std::pow(c.k, r2))};
        const auto params = RegionParams::derive(c.k, r1, r2, c.delta, c.regions.gamma, c.regions.simple_threshold, c.mu, c.l);
        const auto col = em.timed("color", [&] { return color_regions(m2, params, rctx); });

        std::map<LatticeIndex, int> comp_id;
        for (const auto& comp : col.components)
            for (const auto& m : comp.members) comp_id[m] = comp.id;
        std::ostringstream os;
        os << "s1x,s1y,s2x,s2y,color,component_id\n";
        for (const auto& [m, color] : col.assignment) {
            auto it = comp_id.find(m);
            os << index_cols(m) << "," << color_name(color) << "," << (it == comp_id.end() ? 0 : it->second) << "\n";
        }
        em.write("regions.csv", os.str());

        const double bw = c.regions.boundary_width ? *c.regions.boundary_width : c.potential.Q();
        const auto report = em.timed("verify", [&] {
            return verify_block_structure(blocks_from(col, bw), ctx.lat, ctx.pot, kappa_vec(kap, phi0), c.l);
        });
        json comps = json::array();
        std::map<std::string, json> counts;
        for (Color color : {Color::Core, Color::Simple, Color::Black, Color::Grey, Color::White, Color::Nonres, Color::Outside})
            counts[color_name(color)] = {{"components", 0}, {"indices", 0}};
        for (const auto& comp : col.components) {
            comps.push_back({{"color", color_name(comp.color)},
                             {"id", comp.id},
                             {"size", comp.members.size()},
                             {"m2_count", comp.m2_count},
                             {"lo", index_json(comp.lo)},
                             {"hi", index_json(comp.hi)}});
            counts[color_name(comp.color)]["components"] = counts[color_name(comp.color)]["components"].get<int>() + 1;
        }
        for (const auto& [m, color] : col.assignment)
            counts[color_name(color)]["indices"] = counts[color_name(color)]["indices"].get<std::size_t>() + 1;
        json summary = {{"phi0", phi0},
                        {"kappa", kap},
                        {"r1", r1},
                        {"r2", r2},
                        {"m2_size", m2.size()},
                        {"candidate_components", det.components.size()},
                        {"first_order_size", rctx.first_order.size()},
                        {"merge_passes", col.merge_passes},
                        {"simple_isolated", col.simple_isolated},
                        {"simple_to_m2", col.simple_to_m2},
                        {"counts", counts},
                        {"components", comps},
                        {"block_report", block_report_json(report)}};
        em.write("components.json", summary.dump(2) + "\n");
        em.results()["block_structure_ok"] = report.ok;
        require_block_structure(report);
    });
}

CommandResult cmd_params(const RunConfig& c) {
    return run_command(c, "params", [&](Emitter& em) {
        const auto s = parameter_schedule(c.k, c.delta, c.mu, c.l, c.params.Q, c.params.n_levels, c.params.r1, c.paper_regime,
                                          c.regions.gamma);
        json levels = json::array();
        for (const auto& L : s.levels)
            levels.push_back({{"n", L.n},
                              {"r", L.r},
                              {"r_lo", L.r_lo},
                              {"r_hi", L.r_hi},
                              {"rp", L.rp},
                              {"rp_lo", L.rp_lo},
                              {"rp_hi", L.rp_hi},
                              {"feasible", L.feasible}});
        json checks = json::array();
        for (const auto& q : s.checks) checks.push_back({{"name", q.name}, {"lhs", q.lhs}, {"rhs", q.rhs}, {"holds", q.holds}});
        json out = {{"k", s.k},
                    {"delta", s.delta},
                    {"mu", s.mu},
                    {"l", s.l},
                    {"Q", s.Q},
                    {"gamma", s.gamma},
                    {"delta0", s.delta0},
                    {"beta", s.beta},
                    {"paper_regime", s.paper_regime},
                    {"levels", levels},
                    {"checks", checks},
                    {"warnings", s.warnings}};
        em.write("params.json", out.dump(2) + "\n");
        em.results()["warnings"] = s.warnings;
    });
}

}  // namespace quasispec
