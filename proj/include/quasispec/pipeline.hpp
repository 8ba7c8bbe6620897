#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "quasispec/isocurve.hpp"
#include "quasispec/lattice.hpp"
#include "quasispec/multiscale.hpp"
#include "quasispec/operator.hpp"
#include "quasispec/resonance.hpp"

namespace quasispec {

inline constexpr const char* kToolVersion = "1.0.0";

enum ExitCode : int { kExitOk = 0, kExitConfigInvalid = 2, kExitDegenerate = 3, kExitNumerical = 4 };

// All validation problems at once, each prefixed by its JSON path.
class ConfigError : public std::runtime_error {
  public:
    explicit ConfigError(std::vector<std::string> problems);
    const std::vector<std::string>& problems() const { return problems_; }

  private:
    std::vector<std::string> problems_;
};

struct ThresholdConfig {
    double t_inner = 0;
    double t_outer = 0;
    double inner_range = -1;  // < 0: 4k^δ
};

struct LevelConfig {
    double ball = 2;         // truncation |||m||| ≤ ball
    double half_width = 1;   // eigenvalue window
    ThresholdConfig thresholds;
    // levels n ≥ 2
    double window = 0.5;       // angular window length
    double pole_radius = 0;    // disc radius around each pole
    double r_low = 0, r_high = 0;
};

struct LatticeOptions {
    double radius = 5;
    std::vector<std::int64_t> q_bounds{13};
    std::int64_t cluster_q_bound = 13;
};

struct SpectrumOptions {
    int phi_samples = 64;
    int r_max = 12;
};

struct RegionOptions {
    double phi0 = 0;
    double r1 = 0, r2 = 0;
    double gamma = 0.2;
    std::optional<double> simple_threshold;
    double pole_radius = 0.1;
    std::optional<double> boundary_width;  // default Q
    bool m2_from_first_order = false;      // "first_order": M(φ₀, r₂) outside Ω(r₁), no pole scan
    ThresholdConfig thresholds;
};

struct ParamsOptions {
    int n_levels = 3;
    double r1 = 3;
    double Q = 1;
};

struct RunConfig {
    AlphaSpec alpha = AlphaSpec::golden();
    double mu = 2;
    int precision = 60;
    int l = 2;
    std::string potential_source;  // file path, "inline", or "zero"
    TrigPotential potential = TrigPotential::zero();
    double k = 10, delta = 0.1, tau = 1;
    bool paper_regime = false;
    std::vector<LevelConfig> levels;
    std::string output_dir = "out";
    int threads = 1;
    std::uint64_t seed = 1;
    std::optional<double> lambda;  // default k^{2l}
    int samples_per_arc = 32;
    PoleScanOptions scan;
    LatticeOptions lattice;
    SpectrumOptions spectrum;
    RegionOptions regions;
    ParamsOptions params;

    double energy() const;
    ResonanceThresholds thresholds(const ThresholdConfig& t) const;
};

// `base_dir` resolves a relative potential path. Throws ConfigError.
RunConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
RunConfig load_config(const std::filesystem::path& path, const std::vector<std::string>& overrides = {});

// "a.b.c=value" applied to a JSON document; value parsed as JSON, else taken as a string.
std::string apply_overrides(const std::string& json_text, const std::vector<std::string>& overrides);

TrigPotential parse_potential(const std::string& json_text);

struct CommandResult {
    int exit_code = kExitOk;
    bool partial = false;
    std::vector<std::string> errors;
    std::vector<std::string> files;  // emitted, relative to the output directory
};

int exit_code_for(const std::exception& e);

CommandResult cmd_lattice(const RunConfig& config);
CommandResult cmd_resonance(const RunConfig& config);
CommandResult cmd_spectrum(const RunConfig& config);
CommandResult cmd_isocurve(const RunConfig& config, double lambda, int levels);
CommandResult cmd_regions(const RunConfig& config, double r1, double r2);
CommandResult cmd_params(const RunConfig& config);

std::string sha256_hex(const std::string& bytes);

// Whole-set angle construction used by cmd_isocurve; sets[n-1] is level n.
struct LevelRun {
    std::vector<AngleSetLevel> sets;
    std::vector<IsoCurve> curves;
    std::vector<CurveDiff> diffs;  // diffs[n-2]: D_n − D_{n−1} on level-n samples
    std::vector<std::string> errors;
    int exit_code = kExitOk;
    std::map<std::string, double> seconds;  // per phase
};

IsoContext iso_context(const RunConfig& config, int levels);
LevelRun build_levels(const RunConfig& config, double lambda, int levels);

}  // namespace quasispec
