#pragma once

// Experiment configuration: INI text in, validated ExperimentConfig out, plus
// a canonical rendering whose hash identifies the experiment.
//
//   kind = percolation-scan
//   seed = 20240611
//   [environment]  model = lebesgue, z0 = 1
//   [geometry]     dimension = 2, a = 0.5, L = 16, 32, delta = 1.5, 2.5
//   [schedule]     z_grid = 0.5, 1.0   (or z_range = lo, hi, count), replicates = 100
//   [mcmc]         sweeps, burn_in, thinning, batch_count, birth, death, recolor, ...
//   [check]        alpha, max_sigmas, tau, merge_bound, probes, boundary, ...

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "wrlab/errors.hpp"
#include "wrlab/intensity.hpp"
#include "wrlab/rng.hpp"
#include "wrlab/wr_gibbs.hpp"

namespace wrlab {

inline constexpr const char* kVersion = "0.1.0";

enum class ExperimentKind { PercolationScan, WrOrderParameter, RcCheck, DominationCheck, DlrCheck, EnvValidate };

inline std::string to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::PercolationScan: return "percolation-scan";
    case ExperimentKind::WrOrderParameter: return "wr-order-parameter";
    case ExperimentKind::RcCheck: return "rc-check";
    case ExperimentKind::DominationCheck: return "domination-check";
    case ExperimentKind::DlrCheck: return "dlr-check";
    case ExperimentKind::EnvValidate: return "env-validate";
  }
  return "unknown";
}

inline std::optional<ExperimentKind> parse_kind(const std::string& s) {
  for (auto k : {ExperimentKind::PercolationScan, ExperimentKind::WrOrderParameter, ExperimentKind::RcCheck,
                 ExperimentKind::DominationCheck, ExperimentKind::DlrCheck, ExperimentKind::EnvValidate}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

inline bool is_check(ExperimentKind k) {
  return k == ExperimentKind::RcCheck || k == ExperimentKind::DominationCheck || k == ExperimentKind::DlrCheck ||
         k == ExperimentKind::EnvValidate;
}

inline std::string to_string(BoundaryCondition b) {
  switch (b) {
    case BoundaryCondition::PlusWired: return "plus-wired";
    case BoundaryCondition::MinusWired: return "minus-wired";
    case BoundaryCondition::Free: return "free";
  }
  return "unknown";
}

/// Environment by name with numeric parameters. Names: lebesgue (z0),
/// shot-noise (pp_intensity, kernel_radius, kernel_amplitude), random-set
/// (lambda1, lambda2, germ_intensity, grain_radius), voronoi (seed_intensity),
/// manhattan (line_intensity), step-field (left, right, split).
struct EnvironmentSpec {
  std::string model = "lebesgue";
  std::map<std::string, double> params;
  double guard_margin = 0.0;
};

struct GeometrySpec {
  std::size_t dimension = 2;
  double a = 0.5;
  std::vector<double> L;
  std::optional<std::pair<double, double>> delta;
};

struct ScheduleSpec {
  std::vector<double> z_grid;
  std::size_t replicates = 1;
  std::size_t replicate_offset = 0;
  std::size_t workers = 1;
};

struct CheckSpec {
  double alpha = 0.01;
  double max_sigmas = 3.0;
  std::optional<double> tau;
  std::optional<std::size_t> merge_bound;
  std::size_t probes = 100000;
  BoundaryCondition boundary = BoundaryCondition::PlusWired;
  bool both_axes = false;
  std::uint64_t max_resample_attempts = 1'000'000;
};

struct ExperimentConfig {
  ExperimentKind kind = ExperimentKind::PercolationScan;
  std::optional<Seed> seed;
  std::string output = "wrlab-out";
  EnvironmentSpec environment;
  GeometrySpec geometry;
  ScheduleSpec schedule;
  MCMCSettings mcmc;
  CheckSpec check;
};

namespace detail {

inline const std::map<std::string, std::vector<std::string>>& model_parameters() {
  static const std::map<std::string, std::vector<std::string>> m = {
      {"lebesgue", {"z0"}},
      {"shot-noise", {"pp_intensity", "kernel_radius", "kernel_amplitude"}},
      {"random-set", {"lambda1", "lambda2", "germ_intensity", "grain_radius"}},
      {"voronoi", {"seed_intensity"}},
      {"manhattan", {"line_intensity"}},
      {"step-field", {"left", "right", "split"}},
  };
  return m;
}

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(t, &used);
  } catch (const std::exception&) {
    throw InvalidArgument(key + ": not a number: '" + t + "'");
  }
  if (used != t.size() || !std::isfinite(v)) throw InvalidArgument(key + ": not a finite number: '" + t + "'");
  return v;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t.empty() || t.find_first_not_of("0123456789") != std::string::npos) {
    throw InvalidArgument(key + ": not a nonnegative integer: '" + t + "'");
  }
  try {
    return std::stoull(t);
  } catch (const std::exception&) {
    throw InvalidArgument(key + ": integer out of range: '" + t + "'");
  }
}

inline bool parse_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes") return true;
  if (t == "false" || t == "0" || t == "no") return false;
  throw InvalidArgument(key + ": not a boolean: '" + t + "'");
}

inline std::vector<double> parse_list(const std::string& key, const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(parse_double(key, item));
  if (out.empty()) throw InvalidArgument(key + ": empty list");
  return out;
}

/// Shortest text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline std::string format_list(const std::vector<double>& xs) {
  std::string s;
  for (std::size_t i = 0; i < xs.size(); ++i) s += (i ? "," : "") + format_double(xs[i]);
  return s;
}

inline BoundaryCondition parse_boundary(const std::string& text) {
  const std::string t = trim(text);
  for (auto b : {BoundaryCondition::PlusWired, BoundaryCondition::MinusWired, BoundaryCondition::Free}) {
    if (to_string(b) == t) return b;
  }
  throw InvalidArgument("check.boundary: expected plus-wired, minus-wired or free");
}

/// Reads keys from one section, rejecting anything not in `allowed`.
class SectionReader {
 public:
  SectionReader(const boost::property_tree::ptree& tree, std::string section, std::set<std::string> allowed)
      : section_(std::move(section)) {
    const auto* node = section_.empty() ? &tree : nullptr;
    if (!node) {
      const auto child = tree.get_child_optional(section_);
      if (child) node = &*child;
    }
    if (!node) return;
    static const std::set<std::string> section_names = {"environment", "geometry", "schedule", "mcmc", "check"};
    for (const auto& [key, value] : *node) {
      if (section_.empty() && section_names.count(key)) continue;
      if (!value.empty()) {
        if (section_.empty()) continue;  // nested sections are read separately
        throw InvalidArgument("section [" + section_ + "] cannot contain subsections");
      }
      if (!allowed.count(key)) throw InvalidArgument("unknown key '" + qualified(key) + "'");
      values_[key] = value.data();
    }
  }

  std::optional<std::string> get(const std::string& key) const {
    const auto it = values_.find(key);
    if (it == values_.end()) return std::nullopt;
    return it->second;
  }
  std::string qualified(const std::string& key) const { return section_.empty() ? key : section_ + "." + key; }
  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::string section_;
  std::map<std::string, std::string> values_;
};

}  // namespace detail

/// Checks cross-field requirements of the experiment kind.
inline void validate_config(const ExperimentConfig& c) {
  if (!c.seed) throw InvalidArgument("seed is mandatory (config key 'seed', --seed or WRLAB_SEED)");
  const auto& g = c.geometry;
  if (g.dimension != 1 && g.dimension != 2) throw InvalidArgument("geometry.dimension must be 1 or 2");
  detail::validate_radius(g.a);
  if (g.L.empty()) throw InvalidArgument("geometry.L is required");
  for (double L : g.L) {
    if (!(L > 4.0 * g.a)) throw InvalidArgument("geometry.L values must exceed 4a");
  }
  const auto& m = c.environment.model;
  if (!detail::model_parameters().count(m)) throw InvalidArgument("environment.model: unknown model '" + m + "'");
  for (const auto& p : detail::model_parameters().at(m)) {
    if (!c.environment.params.count(p)) throw InvalidArgument("environment." + p + " is required for " + m);
    if (p != "split" && !(c.environment.params.at(p) >= 0.0)) throw InvalidArgument("environment." + p + " must be >= 0");
  }
  if ((m == "voronoi" || m == "manhattan") && g.dimension != 2) throw InvalidArgument(m + " needs dimension 2");
  if (c.environment.guard_margin < 0.0) throw InvalidArgument("environment.guard_margin must be >= 0");

  const auto& s = c.schedule;
  if (s.z_grid.empty()) throw InvalidArgument("schedule.z_grid is required");
  for (std::size_t i = 0; i < s.z_grid.size(); ++i) {
    if (!(s.z_grid[i] >= 0.0)) throw InvalidArgument("schedule.z_grid values must be >= 0");
    if (i && !(s.z_grid[i] > s.z_grid[i - 1])) throw InvalidArgument("schedule.z_grid must be strictly increasing");
  }
  if (s.replicates == 0) throw InvalidArgument("schedule.replicates must be positive");
  if (s.workers == 0) throw InvalidArgument("schedule.workers must be positive");

  const bool chain_kind = c.kind != ExperimentKind::PercolationScan && c.kind != ExperimentKind::EnvValidate;
  if (chain_kind) {
    c.mcmc.validate();
    if (g.L.size() != 1) throw InvalidArgument("geometry.L must be a single value for " + to_string(c.kind));
    if (!g.delta) throw InvalidArgument("geometry.delta is required for " + to_string(c.kind));
  }
  if (g.delta) {
    const auto [lo, hi] = *g.delta;
    if (!(lo < hi) || lo < 0.0 || hi > g.L.front()) throw InvalidArgument("geometry.delta must satisfy 0 <= lo < hi <= L");
  }
  if (c.kind == ExperimentKind::EnvValidate && s.replicates < 2) {
    throw InvalidArgument("env-validate needs at least 2 replicates");
  }
  if (c.check.both_axes && g.dimension < 2) throw InvalidArgument("check.both_axes needs dimension 2");
  if (!(c.check.alpha > 0.0 && c.check.alpha < 1.0)) throw InvalidArgument("check.alpha must be in (0, 1)");
  if (!(c.check.max_sigmas > 0.0)) throw InvalidArgument("check.max_sigmas must be positive");
  if (c.kind == ExperimentKind::DominationCheck) {
    if (c.check.tau && !(*c.check.tau > 0.0 && *c.check.tau <= 1.0)) throw InvalidArgument("check.tau must be in (0, 1]");
    if (!c.check.merge_bound && c.check.probes < 100000) throw InvalidArgument("check.probes must be >= 100000");
  }
}

/// Parses INI text. The seed may be left unset here and supplied later.
inline ExperimentConfig parse_config_text(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  std::istringstream in(text);
  try {
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    throw InvalidArgument(std::string("config syntax: ") + e.what());
  }
  const std::set<std::string> sections = {"environment", "geometry", "schedule", "mcmc", "check"};
  for (const auto& [key, value] : tree) {
    if (!value.empty() && !sections.count(key)) throw InvalidArgument("unknown section [" + key + "]");
  }
  using detail::parse_double;
  using detail::parse_unsigned;
  ExperimentConfig c;

  const detail::SectionReader top(tree, "", {"kind", "seed", "output"});
  const auto kind = top.get("kind");
  if (!kind) throw InvalidArgument("kind is required");
  const auto k = parse_kind(detail::trim(*kind));
  if (!k) throw InvalidArgument("kind: unknown experiment kind '" + detail::trim(*kind) + "'");
  c.kind = *k;
  if (const auto v = top.get("seed")) c.seed = parse_unsigned("seed", *v);
  if (const auto v = top.get("output")) c.output = detail::trim(*v);

  std::set<std::string> env_keys = {"model", "guard_margin"};
  for (const auto& [_, ps] : detail::model_parameters()) env_keys.insert(ps.begin(), ps.end());
  const detail::SectionReader env(tree, "environment", env_keys);
  if (const auto v = env.get("model")) c.environment.model = detail::trim(*v);
  for (const auto& [key, value] : env.values()) {
    if (key == "model") continue;
    if (key == "guard_margin") {
      c.environment.guard_margin = parse_double("environment.guard_margin", value);
      continue;
    }
    const auto& own = detail::model_parameters().count(c.environment.model)
                          ? detail::model_parameters().at(c.environment.model)
                          : std::vector<std::string>{};
    if (std::find(own.begin(), own.end(), key) == own.end()) {
      throw InvalidArgument("environment." + key + " does not apply to model " + c.environment.model);
    }
    c.environment.params[key] = parse_double("environment." + key, value);
  }

  const detail::SectionReader geo(tree, "geometry", {"dimension", "a", "L", "delta"});
  if (const auto v = geo.get("dimension")) c.geometry.dimension = parse_unsigned("geometry.dimension", *v);
  if (const auto v = geo.get("a")) c.geometry.a = parse_double("geometry.a", *v);
  if (const auto v = geo.get("L")) c.geometry.L = detail::parse_list("geometry.L", *v);
  if (const auto v = geo.get("delta")) {
    const auto d = detail::parse_list("geometry.delta", *v);
    if (d.size() != 2) throw InvalidArgument("geometry.delta must be 'lo, hi'");
    c.geometry.delta = std::make_pair(d[0], d[1]);
  }

  const detail::SectionReader sch(tree, "schedule", {"z_grid", "z_range", "replicates", "replicate_offset", "workers"});
  if (sch.get("z_grid") && sch.get("z_range")) throw InvalidArgument("give either schedule.z_grid or schedule.z_range");
  if (const auto v = sch.get("z_grid")) c.schedule.z_grid = detail::parse_list("schedule.z_grid", *v);
  if (const auto v = sch.get("z_range")) {
    const auto r = detail::parse_list("schedule.z_range", *v);
    if (r.size() != 3 || r[2] < 2 || r[2] != std::floor(r[2]) || !(r[1] > r[0])) {
      throw InvalidArgument("schedule.z_range must be 'lo, hi, count' with count >= 2");
    }
    const auto n = static_cast<std::size_t>(r[2]);
    for (std::size_t i = 0; i < n; ++i) {
      // rounded to 12 digits so that 0.1, 0.2, ... stay readable in outputs
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.12g", r[0] + (r[1] - r[0]) * double(i) / double(n - 1));
      c.schedule.z_grid.push_back(std::strtod(buf, nullptr));
    }
  }
  if (const auto v = sch.get("replicates")) c.schedule.replicates = parse_unsigned("schedule.replicates", *v);
  if (const auto v = sch.get("replicate_offset")) {
    c.schedule.replicate_offset = parse_unsigned("schedule.replicate_offset", *v);
  }
  if (const auto v = sch.get("workers")) c.schedule.workers = parse_unsigned("schedule.workers", *v);

  const detail::SectionReader mc(tree, "mcmc",
                                 {"sweeps", "burn_in", "thinning", "batch_count", "birth", "death", "recolor",
                                  "birth_rate_multiplier", "strict_diagnostics"});
  auto& s = c.mcmc;
  if (const auto v = mc.get("sweeps")) s.sweeps = parse_unsigned("mcmc.sweeps", *v);
  if (const auto v = mc.get("burn_in")) s.burn_in = parse_unsigned("mcmc.burn_in", *v);
  if (const auto v = mc.get("thinning")) s.thinning = parse_unsigned("mcmc.thinning", *v);
  if (const auto v = mc.get("batch_count")) s.batch_count = parse_unsigned("mcmc.batch_count", *v);
  if (const auto v = mc.get("birth")) s.move_mix.birth = parse_double("mcmc.birth", *v);
  if (const auto v = mc.get("death")) s.move_mix.death = parse_double("mcmc.death", *v);
  if (const auto v = mc.get("recolor")) s.move_mix.recolor = parse_double("mcmc.recolor", *v);
  if (const auto v = mc.get("birth_rate_multiplier")) {
    s.birth_rate_multiplier = parse_double("mcmc.birth_rate_multiplier", *v);
  }
  if (const auto v = mc.get("strict_diagnostics")) s.strict_diagnostics = detail::parse_bool("mcmc.strict_diagnostics", *v);

  const detail::SectionReader ck(tree, "check",
                                 {"alpha", "max_sigmas", "tau", "merge_bound", "probes", "boundary", "both_axes",
                                  "max_resample_attempts"});
  auto& h = c.check;
  if (const auto v = ck.get("alpha")) h.alpha = parse_double("check.alpha", *v);
  if (const auto v = ck.get("max_sigmas")) h.max_sigmas = parse_double("check.max_sigmas", *v);
  if (const auto v = ck.get("tau")) h.tau = parse_double("check.tau", *v);
  if (const auto v = ck.get("merge_bound")) h.merge_bound = parse_unsigned("check.merge_bound", *v);
  if (const auto v = ck.get("probes")) h.probes = parse_unsigned("check.probes", *v);
  if (const auto v = ck.get("boundary")) h.boundary = detail::parse_boundary(*v);
  if (const auto v = ck.get("both_axes")) h.both_axes = detail::parse_bool("check.both_axes", *v);
  if (const auto v = ck.get("max_resample_attempts")) {
    h.max_resample_attempts = parse_unsigned("check.max_resample_attempts", *v);
  }
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read config file '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

/// Canonical INI rendering of everything that determines the results: output,
/// workers and replicate_offset are left out, the seed is included.
inline std::string canonical_config_text(const ExperimentConfig& c) {
  using detail::format_double;
  std::ostringstream o;
  o << "kind=" << to_string(c.kind) << "\n";
  o << "seed=" << (c.seed ? std::to_string(*c.seed) : std::string("unset")) << "\n";
  o << "[environment]\nmodel=" << c.environment.model << "\n";
  for (const auto& [k, v] : c.environment.params) o << k << "=" << format_double(v) << "\n";
  o << "guard_margin=" << format_double(c.environment.guard_margin) << "\n";
  o << "[geometry]\ndimension=" << c.geometry.dimension << "\na=" << format_double(c.geometry.a)
    << "\nL=" << detail::format_list(c.geometry.L) << "\n";
  if (c.geometry.delta) {
    o << "delta=" << format_double(c.geometry.delta->first) << "," << format_double(c.geometry.delta->second) << "\n";
  }
  // replicate count, offset and workers stay out: partial runs of one
  // experiment share its hash and seeds
  o << "[schedule]\nz_grid=" << detail::format_list(c.schedule.z_grid) << "\n";
  const auto& s = c.mcmc;
  o << "[mcmc]\nsweeps=" << s.sweeps << "\nburn_in=" << s.burn_in << "\nthinning=" << s.thinning
    << "\nbatch_count=" << s.batch_count << "\nbirth=" << format_double(s.move_mix.birth)
    << "\ndeath=" << format_double(s.move_mix.death) << "\nrecolor=" << format_double(s.move_mix.recolor)
    << "\nbirth_rate_multiplier=" << format_double(s.birth_rate_multiplier)
    << "\nstrict_diagnostics=" << (s.strict_diagnostics ? "true" : "false") << "\n";
  const auto& h = c.check;
  o << "[check]\nalpha=" << format_double(h.alpha) << "\nmax_sigmas=" << format_double(h.max_sigmas) << "\n";
  if (h.tau) o << "tau=" << format_double(*h.tau) << "\n";
  if (h.merge_bound) o << "merge_bound=" << *h.merge_bound << "\n";
  o << "probes=" << h.probes << "\nboundary=" << to_string(h.boundary)
    << "\nboth_axes=" << (h.both_axes ? "true" : "false") << "\nmax_resample_attempts=" << h.max_resample_attempts
    << "\n";
  return o.str();
}

/// Hash of the canonical configuration; identifies the experiment across runs
/// and partial replicate ranges.
inline std::uint64_t config_hash(const ExperimentConfig& c) { return fnv1a64(canonical_config_text(c)); }

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

/// Builds the intensity model named by the environment block.
template <std::size_t D>
IntensityModel<D> make_model(const EnvironmentSpec& e) {
  const auto p = [&](const char* k) { return e.params.at(k); };
  if (e.model == "lebesgue") return HomogeneousLebesgue{p("z0")};
  if (e.model == "shot-noise") return ShotNoise{p("pp_intensity"), p("kernel_radius"), p("kernel_amplitude")};
  if (e.model == "random-set") {
    return RandomSetIndicator{p("lambda1"), p("lambda2"), p("germ_intensity"), p("grain_radius")};
  }
  if (e.model == "voronoi") return VoronoiEdges{p("seed_intensity")};
  if (e.model == "manhattan") return ManhattanGrid{p("line_intensity")};
  if (e.model == "step-field") {
    const double left = p("left");
    const double right = p("right");
    const double split = p("split");
    DensityField<D> f;
    f.density = [=](const Point<D>& x) { return x[0] < split ? left : right; };
    f.sup_bound = std::max(left, right);
    f.name = "step-field";
    return f;
  }
  throw InvalidArgument("unknown environment model '" + e.model + "'");
}

/// E[Σ(A)]/|A|; for the step field this is the mean density over [0, L]^d.
template <std::size_t D>
double environment_mean_density(const EnvironmentSpec& e, double L) {
  if (e.model == "step-field") {
    const double split = std::clamp(e.params.at("split"), 0.0, L);
    return (e.params.at("left") * split + e.params.at("right") * (L - split)) / L;
  }
  return expected_mass_density<D>(make_model<D>(e));
}

}  // namespace wrlab
