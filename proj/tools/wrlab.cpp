// wrlab: run, validate and merge seeded experiments.
//
//   wrlab <kind> --config FILE [--seed N] [--workers N] [--out DIR]
//   wrlab validate --config FILE
//   wrlab merge FILE... [--out DIR]
//   wrlab trace --config FILE [--seed N] [--z Z] [--out FILE]
//   wrlab dump-env --config FILE [--seed N] [--replicate K] [--cell H] [--out FILE]
//
// WRLAB_SEED and WRLAB_WORKERS override the config file; flags override both.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "wrlab/config.hpp"
#include "wrlab/experiments.hpp"

namespace {

std::optional<std::uint64_t> env_unsigned(const char* name) {
  const char* v = std::getenv(name);
  if (!v || !*v) return std::nullopt;
  return wrlab::detail::parse_unsigned(name, v);
}

wrlab::ExperimentConfig resolve(const std::string& path, std::optional<std::uint64_t> seed,
                                std::optional<std::size_t> workers, const std::string& out) {
  auto c = wrlab::load_config(path);
  if (const auto s = env_unsigned("WRLAB_SEED")) c.seed = *s;
  if (const auto w = env_unsigned("WRLAB_WORKERS")) c.schedule.workers = *w;
  if (seed) c.seed = *seed;
  if (workers) c.schedule.workers = *workers;
  if (!out.empty()) c.output = out;
  wrlab::validate_config(c);
  return c;
}

// Opens `path` for writing, or returns std::cout for an empty path.
std::ostream& open_output(const std::string& path, std::ofstream& file) {
  if (path.empty()) return std::cout;
  file.open(path, std::ios::binary);
  if (!file) throw std::runtime_error("cannot write '" + path + "'");
  return file;
}

// The environment and seed of replicate k, as run_experiment derives them.
wrlab::Seed replicate_seed(const wrlab::ExperimentConfig& c, std::uint64_t k) {
  return wrlab::derive_seed(wrlab::derive_seed(*c.seed, wrlab::config_hash(c)), k);
}

template <std::size_t D>
std::size_t export_trace(const wrlab::ExperimentConfig& c, std::optional<double> z, std::ostream& out) {
  const auto seed = replicate_seed(c, c.schedule.replicate_offset);
  const auto env = wrlab::detail::replicate_environment<D>(c, c.geometry.L.front(), seed);
  const auto params = wrlab::detail::chain_params<D>(c, z ? *z : c.schedule.z_grid.front(), env);
  return wrlab::write_wr_trace<D>(out, wrlab::make_header(c), params, c.check.boundary, c.mcmc,
                                  wrlab::derive_seed(seed, "trace"));
}

template <std::size_t D>
std::size_t export_environment(const wrlab::ExperimentConfig& c, std::uint64_t k, double cell, std::ostream& out) {
  const double L = c.geometry.L.front();
  const auto env = wrlab::detail::replicate_environment<D>(c, L, replicate_seed(c, k));
  auto header = wrlab::make_header(c);
  header["replicate"] = k;
  return wrlab::write_environment_dump<D>(out, header, *env, wrlab::Window<D>::cube(0.0, L), cell);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Widom-Rowlinson, random-cluster and percolation experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  bool quiet = false;

  std::vector<std::pair<CLI::App*, wrlab::ExperimentKind>> runs;
  for (auto k : {wrlab::ExperimentKind::PercolationScan, wrlab::ExperimentKind::WrOrderParameter,
                 wrlab::ExperimentKind::RcCheck, wrlab::ExperimentKind::DominationCheck,
                 wrlab::ExperimentKind::DlrCheck, wrlab::ExperimentKind::EnvValidate}) {
    auto* sub = app.add_subcommand(wrlab::to_string(k), "run a " + wrlab::to_string(k) + " experiment");
    sub->add_option("--config", config_path, "experiment config (INI)")->required();
    sub->add_option("--seed", seed, "master seed");
    sub->add_option("--workers", workers, "concurrent replicates");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_flag("--quiet", quiet, "no progress lines");
    runs.emplace_back(sub, k);
  }
  auto* validate = app.add_subcommand("validate", "check a config file and print its hash");
  validate->add_option("--config", config_path, "experiment config (INI)")->required();
  validate->add_option("--seed", seed, "master seed");

  std::optional<double> trace_z;
  std::string export_path;
  auto* trace = app.add_subcommand("trace", "export retained WR chain states as JSON lines");
  trace->add_option("--config", config_path, "experiment config (INI)")->required();
  trace->add_option("--seed", seed, "master seed");
  trace->add_option("--z", trace_z, "activity (default: first z of the grid)");
  trace->add_option("--out", export_path, "output file (default: stdout)");

  std::uint64_t dump_replicate = 0;
  double dump_cell = 0.5;
  auto* dump = app.add_subcommand("dump-env", "export an environment realization as JSON lines");
  dump->add_option("--config", config_path, "experiment config (INI)")->required();
  dump->add_option("--seed", seed, "master seed");
  dump->add_option("--replicate", dump_replicate, "replicate whose environment to dump");
  dump->add_option("--cell", dump_cell, "grid cell side for density snapshots");
  dump->add_option("--out", export_path, "output file (default: stdout)");

  std::vector<std::string> merge_inputs;
  auto* merge = app.add_subcommand("merge", "merge records.jsonl files of partial runs");
  merge->add_option("files", merge_inputs, "records.jsonl files")->required();
  merge->add_option("--out", out_dir, "output directory")->default_val("merged");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : wrlab::kExitInvalidConfig;
  }

  try {
    if (validate->parsed()) {
      const auto c = resolve(config_path, seed, std::nullopt, "");
      std::cout << "ok kind=" << wrlab::to_string(c.kind) << " config_hash=" << wrlab::hex64(wrlab::config_hash(c))
                << "\n";
      return wrlab::kExitPass;
    }
    if (trace->parsed() || dump->parsed()) {
      auto c = resolve(config_path, seed, std::nullopt, "");
      std::ofstream file;
      auto& out = open_output(export_path, file);
      std::size_t lines = 0;
      if (trace->parsed()) {
        if (c.kind == wrlab::ExperimentKind::PercolationScan || c.kind == wrlab::ExperimentKind::EnvValidate) {
          std::cerr << "error: trace needs a chain experiment config\n";
          return wrlab::kExitInvalidConfig;
        }
        lines = c.geometry.dimension == 1 ? export_trace<1>(c, trace_z, out) : export_trace<2>(c, trace_z, out);
      } else {
        lines = c.geometry.dimension == 1 ? export_environment<1>(c, dump_replicate, dump_cell, out)
                                          : export_environment<2>(c, dump_replicate, dump_cell, out);
      }
      if (!export_path.empty()) std::cerr << "wrote " << lines << " line(s) to " << export_path << "\n";
      return wrlab::kExitPass;
    }
    if (merge->parsed()) {
      const auto r = wrlab::merge_replicates(merge_inputs, out_dir);
      std::cout << "merged " << merge_inputs.size() << " file(s) into " << out_dir << "\n";
      return r.exit_code;
    }
    for (const auto& [sub, kind] : runs) {
      if (!sub->parsed()) continue;
      const auto c = resolve(config_path, seed, workers, out_dir);
      if (c.kind != kind) {
        std::cerr << "error: config is a " << wrlab::to_string(c.kind) << " experiment, not "
                  << wrlab::to_string(kind) << "\n";
        return wrlab::kExitInvalidConfig;
      }
      const auto r = wrlab::run_experiment(c, c.output, quiet ? nullptr : &std::cerr);
      const auto& m = r.manifest;
      std::cout << wrlab::to_string(kind) << " config_hash=" << m["config_hash"].get<std::string>()
                << " complete=" << (m["complete"].get<bool>() ? "true" : "false")
                << " pass=" << (m["pass"].is_null() ? "n/a" : (m["pass"].get<bool>() ? "true" : "false"))
                << " out=" << c.output << "\n";
      for (const auto& f : m["failures"]) std::cerr << "failure: " << f.get<std::string>() << "\n";
      return r.exit_code;
    }
  } catch (const wrlab::InvalidArgument& e) {
    std::cerr << "invalid configuration: " << e.what() << "\n";
    return wrlab::kExitInvalidConfig;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return wrlab::kExitRuntimeFailure;
  }
  return wrlab::kExitInvalidConfig;
}
