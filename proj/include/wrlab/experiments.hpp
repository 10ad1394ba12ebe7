#pragma once

// Seeded experiment campaigns: per-replicate records, summaries recomputed
// from records alone, and merging of partial runs.
//
// Output directory layout:
//   records.jsonl   header line (config, hash, version) then one record per
//                   (replicate, part), sorted
//   summary.csv     per-kind table with a "# config_hash=" preamble
//   report.jsonl    check kinds: header line then one line per comparison
//   manifest.json   seeds, wall times, pass/fail, completeness

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "wrlab/config.hpp"
#include "wrlab/geometry.hpp"
#include "wrlab/intensity.hpp"
#include "wrlab/parallel.hpp"
#include "wrlab/percolation.hpp"
#include "wrlab/random_cluster.hpp"
#include "wrlab/stats.hpp"
#include "wrlab/wr_gibbs.hpp"

namespace wrlab {

using json = nlohmann::json;

inline constexpr const char* kRecordFormat = "wrlab-records-1";

// ---------------------------------------------------------------------------
// Estimate (de)serialization and pooling

inline json to_json(const EstimateWithError& e) {
  return json{{"value", e.value},         {"std_error", e.std_error}, {"n", e.n},
              {"method", to_string(e.method)}, {"lo", e.lo},          {"hi", e.hi},
              {"lag1", e.lag1_autocorrelation}, {"flagged", e.flagged}};
}

inline EstimateWithError estimate_from_json(const json& j) {
  EstimateWithError e;
  e.value = j.at("value").get<double>();
  e.std_error = j.at("std_error").get<double>();
  e.n = j.at("n").get<std::size_t>();
  const auto m = j.at("method").get<std::string>();
  for (auto k : {EstimateMethod::BatchMeans, EstimateMethod::ReplicateVariance, EstimateMethod::Wilson,
                 EstimateMethod::Exact}) {
    if (to_string(k) == m) e.method = k;
  }
  e.lo = j.at("lo").get<double>();
  e.hi = j.at("hi").get<double>();
  e.lag1_autocorrelation = j.at("lag1").get<double>();
  e.flagged = j.at("flagged").get<bool>();
  return e;
}

/// Pools per-replicate estimates: replicate variance of the replicate values
/// when there are at least two, otherwise the single estimate unchanged.
inline EstimateWithError pool_replicates(std::span<const EstimateWithError> parts) {
  if (parts.empty()) throw InvalidArgument("nothing to pool");
  if (parts.size() == 1) return parts.front();
  std::vector<double> values;
  bool flagged = false;
  double lag1 = 0.0;
  for (const auto& p : parts) {
    values.push_back(p.value);
    flagged = flagged || p.flagged;
    lag1 = std::max(lag1, p.lag1_autocorrelation);
  }
  auto e = summarize_replicates(values);
  e.flagged = flagged;
  e.lag1_autocorrelation = lag1;
  return e;
}

// ---------------------------------------------------------------------------
// Result sets

struct ResultSet {
  json header;
  /// Sorted by (replicate, part).
  std::vector<json> records;
};

struct Summary {
  /// file name → contents
  std::map<std::string, std::string> files;
  std::optional<bool> pass;
  json criteria = json::object();
  /// Rows of report.jsonl for check kinds, one per compared quantity.
  std::vector<json> report;
};

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  return format_double(v);
}

inline std::string csv_preamble(const json& header) {
  return "# config_hash=" + header.at("config_hash").get<std::string>() + " kind=" +
         header.at("kind").get<std::string>() + " version=" + header.at("version").get<std::string>() + "\n";
}

inline void sort_records(std::vector<json>& records) {
  std::stable_sort(records.begin(), records.end(), [](const json& a, const json& b) {
    const auto ka = std::make_pair(a.at("replicate").get<std::uint64_t>(), a.at("part").get<std::uint64_t>());
    const auto kb = std::make_pair(b.at("replicate").get<std::uint64_t>(), b.at("part").get<std::uint64_t>());
    return ka < kb;
  });
}

/// Records grouped by part index, each group in replicate order.
inline std::map<std::uint64_t, std::vector<const json*>> by_part(const std::vector<json>& records) {
  std::map<std::uint64_t, std::vector<const json*>> out;
  for (const auto& r : records) out[r.at("part").get<std::uint64_t>()].push_back(&r);
  return out;
}

inline std::size_t replicate_count(const std::vector<json>& records) {
  std::set<std::uint64_t> ids;
  for (const auto& r : records) ids.insert(r.at("replicate").get<std::uint64_t>());
  return ids.size();
}

template <std::size_t D>
Window<D> delta_window(const ExperimentConfig& c) {
  Point<D> lo;
  Point<D> hi;
  lo.fill(c.geometry.delta->first);
  hi.fill(c.geometry.delta->second);
  return Window<D>(lo, hi);
}

template <std::size_t D>
WRParams<D> chain_params(const ExperimentConfig& c, double z, const SharedEnvironment<D>& env) {
  WRParams<D> p;
  p.a = c.geometry.a;
  p.z = z;
  p.env = env;
  p.window = Window<D>::cube(0.0, c.geometry.L.front());
  return p;
}

template <std::size_t D>
SharedEnvironment<D> replicate_environment(const ExperimentConfig& c, double L, Seed seed) {
  const auto model = make_model<D>(c.environment);
  const double margin = c.environment.guard_margin > 0.0 ? c.environment.guard_margin : default_guard_margin<D>(model);
  return realize_shared<D>(model, Window<D>::cube(0.0, L), margin, derive_seed(seed, "environment"));
}

/// Merge bound and τ for a domination check, fixed by the configuration.
inline DominationConfig domination_config(const ExperimentConfig& c, Seed experiment_seed) {
  std::size_t K = 0;
  if (c.check.merge_bound) {
    K = *c.check.merge_bound;
  } else {
    K = estimate_merge_bound(c.geometry.dimension, c.geometry.a, c.check.probes,
                             derive_seed(experiment_seed, "merge-bound"))
            .value();
  }
  DominationConfig d;
  d.merge_bound = K;
  d.tau = c.check.tau ? *c.check.tau : std::ldexp(1.0, -static_cast<int>(K) - 1);
  d.validate();
  return d;
}

// ---------------------------------------------------------------------------
// One replicate per kind

template <std::size_t D>
std::vector<json> run_replicate(const ExperimentConfig& c, std::uint64_t replicate, Seed seed,
                                const std::optional<DominationConfig>& dom) {
  std::vector<json> out;
  const auto base = [&](std::uint64_t part) { return json{{"replicate", replicate}, {"part", part}, {"seed", seed}}; };
  const auto& z_grid = c.schedule.z_grid;
  switch (c.kind) {
    case ExperimentKind::PercolationScan: {
      const auto model = make_model<D>(c.environment);
      PercolationOptions opt;
      opt.both_axes = c.check.both_axes;
      opt.guard_margin = c.environment.guard_margin;
      for (std::size_t li = 0; li < c.geometry.L.size(); ++li) {
        const auto rep = percolation_replicate<D>(model, z_grid, c.geometry.a, c.geometry.L[li], derive_seed(seed, li), opt);
        auto r = base(li);
        r["L"] = c.geometry.L[li];
        r["z_max"] = rep.z_max;
        r["critical_level"] = std::isfinite(rep.critical_level) ? json(rep.critical_level) : json(nullptr);
        r["largest_fraction"] = rep.largest_fraction;
        out.push_back(std::move(r));
      }
      break;
    }
    case ExperimentKind::WrOrderParameter: {
      const auto env = replicate_environment<D>(c, c.geometry.L.front(), seed);
      const auto delta = delta_window<D>(c);
      for (std::size_t zi = 0; zi < z_grid.size(); ++zi) {
        const auto params = chain_params<D>(c, z_grid[zi], env);
        const auto e = estimate_color_imbalance<D>(params, c.check.boundary, delta, c.mcmc, 1, derive_seed(seed, zi));
        auto r = base(zi);
        r["z"] = z_grid[zi];
        r["psi"] = to_json(e);
        out.push_back(std::move(r));
      }
      break;
    }
    case ExperimentKind::RcCheck: {
      const auto env = replicate_environment<D>(c, c.geometry.L.front(), seed);
      const auto delta = delta_window<D>(c);
      for (std::size_t zi = 0; zi < z_grid.size(); ++zi) {
        const auto params = chain_params<D>(c, z_grid[zi], env);
        const auto psi = estimate_order_parameter<D>(params, delta, c.mcmc, 1, derive_seed(seed, {zi, 1}));
        const auto nh = estimate_boundary_connected<D>(params, delta, c.mcmc, 1, derive_seed(seed, {zi, 2}));
        auto r = base(zi);
        r["z"] = z_grid[zi];
        r["psi"] = to_json(psi);
        r["n_hat"] = to_json(nh);
        out.push_back(std::move(r));
      }
      break;
    }
    case ExperimentKind::DominationCheck: {
      const auto env = replicate_environment<D>(c, c.geometry.L.front(), seed);
      const auto window = Window<D>::cube(0.0, c.geometry.L.front());
      const auto stats = standard_increasing_statistics<D>(window, c.geometry.a, delta_window<D>(c));
      for (std::size_t zi = 0; zi < z_grid.size(); ++zi) {
        const auto params = chain_params<D>(c, z_grid[zi], env);
        const auto rep = domination_replicate<D>(params, *dom, stats, c.mcmc, derive_seed(seed, zi));
        auto r = base(zi);
        r["z"] = z_grid[zi];
        r["tau"] = dom->tau;
        r["merge_bound"] = dom->merge_bound;
        json names = json::array();
        json p = json::array();
        json q = json::array();
        for (std::size_t s = 0; s < stats.size(); ++s) {
          names.push_back(stats[s].name);
          p.push_back(to_json(rep.poisson[s]));
          q.push_back(to_json(rep.random_cluster[s]));
        }
        r["statistics"] = names;
        r["poisson"] = p;
        r["random_cluster"] = q;
        out.push_back(std::move(r));
      }
      break;
    }
    case ExperimentKind::DlrCheck: {
      const auto env = replicate_environment<D>(c, c.geometry.L.front(), seed);
      const auto delta = delta_window<D>(c);
      DlrOptions opt;
      opt.alpha = c.check.alpha;
      opt.max_resample_attempts = c.check.max_resample_attempts;
      for (std::size_t zi = 0; zi < z_grid.size(); ++zi) {
        const auto params = chain_params<D>(c, z_grid[zi], env);
        const auto b = dlr_batch_differences<D>(params, c.check.boundary, delta, c.mcmc, derive_seed(seed, zi), opt);
        auto r = base(zi);
        r["z"] = z_grid[zi];
        r["batch_differences"] = b.batch_differences;
        r["mean_original"] = b.mean_original;
        r["mean_resampled"] = b.mean_resampled;
        r["samples"] = b.samples;
        r["resample_attempts"] = b.resample_attempts;
        out.push_back(std::move(r));
      }
      break;
    }
    case ExperimentKind::EnvValidate: {
      const double L = c.geometry.L.front();
      const auto env = replicate_environment<D>(c, L, seed);
      const auto window = Window<D>::cube(0.0, L);
      const auto mass = total_mass_with_tolerance(*env, window);
      Rng rng(derive_seed(seed, "points"));
      json counts = json::array();
      for (double z : z_grid) counts.push_back(sample_poisson(*env, window, z, rng).size());
      auto r = base(0);
      r["mass_density"] = mass.value / window.volume();
      r["mass_tolerance"] = mass.abs_tolerance;
      r["counts"] = counts;
      out.push_back(std::move(r));
      break;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Summaries, computed from the header and records only

inline std::string estimate_columns(const EstimateWithError& e) { return fmt(e.value) + "," + fmt(e.std_error); }

inline void summarize_scan(const ExperimentConfig& c, const ResultSet& rs, Summary& s) {
  std::ostringstream o;
  o << csv_preamble(rs.header);
  o << "environment,z,L,replicates,crossing_est,crossing_lo,crossing_hi,largest_frac_est,stderr\n";
  const auto& z = c.schedule.z_grid;
  std::vector<PercolationScanRow> rows;
  for (const auto& [li, recs] : by_part(rs.records)) {
    PercolationScanRow row;
    row.environment = c.environment.model;
    row.L = c.geometry.L.at(li);
    row.z_grid = z;
    for (const auto* r : recs) {
      ReplicateOutcome rep;
      rep.z_max = r->at("z_max").get<double>();
      const auto& cl = r->at("critical_level");
      rep.critical_level = cl.is_null() ? std::numeric_limits<double>::infinity() : cl.get<double>();
      rep.largest_fraction = r->at("largest_fraction").get<std::vector<double>>();
      row.replicates.push_back(std::move(rep));
    }
    const std::size_t R = row.replicates.size();
    for (std::size_t g = 0; g < z.size(); ++g) {
      std::size_t k = 0;
      std::vector<double> frac;
      for (const auto& rep : row.replicates) {
        k += rep.crosses_at(z[g]) ? 1 : 0;
        frac.push_back(rep.largest_fraction[g]);
      }
      const auto cross = summarize_proportion(k, R);
      const auto lf = R >= 2 ? summarize_replicates(frac) : exact_estimate(frac[0]);
      row.crossing.push_back(cross);
      row.largest_fraction.push_back(lf);
      o << row.environment << "," << fmt(z[g]) << "," << fmt(row.L) << "," << R << "," << fmt(cross.value) << ","
        << fmt(cross.lo) << "," << fmt(cross.hi) << "," << fmt(lf.value) << "," << fmt(lf.std_error) << "\n";
    }
    rows.push_back(std::move(row));
  }
  s.files["summary.csv"] = o.str();

  std::ostringstream x;
  x << csv_preamble(rs.header);
  x << "environment,L_small,L_large,z_intersection\n";
  for (std::size_t i = 0; i + 1 < rows.size(); ++i) {
    const auto zc = crossing_curve_intersection(rows[i], rows[i + 1]);
    x << c.environment.model << "," << fmt(rows[i].L) << "," << fmt(rows[i + 1].L) << ","
      << (zc ? fmt(*zc) : std::string("none")) << "\n";
  }
  s.files["intersections.csv"] = x.str();
}

inline void summarize_order_parameter(const ExperimentConfig& c, const ResultSet& rs, Summary& s) {
  std::ostringstream o;
  o << csv_preamble(rs.header);
  o << "z,boundary,replicates,psi_est,stderr,lo99,hi99,flagged\n";
  for (const auto& [zi, recs] : by_part(rs.records)) {
    std::vector<EstimateWithError> parts;
    for (const auto* r : recs) parts.push_back(estimate_from_json(r->at("psi")));
    const auto e = pool_replicates(parts);
    const auto [lo, hi] = e.interval(kZ99);
    o << fmt(c.schedule.z_grid.at(zi)) << "," << to_string(c.check.boundary) << "," << recs.size() << ","
      << estimate_columns(e) << "," << fmt(lo) << "," << fmt(hi) << "," << (e.flagged ? "true" : "false") << "\n";
  }
  s.files["summary.csv"] = o.str();
}

inline void summarize_rc_check(const ExperimentConfig& c, const ResultSet& rs, Summary& s) {
  std::ostringstream o;
  o << csv_preamble(rs.header);
  o << "z,replicates,psi_est,psi_stderr,n_hat_est,n_hat_stderr,sigmas,pass\n";
  bool all = true;
  for (const auto& [zi, recs] : by_part(rs.records)) {
    std::vector<EstimateWithError> psi;
    std::vector<EstimateWithError> nh;
    for (const auto* r : recs) {
      psi.push_back(estimate_from_json(r->at("psi")));
      nh.push_back(estimate_from_json(r->at("n_hat")));
    }
    const auto a = pool_replicates(psi);
    const auto b = pool_replicates(nh);
    const double sig = discrepancy_in_sigmas(a, b);
    const bool pass = sig <= c.check.max_sigmas;
    all = all && pass;
    const double z = c.schedule.z_grid.at(zi);
    s.criteria["identity_z=" + fmt(z)] = pass;
    s.report.push_back({{"criterion", "identity_z=" + fmt(z)}, {"z", z}, {"psi", to_json(a)}, {"n_hat", to_json(b)},
                        {"sigmas", sig}, {"pass", pass}});
    o << fmt(z) << "," << recs.size() << "," << estimate_columns(a) << "," << estimate_columns(b) << "," << fmt(sig)
      << "," << (pass ? "true" : "false") << "\n";
  }
  s.pass = all;
  s.files["summary.csv"] = o.str();
}

inline void summarize_domination(const ExperimentConfig& c, const ResultSet& rs, Summary& s) {
  std::ostringstream o;
  o << csv_preamble(rs.header);
  o << "z,tau,merge_bound,statistic,replicates,poisson_est,poisson_stderr,rc_est,rc_stderr,pass\n";
  bool all = true;
  for (const auto& [zi, recs] : by_part(rs.records)) {
    const auto names = recs.front()->at("statistics").get<std::vector<std::string>>();
    const double tau = recs.front()->at("tau").get<double>();
    const auto K = recs.front()->at("merge_bound").get<std::size_t>();
    const double z = c.schedule.z_grid.at(zi);
    for (std::size_t k = 0; k < names.size(); ++k) {
      std::vector<EstimateWithError> p;
      std::vector<EstimateWithError> q;
      for (const auto* r : recs) {
        p.push_back(estimate_from_json(r->at("poisson").at(k)));
        q.push_back(estimate_from_json(r->at("random_cluster").at(k)));
      }
      const auto pe = pool_replicates(p);
      const auto qe = pool_replicates(q);
      const bool pass = pe.value <= qe.value + c.check.max_sigmas * combined_std_error(pe, qe);
      all = all && pass;
      s.criteria["domination_z=" + fmt(z) + "_" + names[k]] = pass;
      s.report.push_back({{"criterion", "domination_z=" + fmt(z) + "_" + names[k]}, {"z", z}, {"tau", tau},
                          {"merge_bound", K}, {"statistic", names[k]}, {"poisson", to_json(pe)},
                          {"random_cluster", to_json(qe)}, {"pass", pass}});
      o << fmt(z) << "," << fmt(tau) << "," << K << "," << names[k] << "," << recs.size() << ","
        << estimate_columns(pe) << "," << estimate_columns(qe) << "," << (pass ? "true" : "false") << "\n";
    }
  }
  s.pass = all;
  s.files["summary.csv"] = o.str();
}

inline DlrBatches dlr_batches_from_json(const json& r) {
  DlrBatches b;
  b.batch_differences = r.at("batch_differences").get<std::array<std::vector<double>, 3>>();
  b.mean_original = r.at("mean_original").get<std::array<double, 3>>();
  b.mean_resampled = r.at("mean_resampled").get<std::array<double, 3>>();
  b.samples = r.at("samples").get<std::size_t>();
  b.resample_attempts = r.at("resample_attempts").get<std::uint64_t>();
  return b;
}

inline void summarize_dlr(const ExperimentConfig& c, const ResultSet& rs, Summary& s) {
  std::ostringstream o;
  o << csv_preamble(rs.header);
  o << "z,statistic,replicates,mean_original,mean_resampled,t,p_value,pooled_p_bonferroni,rejected,"
       "replicate_rejections\n";
  bool all = true;
  for (const auto& [zi, recs] : by_part(rs.records)) {
    std::vector<DlrBatches> chains;
    std::size_t rejections = 0;
    for (const auto* r : recs) {
      chains.push_back(dlr_batches_from_json(*r));
      rejections += dlr_report_from_batches(std::span<const DlrBatches>(&chains.back(), 1), c.check.alpha).rejected;
    }
    const auto rep = dlr_report_from_batches(chains, c.check.alpha);
    const double z = c.schedule.z_grid.at(zi);
    all = all && !rep.rejected;
    s.criteria["dlr_z=" + fmt(z)] = !rep.rejected;
    json stats = json::array();
    for (const auto& st : rep.statistics) {
      stats.push_back({{"name", st.name}, {"mean_original", st.mean_original}, {"mean_resampled", st.mean_resampled},
                       {"t", st.t_statistic}, {"p_value", st.p_value}});
    }
    s.report.push_back({{"criterion", "dlr_z=" + fmt(z)}, {"z", z}, {"statistics", stats}, {"p_value", rep.p_value},
                        {"alpha", c.check.alpha}, {"replicate_rejections", rejections}, {"pass", !rep.rejected}});
    for (const auto& st : rep.statistics) {
      o << fmt(z) << "," << st.name << "," << recs.size() << "," << fmt(st.mean_original) << ","
        << fmt(st.mean_resampled) << "," << fmt(st.t_statistic) << "," << fmt(st.p_value) << "," << fmt(rep.p_value)
        << "," << (rep.rejected ? "true" : "false") << "," << rejections << "\n";
    }
  }
  s.pass = all;
  s.files["summary.csv"] = o.str();
}

template <std::size_t D>
void summarize_env(const ExperimentConfig& c, const ResultSet& rs, Summary& s) {
  std::ostringstream o;
  o << csv_preamble(rs.header);
  o << "quantity,z,replicates,expected,estimate,stderr,sigmas,pass\n";
  const double L = c.geometry.L.front();
  const double vol = std::pow(L, double(D));
  const double mean_density = environment_mean_density<D>(c.environment, L);
  std::vector<double> mass;
  std::vector<std::vector<double>> counts(c.schedule.z_grid.size());
  for (const auto& r : rs.records) {
    mass.push_back(r.at("mass_density").get<double>());
    const auto n = r.at("counts").get<std::vector<double>>();
    for (std::size_t g = 0; g < n.size(); ++g) counts[g].push_back(n[g]);
  }
  bool all = true;
  const auto row = [&](const std::string& what, const std::string& zs, double expected, std::vector<double>& xs) {
    const auto e = summarize_replicates(xs);
    const double diff = std::abs(e.value - expected);
    const double sig = e.std_error > 0.0 ? diff / e.std_error : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    const bool pass = sig <= c.check.max_sigmas;
    all = all && pass;
    s.criteria[what + (zs.empty() ? "" : "_z=" + zs)] = pass;
    s.report.push_back({{"criterion", what + (zs.empty() ? "" : "_z=" + zs)}, {"expected", expected},
                        {"estimate", to_json(e)}, {"sigmas", sig}, {"pass", pass}});
    o << what << "," << (zs.empty() ? "" : zs) << "," << xs.size() << "," << fmt(expected) << ","
      << estimate_columns(e) << "," << fmt(sig) << "," << (pass ? "true" : "false") << "\n";
  };
  row("mass_density", "", mean_density, mass);
  for (std::size_t g = 0; g < counts.size(); ++g) {
    const double z = c.schedule.z_grid[g];
    row("poisson_count", fmt(z), z * mean_density * vol, counts[g]);
  }
  s.pass = all;
  s.files["summary.csv"] = o.str();
}

}  // namespace detail

/// Summary tables recomputed from a result set.
inline Summary summarize(const ResultSet& rs) {
  const auto c = parse_config_text(rs.header.at("config").get<std::string>());
  Summary s;
  if (rs.records.empty()) return s;
  switch (c.kind) {
    case ExperimentKind::PercolationScan: detail::summarize_scan(c, rs, s); break;
    case ExperimentKind::WrOrderParameter: detail::summarize_order_parameter(c, rs, s); break;
    case ExperimentKind::RcCheck: detail::summarize_rc_check(c, rs, s); break;
    case ExperimentKind::DominationCheck: detail::summarize_domination(c, rs, s); break;
    case ExperimentKind::DlrCheck: detail::summarize_dlr(c, rs, s); break;
    case ExperimentKind::EnvValidate:
      if (c.geometry.dimension == 1) detail::summarize_env<1>(c, rs, s);
      else detail::summarize_env<2>(c, rs, s);
      break;
  }
  if (!s.report.empty()) {
    std::string text = rs.header.dump() + "\n";
    for (const auto& r : s.report) text += r.dump() + "\n";
    s.files["report.jsonl"] = text;
  }
  return s;
}

inline json make_header(const ExperimentConfig& c) {
  return json{{"format", kRecordFormat},
              {"kind", to_string(c.kind)},
              {"config", canonical_config_text(c)},
              {"config_hash", hex64(config_hash(c))},
              {"version", kVersion}};
}

inline std::string render_records(const ResultSet& rs) {
  std::string s = rs.header.dump() + "\n";
  for (const auto& r : rs.records) s += r.dump() + "\n";
  return s;
}

inline ResultSet read_records(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot read records file '" + path + "'");
  ResultSet rs;
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InvalidArgument(path + ": malformed JSON line: " + e.what());
    }
    if (first) {
      if (!j.is_object() || j.value("format", "") != kRecordFormat) {
        throw InvalidArgument(path + ": not a wrlab records file");
      }
      rs.header = std::move(j);
      first = false;
    } else {
      rs.records.push_back(std::move(j));
    }
  }
  if (first) throw InvalidArgument(path + ": empty records file");
  detail::sort_records(rs.records);
  return rs;
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (!out) throw std::runtime_error("write failed for '" + path.string() + "'");
}

inline std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Writes records.jsonl and the summary files; returns the summary.
inline Summary write_results(const std::filesystem::path& dir, const ResultSet& rs) {
  std::filesystem::create_directories(dir);
  write_text(dir / "records.jsonl", render_records(rs));
  auto s = summarize(rs);
  for (const auto& [name, text] : s.files) write_text(dir / name, text);
  return s;
}

struct RunOutcome {
  json manifest;
  int exit_code = 0;
};

/// Exit codes shared by the CLI.
enum ExitCode { kExitPass = 0, kExitCheckFailed = 1, kExitInvalidConfig = 2, kExitRuntimeFailure = 3 };

inline json seed_table(const ResultSet& rs) {
  json seeds = json::array();
  std::set<std::uint64_t> seen;
  for (const auto& r : rs.records) {
    const auto id = r.at("replicate").get<std::uint64_t>();
    if (seen.insert(id).second) seeds.push_back({{"replicate", id}, {"seed", r.at("seed")}});
  }
  return seeds;
}

/// Runs every replicate of a validated configuration into `dir`. Failures in
/// individual replicates leave the manifest marked incomplete; the records of
/// the replicates that finished are still written.
inline RunOutcome run_experiment(const ExperimentConfig& c, const std::filesystem::path& dir,
                                 std::ostream* log = nullptr) {
  validate_config(c);
  const auto started = utc_now();
  const auto t0 = std::chrono::steady_clock::now();
  const std::uint64_t hash = config_hash(c);
  const Seed experiment_seed = derive_seed(*c.seed, hash);

  std::optional<DominationConfig> dom;
  if (c.kind == ExperimentKind::DominationCheck) dom = detail::domination_config(c, experiment_seed);

  const std::size_t R = c.schedule.replicates;
  std::vector<std::vector<json>> per(R);
  std::mutex log_mutex;
  const auto errors = parallel_for(R, c.schedule.workers, [&](std::size_t i) {
    const std::uint64_t id = c.schedule.replicate_offset + i;
    const Seed seed = derive_seed(experiment_seed, id);
    per[i] = c.geometry.dimension == 1 ? detail::run_replicate<1>(c, id, seed, dom)
                                       : detail::run_replicate<2>(c, id, seed, dom);
    if (log) {
      std::lock_guard lock(log_mutex);
      *log << "replicate " << id << " done\n";
    }
  });

  ResultSet rs;
  rs.header = make_header(c);
  std::vector<std::string> failures;
  for (std::size_t i = 0; i < R; ++i) {
    if (errors[i]) {
      try {
        std::rethrow_exception(errors[i]);
      } catch (const std::exception& e) {
        failures.push_back("replicate " + std::to_string(c.schedule.replicate_offset + i) + ": " + e.what());
      }
      continue;
    }
    for (auto& r : per[i]) rs.records.push_back(std::move(r));
  }
  detail::sort_records(rs.records);
  const auto summary = write_results(dir, rs);

  RunOutcome out;
  auto& m = out.manifest;
  m["tool"] = "wrlab";
  m["version"] = kVersion;
  m["kind"] = to_string(c.kind);
  m["config"] = canonical_config_text(c);
  m["config_hash"] = hex64(hash);
  m["master_seed"] = *c.seed;
  m["replicates"] = c.schedule.replicates;
  m["replicate_offset"] = c.schedule.replicate_offset;
  m["replicate_seeds"] = seed_table(rs);
  m["workers"] = c.schedule.workers;
  m["started_at"] = started;
  m["finished_at"] = utc_now();
  m["wall_seconds"] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  m["complete"] = failures.empty();
  m["failures"] = failures;
  m["criteria"] = summary.criteria;
  m["pass"] = summary.pass ? json(*summary.pass) : json(nullptr);
  if (dom) m["domination"] = {{"tau", dom->tau}, {"merge_bound", dom->merge_bound}};
  json files = json::array({"records.jsonl"});
  for (const auto& [name, _] : summary.files) files.push_back(name);
  m["outputs"] = files;
  write_text(dir / "manifest.json", m.dump(2) + "\n");

  if (!failures.empty()) out.exit_code = kExitRuntimeFailure;
  else if (summary.pass && !*summary.pass) out.exit_code = kExitCheckFailed;
  else out.exit_code = kExitPass;
  return out;
}

/// Union of partial runs of one configuration. Replicate ids must be
/// disjoint; the result does not depend on the order of the inputs.
inline ResultSet merge_result_sets(const std::vector<ResultSet>& parts) {
  if (parts.empty()) throw InvalidArgument("nothing to merge");
  ResultSet out;
  out.header = parts.front().header;
  std::set<std::uint64_t> ids;
  for (const auto& p : parts) {
    if (p.header != out.header) {
      throw InvalidArgument("config hash mismatch: " + p.header.value("config_hash", "?") + " vs " +
                            out.header.value("config_hash", "?"));
    }
    std::set<std::uint64_t> mine;
    for (const auto& r : p.records) mine.insert(r.at("replicate").get<std::uint64_t>());
    for (auto id : mine) {
      if (!ids.insert(id).second) throw InvalidArgument("replicate " + std::to_string(id) + " appears in two inputs");
    }
    out.records.insert(out.records.end(), p.records.begin(), p.records.end());
  }
  detail::sort_records(out.records);
  return out;
}

/// Merges records files into `dir`, recomputing summaries and a manifest.
inline RunOutcome merge_replicates(const std::vector<std::string>& files, const std::filesystem::path& dir) {
  std::vector<ResultSet> parts;
  for (const auto& f : files) parts.push_back(read_records(f));
  const auto merged = merge_result_sets(parts);
  const auto started = utc_now();
  const auto summary = write_results(dir, merged);
  RunOutcome out;
  auto& m = out.manifest;
  m["tool"] = "wrlab";
  m["version"] = kVersion;
  m["kind"] = merged.header.at("kind");
  m["config"] = merged.header.at("config");
  m["config_hash"] = merged.header.at("config_hash");
  auto sources = files;
  std::sort(sources.begin(), sources.end());
  m["merged_from"] = sources;
  m["replicate_seeds"] = seed_table(merged);
  m["started_at"] = started;
  m["finished_at"] = utc_now();
  m["complete"] = true;
  m["criteria"] = summary.criteria;
  m["pass"] = summary.pass ? json(*summary.pass) : json(nullptr);
  json outputs = json::array({"records.jsonl"});
  for (const auto& [name, _] : summary.files) outputs.push_back(name);
  m["outputs"] = outputs;
  write_text(dir / "manifest.json", m.dump(2) + "\n");
  out.exit_code = summary.pass && !*summary.pass ? kExitCheckFailed : kExitPass;
  return out;
}

// ---------------------------------------------------------------------------
// JSON-lines exports for debugging and plotting

inline constexpr const char* kTraceFormat = "wrlab-trace-1";
inline constexpr const char* kEnvironmentFormat = "wrlab-environment-1";

namespace detail {

template <std::size_t D>
json point_json(const Point<D>& p) {
  json a = json::array();
  for (std::size_t i = 0; i < D; ++i) a.push_back(p[i]);
  return a;
}

}  // namespace detail

/// One line per retained state of a WR chain after the header line:
/// {"sweep": s, "points": [[x, y, color], ...]} with color ±1.
template <std::size_t D>
std::size_t write_wr_trace(std::ostream& out, json header, const WRParams<D>& params, BoundaryCondition boundary,
                           const MCMCSettings& settings, Seed seed) {
  header["format"] = kTraceFormat;
  header["z"] = params.z;
  header["boundary"] = to_string(boundary);
  out << header.dump() << "\n";
  WRChain<D> chain(params, boundary, settings);
  std::size_t lines = 0;
  const auto emit = [&](const WRChain<D>& c, std::size_t sweep) {
    json pts = json::array();
    for (const auto& p : c.points()) {
      auto q = detail::point_json<D>(p.position);
      q.push_back(p.color == Color::Plus ? 1 : -1);
      pts.push_back(std::move(q));
    }
    out << json{{"sweep", sweep}, {"points", pts}}.dump() << "\n";
    ++lines;
  };
  if (chain.degenerate()) {
    for (std::size_t s = settings.burn_in; s < settings.sweeps; s += settings.thinning) emit(chain, s);
    return lines;
  }
  Rng rng(seed);
  run_chain(chain, settings, rng, emit);
  return lines;
}

/// Realization dump after the header line: one line per segment
/// {"a": [...], "b": [...], "linear_density": v}, or for densities one line per
/// grid cell of side `cell` inside the window {"center": [...], "density": v}.
template <std::size_t D>
std::size_t write_environment_dump(std::ostream& out, json header, const EnvironmentRealization<D>& env,
                                   const Window<D>& window, double cell) {
  if (!(cell > 0.0)) throw InvalidArgument("dump cell size must be positive");
  header["format"] = kEnvironmentFormat;
  header["label"] = env.label();
  out << header.dump() << "\n";
  std::size_t lines = 0;
  if (const auto* seg = env.segment_measure()) {
    for (const auto& s : seg->segments) {
      out << json{{"a", detail::point_json<D>(s.a)}, {"b", detail::point_json<D>(s.b)},
                  {"linear_density", s.linear_density}}
                 .dump()
          << "\n";
      ++lines;
    }
    return lines;
  }
  const auto* ac = env.absolutely_continuous();
  std::array<std::size_t, D> n{};
  std::size_t total = 1;
  for (std::size_t i = 0; i < D; ++i) {
    n[i] = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(window.extent(i) / cell)));
    total *= n[i];
  }
  for (std::size_t k = 0; k < total; ++k) {
    Point<D> c;
    std::size_t rest = k;
    for (std::size_t i = 0; i < D; ++i) {
      const double h = window.extent(i) / double(n[i]);
      c[i] = window.lower[i] + (double(rest % n[i]) + 0.5) * h;
      rest /= n[i];
    }
    out << json{{"center", detail::point_json<D>(c)}, {"density", ac->density(c)}}.dump() << "\n";
    ++lines;
  }
  return lines;
}

}  // namespace wrlab
