#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <ctime>
#include <exception>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "stregion/io.hpp"
#include "stregion/postprocess.hpp"
#include "stregion/prior.hpp"
#include "stregion/sampler.hpp"
#include "stregion/synthetic.hpp"

namespace stregion {

inline constexpr const char* kEngineVersion = "0.1.0";

// ---------------------------------------------------------------- manifest

inline std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

struct RunManifest {
  std::string subcommand;
  std::vector<std::string> argv;
  std::string config_hash;
  std::string data_hash;
  std::vector<std::uint64_t> seeds;
  std::vector<std::string> artifacts;
  std::string started_at = utc_timestamp();
  std::string finished_at;

  // Records every regular file under `dir` except the manifest itself.
  void collect_artifacts(const fs::path& dir) {
    artifacts.clear();
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
      if (!e.is_regular_file()) continue;
      const auto rel = fs::relative(e.path(), dir).generic_string();
      if (rel != "manifest.json") artifacts.push_back(rel);
    }
    std::sort(artifacts.begin(), artifacts.end());
  }

  json to_json() const {
    return {{"subcommand", subcommand}, {"argv", argv},       {"config_hash", config_hash},
            {"data_hash", data_hash},   {"seeds", seeds},     {"artifacts", artifacts},
            {"started_at", started_at}, {"finished_at", finished_at}, {"engine_version", kEngineVersion}};
  }

  void write(const fs::path& dir) {
    finished_at = utc_timestamp();
    collect_artifacts(dir);
    write_json(dir / "manifest.json", to_json());
  }
};

inline std::vector<double> parse_double_list(const std::string& s, const char* what) {
  std::vector<double> out;
  std::istringstream is(s);
  std::string tok;
  while (std::getline(is, tok, ',')) {
    if (tok.empty()) continue;
    out.push_back(parse_double(tok, what));
  }
  if (out.empty()) throw InputError(std::string(what) + ": empty list");
  return out;
}

// ---------------------------------------------------------------- simulate

struct SimulateArgs {
  std::string scenario;
  std::string spec_file;
  std::string out;
  std::uint64_t seed = 1;
  std::size_t n_seasons = 0;
  bool list = false;
};

inline int run_simulate(const SimulateArgs& a, RunManifest& manifest) {
  if (a.list) {
    for (const auto& s : builtin_scenarios()) std::cout << s.name << "\t" << s.description << "\n";
    return 0;
  }
  if (a.scenario.empty() == a.spec_file.empty()) throw InputError("simulate needs exactly one of --scenario or --spec");
  if (a.out.empty()) throw InputError("simulate needs --out");
  ScenarioSpec spec;
  if (!a.scenario.empty()) {
    try {
      spec = find_scenario(a.scenario);
    } catch (const std::invalid_argument& e) {
      throw InputError(e.what());
    }
    manifest.config_hash = hex64(fnv1a(a.scenario));
  } else {
    const auto text = read_file(a.spec_file);
    try {
      spec = scenario_from_json(json::parse(text));
    } catch (const json::parse_error& e) {
      throw InputError(a.spec_file + ": " + e.what());
    }
    manifest.config_hash = hex64(fnv1a(text));
  }
  if (a.n_seasons > 0) spec.n_seasons = a.n_seasons;
  const auto sim = generate_dataset(spec, a.seed);
  const fs::path out(a.out);
  save_dataset(out, sim.graph, sim.data);
  write_json(out / "truth.json", truth_to_json(sim.truth, sim.data));
  write_json(out / "scenario.json", scenario_to_json(spec));
  manifest.seeds = {a.seed};
  manifest.data_hash = hash_directory_files(out, dataset_file_names());
  manifest.write(out);
  std::cout << "wrote " << spec.name << " (" << sim.data.n_areas << " areas, " << sim.data.n_seasons
            << " seasons) to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- fit

struct FitArgs {
  std::string data_dir;
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n_iter;
  std::size_t chains = 1;
  std::string q_list;
  std::size_t threads = 0;
};

struct FitJob {
  std::size_t q = 0;
  bool scan = false;
  std::size_t chain = 0;
  fs::path dir;
  SamplerConfig config;
  WaicResult waic_marginal;
  WaicResult waic_conditional;
  double wall = 0.0;
};

inline std::vector<std::size_t> parse_q_list(const std::string& s) {
  std::vector<std::size_t> out;
  for (double v : parse_double_list(s, "--q-list")) {
    if (v < 0.0 || v != std::floor(v)) throw InputError("--q-list entries must be non-negative integers");
    out.push_back(static_cast<std::size_t>(v));
  }
  return out;
}

// Runs the jobs on up to `workers` threads; the first failure is rethrown.
inline void run_fit_jobs(std::vector<FitJob>& jobs, const LoadedData& in, const fs::path& data_dir,
                         std::size_t workers) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex mu;
  auto work = [&] {
    for (;;) {
      const auto idx = next.fetch_add(1);
      if (idx >= jobs.size()) return;
      {
        std::lock_guard lock(mu);
        if (failure) return;
      }
      auto& job = jobs[idx];
      try {
        const auto store = run_chain(in.graph, in.data, job.config);
        json extra{{"data_dir", fs::absolute(data_dir).string()},
                   {"chain", job.chain},
                   {"seed", job.config.seed},
                   {"stream", job.config.stream},
                   {"q", job.config.hyper.q},
                   {"independent", job.config.independent}};
        if (store.n_draws >= 2 && store.n_obs > 0) {
          job.waic_marginal = waic(store.loglik_marginal, store.n_draws, store.n_obs);
          job.waic_conditional = waic(store.loglik_conditional, store.n_draws, store.n_obs);
          extra["waic"] = {{"marginal", job.waic_marginal.waic}, {"conditional_poisson", job.waic_conditional.waic}};
        }
        job.wall = store.wall_seconds;
        save_chain(job.dir, store, job.config, extra);
      } catch (...) {
        std::lock_guard lock(mu);
        if (!failure) failure = std::current_exception();
        return;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < std::max<std::size_t>(1, workers); ++w) pool.emplace_back(work);
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

inline int run_fit(const FitArgs& a, RunManifest& manifest) {
  if (a.data_dir.empty() || a.out.empty()) throw InputError("fit needs --data-dir and --out");
  if (a.chains < 1) throw InputError("--chains must be >= 1");
  RunOptions opts;
  if (!a.config.empty()) {
    if (!fs::exists(a.config)) throw InputError("config file not found: " + a.config);
    opts = load_options(a.config);
    manifest.config_hash = hex64(fnv1a(read_file(a.config)));
  } else {
    manifest.config_hash = hex64(fnv1a(config_to_json(opts.sampler).dump()));
  }
  auto base = opts.sampler;
  if (a.seed) base.seed = *a.seed;
  if (a.n_iter) base.n_iter = *a.n_iter;

  const auto in = load_dataset(a.data_dir, opts.auto_intercept);
  try {
    base.validate(in.data, in.graph.n_areas());
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  if (base.n_retained() < 2) throw InputError("config keeps fewer than two draws; raise n_iter or lower burn_in/thin");
  manifest.data_hash = hash_directory_files(a.data_dir, dataset_file_names());

  const fs::path out(a.out);
  fs::create_directories(out);
  std::vector<FitJob> jobs;
  const bool scan = !a.q_list.empty();
  const auto qs = scan ? parse_q_list(a.q_list) : std::vector<std::size_t>{base.hyper.q};
  for (auto q : qs) {
    for (std::size_t c = 0; c < a.chains; ++c) {
      FitJob job;
      job.q = q;
      job.scan = scan;
      job.chain = c;
      job.config = base;
      job.config.stream = c;
      if (scan) {
        job.config.hyper.q = q;
        job.config.independent = q == 0;
      }
      job.dir = scan ? out / ("q" + std::to_string(q)) / ("chain_" + std::to_string(c + 1))
                     : out / ("chain_" + std::to_string(c + 1));
      jobs.push_back(std::move(job));
    }
  }
  manifest.seeds = {base.seed};
  const auto hw = std::max(1u, std::thread::hardware_concurrency());
  const auto workers = a.threads > 0 ? a.threads : std::min<std::size_t>(a.chains, hw);
  run_fit_jobs(jobs, in, a.data_dir, workers);

  {
    CsvWriter w(out / "waic_table.csv");
    w.row("q", "model", "chain", "waic", "lppd", "p_waic", "waic_conditional_poisson");
    for (const auto& j : jobs) {
      const std::string model = j.config.independent ? "iid" : "q=" + std::to_string(j.config.hyper.q);
      w.row(j.config.independent ? 0 : j.config.hyper.q, model, j.chain + 1, j.waic_marginal.waic,
            j.waic_marginal.lppd, j.waic_marginal.p_waic, j.waic_conditional.waic);
    }
  }
  for (const auto& j : jobs) {
    std::cout << j.dir.string() << ": waic " << j.waic_marginal.waic << " (" << j.wall << " s)\n";
  }
  manifest.write(out);
  return 0;
}

// ---------------------------------------------------------------- analysis

struct AnalysisOptions {
  double level = 0.95;
  PartitionLoss loss = PartitionLoss::vi;
  std::size_t restarts = 10;
  std::uint64_t seed = 1;
  bool conditional_waic = false;
  std::string truth;
};

struct ChainAnalysis {
  json meta;
  SampleStore store;
  LoadedData input;
  std::vector<PointEstimate> estimates;       // per season
  std::vector<double> ri_matrix;              // S x S
  std::vector<bool> flags;                    // [s * n + i]
  std::vector<ParameterSummary> z_summary;    // [s * n + i]
  WaicResult waic_result;
  std::vector<std::size_t> contiguity_violations;
};

inline ChainAnalysis analyze_chain(const fs::path& run_dir, const std::string& data_dir_override,
                                   const AnalysisOptions& opt) {
  ChainAnalysis a;
  const auto meta_path = run_dir / "meta.json";
  if (!fs::exists(meta_path)) throw InputError("not a chain directory (no meta.json): " + run_dir.string());
  a.meta = json::parse(read_file(meta_path));
  a.store = load_chain(run_dir);
  const std::string data_dir = !data_dir_override.empty() ? data_dir_override : a.meta.value("data_dir", std::string());
  if (data_dir.empty()) throw InputError(run_dir.string() + ": meta.json names no data_dir; pass --data-dir");
  a.input = load_dataset(data_dir);
  const auto& st = a.store;
  if (a.input.data.n_areas != st.n_areas || a.input.data.n_seasons != st.n_seasons) {
    throw InputError(data_dir + ": dataset shape does not match the chain");
  }
  if (st.n_draws < 1) throw InputError(run_dir.string() + ": no retained draws");

  auto rng = make_rng(opt.seed);
  std::vector<Partition> point;
  for (std::size_t s = 0; s < st.n_seasons; ++s) {
    const auto draws = season_draws(st, s);
    a.estimates.push_back(point_estimate_partition(draws, opt.loss, opt.restarts, rng));
    point.push_back(a.estimates.back().partition);
    if (!is_contiguous(a.input.graph, point.back())) a.contiguity_violations.push_back(s);
  }
  a.ri_matrix = lagged_ri_matrix(point);

  const auto cells = st.n_seasons * st.n_areas;
  a.flags = dispersion_indicators(st.z, st.n_draws, cells, opt.level);
  a.z_summary.resize(cells);
  std::vector<double> col(st.n_draws);
  for (std::size_t c = 0; c < cells; ++c) {
    for (std::size_t d = 0; d < st.n_draws; ++d) col[d] = st.z[d * cells + c];
    a.z_summary[c] = summarize_series(col, opt.level);
  }
  if (st.n_draws >= 2 && st.n_obs > 0) {
    a.waic_result = waic(opt.conditional_waic ? st.loglik_conditional : st.loglik_marginal, st.n_draws, st.n_obs);
  }
  return a;
}

inline std::vector<double> column_of(const std::vector<double>& v, std::size_t width, std::size_t j) {
  std::vector<double> out(v.size() / width);
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = v[d * width + j];
  return out;
}

template <typename T>
std::vector<double> column_of_int(const std::vector<T>& v, std::size_t width, std::size_t j) {
  std::vector<double> out(v.size() / width);
  for (std::size_t d = 0; d < out.size(); ++d) out[d] = static_cast<double>(v[d * width + j]);
  return out;
}

inline json summary_json(const ParameterSummary& s) {
  return {{"mean", s.mean}, {"sd", s.sd}, {"lower", s.lower}, {"upper", s.upper}};
}

inline void write_partitions_csv(const fs::path& path, const ChainAnalysis& a) {
  CsvWriter w(path);
  w.row("season", "area", "cluster");
  for (std::size_t s = 0; s < a.estimates.size(); ++s) {
    const auto& p = a.estimates[s].partition;
    for (std::size_t i = 0; i < p.n_areas(); ++i) w.row(s, i, p.label(i));
  }
}

inline void write_ri_matrix_csv(const fs::path& path, const ChainAnalysis& a) {
  const auto S = a.estimates.size();
  CsvWriter w(path);
  auto& os = w.stream();
  os << "season";
  for (std::size_t s = 0; s < S; ++s) os << ",s" << s;
  os << '\n';
  for (std::size_t r = 0; r < S; ++r) {
    os << r;
    for (std::size_t s = 0; s < S; ++s) os << ',' << a.ri_matrix[r * S + s];
    os << '\n';
  }
}

inline void write_dispersion_csv(const fs::path& path, const ChainAnalysis& a) {
  const auto& st = a.store;
  CsvWriter w(path);
  w.row("area", "season", "z_mean", "z_lower", "z_upper", "overdispersed");
  for (std::size_t i = 0; i < st.n_areas; ++i) {
    for (std::size_t s = 0; s < st.n_seasons; ++s) {
      const auto c = s * st.n_areas + i;
      w.row(i, s, a.z_summary[c].mean, a.z_summary[c].lower, a.z_summary[c].upper, a.flags[c] ? 1 : 0);
    }
  }
}

struct SummarizeArgs {
  std::string run;
  std::string data_dir;
  std::string out;
  AnalysisOptions analysis;
  std::string loss = "vi";
};

inline AnalysisOptions resolve_analysis(const SummarizeArgs& a) {
  auto opt = a.analysis;
  if (a.loss == "vi") {
    opt.loss = PartitionLoss::vi;
  } else if (a.loss == "binder") {
    opt.loss = PartitionLoss::binder;
  } else {
    throw InputError("--loss must be vi or binder");
  }
  if (!(opt.level > 0.0 && opt.level < 1.0)) throw InputError("--level must lie in (0, 1)");
  return opt;
}

inline int run_summarize(const SummarizeArgs& args, RunManifest& manifest) {
  const auto opt = resolve_analysis(args);
  const fs::path run(args.run);
  const fs::path out = args.out.empty() ? run : fs::path(args.out);
  fs::create_directories(out);
  const auto a = analyze_chain(run, args.data_dir, opt);
  const auto& st = a.store;

  json params;
  auto add = [&](const std::string& name, const std::vector<double>& draws) {
    params[name] = summary_json(summarize_series(draws, opt.level));
  };
  add("upsilon", st.upsilon);
  add("kappa", st.kappa);
  add("zeta", st.zeta);
  add("w", st.w);
  for (std::size_t j = 0; j < st.p_mean; ++j) add("beta_" + std::to_string(j + 1), column_of(st.beta, st.p_mean, j));
  for (std::size_t j = 0; j < st.p_disp; ++j) add("delta_" + std::to_string(j + 1), column_of(st.delta, st.p_disp, j));
  for (std::size_t j = 0; j < st.n_slots; ++j) add("rho_" + std::to_string(j + 1), column_of(st.rho, st.n_slots, j));
  for (std::size_t s = 0; s < st.n_seasons; ++s) add("k_" + std::to_string(s + 1), column_of_int(st.k, st.n_seasons, s));

  json seasons = json::array();
  json truth_ri = json::array();
  std::vector<Partition> truth;
  if (!opt.truth.empty()) truth = truth_partitions(json::parse(read_file(opt.truth)));
  for (std::size_t s = 0; s < st.n_seasons; ++s) {
    const auto& e = a.estimates[s];
    json js{{"season", s}, {"k", e.partition.k()}, {"expected_loss", e.expected_loss}};
    if (s < truth.size()) {
      js["rand_index_truth"] = rand_index(e.partition, truth[s]);
      js["adjusted_rand_index_truth"] = adjusted_rand_index(e.partition, truth[s]);
    }
    seasons.push_back(js);
  }
  const std::size_t flagged = static_cast<std::size_t>(std::count(a.flags.begin(), a.flags.end(), true));
  json summary{{"n_draws", st.n_draws},
               {"family", to_string(st.family)},
               {"credible_level", opt.level},
               {"loss", args.loss},
               {"parameters", params},
               {"seasons", seasons},
               {"point_estimate_contiguity_violations", a.contiguity_violations},
               {"dispersion_flagged_cells", flagged},
               {"acceptance", a.meta.value("acceptance", json::object())}};
  if (st.n_draws >= 2) {
    summary["waic"] = {{"waic", a.waic_result.waic},
                       {"lppd", a.waic_result.lppd},
                       {"p_waic", a.waic_result.p_waic},
                       {"pointwise", opt.conditional_waic ? "conditional_poisson" : "marginal"}};
  }
  write_json(out / "summary.json", summary);
  write_partitions_csv(out / "partitions.csv", a);
  write_ri_matrix_csv(out / "ri_matrix.csv", a);
  write_dispersion_csv(out / "dispersion_flags.csv", a);
  {
    std::ofstream w(out / "waic.txt");
    w << std::setprecision(12) << "waic " << a.waic_result.waic << "\nlppd " << a.waic_result.lppd << "\np_waic "
      << a.waic_result.p_waic << "\npointwise " << (opt.conditional_waic ? "conditional_poisson" : "marginal") << "\n";
  }
  manifest.seeds = {opt.seed};
  manifest.data_hash = hash_directory_files(run, {"meta.json", "samples_partitions.csv", "loglik.bin"});
  if (out != run) manifest.write(out);
  else write_json(out / "summary_manifest.json", (manifest.finished_at = utc_timestamp(), manifest.to_json()));
  std::cout << "summary written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- report-data

inline int run_report_data(const SummarizeArgs& args, RunManifest& manifest) {
  const auto opt = resolve_analysis(args);
  if (args.out.empty()) throw InputError("report-data needs --out");
  const fs::path run(args.run);
  const fs::path out(args.out);
  fs::create_directories(out);
  const auto a = analyze_chain(run, args.data_dir, opt);
  const auto& st = a.store;
  const auto& data = a.input.data;

  {
    CsvWriter w(out / "trace.csv");
    auto& os = w.stream();
    os << "draw,iteration,upsilon,kappa,zeta,w";
    for (std::size_t j = 0; j < st.p_mean; ++j) os << ",beta_" << j + 1;
    for (std::size_t j = 0; j < st.p_disp; ++j) os << ",delta_" << j + 1;
    for (std::size_t s = 0; s < st.n_seasons; ++s) os << ",k_" << s + 1;
    os << '\n';
    for (std::size_t d = 0; d < st.n_draws; ++d) {
      os << d << ',' << st.iteration[d] << ',' << st.upsilon[d] << ',' << st.kappa[d] << ',' << st.zeta[d] << ','
         << st.w[d];
      for (std::size_t j = 0; j < st.p_mean; ++j) os << ',' << st.beta[d * st.p_mean + j];
      for (std::size_t j = 0; j < st.p_disp; ++j) os << ',' << st.delta[d * st.p_disp + j];
      for (std::size_t s = 0; s < st.n_seasons; ++s) os << ',' << st.k[d * st.n_seasons + s];
      os << '\n';
    }
  }
  {
    CsvWriter w(out / "rho_series.csv");
    w.row("season", "mean", "lower", "upper", "horizon");
    for (std::size_t j = 0; j < st.n_slots; ++j) {
      const auto s = summarize_series(column_of(st.rho, st.n_slots, j), opt.level);
      w.row(j, s.mean, s.lower, s.upper, j >= st.n_seasons ? 1 : 0);
    }
  }
  {
    // Autocorrelation of the data-season rho series, averaged over draws,
    // next to the closed form at the posterior means of upsilon and kappa
    // with c fixed at its posterior-mean pattern.
    const auto S = st.n_seasons;
    const std::size_t max_lag = S > 1 ? S - 1 : 0;
    std::vector<double> acf_mean(max_lag + 1, 0.0);
    std::vector<double> series(S);
    for (std::size_t d = 0; d < st.n_draws; ++d) {
      for (std::size_t s = 0; s < S; ++s) series[s] = st.rho[d * st.n_slots + s];
      if (S < 2) break;
      const auto acf = autocorrelation(series, max_lag);
      for (std::size_t l = 0; l < acf.size(); ++l) acf_mean[l] += acf[l] / static_cast<double>(st.n_draws);
    }
    if (S < 2) acf_mean.assign(1, 1.0);
    const auto q = a.meta.at("config").value("q", std::size_t{1});
    const bool independent = a.meta.value("independent", false);
    const double ups = summarize_series(st.upsilon).mean;
    const double kap = summarize_series(st.kappa).mean;
    std::vector<double> c_mean(st.n_slots);
    for (std::size_t j = 0; j < st.n_slots; ++j) c_mean[j] = summarize_series(column_of_int(st.c, st.n_slots, j)).mean;
    std::vector<std::int64_t> c_round(c_mean.size());
    for (std::size_t j = 0; j < c_mean.size(); ++j) c_round[j] = std::llround(c_mean[j]);
    CsvWriter w(out / "rho_acf.csv");
    w.row("lag", "posterior_acf", "prior_closed_form");
    for (std::size_t l = 0; l < acf_mean.size(); ++l) {
      double closed = l == 0 ? 1.0 : 0.0;
      if (l > 0 && !independent && S > l) closed = rho_autocorrelation(1, l, q, ups, kap, c_round);
      w.row(l, acf_mean[l], closed);
    }
  }
  write_partitions_csv(out / "partitions.csv", a);
  write_ri_matrix_csv(out / "ri_matrix.csv", a);
  write_dispersion_csv(out / "dispersion_flags.csv", a);
  {
    const auto [lambda, psi] = lambda_psi_draws(st, data);
    const auto ratio = mean_variance_ratio(lambda, psi, data.offset, st.n_draws);
    const auto n_obs = data.n_obs();
    CsvWriter w(out / "fitted.csv");
    w.row("area", "week", "season", "observed", "offset", "fitted_mean", "fitted_lower", "fitted_upper",
          "mean_variance_ratio");
    std::vector<double> col(st.n_draws);
    for (std::size_t i = 0; i < data.n_areas; ++i) {
      for (std::size_t t = 0; t < data.n_weeks; ++t) {
        const auto o = data.obs(i, t);
        for (std::size_t d = 0; d < st.n_draws; ++d) col[d] = data.offset[o] * lambda[d * n_obs + o];
        const auto s = summarize_series(col, opt.level);
        w.row(i, t, data.season_of_week[t], data.y[o], data.offset[o], s.mean, s.lower, s.upper, ratio[o]);
      }
    }
  }
  {
    std::vector<double> totals(data.n_areas, 0.0);
    for (std::size_t i = 0; i < data.n_areas; ++i) {
      for (std::size_t t = 0; t < data.n_weeks; ++t) totals[i] += static_cast<double>(data.y[data.obs(i, t)]);
    }
    const auto expected = expected_counts(data);
    CsvWriter w(out / "sir.csv");
    w.row("area", "observed", "expected", "sir");
    for (std::size_t i = 0; i < data.n_areas; ++i) {
      w.row(i, totals[i], expected[i], expected[i] > 0.0 ? totals[i] / expected[i] : 0.0);
    }
  }
  {
    CsvWriter w(out / "adjacency.csv");
    w.row("area_a", "area_b");
    for (const auto& e : a.input.graph.edges()) w.row(e.a, e.b);
  }
  manifest.seeds = {opt.seed};
  manifest.data_hash = hash_directory_files(run, {"meta.json", "samples_partitions.csv", "loglik.bin"});
  manifest.write(out);
  std::cout << "report data written to " << out.string() << "\n";
  return 0;
}

// ---------------------------------------------------------------- elicit

struct ElicitArgs {
  std::size_t n = 0;
  std::string upsilon;
  std::string kappa;
  std::string out;
  std::size_t mc_draws = 0;
  std::uint64_t seed = 1;
};

// Table-5 layout: one row per (upsilon, kappa) with exact moments of the
// cluster count, their rounded forms, and optional prior-predictive checks.
inline int run_elicit(const ElicitArgs& a, RunManifest& manifest) {
  if (a.n < 1) throw InputError("--n must be >= 1");
  const auto ups = parse_double_list(a.upsilon, "--upsilon");
  const auto kap = parse_double_list(a.kappa, "--kappa");
  for (double v : ups) {
    if (!(v > 0.0)) throw InputError("--upsilon values must be positive");
  }
  for (double v : kap) {
    if (!(v > 0.0)) throw InputError("--kappa values must be positive");
  }
  std::ostringstream os;
  os << std::setprecision(10);
  os << "n,upsilon,kappa,mean,variance,mean_rounded,variance_rounded,cell";
  if (a.mc_draws > 0) os << ",mc_mean,mc_variance";
  os << '\n';
  auto rng = make_rng(a.seed);
  const auto graph = path_graph(a.n);
  for (double u : ups) {
    for (double k : kap) {
      const auto m = cluster_count_prior_moments(a.n, u, k);
      const auto mr = std::nearbyint(m.mean);
      const auto vr = std::nearbyint(m.variance);
      os << a.n << ',' << u << ',' << k << ',' << m.mean << ',' << m.variance << ',' << mr << ',' << vr << ","
         << mr << " / " << vr;
      if (a.mc_draws > 0) {
        const auto draws = prior_predictive_cluster_counts(u, k, graph, a.mc_draws, rng);
        double s = 0.0;
        double ss = 0.0;
        for (auto x : draws) s += static_cast<double>(x);
        const double mean = s / static_cast<double>(draws.size());
        for (auto x : draws) ss += (static_cast<double>(x) - mean) * (static_cast<double>(x) - mean);
        os << ',' << mean << ',' << (draws.size() > 1 ? ss / static_cast<double>(draws.size() - 1) : 0.0);
      }
      os << '\n';
    }
  }
  manifest.seeds = {a.seed};
  manifest.config_hash = hex64(fnv1a(a.upsilon + "|" + a.kappa + "|" + std::to_string(a.n)));
  if (a.out.empty()) {
    std::cout << os.str();
  } else {
    const fs::path path(a.out);
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream(path) << os.str();
    if (path.has_parent_path()) {
      manifest.finished_at = utc_timestamp();
      manifest.artifacts = {path.filename().string()};
      write_json(path.parent_path() / (path.stem().string() + ".manifest.json"), manifest.to_json());
    }
  }
  return 0;
}

// ---------------------------------------------------------------- entry point

// Exit codes: 0 success, 2 usage or input validation, 1 runtime failure.
inline int cli_main(int argc, const char* const* argv) {
  CLI::App app{"Spatio-temporal regionalization with random spanning trees"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kEngineVersion);

  SimulateArgs sim;
  auto* c_sim = app.add_subcommand("simulate", "Generate a synthetic dataset with its ground truth");
  c_sim->add_option("--scenario", sim.scenario, "Built-in scenario name");
  c_sim->add_option("--spec", sim.spec_file, "Scenario JSON file");
  c_sim->add_option("--out", sim.out, "Output directory");
  c_sim->add_option("--seed", sim.seed, "Random seed")->capture_default_str();
  c_sim->add_option("--n-seasons", sim.n_seasons, "Override the number of seasons");
  c_sim->add_flag("--list", sim.list, "List built-in scenarios");

  FitArgs fit;
  auto* c_fit = app.add_subcommand("fit", "Run the sampler on a dataset directory");
  c_fit->add_option("--data-dir", fit.data_dir, "Dataset directory")->required();
  c_fit->add_option("--config", fit.config, "Sampler config JSON");
  c_fit->add_option("--out", fit.out, "Output directory")->required();
  c_fit->add_option("--seed", fit.seed, "Seed (overrides the config)");
  c_fit->add_option("--n-iter", fit.n_iter, "Iterations (overrides the config)");
  c_fit->add_option("--chains", fit.chains, "Independent chains")->capture_default_str();
  c_fit->add_option("--q-list", fit.q_list, "Comma-separated dependence orders; 0 fits iid seasons");
  c_fit->add_option("--threads", fit.threads, "Worker threads (default: min(chains, cores))");

  SummarizeArgs sum;
  auto* c_sum = app.add_subcommand("summarize", "Posterior summaries of one chain directory");
  SummarizeArgs rep;
  auto* c_rep = app.add_subcommand("report-data", "Plot-ready CSVs from one chain directory");
  for (auto [cmd, args] : {std::pair{c_sum, &sum}, std::pair{c_rep, &rep}}) {
    cmd->add_option("--run", args->run, "Chain output directory")->required();
    cmd->add_option("--data-dir", args->data_dir, "Dataset directory (default: recorded in meta.json)");
    cmd->add_option("--out", args->out, "Output directory");
    cmd->add_option("--level", args->analysis.level, "Credible level")->capture_default_str();
    cmd->add_option("--loss", args->loss, "Partition loss: vi or binder")->capture_default_str();
    cmd->add_option("--restarts", args->analysis.restarts, "Random restarts of the partition search")
        ->capture_default_str();
    cmd->add_option("--seed", args->analysis.seed, "Seed for the partition search")->capture_default_str();
    cmd->add_flag("--conditional-waic", args->analysis.conditional_waic,
                  "Use the Poisson-given-z pointwise likelihood for WAIC");
    cmd->add_option("--truth", args->analysis.truth, "truth.json for Rand indices against the generator");
  }

  ElicitArgs eli;
  auto* c_eli = app.add_subcommand("elicit", "Prior moments of the cluster count over an upsilon/kappa grid");
  c_eli->add_option("--n", eli.n, "Number of areas")->required();
  c_eli->add_option("--upsilon", eli.upsilon, "Comma-separated upsilon values")->required();
  c_eli->add_option("--kappa", eli.kappa, "Comma-separated kappa values")->required();
  c_eli->add_option("--out", eli.out, "CSV path (default: stdout)");
  c_eli->add_option("--mc-draws", eli.mc_draws, "Prior-predictive draws per cell (0 = none)");
  c_eli->add_option("--seed", eli.seed, "Seed for prior-predictive draws")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  RunManifest manifest;
  for (int i = 0; i < argc; ++i) manifest.argv.emplace_back(argv[i]);
  try {
    if (*c_sim) {
      manifest.subcommand = "simulate";
      return run_simulate(sim, manifest);
    }
    if (*c_fit) {
      manifest.subcommand = "fit";
      return run_fit(fit, manifest);
    }
    if (*c_sum) {
      manifest.subcommand = "summarize";
      return run_summarize(sum, manifest);
    }
    if (*c_rep) {
      manifest.subcommand = "report-data";
      return run_report_data(rep, manifest);
    }
    if (*c_eli) {
      manifest.subcommand = "elicit";
      return run_elicit(eli, manifest);
    }
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const DisconnectedGraphError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "runtime failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}

}  // namespace stregion
