#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stregion/graph.hpp"
#include "stregion/likelihood.hpp"
#include "stregion/sampler.hpp"
#include "stregion/synthetic.hpp"

namespace stregion {

namespace fs = std::filesystem;
using json = nlohmann::json;

// Bad or missing user input; the CLI maps it to exit code 2.
class InputError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// ---------------------------------------------------------------- CSV

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;
  std::string path;

  std::size_t column(const std::string& name) const {
    for (std::size_t j = 0; j < header.size(); ++j) {
      if (header[j] == name) return j;
    }
    throw InputError(path + ": missing column '" + name + "'");
  }
  bool has_column(const std::string& name) const {
    return std::find(header.begin(), header.end(), name) != header.end();
  }
};

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream is(line);
  while (std::getline(is, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    std::size_t b = 0;
    while (b < cell.size() && cell[b] == ' ') ++b;
    out.push_back(cell.substr(b));
  }
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open file: " + path.string());
  CsvTable t;
  t.path = path.string();
  std::string line;
  if (!std::getline(in, line)) throw InputError(path.string() + ": empty file");
  t.header = split_csv_line(line);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto row = split_csv_line(line);
    if (row.size() != t.header.size()) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": expected " +
                       std::to_string(t.header.size()) + " fields, found " + std::to_string(row.size()));
    }
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw InputError(where + ": not a number: '" + s + "'");
  }
}

inline std::int64_t parse_int(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const long long v = std::stoll(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw InputError(where + ": not an integer: '" + s + "'");
  }
}

inline std::size_t parse_index(const std::string& s, const std::string& where) {
  const auto v = parse_int(s, where);
  if (v < 0) throw InputError(where + ": index must be non-negative");
  return static_cast<std::size_t>(v);
}

class CsvWriter {
 public:
  explicit CsvWriter(const fs::path& path) : out_(path), path_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << std::setprecision(17);
  }
  template <typename... Ts>
  void row(const Ts&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cells, first = false), ...);
    out_ << '\n';
  }
  std::ostream& stream() { return out_; }

 private:
  std::ofstream out_;
  fs::path path_;
};

// ---------------------------------------------------------------- hashing

// 64-bit FNV-1a over raw bytes.
inline std::uint64_t fnv1a(const std::string& bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

inline std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

// Hash of every regular file in a directory, in name order.
inline std::string hash_directory_files(const fs::path& dir, const std::vector<std::string>& names) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& name : names) {
    const auto p = dir / name;
    if (!fs::exists(p)) continue;
    h = fnv1a(name, h);
    h = fnv1a(read_file(p), h);
  }
  return hex64(h);
}

// ---------------------------------------------------------------- data

struct LoadedData {
  SpatialGraph graph;
  Dataset data;
};

inline const std::vector<std::string>& dataset_file_names() {
  static const std::vector<std::string> names{"adjacency.csv", "cases.csv", "covariates_disp.csv",
                                              "covariates_mean.csv", "seasons.csv"};
  return names;
}

inline SpatialGraph load_adjacency(const fs::path& path, std::size_t n_areas) {
  const auto t = read_csv(path);
  const auto ca = t.column("area_a");
  const auto cb = t.column("area_b");
  std::vector<std::pair<std::size_t, std::size_t>> pairs;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = path.string() + ":" + std::to_string(r + 2);
    const auto a = parse_index(t.rows[r][ca], where);
    const auto b = parse_index(t.rows[r][cb], where);
    if (a >= n_areas || b >= n_areas) throw InputError(where + ": area id exceeds the areas in cases.csv");
    if (a == b) throw InputError(where + ": self-loop");
    pairs.emplace_back(a, b);
  }
  SpatialGraph g(n_areas, pairs);
  const auto bad = g.first_unreachable();
  if (bad != n_areas) throw InputError(path.string() + ": graph is disconnected; area " + std::to_string(bad) + " is unreachable");
  return g;
}

// Reads the dataset CSV family from `dir`. covariates_mean.csv and
// covariates_disp.csv are optional; seasons.csv defaults to 13-week blocks.
inline LoadedData load_dataset(const fs::path& dir, bool auto_intercept = true) {
  if (!fs::is_directory(dir)) throw InputError("data directory not found: " + dir.string());
  const auto cases_path = dir / "cases.csv";
  const auto cases = read_csv(cases_path);
  const auto ca = cases.column("area");
  const auto cw = cases.column("week");
  const auto cy = cases.column("y");
  const auto co = cases.column("offset");
  std::size_t n = 0;
  std::size_t T = 0;
  for (const auto& row : cases.rows) {
    n = std::max(n, parse_index(row[ca], cases.path) + 1);
    T = std::max(T, parse_index(row[cw], cases.path) + 1);
  }
  if (n == 0) throw InputError(cases.path + ": no rows");
  LoadedData out;
  auto& d = out.data;
  d.n_areas = n;
  d.n_weeks = T;
  d.y.assign(n * T, -1);
  d.offset.assign(n * T, 0.0);
  for (std::size_t r = 0; r < cases.rows.size(); ++r) {
    const std::string where = cases.path + ":" + std::to_string(r + 2);
    const auto& row = cases.rows[r];
    const auto i = parse_index(row[ca], where);
    const auto t = parse_index(row[cw], where);
    if (d.y[i * T + t] >= 0) throw InputError(where + ": duplicate (area, week)");
    d.y[i * T + t] = parse_int(row[cy], where);
    if (d.y[i * T + t] < 0) throw InputError(where + ": negative count");
    d.offset[i * T + t] = parse_double(row[co], where);
  }
  for (std::size_t o = 0; o < n * T; ++o) {
    if (d.y[o] < 0) {
      throw InputError(cases.path + ": missing (area " + std::to_string(o / T) + ", week " + std::to_string(o % T) + ")");
    }
  }

  const auto seasons_path = dir / "seasons.csv";
  d.season_of_week.resize(T);
  if (fs::exists(seasons_path)) {
    const auto st = read_csv(seasons_path);
    const auto sw = st.column("week");
    const auto ss = st.column("season");
    std::vector<char> seen(T, 0);
    for (std::size_t r = 0; r < st.rows.size(); ++r) {
      const std::string where = st.path + ":" + std::to_string(r + 2);
      const auto t = parse_index(st.rows[r][sw], where);
      if (t >= T) throw InputError(where + ": week not present in cases.csv");
      d.season_of_week[t] = parse_index(st.rows[r][ss], where);
      seen[t] = 1;
    }
    for (std::size_t t = 0; t < T; ++t) {
      if (!seen[t]) throw InputError(st.path + ": week " + std::to_string(t) + " has no season");
    }
  } else {
    for (std::size_t t = 0; t < T; ++t) d.season_of_week[t] = t / 13;
  }
  std::size_t S = 0;
  for (auto s : d.season_of_week) S = std::max(S, s + 1);
  d.n_seasons = S;

  const auto xm_path = dir / "covariates_mean.csv";
  if (fs::exists(xm_path)) {
    const auto xt = read_csv(xm_path);
    const auto xa = xt.column("area");
    const auto xw = xt.column("week");
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < xt.header.size(); ++j) {
      if (j != xa && j != xw) cols.push_back(j);
    }
    d.p_mean = cols.size();
    d.x.assign(n * T * d.p_mean, 0.0);
    std::vector<char> seen(n * T, 0);
    for (std::size_t r = 0; r < xt.rows.size(); ++r) {
      const std::string where = xt.path + ":" + std::to_string(r + 2);
      const auto i = parse_index(xt.rows[r][xa], where);
      const auto t = parse_index(xt.rows[r][xw], where);
      if (i >= n || t >= T) throw InputError(where + ": (area, week) not present in cases.csv");
      for (std::size_t j = 0; j < cols.size(); ++j) d.x[(i * T + t) * d.p_mean + j] = parse_double(xt.rows[r][cols[j]], where);
      seen[i * T + t] = 1;
    }
    if (d.p_mean > 0 && std::find(seen.begin(), seen.end(), 0) != seen.end()) {
      throw InputError(xt.path + ": covariates missing for some (area, week)");
    }
  }

  const auto vd_path = dir / "covariates_disp.csv";
  std::vector<double> raw_v;
  std::size_t p_raw = 0;
  if (fs::exists(vd_path)) {
    const auto vt = read_csv(vd_path);
    const auto va = vt.column("area");
    const auto vs = vt.column("season");
    std::vector<std::size_t> cols;
    for (std::size_t j = 0; j < vt.header.size(); ++j) {
      if (j != va && j != vs) cols.push_back(j);
    }
    p_raw = cols.size();
    raw_v.assign(n * S * p_raw, 0.0);
    std::vector<char> seen(n * S, 0);
    for (std::size_t r = 0; r < vt.rows.size(); ++r) {
      const std::string where = vt.path + ":" + std::to_string(r + 2);
      const auto i = parse_index(vt.rows[r][va], where);
      const auto s = parse_index(vt.rows[r][vs], where);
      if (i >= n || s >= S) throw InputError(where + ": (area, season) out of range");
      for (std::size_t j = 0; j < cols.size(); ++j) raw_v[(i * S + s) * p_raw + j] = parse_double(vt.rows[r][cols[j]], where);
      seen[i * S + s] = 1;
    }
    if (p_raw > 0 && std::find(seen.begin(), seen.end(), 0) != seen.end()) {
      throw InputError(vt.path + ": covariates missing for some (area, season)");
    }
  }
  bool has_intercept = p_raw > 0;
  for (std::size_t r = 0; r < n * S && has_intercept; ++r) has_intercept = raw_v[r * p_raw] == 1.0;
  const bool prepend = auto_intercept && !has_intercept;
  d.p_disp = p_raw + (prepend ? 1 : 0);
  d.v.assign(n * S * d.p_disp, 0.0);
  for (std::size_t r = 0; r < n * S; ++r) {
    std::size_t j0 = 0;
    if (prepend) d.v[r * d.p_disp + j0++] = 1.0;
    for (std::size_t j = 0; j < p_raw; ++j) d.v[r * d.p_disp + j0 + j] = raw_v[r * p_raw + j];
  }

  try {
    d.finalize();
  } catch (const std::invalid_argument& e) {
    throw InputError(dir.string() + ": " + e.what());
  }
  out.graph = load_adjacency(dir / "adjacency.csv", n);
  return out;
}

inline void save_dataset(const fs::path& dir, const SpatialGraph& graph, const Dataset& d) {
  fs::create_directories(dir);
  {
    CsvWriter w(dir / "adjacency.csv");
    w.row("area_a", "area_b");
    for (const auto& e : graph.edges()) w.row(e.a, e.b);
  }
  {
    CsvWriter w(dir / "cases.csv");
    w.row("area", "week", "y", "offset");
    for (std::size_t i = 0; i < d.n_areas; ++i) {
      for (std::size_t t = 0; t < d.n_weeks; ++t) w.row(i, t, d.y[d.obs(i, t)], d.offset[d.obs(i, t)]);
    }
  }
  {
    CsvWriter w(dir / "seasons.csv");
    w.row("week", "season");
    for (std::size_t t = 0; t < d.n_weeks; ++t) w.row(t, d.season_of_week[t]);
  }
  if (d.p_mean > 0) {
    CsvWriter w(dir / "covariates_mean.csv");
    auto& os = w.stream();
    os << "area,week";
    for (std::size_t j = 0; j < d.p_mean; ++j) os << ",x" << j + 1;
    os << '\n';
    for (std::size_t i = 0; i < d.n_areas; ++i) {
      for (std::size_t t = 0; t < d.n_weeks; ++t) {
        os << i << ',' << t;
        for (double v : d.x_row(i, t)) os << ',' << v;
        os << '\n';
      }
    }
  }
  {
    CsvWriter w(dir / "covariates_disp.csv");
    auto& os = w.stream();
    os << "area,season";
    for (std::size_t j = 0; j < d.p_disp; ++j) os << ",v" << j + 1;
    os << '\n';
    for (std::size_t i = 0; i < d.n_areas; ++i) {
      for (std::size_t s = 0; s < d.n_seasons; ++s) {
        os << i << ',' << s;
        for (double v : d.v_row(i, s)) os << ',' << v;
        os << '\n';
      }
    }
  }
}

inline void write_partition_csv(const fs::path& path, const Partition& p) {
  CsvWriter w(path);
  w.row("area", "cluster");
  for (std::size_t i = 0; i < p.n_areas(); ++i) w.row(i, p.label(i));
}

inline Partition read_partition_csv(const fs::path& path, std::size_t n_areas) {
  const auto t = read_csv(path);
  const auto ca = t.column("area");
  const auto cc = t.column("cluster");
  std::vector<std::int64_t> labels(n_areas, -1);
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    const std::string where = t.path + ":" + std::to_string(r + 2);
    const auto i = parse_index(t.rows[r][ca], where);
    if (i >= n_areas) throw InputError(where + ": area out of range");
    labels[i] = parse_int(t.rows[r][cc], where);
  }
  for (auto l : labels) {
    if (l < 0) throw InputError(t.path + ": every area needs a cluster");
  }
  return Partition(labels);
}

// ---------------------------------------------------------------- JSON

inline json truth_to_json(const ScenarioTruth& t, const Dataset& d) {
  json j;
  j["scenario"] = t.scenario;
  j["seed"] = t.seed;
  j["beta"] = t.beta;
  j["delta"] = t.delta;
  j["overdispersed"] = t.overdispersed;
  j["n_areas"] = d.n_areas;
  j["n_seasons"] = d.n_seasons;
  json parts = json::array();
  for (std::size_t s = 0; s < t.partitions.size(); ++s) {
    json e;
    e["season"] = s;
    e["labels"] = std::vector<std::size_t>(t.partitions[s].labels().begin(), t.partitions[s].labels().end());
    e["theta"] = t.theta[s];
    parts.push_back(e);
  }
  j["partitions"] = parts;
  j["z"] = t.z;
  j["psi"] = t.psi;
  j["z_layout"] = "area-major: index = area * n_seasons + season";
  return j;
}

inline std::vector<Partition> truth_partitions(const json& j) {
  std::vector<Partition> out;
  for (const auto& e : j.at("partitions")) {
    const auto labels = e.at("labels").get<std::vector<std::int64_t>>();
    out.emplace_back(labels);
  }
  return out;
}

inline json config_to_json(const SamplerConfig& c) {
  json j;
  j["n_iter"] = c.n_iter;
  j["burn_in"] = c.burn_in;
  j["thin"] = c.thin;
  j["seed"] = c.seed;
  j["q"] = c.hyper.q;
  j["a_upsilon"] = c.hyper.a_upsilon;
  j["b_upsilon"] = c.hyper.b_upsilon;
  j["a_kappa"] = c.hyper.a_kappa;
  j["b_kappa"] = c.hyper.b_kappa;
  j["a_zeta"] = c.hyper.a_zeta;
  j["b_zeta"] = c.hyper.b_zeta;
  j["a_theta"] = c.a_theta;
  j["b_theta"] = c.b_theta;
  j["mu_beta"] = c.mu_beta;
  j["sigma_beta"] = c.sigma_beta;
  j["mu_delta"] = c.mu_delta;
  j["sigma_delta"] = c.sigma_delta;
  j["step_upsilon"] = c.step_upsilon;
  j["step_kappa"] = c.step_kappa;
  j["step_beta"] = c.step_beta;
  j["step_delta"] = c.step_delta;
  j["adapt"] = c.adapt;
  j["target_accept"] = c.target_accept;
  j["adapt_batch"] = c.adapt_batch;
  j["family"] = to_string(c.family);
  j["independent"] = c.independent;
  j["store_loglik"] = c.store_loglik;
  return j;
}

struct RunOptions {
  SamplerConfig sampler;
  bool auto_intercept = true;
  std::size_t vi_restarts = 10;
  double credible_level = 0.95;
};

// Flat config document; unknown keys are rejected so typos surface.
inline RunOptions options_from_json(const json& j) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  RunOptions o;
  auto& c = o.sampler;
  static const std::set<std::string> known{
      "n_iter", "burn_in", "thin", "seed", "q", "a_upsilon", "b_upsilon", "a_kappa", "b_kappa", "a_zeta",
      "b_zeta", "a_theta", "b_theta", "mu_beta", "sigma_beta", "mu_delta", "sigma_delta", "step_upsilon",
      "step_kappa", "step_beta", "step_delta", "adapt", "target_accept", "adapt_batch", "family",
      "independent", "store_loglik", "auto_intercept", "vi_restarts", "credible_level"};
  for (const auto& [key, value] : j.items()) {
    if (!known.count(key)) throw InputError("config: unknown key '" + key + "'");
  }
  try {
    auto get = [&](const char* key, auto& target) {
      if (j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
    };
    get("n_iter", c.n_iter);
    get("burn_in", c.burn_in);
    get("thin", c.thin);
    get("seed", c.seed);
    get("q", c.hyper.q);
    get("a_upsilon", c.hyper.a_upsilon);
    get("b_upsilon", c.hyper.b_upsilon);
    get("a_kappa", c.hyper.a_kappa);
    get("b_kappa", c.hyper.b_kappa);
    get("a_zeta", c.hyper.a_zeta);
    get("b_zeta", c.hyper.b_zeta);
    get("a_theta", c.a_theta);
    get("b_theta", c.b_theta);
    get("step_upsilon", c.step_upsilon);
    get("step_kappa", c.step_kappa);
    get("step_beta", c.step_beta);
    get("step_delta", c.step_delta);
    get("adapt", c.adapt);
    get("target_accept", c.target_accept);
    get("adapt_batch", c.adapt_batch);
    get("independent", c.independent);
    get("store_loglik", c.store_loglik);
    get("auto_intercept", o.auto_intercept);
    get("vi_restarts", o.vi_restarts);
    get("credible_level", o.credible_level);
    auto get_matrix = [&](const char* key, std::vector<double>& target) {
      if (!j.contains(key)) return;
      const auto& v = j.at(key);
      target.clear();
      if (v.is_array() && !v.empty() && v.front().is_array()) {
        for (const auto& row : v) {
          for (const auto& x : row) target.push_back(x.get<double>());
        }
      } else {
        target = v.get<std::vector<double>>();
      }
    };
    get("mu_beta", c.mu_beta);
    get("mu_delta", c.mu_delta);
    get_matrix("sigma_beta", c.sigma_beta);
    get_matrix("sigma_delta", c.sigma_delta);
    if (j.contains("family")) {
      const auto f = j.at("family").get<std::string>();
      if (f == "pig") {
        c.family = LikelihoodFamily::pig;
      } else if (f == "poisson") {
        c.family = LikelihoodFamily::poisson;
      } else {
        throw InputError("config: family must be \"pig\" or \"poisson\"");
      }
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("config: ") + e.what());
  }
  if (!(o.credible_level > 0.0 && o.credible_level < 1.0)) throw InputError("config: credible_level must lie in (0, 1)");
  return o;
}

inline RunOptions load_options(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return options_from_json(j);
}

inline ScenarioSpec scenario_from_json(const json& j) {
  ScenarioSpec s;
  try {
    if (j.contains("base")) s = find_scenario(j.at("base").get<std::string>());
    auto get = [&](const char* key, auto& target) {
      if (j.contains(key)) target = j.at(key).get<std::decay_t<decltype(target)>>();
    };
    get("name", s.name);
    get("description", s.description);
    get("grid_rows", s.grid_rows);
    get("grid_cols", s.grid_cols);
    get("n_seasons", s.n_seasons);
    get("weeks_per_season", s.weeks_per_season);
    get("theta", s.theta);
    get("components", s.components);
    get("partitions", s.partitions);
    get("partition_seed", s.partition_seed);
    get("beta", s.beta);
    get("delta", s.delta);
    get("overdispersed", s.overdispersed);
    get("offset_lo", s.offset_lo);
    get("offset_hi", s.offset_hi);
  } catch (const json::exception& e) {
    throw InputError(std::string("scenario spec: ") + e.what());
  }
  try {
    s.validate();
  } catch (const std::invalid_argument& e) {
    throw InputError(std::string("scenario spec: ") + e.what());
  }
  return s;
}

inline json scenario_to_json(const ScenarioSpec& s) {
  json j;
  j["name"] = s.name;
  j["description"] = s.description;
  j["grid_rows"] = s.grid_rows;
  j["grid_cols"] = s.grid_cols;
  j["n_seasons"] = s.n_seasons;
  j["weeks_per_season"] = s.weeks_per_season;
  j["theta"] = s.theta;
  j["components"] = s.components;
  j["partition_seed"] = s.partition_seed;
  j["beta"] = s.beta;
  j["delta"] = s.delta;
  j["overdispersed"] = s.overdispersed;
  j["offset_lo"] = s.offset_lo;
  j["offset_hi"] = s.offset_hi;
  return j;
}

inline void write_json(const fs::path& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

// ---------------------------------------------------------------- loglik.bin

// 16-byte header (uint32 magic, uint32 n_draws, uint64 n_obs) followed by
// n_draws * n_obs little-endian float64 values, row-major by draw.
inline constexpr std::uint32_t kLoglikMagic = 0x4C4C4B31;  // "1KLL" on disk

inline void write_loglik_bin(const fs::path& path, const std::vector<double>& ll, std::uint32_t n_draws,
                             std::uint64_t n_obs) {
  if (ll.size() != static_cast<std::size_t>(n_draws) * n_obs) throw std::logic_error("loglik size mismatch");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out.write(reinterpret_cast<const char*>(&kLoglikMagic), sizeof kLoglikMagic);
  out.write(reinterpret_cast<const char*>(&n_draws), sizeof n_draws);
  out.write(reinterpret_cast<const char*>(&n_obs), sizeof n_obs);
  out.write(reinterpret_cast<const char*>(ll.data()), static_cast<std::streamsize>(ll.size() * sizeof(double)));
}

struct LoglikMatrix {
  std::uint32_t n_draws = 0;
  std::uint64_t n_obs = 0;
  std::vector<double> values;
};

inline LoglikMatrix read_loglik_bin(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open file: " + path.string());
  std::uint32_t magic = 0;
  LoglikMatrix m;
  in.read(reinterpret_cast<char*>(&magic), sizeof magic);
  in.read(reinterpret_cast<char*>(&m.n_draws), sizeof m.n_draws);
  in.read(reinterpret_cast<char*>(&m.n_obs), sizeof m.n_obs);
  if (!in || magic != kLoglikMagic) throw InputError(path.string() + ": not a loglik file");
  m.values.resize(static_cast<std::size_t>(m.n_draws) * m.n_obs);
  in.read(reinterpret_cast<char*>(m.values.data()), static_cast<std::streamsize>(m.values.size() * sizeof(double)));
  if (!in) throw InputError(path.string() + ": truncated");
  return m;
}

// ---------------------------------------------------------------- chain output

inline json acceptance_json(const AcceptanceTable& t) {
  json j;
  auto put = [&](const char* name, const AcceptanceCounter& c) {
    j[name] = {{"proposed", c.proposed}, {"accepted", c.accepted}, {"rate", c.rate()}};
  };
  put("upsilon", t.upsilon);
  put("kappa", t.kappa);
  put("c", t.c);
  put("u", t.u);
  put("beta", t.beta);
  put("delta", t.delta);
  return j;
}

namespace detail {

template <typename T>
void write_wide(const fs::path& path, const std::string& prefix, std::size_t width, const std::vector<T>& values,
                const std::vector<std::size_t>& iteration) {
  CsvWriter w(path);
  auto& os = w.stream();
  os << "iteration";
  for (std::size_t j = 0; j < width; ++j) os << ',' << prefix << j + 1;
  os << '\n';
  for (std::size_t d = 0; d < iteration.size(); ++d) {
    os << iteration[d];
    for (std::size_t j = 0; j < width; ++j) os << ',' << values[d * width + j];
    os << '\n';
  }
}

template <typename T>
void write_area_block(const fs::path& path, const SampleStore& st, const std::vector<T>& values) {
  CsvWriter w(path);
  auto& os = w.stream();
  os << "draw,season";
  for (std::size_t i = 0; i < st.n_areas; ++i) os << ",a" << i;
  os << '\n';
  for (std::size_t d = 0; d < st.n_draws; ++d) {
    for (std::size_t s = 0; s < st.n_seasons; ++s) {
      os << d << ',' << s;
      const auto base = (d * st.n_seasons + s) * st.n_areas;
      for (std::size_t i = 0; i < st.n_areas; ++i) os << ',' << values[base + i];
      os << '\n';
    }
  }
}

template <typename T, typename Parse>
std::vector<T> read_wide(const fs::path& path, std::size_t skip_cols, std::size_t& width, std::size_t& rows,
                         Parse parse) {
  const auto t = read_csv(path);
  width = t.header.size() - skip_cols;
  rows = t.rows.size();
  std::vector<T> out;
  out.reserve(rows * width);
  for (const auto& row : t.rows) {
    for (std::size_t j = skip_cols; j < row.size(); ++j) out.push_back(parse(row[j], t.path));
  }
  return out;
}

}  // namespace detail

// Writes one chain's draws as samples_*.csv, loglik.bin (marginal) and
// loglik_poisson.bin (conditional Poisson) plus meta.json.
inline void save_chain(const fs::path& dir, const SampleStore& st, const SamplerConfig& cfg, const json& extra_meta) {
  fs::create_directories(dir);
  {
    CsvWriter w(dir / "samples_scalars.csv");
    w.row("iteration", "upsilon", "kappa", "zeta", "w");
    for (std::size_t d = 0; d < st.n_draws; ++d) w.row(st.iteration[d], st.upsilon[d], st.kappa[d], st.zeta[d], st.w[d]);
  }
  detail::write_wide(dir / "samples_rho.csv", "rho_", st.n_slots, st.rho, st.iteration);
  detail::write_wide(dir / "samples_c.csv", "c_", st.n_slots, st.c, st.iteration);
  detail::write_wide(dir / "samples_u.csv", "u_", st.n_slots, st.u, st.iteration);
  detail::write_wide(dir / "samples_beta.csv", "beta_", st.p_mean, st.beta, st.iteration);
  detail::write_wide(dir / "samples_delta.csv", "delta_", st.p_disp, st.delta, st.iteration);
  detail::write_wide(dir / "samples_k.csv", "k_", st.n_seasons, st.k, st.iteration);
  detail::write_area_block(dir / "samples_partitions.csv", st, st.labels);
  detail::write_area_block(dir / "samples_theta.csv", st, st.theta);
  detail::write_area_block(dir / "samples_z.csv", st, st.z);
  if (st.n_obs > 0) {
    write_loglik_bin(dir / "loglik.bin", st.loglik_marginal, static_cast<std::uint32_t>(st.n_draws), st.n_obs);
    write_loglik_bin(dir / "loglik_poisson.bin", st.loglik_conditional, static_cast<std::uint32_t>(st.n_draws),
                     st.n_obs);
  }
  json meta = extra_meta;
  meta["config"] = config_to_json(cfg);
  meta["family"] = to_string(st.family);
  meta["n_draws"] = st.n_draws;
  meta["n_areas"] = st.n_areas;
  meta["n_seasons"] = st.n_seasons;
  meta["n_slots"] = st.n_slots;
  meta["p_mean"] = st.p_mean;
  meta["p_disp"] = st.p_disp;
  meta["n_obs"] = st.n_obs;
  meta["waic_pointwise_default"] = st.family == LikelihoodFamily::pig ? "marginal PIG (loglik.bin)" : "Poisson (loglik.bin)";
  meta["acceptance_burn_in"] = acceptance_json(st.acceptance_burn);
  meta["acceptance"] = acceptance_json(st.acceptance_post);
  meta["final_steps"] = {{"upsilon", st.step_upsilon}, {"kappa", st.step_kappa}, {"beta", st.step_beta},
                         {"delta", st.step_delta}};
  meta["wall_seconds"] = st.wall_seconds;
  write_json(dir / "meta.json", meta);
}

inline SampleStore load_chain(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw InputError("chain directory not found: " + dir.string());
  const auto meta = json::parse(read_file(dir / "meta.json"));
  SampleStore st;
  st.n_areas = meta.at("n_areas").get<std::size_t>();
  st.n_seasons = meta.at("n_seasons").get<std::size_t>();
  st.n_slots = meta.at("n_slots").get<std::size_t>();
  st.p_mean = meta.at("p_mean").get<std::size_t>();
  st.p_disp = meta.at("p_disp").get<std::size_t>();
  st.n_obs = meta.at("n_obs").get<std::size_t>();
  st.n_draws = meta.at("n_draws").get<std::size_t>();
  st.family = meta.at("family").get<std::string>() == "pig" ? LikelihoodFamily::pig : LikelihoodFamily::poisson;
  auto pd = [](const std::string& s, const std::string& where) { return parse_double(s, where); };
  auto pi = [](const std::string& s, const std::string& where) { return parse_int(s, where); };
  auto pu = [](const std::string& s, const std::string& where) {
    return static_cast<std::uint32_t>(parse_index(s, where));
  };
  std::size_t width = 0;
  std::size_t rows = 0;
  {
    const auto t = read_csv(dir / "samples_scalars.csv");
    for (const auto& row : t.rows) {
      st.iteration.push_back(parse_index(row[0], t.path));
      st.upsilon.push_back(parse_double(row[1], t.path));
      st.kappa.push_back(parse_double(row[2], t.path));
      st.zeta.push_back(parse_double(row[3], t.path));
      st.w.push_back(parse_double(row[4], t.path));
    }
  }
  st.rho = detail::read_wide<double>(dir / "samples_rho.csv", 1, width, rows, pd);
  st.c = detail::read_wide<std::int64_t>(dir / "samples_c.csv", 1, width, rows, pi);
  st.u = detail::read_wide<std::int64_t>(dir / "samples_u.csv", 1, width, rows, pi);
  st.beta = detail::read_wide<double>(dir / "samples_beta.csv", 1, width, rows, pd);
  st.delta = detail::read_wide<double>(dir / "samples_delta.csv", 1, width, rows, pd);
  st.k = detail::read_wide<std::uint32_t>(dir / "samples_k.csv", 1, width, rows, pu);
  st.labels = detail::read_wide<std::uint32_t>(dir / "samples_partitions.csv", 2, width, rows, pu);
  st.theta = detail::read_wide<double>(dir / "samples_theta.csv", 2, width, rows, pd);
  st.z = detail::read_wide<double>(dir / "samples_z.csv", 2, width, rows, pd);
  if (st.n_obs > 0) {
    st.loglik_marginal = read_loglik_bin(dir / "loglik.bin").values;
    st.loglik_conditional = read_loglik_bin(dir / "loglik_poisson.bin").values;
  }
  if (st.iteration.size() != st.n_draws || st.labels.size() != st.n_draws * st.n_seasons * st.n_areas) {
    throw InputError(dir.string() + ": sample files disagree with meta.json");
  }
  return st;
}

}  // namespace stregion
