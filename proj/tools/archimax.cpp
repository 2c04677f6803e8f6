// Command-line front end: simulate, evaluate, fit and test clustered Archimax models.
// Every command writes its outputs plus <out>.manifest.json, from which `replay`
// re-runs the command and compares output digests.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <boost/version.hpp>
#include <openssl/evp.h>

#include "archimax/archimax.hpp"

namespace fs = std::filesystem;
using namespace archimax;

namespace {

struct Options {
  std::string command;
  std::string stage;
  std::string config, data, out;
  std::string x, pairs, q, months, block = "month", date_column = "date";
  std::string manifest, out_dir;
  std::string norm = "euclid", scaling = "sqrt-n";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> n, n_mc;
  unsigned threads = 0;
};

struct Run {
  Options opt;
  std::vector<std::string> argv;
  Json config_echo;
  std::uint64_t seed = 1;
  std::vector<std::string> outputs;
  Json summary = Json::object();
};

// ---------------------------------------------------------------------------
// Helpers

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("file_not_found", "cannot read '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  const std::string data = ss.str();
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr)) throw NumericalError("SHA-256 failed");
  std::ostringstream hex;
  for (unsigned i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

void require(const std::string& value, const std::string& flag, const std::string& cmd) {
  if (value.empty()) throw ValidationError("missing_argument", cmd + " needs " + flag);
}

std::ofstream open_out(const std::string& path) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) fs::create_directories(dir);
  std::ofstream o(path, std::ios::binary);
  if (!o) throw ValidationError("file_not_writable", "cannot write '" + path + "'");
  return o;
}

void write_json(Run& run, const std::string& path, const Json& j) {
  auto o = open_out(path);
  o << j.dump(2) << '\n';
  run.outputs.push_back(path);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

std::vector<double> parse_list(const std::string& s, const std::string& flag) {
  std::vector<double> v;
  for (const auto& t : split(s, ',')) v.push_back(parse_number(t, flag));
  if (v.empty()) throw ValidationError("missing_argument", flag + " is empty");
  return v;
}

// "1-2,4-7" to 0-based pairs; all pairs when empty.
std::vector<std::pair<int, int>> parse_pairs(const std::string& s, int d) {
  std::vector<std::pair<int, int>> out;
  if (s.empty()) {
    for (int i = 0; i < d; ++i)
      for (int j = i + 1; j < d; ++j) out.emplace_back(i, j);
    return out;
  }
  for (const auto& t : split(s, ',')) {
    const auto ij = split(t, '-');
    if (ij.size() != 2) throw ValidationError("invalid_value", "pairs are written i-j: '" + t + "'");
    const int i = static_cast<int>(parse_number(ij[0], "--pairs")) - 1, j = static_cast<int>(parse_number(ij[1], "--pairs")) - 1;
    if (i < 0 || j < 0 || i >= d || j >= d || i == j)
      throw ValidationError("index_out_of_range", "pair " + t + " must hold two distinct indices in 1.." + std::to_string(d));
    out.emplace_back(i, j);
  }
  return out;
}

std::string pair_label(int i, int j) { return std::to_string(i + 1) + "-" + std::to_string(j + 1); }

Json matrix_json(const Matrix& m) {
  Json a = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(std::isfinite(m(r, c)) ? Json(m(r, c)) : Json(nullptr));
    a.push_back(row);
  }
  return a;
}

ModelConfig load_config(Run& run, bool require_theta) {
  require(run.opt.config, "--config", run.opt.command);
  run.config_echo = read_json_file(run.opt.config);
  auto cfg = parse_model_config(run.config_echo, require_theta);
  run.seed = run.opt.seed ? *run.opt.seed : (cfg.has_seed ? cfg.seed : 1);
  return cfg;
}

// Numeric data without a date column; rows become pseudo-observations.
Matrix load_data(const Run& run, int expected_cols) {
  require(run.opt.data, "--data", run.opt.command);
  const auto t = read_csv(run.opt.data);
  std::vector<int> cols;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (t.header[c] != run.opt.date_column) cols.push_back(static_cast<int>(c));
  if (expected_cols > 0 && static_cast<int>(cols.size()) != expected_cols)
    throw ValidationError("dimension_mismatch", "data has " + std::to_string(cols.size()) + " value columns, the partition covers " +
                                                    std::to_string(expected_cols));
  return numeric_columns(t, cols, run.opt.data);
}

std::string out_path(const Run& run, const std::string& suffix = "") {
  require(run.opt.out, "--out", run.opt.command);
  return suffix.empty() ? run.opt.out : run.opt.out + suffix;
}

Json classes_json(const std::vector<ClusterClass>& cls) {
  Json a = Json::array();
  for (const auto& c : cls) {
    Json e = {{"class", std::string(to_string(c.cls))}};
    if (c.cls == TailClass::D1) {
      e["rho"] = c.rho;
      e["b"] = c.b;
    }
    a.push_back(e);
  }
  return a;
}

// ---------------------------------------------------------------------------
// Commands

void cmd_simulate(Run& run) {
  const auto cfg = load_config(run, true);
  if (!run.opt.n) throw ValidationError("missing_argument", "simulate needs --n");
  if (*run.opt.n < 1) throw ValidationError("parameter_domain", "--n must be >= 1");
  const Matrix u = sample_clustered(cfg.model, *run.opt.n, run.seed);
  const auto path = out_path(run);
  auto o = open_out(path);
  write_matrix_csv(o, default_header(cfg.model.dim()), u);
  o.close();
  run.outputs.push_back(path);
  run.summary = {{"rows", u.rows()}, {"cols", u.cols()}};
}

void cmd_eval_stdf(Run& run) {
  const auto cfg = load_config(run, true);
  const auto& m = cfg.model;
  require(run.opt.x, "--x", run.opt.command);
  const auto x = parse_list(run.opt.x, "--x");
  const std::size_t n_mc = run.opt.n_mc.value_or(1000000);
  const auto rep = limit_stdf_eval(m, x, n_mc, run.seed);
  Json j = {{"x", x}, {"limit_stdf", {{"estimate", rep.estimate}, {"std_error", rep.std_error}, {"n_mc", rep.n_mc}}},
            {"classes", classes_json(rep.classes)}};
  j["asymptotic_independence_form"] = limit_stdf_ai(m, x);
  j["radial_w"] = m.radial.kind == RadialCopulaSpec::Kind::Gumbel ? "logistic" : "independence";
  Json per = Json::array();
  const auto part = m.partition;
  for (int k = 0; k < m.K(); ++k) {
    std::vector<double> xk;
    for (int i : part.blocks[k]) xk.push_back(x[i]);
    per.push_back(m.stdfs[k].closed_form() ? Json(m.stdfs[k](xk)) : Json(nullptr));
  }
  j["cluster_stdf"] = per;
  write_json(run, out_path(run), j);
  run.summary = {{"estimate", rep.estimate}, {"std_error", rep.std_error}};
}

void cmd_chi(Run& run) {
  const auto qs = parse_list(run.opt.q.empty() ? "0.5,0.6,0.7,0.8,0.9,0.95,0.99" : run.opt.q, "--q");
  Matrix u;
  int d = 0;
  std::string source;
  if (!run.opt.data.empty()) {
    if (!run.opt.config.empty()) load_config(run, false);
    const Matrix raw = load_data(run, 0);
    u = pseudo_observations(raw);
    source = "empirical";
  } else {
    const auto cfg = load_config(run, true);
    const std::size_t n = run.opt.n.value_or(100000);
    u = sample_clustered(cfg.model, n, run.seed);
    source = "simulated";
  }
  d = static_cast<int>(u.cols());
  const auto pairs = parse_pairs(run.opt.pairs, d);
  std::vector<std::vector<std::string>> rows;
  for (const auto& [i, j] : pairs)
    for (const auto& c : chi_curve_empirical(u, i, j, qs))
      rows.push_back({pair_label(i, j), format_number(c.q), format_number(c.chi), format_number(c.lo), format_number(c.hi),
                      std::to_string(c.joint)});
  const auto path = out_path(run);
  auto o = open_out(path);
  write_csv(o, {"pair", "q", "chi", "lo", "hi", "joint"}, rows);
  o.close();
  run.outputs.push_back(path);
  run.summary = {{"source", source}, {"rows", u.rows()}, {"pairs", pairs.size()}};
}

void cmd_tailcoeff(Run& run) {
  const auto cfg = load_config(run, true);
  const auto& m = cfg.model;
  const std::size_t n_mc = run.opt.n_mc.value_or(1000000);
  const auto pairs = parse_pairs(run.opt.pairs, m.dim());
  Matrix lam = Matrix::Constant(m.dim(), m.dim(), std::numeric_limits<double>::quiet_NaN());
  lam.diagonal().setOnes();
  Json list = Json::array();
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto [i, j] = pairs[p];
    const auto t = pairwise_limit_lambda(m, i, j, n_mc, run.seed + p);
    lam(i, j) = lam(j, i) = t.lambda;
    list.push_back({{"pair", {i + 1, j + 1}}, {"lambda", t.lambda}, {"std_error", t.std_error}, {"closed_form", t.closed_form}});
  }
  write_json(run, out_path(run), {{"pairs", list}, {"matrix", matrix_json(lam)}, {"classes", classes_json(classify_model(m))}});
  run.summary = {{"pairs", pairs.size()}};
}

// Fitting stages share the pseudo-observations and the estimated generators.
struct FitState {
  ModelConfig cfg;
  Matrix pobs;
  std::vector<double> theta_bar;
};

FitState fit_input(Run& run) {
  FitState s;
  s.cfg = load_config(run, false);
  s.pobs = pseudo_observations(load_data(run, s.cfg.model.dim()));
  return s;
}

Json fit_theta(FitState& s) {
  const auto& p = s.cfg.model.partition;
  const auto est = fit_pairwise(s.pobs, p, s.cfg.families);
  s.theta_bar = cluster_theta_bar(est.theta, p);
  for (int k = 0; k < p.size(); ++k) s.cfg.model.generators[k] = ArchimedeanGenerator(s.cfg.families[k], s.theta_bar[k]);
  Json pairs = Json::array();
  for (std::size_t a = 0; a < est.index.size(); ++a) {
    const auto& ix = est.index[a];
    const auto& f = est.fits[a];
    pairs.push_back({{"cluster", ix.k + 1}, {"pair", {ix.i + 1, ix.j + 1}}, {"theta", f.theta}, {"vartheta", f.vartheta},
                     {"tau_ev", f.tau_ev}, {"theta_at_bound", f.theta_at_bound}, {"vartheta_at_bound", f.vartheta_at_bound}});
  }
  Json fams = Json::array();
  for (auto f : s.cfg.families) fams.push_back(std::string(to_string(f)));
  return {{"families", fams}, {"theta_bar", s.theta_bar}, {"pairs", pairs}};
}

// Generator parameters from the config when every cluster has one, otherwise estimated.
void ensure_theta(FitState& s, Json& out) {
  if (!s.theta_bar.empty()) return;
  bool all = true;
  for (bool g : s.cfg.theta_given) all = all && g;
  if (all) {
    for (const auto& g : s.cfg.model.generators) s.theta_bar.push_back(g.theta());
    out["theta_source"] = "config";
  } else {
    out["theta"] = fit_theta(s);
    out["theta_source"] = "estimated";
  }
}

// Simplex grid with step 1/m; only the barycentre and vertices when the grid is large.
std::vector<std::vector<double>> simplex_grid(int d, int m) {
  std::vector<std::vector<double>> out;
  std::vector<int> c(d, 0);
  std::function<void(int, int)> rec = [&](int pos, int left) {
    if (out.size() > 5000) return;
    if (pos == d - 1) {
      c[pos] = left;
      std::vector<double> w(d);
      for (int i = 0; i < d; ++i) w[i] = static_cast<double>(c[i]) / m;
      out.push_back(w);
      return;
    }
    for (int v = left; v >= 0; --v) {
      c[pos] = v;
      rec(pos + 1, left - v);
    }
  };
  rec(0, m);
  if (out.size() > 5000) {
    out.clear();
    out.push_back(std::vector<double>(d, 1.0 / d));
    for (int i = 0; i < d; ++i) {
      std::vector<double> e(d, 0.0);
      e[i] = 1.0;
      out.push_back(e);
    }
  }
  return out;
}

Json fit_pickands(FitState& s) {
  const auto& p = s.cfg.model.partition;
  Json clusters = Json::array();
  for (int k = 0; k < p.size(); ++k) {
    const Matrix block = select_columns(s.pobs, p.blocks[k]);
    Json grid = Json::array();
    for (const auto& w : simplex_grid(static_cast<int>(p.blocks[k].size()), 10)) {
      const auto e = cfg_pickands(block, s.theta_bar[k], s.cfg.families[k], w);
      grid.push_back({{"w", w}, {"A", e.value}, {"raw", e.raw}, {"clamped", e.clamped}});
    }
    Json vars = Json::array();
    for (int i : p.blocks[k]) vars.push_back(i + 1);
    clusters.push_back({{"cluster", k + 1}, {"variables", vars}, {"grid", grid}});
  }
  const int d = s.cfg.model.dim();
  Matrix lam = Matrix::Constant(d, d, std::numeric_limits<double>::quiet_NaN());
  lam.diagonal().setOnes();
  for (int k = 0; k < p.size(); ++k)
    for (std::size_t a = 0; a < p.blocks[k].size(); ++a)
      for (std::size_t b = a + 1; b < p.blocks[k].size(); ++b) {
        const int i = p.blocks[k][a], j = p.blocks[k][b];
        lam(i, j) = lam(j, i) = cfg_lambda(s.pobs, p, s.theta_bar, s.cfg.families, i, j).lambda;
      }
  return {{"clusters", clusters}, {"lambda", matrix_json(lam)}};
}

Json fit_radial_stage(Run& run, FitState& s) {
  auto model = s.cfg.model;
  for (int k = 0; k < model.K(); ++k) model.generators[k] = ArchimedeanGenerator(s.cfg.families[k], s.theta_bar[k]);
  RadialMixture mix(model);
  const auto res = fit_radial(mix, s.pobs);
  Json pairs = Json::array();
  for (const auto& q : res.pairs)
    pairs.push_back({{"pair", {q.i + 1, q.j + 1}}, {"rho", q.rho}, {"loglik", q.loglik}, {"flat", q.flat}, {"at_bound", q.at_bound},
                     {"evaluations", q.evaluations}});
  const auto path = out_path(run, ".pairwise.csv");
  auto o = open_out(path);
  write_matrix_csv(o, default_header(model.dim()), res.pairwise);
  o.close();
  run.outputs.push_back(path);
  model.radial = RadialCopulaSpec::gaussian(res.rho_bar);
  Json out = {{"rho_bar", matrix_json(res.rho_bar)}, {"pairs", pairs}};
  try {
    out["model"] = model_to_json(model);
  } catch (const CapabilityError&) {
    out["model"] = nullptr;
  } catch (const ValidationError&) {
    // averaged correlations need not form a positive definite matrix
    out["model"] = nullptr;
  }
  return out;
}

TestScaling parse_scaling(const std::string& s) {
  if (s == "sqrt-n") return TestScaling::SqrtN;
  if (s == "raw") return TestScaling::Raw;
  throw ValidationError("invalid_value", "--scaling must be sqrt-n or raw");
}

Json homogeneity_json(const HomogeneityResult& h, const std::string& norm, TestScaling sc, std::size_t n_mc) {
  Json T = Json::array();
  for (Eigen::Index i = 0; i < h.jackknife.T.size(); ++i) T.push_back(h.jackknife.T(i));
  const double p = norm == "sup" ? h.test.p_sup : h.test.p_euclid;
  return {{"norm", norm},
          {"scaling", sc == TestScaling::SqrtN ? "sqrt-n" : "raw"},
          {"p_value", p},
          {"p_sup", h.test.p_sup},
          {"p_euclid", h.test.p_euclid},
          {"stat_sup", h.test.stat_sup},
          {"stat_euclid", h.test.stat_euclid},
          {"n_mc", n_mc},
          {"theta_bar", h.jackknife.theta_bar},
          {"T", T},
          {"sigma", matrix_json(h.jackknife.sigma)},
          {"clipped_eigenvalues", h.test.clipped_eigenvalues},
          {"min_eigenvalue", h.test.min_eigenvalue}};
}

Json run_test(Run& run, FitState& s) {
  if (run.opt.norm != "sup" && run.opt.norm != "euclid") throw ValidationError("invalid_value", "--norm must be sup or euclid");
  const auto sc = parse_scaling(run.opt.scaling);
  const std::size_t n_mc = run.opt.n_mc.value_or(10000);
  const auto h = homogeneity(s.pobs, s.cfg.model.partition, s.cfg.families, n_mc, run.seed, sc);
  return homogeneity_json(h, run.opt.norm, sc, n_mc);
}

void cmd_fit(Run& run) {
  const std::string stage = run.opt.stage.empty() ? "all" : run.opt.stage;
  auto s = fit_input(run);
  Json out = {{"stage", stage}, {"n", s.pobs.rows()}};
  auto stage_ctx = [&](const std::string& name, auto&& fn) {
    try {
      fn();
    } catch (const ValidationError& e) {
      throw ValidationError(e.code(), name + " stage: " + e.what(), e.pointer());
    } catch (const NumericalError& e) {
      throw NumericalError(name + " stage: " + e.what());
    } catch (const CapabilityError& e) {
      throw CapabilityError(name + " stage: " + e.what());
    }
  };
  if (stage == "theta" || stage == "all") stage_ctx("theta", [&] { out["theta"] = fit_theta(s); });
  if (stage == "pickands" || stage == "all")
    stage_ctx("pickands", [&] {
      ensure_theta(s, out);
      out["pickands"] = fit_pickands(s);
    });
  if (stage == "radial" || stage == "all")
    stage_ctx("radial", [&] {
      ensure_theta(s, out);
      out["radial"] = fit_radial_stage(run, s);
    });
  if (stage == "all") stage_ctx("test", [&] { out["homogeneity"] = run_test(run, s); });
  write_json(run, out_path(run), out);
  run.summary = {{"stage", stage}};
}

void cmd_test(Run& run) {
  auto s = fit_input(run);
  const auto j = run_test(run, s);
  write_json(run, out_path(run), j);
  run.summary = {{"p_sup", j["p_sup"]}, {"p_euclid", j["p_euclid"]}};
}

void cmd_preprocess(Run& run) {
  require(run.opt.data, "--data", run.opt.command);
  const auto t = read_csv(run.opt.data);
  const int dc = t.column(run.opt.date_column);
  if (dc < 0) throw ValidationError("missing_column", "no date column '" + run.opt.date_column + "' in " + run.opt.data);
  std::set<int> months;
  if (run.opt.months.empty())
    for (int m = 1; m <= 12; ++m) months.insert(m);
  else
    for (double m : parse_list(run.opt.months, "--months")) months.insert(static_cast<int>(m));
  BlockRule rule;
  if (run.opt.block == "month")
    rule = BlockRule::Month;
  else if (run.opt.block == "year")
    rule = BlockRule::Year;
  else
    throw ValidationError("invalid_value", "--block must be month or year");
  std::vector<Date> dates;
  std::vector<int> cols;
  for (std::size_t c = 0; c < t.header.size(); ++c)
    if (static_cast<int>(c) != dc) cols.push_back(static_cast<int>(c));
  Matrix v(static_cast<Eigen::Index>(t.rows.size()), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    dates.push_back(parse_iso_date(t.rows[r][dc]));
    for (std::size_t j = 0; j < cols.size(); ++j) {
      const auto& cell = t.rows[r][cols[j]];
      v(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) =
          (cell.empty() || cell == "NA" || cell == "nan" || cell == "NaN")
              ? std::numeric_limits<double>::quiet_NaN()
              : parse_number(cell, run.opt.data + " row " + std::to_string(r + 1) + " column '" + t.header[cols[j]] + "'");
    }
  }
  const auto bm = block_maxima(dates, v, months, rule);
  std::vector<std::string> header{"block"};
  for (int c : cols) header.push_back(t.header[c]);
  std::vector<std::vector<std::string>> rows;
  for (Eigen::Index r = 0; r < bm.values.rows(); ++r) {
    char label[16];
    const auto [y, m] = bm.blocks[static_cast<std::size_t>(r)];
    if (m > 0)
      std::snprintf(label, sizeof label, "%04d-%02d", y, m);
    else
      std::snprintf(label, sizeof label, "%04d", y);
    std::vector<std::string> row{label};
    for (Eigen::Index c = 0; c < bm.values.cols(); ++c) row.push_back(format_number(bm.values(r, c)));
    rows.push_back(std::move(row));
  }
  const auto path = out_path(run);
  auto o = open_out(path);
  write_csv(o, header, rows);
  o.close();
  run.outputs.push_back(path);
  run.summary = {{"blocks", bm.blocks.size()}, {"dropped_blocks", bm.dropped_blocks}, {"rows_used", bm.rows_used}};
}

// ---------------------------------------------------------------------------
// Manifests

Json versions() {
  return {{"archimax", ARCHIMAX_VERSION},
          {"compiler", __VERSION__},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." + std::to_string(EIGEN_MINOR_VERSION)},
          {"boost", BOOST_LIB_VERSION},
          {"nlohmann_json", std::to_string(NLOHMANN_JSON_VERSION_MAJOR) + "." + std::to_string(NLOHMANN_JSON_VERSION_MINOR) + "." +
                                std::to_string(NLOHMANN_JSON_VERSION_PATCH)}};
}

std::string manifest_path(const Run& run) { return run.opt.out + ".manifest.json"; }

void write_manifest(const Run& run, double seconds) {
  Json outs = Json::array();
  for (const auto& p : run.outputs) outs.push_back({{"path", p}, {"sha256", sha256_file(p)}});
  Json m = {{"command", run.opt.command},
            {"argv", run.argv},
            {"cwd", fs::current_path().string()},
            {"config", run.config_echo.is_null() ? Json(nullptr) : run.config_echo},
            {"config_path", run.opt.config.empty() ? Json(nullptr) : Json(run.opt.config)},
            {"seed", run.seed},
            {"threads", thread_count()},
            {"versions", versions()},
            {"timings", {{"seconds", seconds}}},
            {"summary", run.summary},
            {"outputs", outs}};
  std::ofstream o(manifest_path(run), std::ios::binary);
  if (!o) throw ValidationError("file_not_writable", "cannot write manifest '" + manifest_path(run) + "'");
  o << m.dump(2) << '\n';
}

int dispatch(const std::vector<std::string>& argv, bool print_summary);

// Re-runs the recorded command with outputs redirected into a separate
// directory and compares every output digest with the manifest.
int cmd_replay(const Options& opt) {
  if (opt.manifest.empty()) throw ValidationError("missing_argument", "replay needs --manifest");
  const Json m = read_json_file(opt.manifest);
  if (!m.contains("argv") || !m.contains("outputs")) throw ValidationError("invalid_manifest", "manifest lacks argv or outputs");
  auto argv = m["argv"].get<std::vector<std::string>>();
  std::string old_out;
  for (std::size_t i = 0; i + 1 < argv.size(); ++i)
    if (argv[i] == "--out") old_out = argv[i + 1];
  if (old_out.empty()) throw ValidationError("invalid_manifest", "recorded command has no --out");
  const fs::path dir = opt.out_dir.empty() ? fs::path(opt.manifest + ".replay") : fs::path(opt.out_dir);
  fs::create_directories(dir);
  // outputs are named after --out, so relocating it relocates all of them
  const std::string new_out = (dir / fs::path(old_out).filename()).string();
  for (std::size_t i = 0; i + 1 < argv.size(); ++i)
    if (argv[i] == "--out") argv[i + 1] = new_out;
  const fs::path cwd = m.value("cwd", std::string());
  for (std::size_t i = 0; i + 1 < argv.size(); ++i)
    if ((argv[i] == "--config" || argv[i] == "--data") && fs::path(argv[i + 1]).is_relative() && !cwd.empty())
      argv[i + 1] = (cwd / argv[i + 1]).string();
  const int rc = dispatch(argv, false);
  if (rc != 0) return rc;
  Json report = Json::array();
  bool ok = true;
  for (const auto& o : m["outputs"]) {
    const std::string path = o["path"].get<std::string>();
    std::string suffix = path.size() >= old_out.size() ? path.substr(old_out.size()) : "";
    const std::string replayed = new_out + suffix;
    const std::string digest = sha256_file(replayed);
    const bool same = digest == o["sha256"].get<std::string>();
    ok = ok && same;
    report.push_back({{"output", path}, {"replayed", replayed}, {"identical", same}});
  }
  std::cout << Json({{"replay", opt.manifest}, {"identical", ok}, {"outputs", report}}).dump(2) << '\n';
  return ok ? 0 : kExitNumerical;
}

int run_command(Options opt, const std::vector<std::string>& argv, bool print_summary) {
  if (opt.threads > 0) set_thread_cap(opt.threads);
  if (opt.command == "replay") return cmd_replay(opt);
  Run run;
  run.opt = std::move(opt);
  run.argv = argv;
  const auto t0 = std::chrono::steady_clock::now();
  const auto& c = run.opt.command;
  if (c == "simulate")
    cmd_simulate(run);
  else if (c == "eval-stdf")
    cmd_eval_stdf(run);
  else if (c == "chi")
    cmd_chi(run);
  else if (c == "tailcoeff")
    cmd_tailcoeff(run);
  else if (c == "fit")
    cmd_fit(run);
  else if (c == "test")
    cmd_test(run);
  else if (c == "preprocess")
    cmd_preprocess(run);
  else
    throw ValidationError("unknown_command", "unknown command '" + c + "'");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  write_manifest(run, secs);
  if (print_summary) std::cout << Json({{"command", c}, {"outputs", run.outputs}, {"summary", run.summary}}).dump() << '\n';
  return 0;
}

int report(int code, const std::string& tag, const std::string& msg, const std::string& pointer = {}) {
  Json e = {{"error", tag}, {"message", msg}};
  if (!pointer.empty()) e["pointer"] = pointer;
  std::cerr << e.dump() << '\n';
  return code;
}

int dispatch(const std::vector<std::string>& argv, bool print_summary) {
  CLI::App app{"Clustered Archimax copulas: simulation, extremal summaries, estimation and testing"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sc) {
    sc->add_option("--config", opt.config, "model configuration JSON");
    sc->add_option("--data", opt.data, "data CSV with header");
    sc->add_option("--out", opt.out, "output file");
    sc->add_option("--seed", opt.seed, "random seed (overrides the config seed)");
    sc->add_option("--n", opt.n, "number of simulated rows");
    sc->add_option("--n-mc", opt.n_mc, "Monte Carlo sample size");
    sc->add_option("--threads", opt.threads, "worker cap; results do not depend on it");
  };
  struct Sub {
    const char* name;
    const char* help;
  };
  const std::vector<Sub> subs{{"simulate", "draw copula observations"},
                              {"eval-stdf", "limiting stdf of the model at --x"},
                              {"chi", "chi-curves from --data or simulated from --config"},
                              {"tailcoeff", "limiting pairwise tail coefficients"},
                              {"fit", "estimate generators, Pickands functions and radial correlations"},
                              {"test", "homogeneity test of the generator parameters"},
                              {"preprocess", "block maxima of dated series"},
                              {"replay", "re-run a manifest and compare outputs"}};
  for (const auto& s : subs) {
    auto* sc = app.add_subcommand(s.name, s.help);
    sc->callback([&opt, name = std::string(s.name)] { opt.command = name; });
    const std::string n = s.name;
    if (n == "replay") {
      sc->add_option("--manifest", opt.manifest, "manifest JSON")->required();
      sc->add_option("--out-dir", opt.out_dir, "directory for replayed outputs");
      sc->add_option("--threads", opt.threads, "worker cap");
      continue;
    }
    add_common(sc);
    if (n == "eval-stdf") sc->add_option("--x", opt.x, "comma-separated point, one value per variable");
    if (n == "chi" || n == "tailcoeff") sc->add_option("--pairs", opt.pairs, "pairs as i-j,k-l (1-based); all pairs by default");
    if (n == "chi") sc->add_option("--q", opt.q, "comma-separated levels in (0,1)");
    if (n == "fit")
      sc->add_option("stage", opt.stage, "theta | pickands | radial | all")->check(CLI::IsMember({"theta", "pickands", "radial", "all"}));
    if (n == "fit" || n == "test") {
      sc->add_option("--norm", opt.norm, "sup | euclid")->check(CLI::IsMember({"sup", "euclid"}));
      sc->add_option("--scaling", opt.scaling, "sqrt-n | raw")->check(CLI::IsMember({"sqrt-n", "raw"}));
    }
    if (n == "preprocess") {
      sc->add_option("--months", opt.months, "comma-separated months kept (1-12); all by default");
      sc->add_option("--block", opt.block, "month | year")->check(CLI::IsMember({"month", "year"}));
      sc->add_option("--date-column", opt.date_column, "name of the date column");
    }
  }
  std::vector<std::string> rev(argv.rbegin(), argv.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    return report(kExitValidation, "usage", e.what());
  }
  return run_command(opt, argv, print_summary);
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    return dispatch(args, true);
  } catch (const ValidationError& e) {
    return report(kExitValidation, e.code(), e.what(), e.pointer());
  } catch (const CapabilityError& e) {
    return report(kExitCapability, "capability", e.what());
  } catch (const NumericalError& e) {
    return report(kExitNumerical, "numerical", e.what());
  } catch (const std::exception& e) {
    return report(kExitNumerical, "internal", e.what());
  }
}
