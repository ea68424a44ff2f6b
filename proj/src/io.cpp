#include "wfr/io.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "wfr/errors.hpp"

namespace wfr::io {

using nlohmann::json;

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw InputError("write failed: " + path);
}

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

namespace {

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string trim(std::string s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream ss(line);
  while (std::getline(ss, cur, ',')) out.push_back(trim(cur));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_real(const std::string& s, double& v) {
  if (s.empty()) return false;
  errno = 0;
  char* end = nullptr;
  v = std::strtod(s.c_str(), &end);
  return errno == 0 && end == s.c_str() + s.size() && std::isfinite(v);
}

}  // namespace

std::string format_dataset(const CurveDataset& data) {
  std::string out = "curve_id,role,time,value\n";
  auto emit = [&](const std::string& id, const char* role, const Eigen::VectorXd& t, const Eigen::VectorXd& v) {
    for (Eigen::Index j = 0; j < t.size(); ++j) out += id + "," + role + "," + fmt17(t(j)) + "," + fmt17(v(j)) + "\n";
  };
  for (const Curve& c : data) {
    emit(c.id, "x", c.s, c.x);
    emit(c.id, "y", c.t, c.y);
  }
  return out;
}

void save_dataset(const std::string& path, const CurveDataset& data) { write_text(path, format_dataset(data)); }

CurveDataset parse_dataset(const std::string& text, std::optional<Domain> x_domain, std::optional<Domain> y_domain,
                           bool require_y) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw InputError("empty dataset: missing header row");
  const auto header = split(line);
  if (header != std::vector<std::string>{"curve_id", "role", "time", "value"}) {
    throw InputError("line 1: expected header curve_id,role,time,value");
  }
  struct Rows {
    std::vector<std::pair<double, double>> x, y;
  };
  std::vector<std::string> order;
  std::map<std::string, Rows> rows;
  std::vector<std::string> malformed, outside;
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split(line);
    double t = 0.0, v = 0.0;
    if (f.size() != 4 || f[0].empty() || (f[1] != "x" && f[1] != "y") || !parse_real(f[2], t) ||
        !parse_real(f[3], v)) {
      malformed.push_back(std::to_string(lineno));
      continue;
    }
    const bool is_x = f[1] == "x";
    const auto& dom = is_x ? x_domain : y_domain;
    if (dom && (t < dom->lower || t > dom->upper)) {
      outside.push_back("line " + std::to_string(lineno) + " (" + f[0] + ", " + f[1] + ", " + f[2] + ")");
      continue;
    }
    auto [it, fresh] = rows.try_emplace(f[0]);
    if (fresh) order.push_back(f[0]);
    (is_x ? it->second.x : it->second.y).emplace_back(t, v);
  }
  auto join = [](const std::vector<std::string>& v, std::size_t limit) {
    std::string s;
    for (std::size_t i = 0; i < v.size() && i < limit; ++i) s += (i ? ", " : "") + v[i];
    if (v.size() > limit) s += ", ... (" + std::to_string(v.size()) + " total)";
    return s;
  };
  if (!malformed.empty()) throw InputError("malformed rows at lines " + join(malformed, 20));
  if (!outside.empty()) throw DomainError("times outside the basis domain: " + join(outside, 20));
  CurveDataset data;
  for (const std::string& id : order) {
    Rows& r = rows[id];
    if (r.x.empty()) throw DomainError("curve " + id + " has no x rows");
    if (require_y && r.y.empty()) throw DomainError("curve " + id + " has no y rows");
    auto fill = [](std::vector<std::pair<double, double>>& v, Eigen::VectorXd& t, Eigen::VectorXd& val) {
      std::stable_sort(v.begin(), v.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
      t.resize(static_cast<Eigen::Index>(v.size()));
      val.resize(t.size());
      for (std::size_t j = 0; j < v.size(); ++j) {
        t(static_cast<Eigen::Index>(j)) = v[j].first;
        val(static_cast<Eigen::Index>(j)) = v[j].second;
      }
    };
    Curve c;
    c.id = id;
    fill(r.x, c.s, c.x);
    fill(r.y, c.t, c.y);
    data.push_back(std::move(c));
  }
  return data;
}

CurveDataset load_dataset(const std::string& path, std::optional<Domain> x_domain, std::optional<Domain> y_domain,
                          bool require_y) {
  try {
    return parse_dataset(read_text(path), x_domain, y_domain, require_y);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  } catch (const DomainError& e) {
    throw DomainError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- config

namespace {

void check_keys(const json& j, const std::string& where, std::initializer_list<const char*> allowed) {
  if (!j.is_object()) throw InputError(where + ": expected an object");
  const std::set<std::string> ok(allowed.begin(), allowed.end());
  for (const auto& [k, v] : j.items()) {
    if (!ok.count(k)) throw InputError(where + ": unknown key '" + k + "'");
  }
}

template <class T>
void get_if(const json& j, const char* key, T& out, const std::string& where) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const json::exception&) {
    throw InputError(where + "." + key + ": wrong type");
  }
}

BasisSpec parse_basis(const json& j, const std::string& where) {
  check_keys(j, where, {"lower", "upper", "n_interior", "degree", "interior_knots"});
  BasisSpec b;
  get_if(j, "lower", b.lower, where);
  get_if(j, "upper", b.upper, where);
  get_if(j, "n_interior", b.n_interior, where);
  get_if(j, "degree", b.degree, where);
  get_if(j, "interior_knots", b.interior_knots, where);
  return b;
}

GridSpec parse_grid(const json& j, const std::string& where) {
  check_keys(j, where, {"kind", "nu_min", "nu_max", "size"});
  GridSpec g;
  std::string kind = "random";
  get_if(j, "kind", kind, where);
  if (kind == "random") g.kind = GridKind::random;
  else if (kind == "equal") g.kind = GridKind::equal;
  else throw InputError(where + ".kind: expected 'random' or 'equal'");
  get_if(j, "nu_min", g.nu_min, where);
  get_if(j, "nu_max", g.nu_max, where);
  get_if(j, "size", g.size, where);
  if (g.nu_min < 1 || g.nu_max < g.nu_min || g.size < 1) throw InputError(where + ": invalid grid sizes");
  return g;
}

SplineBasis make_basis(const BasisSpec& b) {
  if (!b.interior_knots.empty()) return SplineBasis(b.lower, b.upper, b.interior_knots, b.degree);
  return SplineBasis::uniform(b.lower, b.upper, b.n_interior, b.degree);
}

}  // namespace

RunConfig parse_run_config(const json& j) {
  check_keys(j, "config", {"x_basis", "y_basis", "x_warp_knots", "y_warp_knots", "p1", "p2", "fit", "bootstrap",
                           "inference", "simulate", "study"});
  RunConfig rc;
  if (j.contains("x_basis")) rc.x_basis = parse_basis(j["x_basis"], "x_basis");
  if (j.contains("y_basis")) rc.y_basis = parse_basis(j["y_basis"], "y_basis");
  get_if(j, "x_warp_knots", rc.x_warp_knots, "config");
  get_if(j, "y_warp_knots", rc.y_warp_knots, "config");
  get_if(j, "p1", rc.p1, "config");
  get_if(j, "p2", rc.p2, "config");
  if (j.contains("fit")) {
    const json& f = j["fit"];
    check_keys(f, "fit",
               {"max_iter", "rel_tol", "grad_tol", "mode_max_iter", "multistart", "mean_nodes", "init_warp_var", "seed",
                "threads"});
    get_if(f, "max_iter", rc.fit.max_iter, "fit");
    get_if(f, "rel_tol", rc.fit.rel_tol, "fit");
    get_if(f, "grad_tol", rc.fit.mode.grad_tol, "fit");
    get_if(f, "mode_max_iter", rc.fit.mode.max_iter, "fit");
    get_if(f, "multistart", rc.fit.mode.multistart, "fit");
    get_if(f, "mean_nodes", rc.fit.mode.mean_nodes, "fit");
    if (rc.fit.mode.mean_nodes < 0 || rc.fit.mode.mean_nodes > 9) throw InputError("fit.mean_nodes must lie in 0..9");
    get_if(f, "init_warp_var", rc.fit.init_warp_var, "fit");
    get_if(f, "seed", rc.fit.seed, "fit");
    get_if(f, "threads", rc.fit.threads, "fit");
  }
  if (j.contains("bootstrap")) {
    check_keys(j["bootstrap"], "bootstrap", {"reps"});
    get_if(j["bootstrap"], "reps", rc.boot_reps, "bootstrap");
  }
  if (j.contains("inference")) {
    check_keys(j["inference"], "inference", {"level"});
    get_if(j["inference"], "level", rc.level, "inference");
    if (!(rc.level > 0.0 && rc.level < 1.0)) throw InputError("inference.level must lie in (0, 1)");
  }
  if (j.contains("simulate")) {
    const json& s = j["simulate"];
    check_keys(s, "simulate", {"model", "n", "zero_a", "grid"});
    get_if(s, "model", rc.simulate.model, "simulate");
    get_if(s, "n", rc.simulate.n, "simulate");
    get_if(s, "zero_a", rc.simulate.zero_a, "simulate");
    if (s.contains("grid")) rc.simulate.grid = parse_grid(s["grid"], "simulate.grid");
  }
  if (j.contains("study")) {
    const json& s = j["study"];
    check_keys(s, "study", {"models", "sizes", "reps", "seed", "estimation", "prediction", "inference", "n_test",
                            "test_grid", "boot_reps", "grid", "threads"});
    StudyConfig& st = rc.study;
    get_if(s, "models", st.models, "study");
    get_if(s, "sizes", st.sizes, "study");
    get_if(s, "reps", st.reps, "study");
    get_if(s, "seed", st.seed, "study");
    get_if(s, "estimation", st.estimation, "study");
    get_if(s, "prediction", st.prediction, "study");
    get_if(s, "inference", st.inference, "study");
    get_if(s, "n_test", st.n_test, "study");
    get_if(s, "test_grid", st.test_grid, "study");
    get_if(s, "boot_reps", st.boot_reps, "study");
    get_if(s, "threads", st.threads, "study");
    if (s.contains("grid")) st.grid = parse_grid(s["grid"], "study.grid");
  }
  rc.study.fit = rc.fit;
  return rc;
}

RunConfig load_run_config(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  try {
    return parse_run_config(j);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

ModelConfig make_model_config(const RunConfig& rc) {
  return ModelConfig(make_basis(rc.x_basis), make_basis(rc.y_basis),
                     WarpSpec(rc.x_basis.lower, rc.x_basis.upper, rc.x_warp_knots),
                     WarpSpec(rc.y_basis.lower, rc.y_basis.upper, rc.y_warp_knots), rc.p1, rc.p2);
}

// ---------------------------------------------------------------- model file

std::string hex_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

double parse_hex_double(const std::string& s) {
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size()) throw InputError("invalid number '" + s + "'");
  return v;
}

namespace {

json hex_array(const double* p, std::size_t n) {
  json a = json::array();
  for (std::size_t i = 0; i < n; ++i) a.push_back(hex_double(p[i]));
  return a;
}

std::vector<double> hex_vector(const json& a, const std::string& where) {
  if (!a.is_array()) throw InputError(where + ": expected an array");
  std::vector<double> out;
  for (const auto& e : a) {
    if (e.is_string()) out.push_back(parse_hex_double(e.get<std::string>()));
    else if (e.is_number()) out.push_back(e.get<double>());
    else throw InputError(where + ": expected numbers");
  }
  return out;
}

json hex_matrix(const Eigen::MatrixXd& m) {
  const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = m;
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", hex_array(r.data(), static_cast<std::size_t>(r.size()))}};
}

Eigen::MatrixXd matrix_from(const json& j, const std::string& where) {
  if (!j.is_object() || !j.contains("rows") || !j.contains("cols") || !j.contains("data")) {
    throw InputError(where + ": expected {rows, cols, data}");
  }
  const auto rows = j["rows"].get<Eigen::Index>(), cols = j["cols"].get<Eigen::Index>();
  const std::vector<double> d = hex_vector(j["data"], where);
  if (rows < 0 || cols < 0 || static_cast<Eigen::Index>(d.size()) != rows * cols) {
    throw InputError(where + ": data length does not match shape");
  }
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = d[static_cast<std::size_t>(i * cols + k)];
  return m;
}

Eigen::VectorXd vector_from(const json& j, const std::string& where) {
  const std::vector<double> d = hex_vector(j, where);
  return Eigen::Map<const Eigen::VectorXd>(d.data(), static_cast<Eigen::Index>(d.size()));
}

json basis_json(const SplineBasis& b) {
  return json{{"lower", hex_double(b.lower())},
              {"upper", hex_double(b.upper())},
              {"degree", b.degree()},
              {"interior_knots", hex_array(b.interior_knots().data(), b.interior_knots().size())}};
}

SplineBasis basis_from(const json& j, const std::string& where) {
  return SplineBasis(parse_hex_double(j.at("lower").get<std::string>()),
                     parse_hex_double(j.at("upper").get<std::string>()), hex_vector(j.at("interior_knots"), where),
                     j.at("degree").get<int>());
}

json warp_json(const WarpSpec& w) {
  return json{{"lower", hex_double(w.lower())},
              {"upper", hex_double(w.upper())},
              {"knots", hex_array(w.knots().data(), w.knots().size())}};
}

WarpSpec warp_from(const json& j, const std::string& where) {
  return WarpSpec(parse_hex_double(j.at("lower").get<std::string>()), parse_hex_double(j.at("upper").get<std::string>()),
                  hex_vector(j.at("knots"), where));
}

}  // namespace

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json r = json::array();
    for (Eigen::Index k = 0; k < m.cols(); ++k) r.push_back(m(i, k));
    rows.push_back(r);
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw InputError("expected a nested array");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const auto cols = rows > 0 ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Eigen::MatrixXd m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i) {
    if (static_cast<Eigen::Index>(j[i].size()) != cols) throw InputError("ragged matrix");
    for (Eigen::Index k = 0; k < cols; ++k) m(i, k) = j[i][k].get<double>();
  }
  return m;
}

json model_to_json(const ModelFile& m) {
  const ModelConfig& c = m.config;
  const ModelParams& p = m.params;
  json j;
  j["format_version"] = kModelFormatVersion;
  j["config"] = json{{"x_basis", basis_json(c.basis(Side::x))},
                     {"y_basis", basis_json(c.basis(Side::y))},
                     {"x_warp", warp_json(c.warp(Side::x))},
                     {"y_warp", warp_json(c.warp(Side::y))},
                     {"p1", c.p1()},
                     {"p2", c.p2()}};
  j["params"] = json{{"A", hex_matrix(p.A)},
                     {"sigma_e", hex_array(p.sigma_e.data(), static_cast<std::size_t>(p.sigma_e.size()))},
                     {"sigma_w", hex_matrix(p.sigma_w)},
                     {"m_x", hex_array(p.m_x.data(), static_cast<std::size_t>(p.m_x.size()))},
                     {"m_y", hex_array(p.m_y.data(), static_cast<std::size_t>(p.m_y.size()))},
                     {"C", hex_matrix(p.C)},
                     {"D", hex_matrix(p.D)},
                     {"sigma2_eps", hex_double(p.sigma2_eps)},
                     {"sigma2_eta", hex_double(p.sigma2_eta)}};
  j["loglik_trace"] = hex_array(m.loglik_trace.data(), m.loglik_trace.size());
  j["converged"] = m.converged;
  j["iterations"] = m.iterations;
  return j;
}

ModelFile model_from_json(const json& j) {
  try {
    const int version = j.at("format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw InputError("unsupported model format version " + std::to_string(version));
    }
    const json& c = j.at("config");
    ModelFile m{ModelConfig(basis_from(c.at("x_basis"), "x_basis"), basis_from(c.at("y_basis"), "y_basis"),
                            warp_from(c.at("x_warp"), "x_warp"), warp_from(c.at("y_warp"), "y_warp"),
                            c.at("p1").get<int>(), c.at("p2").get<int>()),
                {},
                {},
                false,
                0};
    const json& p = j.at("params");
    m.params.A = matrix_from(p.at("A"), "A");
    m.params.sigma_e = vector_from(p.at("sigma_e"), "sigma_e");
    m.params.sigma_w = matrix_from(p.at("sigma_w"), "sigma_w");
    m.params.m_x = vector_from(p.at("m_x"), "m_x");
    m.params.m_y = vector_from(p.at("m_y"), "m_y");
    m.params.C = matrix_from(p.at("C"), "C");
    m.params.D = matrix_from(p.at("D"), "D");
    m.params.sigma2_eps = parse_hex_double(p.at("sigma2_eps").get<std::string>());
    m.params.sigma2_eta = parse_hex_double(p.at("sigma2_eta").get<std::string>());
    m.loglik_trace = hex_vector(j.at("loglik_trace"), "loglik_trace");
    m.converged = j.at("converged").get<bool>();
    m.iterations = j.at("iterations").get<int>();
    check_shapes(m.config, m.params);
    return m;
  } catch (const json::exception& e) {
    throw InputError(std::string("model file: ") + e.what());
  } catch (const DomainError& e) {
    throw InputError(std::string("model file: ") + e.what());
  }
}

void save_model(const std::string& path, const ModelFile& m) { write_text(path, model_to_json(m).dump(2) + "\n"); }

ModelFile load_model(const std::string& path) {
  json j;
  try {
    j = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw InputError(path + ": " + e.what());
  }
  try {
    return model_from_json(j);
  } catch (const InputError& e) {
    throw InputError(path + ": " + e.what());
  }
}

// ---------------------------------------------------------------- study

namespace {

// JSON has no NaN: store non-finite values as null.
json num(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }
double num_from(const json& j) { return j.is_null() ? std::nan("") : j.get<double>(); }

json bias_rmse(const BiasRmse& b) { return json{{"bias", num(b.bias)}, {"rmse", num(b.rmse)}}; }
BiasRmse bias_rmse_from(const json& j) { return {num_from(j.at("bias")), num_from(j.at("rmse"))}; }

json nums(const std::vector<double>& v) {
  json a = json::array();
  for (double x : v) a.push_back(num(x));
  return a;
}
std::vector<double> nums_from(const json& j) {
  std::vector<double> v;
  for (const auto& x : j) v.push_back(num_from(x));
  return v;
}

std::string cell(double v) { return std::isfinite(v) ? fmt17(v) : "NA"; }

}  // namespace

json study_to_json(const StudyReport& r) {
  json j;
  j["estimation"] = json::array();
  for (const auto& c : r.estimation) {
    json phi = json::array(), psi = json::array();
    for (const auto& b : c.errors.phi) phi.push_back(bias_rmse(b));
    for (const auto& b : c.errors.psi) psi.push_back(bias_rmse(b));
    j["estimation"].push_back(json{{"model", c.model},
                                   {"n", c.n},
                                   {"estimator", c.estimator},
                                   {"used", c.used},
                                   {"failed", c.failed},
                                   {"beta", bias_rmse(c.errors.beta)},
                                   {"mu_x", bias_rmse(c.errors.mu_x)},
                                   {"mu_y", bias_rmse(c.errors.mu_y)},
                                   {"phi", phi},
                                   {"psi", psi}});
  }
  j["prediction"] = json::array();
  for (const auto& c : r.prediction) {
    j["prediction"].push_back(json{{"model", c.model},
                                   {"n", c.n},
                                   {"estimator", c.estimator},
                                   {"rmse", num(c.rmse)},
                                   {"used", c.used},
                                   {"failed", c.failed}});
  }
  j["inference"] = json::array();
  for (const auto& c : r.inference) {
    j["inference"].push_back(
        json{{"model", c.model}, {"n", c.n}, {"method", c.method}, {"tail", nums(c.tail)}, {"used", c.used}});
  }
  j["fits"] = json::array();
  for (const auto& f : r.fits) {
    j["fits"].push_back(json{{"model", f.model},
                             {"n", f.n},
                             {"rep", f.rep},
                             {"estimator", f.estimator},
                             {"failed", f.failed},
                             {"error", f.error},
                             {"converged", f.converged},
                             {"iterations", f.iterations},
                             {"loglik", num(f.loglik)},
                             {"max_decrease_rel", num(f.max_decrease_rel)},
                             {"c_orthonormality", num(f.constraints.c_orthonormality)},
                             {"d_orthonormality", num(f.constraints.d_orthonormality)},
                             {"gamma_offdiag_rel", num(f.constraints.gamma_offdiag_rel)},
                             {"lambda_offdiag", num(f.constraints.lambda_offdiag)},
                             {"lambda_nonincreasing", f.constraints.lambda_nonincreasing},
                             {"sigma_w_min_eig_rel", num(f.constraints.sigma_w_min_eig_rel)}});
  }
  return j;
}

StudyReport study_from_json(const json& j) {
  StudyReport r;
  try {
    for (const auto& e : j.at("estimation")) {
      EstimationCell c;
      c.model = e.at("model").get<int>();
      c.n = e.at("n").get<int>();
      c.estimator = e.at("estimator").get<std::string>();
      c.used = e.at("used").get<int>();
      c.failed = e.at("failed").get<int>();
      c.errors.beta = bias_rmse_from(e.at("beta"));
      c.errors.mu_x = bias_rmse_from(e.at("mu_x"));
      c.errors.mu_y = bias_rmse_from(e.at("mu_y"));
      for (const auto& b : e.at("phi")) c.errors.phi.push_back(bias_rmse_from(b));
      for (const auto& b : e.at("psi")) c.errors.psi.push_back(bias_rmse_from(b));
      r.estimation.push_back(std::move(c));
    }
    for (const auto& e : j.at("prediction")) {
      r.prediction.push_back(PredictionCell{e.at("model").get<int>(), e.at("n").get<int>(),
                                            e.at("estimator").get<std::string>(), num_from(e.at("rmse")),
                                            e.at("used").get<int>(), e.at("failed").get<int>()});
    }
    for (const auto& e : j.at("inference")) {
      r.inference.push_back(InferenceCell{e.at("model").get<int>(), e.at("n").get<int>(),
                                          e.at("method").get<std::string>(),
                                          nums_from(e.at("tail")), e.at("used").get<int>()});
    }
    for (const auto& e : j.at("fits")) {
      FitRecord f;
      f.model = e.at("model").get<int>();
      f.n = e.at("n").get<int>();
      f.rep = e.at("rep").get<int>();
      f.estimator = e.at("estimator").get<std::string>();
      f.failed = e.at("failed").get<bool>();
      f.error = e.at("error").get<std::string>();
      f.converged = e.at("converged").get<bool>();
      f.iterations = e.at("iterations").get<int>();
      f.loglik = num_from(e.at("loglik"));
      f.max_decrease_rel = num_from(e.at("max_decrease_rel"));
      f.constraints.c_orthonormality = num_from(e.at("c_orthonormality"));
      f.constraints.d_orthonormality = num_from(e.at("d_orthonormality"));
      f.constraints.gamma_offdiag_rel = num_from(e.at("gamma_offdiag_rel"));
      f.constraints.lambda_offdiag = num_from(e.at("lambda_offdiag"));
      f.constraints.lambda_nonincreasing = e.at("lambda_nonincreasing").get<bool>();
      f.constraints.sigma_w_min_eig_rel = num_from(e.at("sigma_w_min_eig_rel"));
      r.fits.push_back(std::move(f));
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("study summary: ") + e.what());
  }
  return r;
}

std::string estimation_table_csv(const StudyReport& r) {
  std::size_t pmax = 0;
  for (const auto& c : r.estimation) pmax = std::max({pmax, c.errors.phi.size(), c.errors.psi.size()});
  std::string out = "model,n,estimator,used,failed,beta_bias,beta_rmse,mu_x_bias_x10,mu_x_rmse_x10,mu_y_bias_x10,mu_y_rmse_x10";
  for (std::size_t k = 1; k <= pmax; ++k) out += ",phi" + std::to_string(k) + "_bias,phi" + std::to_string(k) + "_rmse";
  for (std::size_t k = 1; k <= pmax; ++k) out += ",psi" + std::to_string(k) + "_bias,psi" + std::to_string(k) + "_rmse";
  out += "\n";
  for (const auto& c : r.estimation) {
    const FunctionalErrors& e = c.errors;
    out += std::to_string(c.model) + "," + std::to_string(c.n) + "," + c.estimator + "," + std::to_string(c.used) +
           "," + std::to_string(c.failed) + "," + cell(e.beta.bias) + "," + cell(e.beta.rmse) + "," +
           cell(10 * e.mu_x.bias) + "," + cell(10 * e.mu_x.rmse) + "," + cell(10 * e.mu_y.bias) + "," +
           cell(10 * e.mu_y.rmse);
    for (const auto* v : {&e.phi, &e.psi}) {
      for (std::size_t k = 0; k < pmax; ++k) {
        if (k < v->size()) out += "," + cell((*v)[k].bias) + "," + cell((*v)[k].rmse);
        else out += ",,";
      }
    }
    out += "\n";
  }
  return out;
}

std::string prediction_table_csv(const StudyReport& r) {
  std::string out = "model,n,estimator,rmse,used,failed\n";
  for (const auto& c : r.prediction) {
    out += std::to_string(c.model) + "," + std::to_string(c.n) + "," + c.estimator + "," + cell(c.rmse) + "," +
           std::to_string(c.used) + "," + std::to_string(c.failed) + "\n";
  }
  return out;
}

std::string inference_table_csv(const StudyReport& r) {
  std::size_t width = 1;
  for (const auto& c : r.inference) width = std::max(width, c.tail.size());
  std::string out = "model,n,method,used,Q";
  for (std::size_t k = 1; k < width; ++k) out += ",Z1" + std::to_string(k);
  out += "\n";
  for (const auto& c : r.inference) {
    out += std::to_string(c.model) + "," + std::to_string(c.n) + "," + c.method + "," + std::to_string(c.used);
    for (std::size_t k = 0; k < width; ++k) out += "," + (k < c.tail.size() ? cell(c.tail[k]) : std::string());
    out += "\n";
  }
  return out;
}

std::string fits_csv(const StudyReport& r) {
  std::string out =
      "model,n,rep,estimator,failed,converged,iterations,loglik,max_decrease_rel,c_orthonormality,d_orthonormality,"
      "gamma_offdiag_rel,lambda_offdiag,error\n";
  for (const auto& f : r.fits) {
    std::string err = f.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    out += std::to_string(f.model) + "," + std::to_string(f.n) + "," + std::to_string(f.rep) + "," + f.estimator +
           "," + (f.failed ? "1" : "0") + "," + (f.converged ? "1" : "0") + "," + std::to_string(f.iterations) + "," +
           cell(f.loglik) + "," + cell(f.max_decrease_rel) + "," + cell(f.constraints.c_orthonormality) + "," +
           cell(f.constraints.d_orthonormality) + "," + cell(f.constraints.gamma_offdiag_rel) + "," +
           cell(f.constraints.lambda_offdiag) + "," + err + "\n";
  }
  return out;
}

}  // namespace wfr::io
