#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wfr/emfit.hpp"
#include "wfr/model.hpp"
#include "wfr/simstudy.hpp"

namespace wfr::io {

struct Domain {
  double lower = 0.0;
  double upper = 1.0;
};

/// Long CSV: curve_id,role,time,value with 17 significant digits.
void save_dataset(const std::string& path, const CurveDataset& data);
std::string format_dataset(const CurveDataset& data);

/// Reads a long CSV. Rows are grouped by curve_id in order of first
/// appearance and sorted by time within each role. Throws InputError naming
/// line numbers for malformed rows and DomainError for out-of-domain times
/// or (when require_y) curves without y rows.
CurveDataset load_dataset(const std::string& path, std::optional<Domain> x_domain = {},
                          std::optional<Domain> y_domain = {}, bool require_y = true);
CurveDataset parse_dataset(const std::string& text, std::optional<Domain> x_domain = {},
                           std::optional<Domain> y_domain = {}, bool require_y = true);

struct BasisSpec {
  double lower = 0.0;
  double upper = 1.0;
  int n_interior = 10;
  int degree = 3;
  std::vector<double> interior_knots;  // overrides n_interior when nonempty
};

struct SimulateSpec {
  int model = 1;
  int n = 50;
  bool zero_a = false;
  GridSpec grid;
};

/// Contents of a JSON run configuration. Every section is optional.
struct RunConfig {
  BasisSpec x_basis, y_basis;
  std::vector<double> x_warp_knots, y_warp_knots;
  int p1 = 1, p2 = 1;
  FitConfig fit;
  int boot_reps = 50;
  double level = 0.10;
  SimulateSpec simulate;
  StudyConfig study;
};

RunConfig parse_run_config(const nlohmann::json& j);
RunConfig load_run_config(const std::string& path);
ModelConfig make_model_config(const RunConfig& rc);

/// Exact text encoding of a double (C99 hex-float).
std::string hex_double(double v);
double parse_hex_double(const std::string& s);

struct ModelFile {
  ModelConfig config;
  ModelParams params;
  std::vector<double> loglik_trace;
  bool converged = false;
  int iterations = 0;
};

inline constexpr int kModelFormatVersion = 1;

nlohmann::json model_to_json(const ModelFile& m);
ModelFile model_from_json(const nlohmann::json& j);
void save_model(const std::string& path, const ModelFile& m);
ModelFile load_model(const std::string& path);

/// Row-major numeric array helpers shared by the CLI outputs.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

/// Study results: summary JSON plus Table-shaped CSVs.
nlohmann::json study_to_json(const StudyReport& r);
StudyReport study_from_json(const nlohmann::json& j);
std::string estimation_table_csv(const StudyReport& r);
std::string prediction_table_csv(const StudyReport& r);
std::string inference_table_csv(const StudyReport& r);
std::string fits_csv(const StudyReport& r);

void write_text(const std::string& path, const std::string& text);
std::string read_text(const std::string& path);

}  // namespace wfr::io
