// wfr: fit, predict, simulate, bootstrap, infer, report, study.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <omp.h>

#include "wfr/emfit.hpp"
#include "wfr/errors.hpp"
#include "wfr/estep.hpp"
#include "wfr/inference.hpp"
#include "wfr/io.hpp"
#include "wfr/linalg.hpp"
#include "wfr/predict.hpp"
#include "wfr/simstudy.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace wfr;

namespace {

struct Common {
  std::optional<std::uint64_t> seed;
  int threads = 0;
  std::string out;
};

// Files created by the running command; removed if it fails.
std::vector<std::string> g_outputs;

void emit(const std::string& path, const std::string& text) {
  g_outputs.push_back(path);
  io::write_text(path, text);
}

void remove_outputs() {
  std::error_code ec;
  for (auto it = g_outputs.rbegin(); it != g_outputs.rend(); ++it) fs::remove(*it, ec);
  g_outputs.clear();
}

io::RunConfig config_or_default(const std::string& path) {
  return path.empty() ? io::RunConfig{} : io::load_run_config(path);
}

void apply_common(const Common& c, io::RunConfig& rc) {
  if (c.threads > 0) {
    omp_set_num_threads(c.threads);
    rc.fit.threads = c.threads;
    rc.study.threads = c.threads;
  }
  if (c.seed) {
    rc.fit.seed = *c.seed;
    rc.study.seed = *c.seed;
  }
  rc.study.fit = rc.fit;
}

io::Domain domain(const ModelConfig& mc, Side s) { return {mc.basis(s).lower(), mc.basis(s).upper()}; }

void cmd_fit(const std::string& cfg_path, const std::string& data_path, const Common& c) {
  io::RunConfig rc = io::load_run_config(cfg_path);
  apply_common(c, rc);
  const ModelConfig mc = io::make_model_config(rc);
  const CurveDataset data = io::load_dataset(data_path, domain(mc, Side::x), domain(mc, Side::y));
  const FitResult fr = fit(mc, data, rc.fit);
  const io::ModelFile mf{mc, fr.params, fr.loglik_trace, fr.converged, fr.iterations};
  const std::string out = c.out.empty() ? "model.json" : c.out;
  emit(out, io::model_to_json(mf).dump(2) + "\n");
  std::string trace = "iteration,loglik\n";
  for (std::size_t k = 0; k < fr.loglik_trace.size(); ++k) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%zu,%.17g\n", k, fr.loglik_trace[k]);
    trace += buf;
  }
  emit(out + ".trace.csv", trace);
  std::cout << "fit: " << data.size() << " curves, " << fr.iterations << " iterations, "
            << (fr.converged ? "converged" : "not converged") << ", loglik " << fr.loglik_trace.back() << "\n";
}

void cmd_predict(const std::string& model_path, const std::string& data_path, const std::string& cfg_path,
                 int grid_size, const std::string& scores_path, const Common& c) {
  io::RunConfig rc = config_or_default(cfg_path);
  apply_common(c, rc);
  const io::ModelFile mf = io::load_model(model_path);
  const ModelConfig& mc = mf.config;
  const CurveDataset data = io::load_dataset(data_path, domain(mc, Side::x), domain(mc, Side::y), false);
  const io::Domain dy = domain(mc, Side::y);
  std::vector<Eigen::VectorXd> grids;
  for (const Curve& cv : data) {
    if (cv.t.size() > 0) {
      grids.push_back(cv.t);
    } else {
      Eigen::VectorXd g(grid_size);
      for (int j = 0; j < grid_size; ++j)
        g(j) = grid_size == 1 ? dy.lower : dy.lower + (dy.upper - dy.lower) * j / (grid_size - 1);
      grids.push_back(g);
    }
  }
  const auto preds = predict_all(mc, mf.params, data, grids, rc.fit.mode, rc.fit.threads);
  std::string out = "curve_id,t,yhat\n";
  json side = json::array();
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (Eigen::Index j = 0; j < preds[i].grid.size(); ++j) {
      char buf[96];
      std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", preds[i].grid(j), preds[i].values(j));
      out += data[i].id + buf;
    }
    side.push_back(json{{"curve_id", data[i].id},
                        {"v", std::vector<double>(preds[i].v.data(), preds[i].v.data() + preds[i].v.size())},
                        {"theta_y", std::vector<double>(preds[i].theta_y.data(),
                                                        preds[i].theta_y.data() + preds[i].theta_y.size())},
                        {"converged", preds[i].converged}});
  }
  emit(c.out.empty() ? "predictions.csv" : c.out, out);
  if (!scores_path.empty()) emit(scores_path, side.dump(2) + "\n");
  std::cout << "predict: " << preds.size() << " curves\n";
}

void cmd_simulate(const std::string& cfg_path, const Common& c) {
  io::RunConfig rc = config_or_default(cfg_path);
  apply_common(c, rc);
  const std::uint64_t seed = c.seed.value_or(1);
  const SimTruth truth = sim_truth(rc.simulate.model, rc.simulate.zero_a);
  const SimData sd = generate(truth, rc.simulate.n, seed, rc.simulate.grid);
  const std::string out = c.out.empty() ? "data.csv" : c.out;
  emit(out, io::format_dataset(sd.data));
  json latent = json::array();
  auto vec = [](const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
  for (std::size_t i = 0; i < sd.latent.size(); ++i) {
    json e{{"curve_id", sd.data[i].id}, {"w", vec(sd.latent[i].w)}, {"z", vec(sd.latent[i].z)}};
    if (!truth.hermite) {
      e["x_warp_coef"] = vec(sd.latent[i].x_warp_coef);
      e["y_warp_coef"] = vec(sd.latent[i].y_warp_coef);
    }
    latent.push_back(e);
  }
  json t{{"model", truth.model},
         {"n", rc.simulate.n},
         {"seed", seed},
         {"p", truth.p},
         {"x_warp_knots", truth.x_warp.knots()},
         {"y_warp_knots", truth.y_warp.knots()},
         {"A", io::matrix_to_json(truth.A)},
         {"sigma_w", io::matrix_to_json(truth.sigma_w)},
         {"sigma_e", vec(truth.sigma_e)},
         {"sigma_eps", truth.sigma_eps},
         {"sigma_eta", truth.sigma_eta},
         {"latent", latent}};
  emit(out + ".truth.json", t.dump(2) + "\n");
  std::cout << "simulate: model " << truth.model << ", " << rc.simulate.n << " curves\n";
}

struct Loaded {
  io::RunConfig rc;
  io::ModelFile mf;
  CurveDataset data;
};

Loaded load_fitted(const std::string& cfg_path, const std::string& model_path, const std::string& data_path,
                   const Common& c) {
  io::RunConfig rc = config_or_default(cfg_path);
  apply_common(c, rc);
  io::ModelFile mf = io::load_model(model_path);
  CurveDataset data = io::load_dataset(data_path, domain(mf.config, Side::x), domain(mf.config, Side::y));
  return {std::move(rc), std::move(mf), std::move(data)};
}

FitResult as_fit_result(const Loaded& l) {
  FitResult fr;
  fr.params = l.mf.params;
  fr.loglik_trace = l.mf.loglik_trace;
  fr.converged = l.mf.converged;
  fr.iterations = l.mf.iterations;
  const EStepResult es = e_step(l.mf.config, l.mf.params, l.data, l.rc.fit.mode, nullptr, l.rc.fit.threads);
  fr.posteriors = es.posteriors;
  fr.nonconverged_modes = es.nonconverged;
  return fr;
}

json cov_json(const Eigen::MatrixXd& cov) { return io::matrix_to_json(cov); }

void cmd_bootstrap(const std::string& cfg_path, const std::string& model_path, const std::string& data_path,
                   const Common& c) {
  const Loaded l = load_fitted(cfg_path, model_path, data_path, c);
  const FitResult fr = as_fit_result(l);
  BootstrapOptions bo;
  bo.reps = l.rc.boot_reps;
  bo.seed = c.seed.value_or(l.rc.fit.seed);
  bo.threads = l.rc.fit.threads;
  const BootstrapResult br = bootstrap_covariance(l.mf.config, l.data, fr, bo, l.rc.fit);
  json j{{"d1", l.mf.config.d1()},
         {"d2", l.mf.config.d2()},
         {"reps", bo.reps},
         {"kept", br.kept},
         {"dropped", br.dropped},
         {"seed", bo.seed},
         {"cov_vec_At", cov_json(br.cov)}};
  emit(c.out.empty() ? "bootstrap.json" : c.out, j.dump(2) + "\n");
  std::cout << "bootstrap: " << br.kept << " kept, " << br.dropped << " dropped\n";
}

void cmd_infer(const std::string& cfg_path, const std::string& model_path, const std::string& data_path,
               const std::string& boot_path, const Common& c) {
  const Loaded l = load_fitted(cfg_path, model_path, data_path, c);
  const ModelConfig& mc = l.mf.config;
  const FitResult fr = as_fit_result(l);
  const int d1 = mc.d1(), d2 = mc.d2();
  Eigen::MatrixXd cov_a;
  std::string method = "asymptotic";
  if (!boot_path.empty()) {
    const json b = json::parse(io::read_text(boot_path));
    cov_a = io::matrix_from_json(b.at("cov_vec_At"));
    if (cov_a.rows() != d1 * d2 || cov_a.cols() != d1 * d2) throw InputError(boot_path + ": covariance shape mismatch");
    method = "bootstrap";
  } else {
    const InferenceBundle ib = asymptotic_covariance(mc, fr);
    cov_a = a_block(ib.asym_cov, d1, d2);
  }
  const WaldResult wr = wald_tests(l.mf.params.A, cov_a, l.rc.level);
  Eigen::MatrixXd sd(d2, d1);
  for (int i = 0; i < d2; ++i)
    for (int k = 0; k < d1; ++k) sd(i, k) = std::sqrt(std::max(cov_a(i * d1 + k, i * d1 + k), 0.0));
  json j{{"method", method},
         {"level", l.rc.level},
         {"A", io::matrix_to_json(l.mf.params.A)},
         {"A_sd", io::matrix_to_json(sd)},
         {"Q", wr.Q},
         {"df", wr.df},
         {"q_threshold", wr.q_threshold},
         {"Z", io::matrix_to_json(wr.Z)},
         {"z_threshold", wr.z_threshold},
         {"cov_vec_At", cov_json(cov_a)}};
  emit(c.out.empty() ? "inference.json" : c.out, j.dump(2) + "\n");
  std::printf("infer (%s): Q = %.4f (threshold %.2f, df %d), z threshold %.3f\n", method.c_str(), wr.Q,
              wr.q_threshold, wr.df, wr.z_threshold);
  for (int i = 0; i < d2; ++i) {
    for (int k = 0; k < d1; ++k) std::printf("  A[%d,%d] = %9.4f  sd %8.4f  Z %8.3f\n", i + 1, k + 1,
                                             l.mf.params.A(i, k), sd(i, k), wr.Z(i, k));
  }
}

void write_tables(const StudyReport& r, const std::string& dir) {
  fs::create_directories(dir);
  emit((fs::path(dir) / "table1_estimation.csv").string(), io::estimation_table_csv(r));
  emit((fs::path(dir) / "table2_prediction.csv").string(), io::prediction_table_csv(r));
  emit((fs::path(dir) / "table3_inference.csv").string(), io::inference_table_csv(r));
  emit((fs::path(dir) / "fits.csv").string(), io::fits_csv(r));
}

void cmd_study(const std::string& cfg_path, const Common& c) {
  io::RunConfig rc = io::load_run_config(cfg_path);
  apply_common(c, rc);
  const StudyReport r = run_study(rc.study);
  const std::string dir = c.out.empty() ? "study" : c.out;
  fs::create_directories(dir);
  emit((fs::path(dir) / "study.json").string(), io::study_to_json(r).dump(1) + "\n");
  write_tables(r, dir);
  std::cout << "study: " << r.fits.size() << " fits written to " << dir << "\n";
}

void cmd_report(const std::string& study_dir, const Common& c) {
  const fs::path src = fs::path(study_dir) / "study.json";
  json j;
  try {
    j = json::parse(io::read_text(src.string()));
  } catch (const json::parse_error& e) {
    throw InputError(src.string() + ": " + e.what());
  }
  const StudyReport r = io::study_from_json(j);
  write_tables(r, c.out.empty() ? study_dir : c.out);
  std::cout << io::estimation_table_csv(r) << io::prediction_table_csv(r) << io::inference_table_csv(r);
}

int report_error(const char* type, const std::string& msg, int code) {
  std::cerr << json{{"error", {{"type", type}, {"message", msg}}}}.dump() << "\n";
  return code;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Warped functional regression"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--seed", common.seed, "Random seed");
    sub->add_option("--threads", common.threads, "OpenMP threads (0 = runtime default)")->check(CLI::NonNegativeNumber);
    sub->add_option("--out,-o", common.out, "Output path");
  };
  std::string cfg, data, model, boot, scores, dir;
  int grid_size = 20;

  auto* f = app.add_subcommand("fit", "Fit the model by EM");
  f->add_option("config", cfg, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  f->add_option("data", data, "Long CSV dataset")->required()->check(CLI::ExistingFile);
  add_common(f);

  auto* p = app.add_subcommand("predict", "Predict response curves from covariate curves");
  p->add_option("model", model, "Model file")->required()->check(CLI::ExistingFile);
  p->add_option("data", data, "Long CSV with x rows (y rows, if present, give output times)")
      ->required()
      ->check(CLI::ExistingFile);
  p->add_option("--config", cfg, "Run configuration (JSON)")->check(CLI::ExistingFile);
  p->add_option("--grid-size", grid_size, "Equally spaced output points when a curve has no y rows")
      ->check(CLI::PositiveNumber);
  p->add_option("--scores", scores, "Also write predicted scores and warps (JSON)");
  add_common(p);

  auto* s = app.add_subcommand("simulate", "Generate a dataset from a simulation model");
  s->add_option("config", cfg, "Run configuration (JSON)")->check(CLI::ExistingFile);
  add_common(s);

  auto* b = app.add_subcommand("bootstrap", "Bootstrap covariance of A");
  b->add_option("config", cfg, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  b->add_option("model", model, "Model file")->required()->check(CLI::ExistingFile);
  b->add_option("data", data, "Long CSV dataset")->required()->check(CLI::ExistingFile);
  add_common(b);

  auto* in = app.add_subcommand("infer", "Wald tests for A");
  in->add_option("config", cfg, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  in->add_option("model", model, "Model file")->required()->check(CLI::ExistingFile);
  in->add_option("data", data, "Long CSV dataset")->required()->check(CLI::ExistingFile);
  in->add_option("--bootstrap", boot, "Use a bootstrap covariance file instead of the asymptotic one")
      ->check(CLI::ExistingFile);
  add_common(in);

  auto* st = app.add_subcommand("study", "Run a simulation study");
  st->add_option("config", cfg, "Run configuration (JSON)")->required()->check(CLI::ExistingFile);
  add_common(st);

  auto* r = app.add_subcommand("report", "Tables from a study directory");
  r->add_option("study_dir", dir, "Directory containing study.json")->required()->check(CLI::ExistingDirectory);
  add_common(r);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*f) cmd_fit(cfg, data, common);
    else if (*p) cmd_predict(model, data, cfg, grid_size, scores, common);
    else if (*s) cmd_simulate(cfg, common);
    else if (*b) cmd_bootstrap(cfg, model, data, common);
    else if (*in) cmd_infer(cfg, model, data, boot, common);
    else if (*st) cmd_study(cfg, common);
    else if (*r) cmd_report(dir, common);
  } catch (const InputError& e) {
    remove_outputs();
    return report_error("input", e.what(), 1);
  } catch (const json::exception& e) {
    remove_outputs();
    return report_error("input", e.what(), 1);
  } catch (const DomainError& e) {
    remove_outputs();
    return report_error("domain", e.what(), 2);
  } catch (const DegeneracyError& e) {
    remove_outputs();
    return report_error("degeneracy", e.what(), 2);
  } catch (const OptimizationError& e) {
    remove_outputs();
    return report_error("optimization", e.what(), 2);
  } catch (const std::exception& e) {
    remove_outputs();
    return report_error("internal", e.what(), 2);
  }
  return 0;
}
