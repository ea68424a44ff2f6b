#include <doctest.h>

#include <cstdio>
#include <random>

#include "oracles.hpp"
#include "wfr/errors.hpp"
#include "wfr/io.hpp"

using namespace wfr;
using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;

TEST_CASE("dataset CSV round trip is exact") {
  std::mt19937_64 rng(1);
  const ModelConfig c = oracle::random_config(1, 1, 1, 1);
  const CurveDataset data = oracle::draw_dataset(c, enforce_constraints(c, oracle::random_params(c, rng)), 4, rng);
  const CurveDataset back = io::parse_dataset(io::format_dataset(data));
  REQUIRE(back.size() == data.size());
  for (std::size_t i = 0; i < data.size(); ++i) {
    CHECK(back[i].id == data[i].id);
    CHECK(back[i].s == data[i].s);
    CHECK(back[i].x == data[i].x);
    CHECK(back[i].t == data[i].t);
    CHECK(back[i].y == data[i].y);
  }
  CHECK(io::format_dataset(back) == io::format_dataset(data));
}

TEST_CASE("dataset parsing: grouping, sorting and errors") {
  const std::string text =
      "curve_id,role,time,value\n"
      "b,x,0.5,1\n"
      "a,x,0.9,2\n"
      "a,x,0.1,3\n"
      "b,y,0.2,4\n"
      "a,y,0.3,5\n"
      "b,x,0.25,6\n"
      "a,y,0.6,7\n";
  const CurveDataset d = io::parse_dataset(text);
  REQUIRE(d.size() == 2);
  CHECK(d[0].id == "b");
  CHECK(d[0].s == (VectorXd(2) << 0.25, 0.5).finished());
  CHECK(d[0].x == (VectorXd(2) << 6, 1).finished());
  CHECK(d[1].s == (VectorXd(2) << 0.1, 0.9).finished());
  CHECK(d[1].y == (VectorXd(2) << 5, 7).finished());

  try {
    io::parse_dataset("curve_id,role,time,value\na,x,0.1,1\na,z,0.2,1\na,x,abc,1\na,y,0.3,1\n");
    FAIL("expected InputError");
  } catch (const InputError& e) {
    const std::string msg = e.what();
    CHECK(msg.find('3') != std::string::npos);
    CHECK(msg.find('4') != std::string::npos);
  }
  CHECK_THROWS_AS(io::parse_dataset("id,role,time,value\n"), InputError);
  CHECK_THROWS_AS(io::parse_dataset(""), InputError);
  CHECK_THROWS_AS(io::parse_dataset("curve_id,role,time,value\na,x,0.1,1\n"), DomainError);
  CHECK(io::parse_dataset("curve_id,role,time,value\na,x,0.1,1\n", {}, {}, false).size() == 1);
  CHECK_THROWS_AS(io::parse_dataset("curve_id,role,time,value\na,x,1.5,1\na,y,0.1,1\n", io::Domain{0.0, 1.0}),
                  DomainError);
  CHECK_THROWS_AS(io::load_dataset("/nonexistent/file.csv"), InputError);
}

TEST_CASE("hex doubles") {
  for (double v : {0.0, -1.5, 1.0 / 3.0, 1e-300, 6.02e23}) CHECK(io::parse_hex_double(io::hex_double(v)) == v);
  CHECK_THROWS_AS(io::parse_hex_double("0x1p"), InputError);
}

TEST_CASE("model file round trip is bit exact") {
  std::mt19937_64 rng(2);
  const ModelConfig c(SplineBasis(0.0, 2.0, {0.3, 1.0 / 3.0, 1.7}, 3), SplineBasis::uniform(0.0, 1.0, 5),
                      WarpSpec(0.0, 2.0, {0.7}), WarpSpec(0.0, 1.0, {0.2, 0.6}), 2, 1);
  io::ModelFile m{c, enforce_constraints(c, oracle::random_params(c, rng)), {-10.5, -3.25}, true, 7};
  const io::ModelFile back = io::model_from_json(json::parse(io::model_to_json(m).dump()));
  CHECK(back.config.basis(Side::x).interior_knots() == c.basis(Side::x).interior_knots());
  CHECK(back.config.warp(Side::y).knots() == c.warp(Side::y).knots());
  CHECK(back.config.p1() == 2);
  CHECK(back.params.A == m.params.A);
  CHECK(back.params.sigma_w == m.params.sigma_w);
  CHECK(back.params.C == m.params.C);
  CHECK(back.params.sigma2_eta == m.params.sigma2_eta);
  CHECK(back.loglik_trace == m.loglik_trace);
  CHECK(back.iterations == 7);
  CHECK(io::model_to_json(back).dump() == io::model_to_json(m).dump());

  json bad = io::model_to_json(m);
  bad["format_version"] = 99;
  CHECK_THROWS_AS(io::model_from_json(bad), InputError);
}

TEST_CASE("run config") {
  const json j = json::parse(R"({
    "x_basis": {"lower": 0, "upper": 1, "n_interior": 8},
    "y_warp_knots": [0.5],
    "p1": 2,
    "fit": {"max_iter": 50, "seed": 3, "mean_nodes": 5},
    "inference": {"level": 0.05},
    "simulate": {"model": 3, "grid": {"kind": "equal", "size": 12}}
  })");
  const io::RunConfig rc = io::parse_run_config(j);
  CHECK(rc.p1 == 2);
  CHECK(rc.fit.max_iter == 50);
  CHECK(rc.fit.mode.mean_nodes == 5);
  CHECK(rc.level == 0.05);
  CHECK(rc.simulate.grid.kind == GridKind::equal);
  CHECK(rc.study.fit.max_iter == 50);
  const ModelConfig c = io::make_model_config(rc);
  CHECK(c.q(Side::x) == 12);
  CHECK(c.r2() == 1);
  CHECK_THROWS_AS(io::parse_run_config(json::parse(R"({"p3": 1})")), InputError);
  CHECK_THROWS_AS(io::parse_run_config(json::parse(R"({"fit": {"maxiter": 1}})")), InputError);
  CHECK_THROWS_AS(io::parse_run_config(json::parse(R"({"p1": "two"})")), InputError);
  CHECK_THROWS_AS(io::parse_run_config(json::parse(R"({"fit": {"mean_nodes": -1}})")), InputError);
  CHECK_THROWS_AS(io::parse_run_config(json::parse(R"({"inference": {"level": 1.5}})")), InputError);
}

TEST_CASE("matrix and study summaries") {
  const MatrixXd m = (MatrixXd(2, 3) << 1, 2, 3, 4, 5, 6.5).finished();
  CHECK(io::matrix_from_json(io::matrix_to_json(m)) == m);
  CHECK_THROWS_AS(io::matrix_from_json(json::parse("[[1,2],[3]]")), InputError);

  StudyReport r;
  EstimationCell e;
  e.model = 1;
  e.n = 50;
  e.estimator = "W";
  e.errors.beta = {0.1, 0.2};
  e.errors.phi = {{0.01, 0.02}};
  e.errors.psi = {{0.03, std::nan("")}};
  r.estimation.push_back(e);
  r.prediction.push_back({1, 50, "W-1", 0.14, 10, 0});
  r.inference.push_back({1, 200, "true", {0.1, 0.09}, 200});
  const StudyReport back = io::study_from_json(json::parse(io::study_to_json(r).dump()));
  CHECK(back.estimation[0].errors.beta.rmse == 0.2);
  CHECK(std::isnan(back.estimation[0].errors.psi[0].rmse));
  CHECK(back.prediction[0].estimator == "W-1");
  CHECK(back.inference[0].tail == r.inference[0].tail);
  CHECK(io::estimation_table_csv(back) == io::estimation_table_csv(r));
  CHECK(io::prediction_table_csv(r).find("W-1") != std::string::npos);
}
