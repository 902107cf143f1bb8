#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <stdexcept>
#include <vector>

#include "rotot/errors.hpp"
#include "rotot/regression.hpp"
#include "rotot/simlab.hpp"
#include "rotot/tensor.hpp"

using namespace rotot;

namespace {

double sd_oracle(const std::vector<double>& v) {
  double mean = 0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  double acc = 0;
  for (double x : v) acc += (x - mean) * (x - mean);
  return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

bool same_values(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) return false;
  for (std::size_t j = 0; j < a.size(); ++j)
    if (a[j] != b[j]) return false;
  return true;
}

SimConfig tiny_config() {
  SimConfig cfg;
  cfg.n = 16;
  cfg.n_val = 8;
  cfg.p_dims = {4, 3};
  cfg.k_ranks = {2, 2};
  cfg.q_dims = {3, 2};
  cfg.rank_r = 1;
  return cfg;
}

}  // namespace

TEST_CASE("alternating correlation eigenbasis is orthonormal and ordered") {
  const int p = 8;
  Eigen::MatrixXd v = ar1_eigenbasis(p);
  REQUIRE(v.rows() == p);
  REQUIRE(v.cols() == p);

  Eigen::MatrixXd gram = v.transpose() * v;
  CHECK((gram - Eigen::MatrixXd::Identity(p, p)).cwiseAbs().maxCoeff() <
        1e-10);

  Eigen::MatrixXd sigma(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) sigma(i, j) = std::pow(-0.9, std::abs(i - j));

  std::vector<double> lambda(p);
  for (int c = 0; c < p; ++c) {
    lambda[c] = v.col(c).dot(sigma * v.col(c));
    CHECK((sigma * v.col(c) - lambda[c] * v.col(c)).cwiseAbs().maxCoeff() <
          1e-8);
  }
  for (int c = 1; c < p; ++c) CHECK(lambda[c] <= lambda[c - 1] + 1e-12);

  for (int c = 0; c < p; ++c) {
    int arg = 0;
    for (int i = 1; i < p; ++i)
      if (std::abs(v(i, c)) > std::abs(v(arg, c))) arg = i;
    CHECK(v(arg, c) > 0.0);
  }
}

TEST_CASE("generated draw satisfies the signal-to-noise identity exactly") {
  SimConfig cfg;
  cfg.seed = 11;
  SimData d = generate(cfg);

  REQUIRE(d.x.size() == 60);
  REQUIRE(d.y.size() == 60);
  REQUIRE(d.x_val.size() == 40);
  REQUIRE(d.y_val.size() == 40);
  CHECK(d.slope_scale > 0.0);
  for (std::size_t j = 0; j < d.truth.b0.size(); ++j)
    CHECK(d.truth.b0[j] == 0.0);

  double sig = 0, err = 0;
  for (int n = 0; n < cfg.n; ++n) {
    Tensor fit = cp_apply(d.truth, d.x[n]);
    for (std::size_t j = 0; j < fit.size(); ++j) {
      sig += fit[j] * fit[j];
      double e = d.y[n][j] - fit[j];
      err += e * e;
    }
  }
  CHECK(sig / err == doctest::Approx(cfg.snr).epsilon(1e-10));

  SimData again = generate(cfg);
  CHECK(same_values(again.y[0], d.y[0]));
  CHECK(same_values(again.x_val[7], d.x_val[7]));
  cfg.seed = 12;
  CHECK(!same_values(generate(cfg).y[0], d.y[0]));
}

TEST_CASE("predictor signal spans only the leading eigen-directions") {
  SimConfig cfg;
  cfg.seed = 3;
  SimData d = generate(cfg);
  REQUIRE(d.x_signal.size() == 60);

  for (int mode = 0; mode < 2; ++mode) {
    Eigen::MatrixXd basis = ar1_eigenbasis(cfg.p_dims[mode]);
    Eigen::MatrixXd tail = basis.rightCols(cfg.p_dims[mode] -
                                           cfg.k_ranks[mode]);
    std::vector<int> rows{mode}, cols{1 - mode};
    for (int n = 0; n < cfg.n; n += 7) {
      Eigen::MatrixXd m = matricize(d.x_signal[n], rows, cols);
      CHECK((tail.transpose() * m).cwiseAbs().maxCoeff() < 1e-10);
    }
  }

  double acc = 0;
  long cnt = 0;
  for (int n = 0; n < cfg.n; ++n)
    for (std::size_t j = 0; j < d.x[n].size(); ++j) {
      double e = d.x[n][j] - d.x_signal[n][j];
      acc += e * e;
      ++cnt;
    }
  CHECK(acc / static_cast<double>(cnt) == doctest::Approx(0.1).epsilon(0.10));
}

TEST_CASE("generator rejects invalid shapes and parameters") {
  SimConfig bad = tiny_config();
  bad.k_ranks = {5, 2};
  CHECK_THROWS_AS(generate(bad), ShapeError);

  bad = tiny_config();
  bad.n = 1;
  CHECK_THROWS_AS(generate(bad), std::invalid_argument);

  bad = tiny_config();
  bad.snr = 0.0;
  CHECK_THROWS_AS(generate(bad), std::invalid_argument);
}

TEST_CASE("structured core support marks the corner blocks") {
  Shape p{8, 10}, k{3, 4};
  std::vector<char> sup = outlier_core_support(p, k);
  REQUIRE(sup.size() == 80u);

  long on = 0;
  for (std::size_t lin = 0; lin < sup.size(); ++lin) {
    std::vector<int> idx = multi_index(p, lin);
    bool want = true;
    for (int mode = 0; mode < 2; ++mode) {
      int one_based = idx[mode] + 1;
      bool hit = one_based == 1 || one_based == 2 ||
                 one_based == k[mode] + 1 || one_based == k[mode] + 2;
      want = want && hit;
    }
    CHECK(static_cast<bool>(sup[lin]) == want);
    on += sup[lin] ? 1 : 0;
  }
  CHECK(on == 16);
}

TEST_CASE("contamination honors counts, disjointness and ordering") {
  SimConfig cfg;
  cfg.seed = 21;
  apply_scenario(cfg, 1, 2, 5.0, 8.0, 0.0);
  SimData d = generate(cfg);
  ContamLedger led = contaminate(d, cfg);

  CHECK(led.y_cases.size() == 6u);
  CHECK(led.x_cases.size() == 3u);
  CHECK(led.y_cells.size() == 192u);   // round(0.10 * 60 * 32)
  CHECK(led.x_cells.size() == 240u);   // round(0.05 * 60 * 80)
  CHECK(led.y_missing.empty());
  CHECK(led.x_missing.empty());
  CHECK(!led.empty());

  CHECK(std::is_sorted(led.y_cases.begin(), led.y_cases.end()));
  CHECK(std::is_sorted(led.x_cases.begin(), led.x_cases.end()));

  std::set<int> cases(led.y_cases.begin(), led.y_cases.end());
  for (int c : led.x_cases) CHECK(!cases.count(c));
  cases.insert(led.x_cases.begin(), led.x_cases.end());
  for (const CellHit& h : led.y_cells) CHECK(!cases.count(h.case_index));
  for (const CellHit& h : led.x_cells) CHECK(!cases.count(h.case_index));
}

TEST_CASE("cell outliers replace values by the clean scale multiple") {
  SimConfig cfg;
  cfg.seed = 5;
  apply_scenario(cfg, 1, 0, 5.0, 8.0, 0.0);
  SimData d = generate(cfg);
  std::vector<Tensor> y0 = d.y, x0 = d.x;
  ContamLedger led = contaminate(d, cfg);

  const int qtot = 32, ptot = 80;
  for (int q = 0; q < qtot; q += 5) {
    std::vector<double> col;
    for (int n = 0; n < cfg.n; ++n) col.push_back(y0[n][q]);
    double s = sd_oracle(col);
    for (const CellHit& h : led.y_cells)
      if (h.cell == q)
        CHECK(d.y[h.case_index][q] ==
              doctest::Approx(36.0 * s).epsilon(1e-12));
  }
  for (int p = 0; p < ptot; p += 11) {
    std::vector<double> col;
    for (int n = 0; n < cfg.n; ++n) col.push_back(x0[n][p]);
    double s = sd_oracle(col);
    for (const CellHit& h : led.x_cells)
      if (h.cell == p)
        CHECK(d.x[h.case_index][p] ==
              doctest::Approx(30.0 * s).epsilon(1e-12));
  }

  std::set<long> touched;
  for (const CellHit& h : led.y_cells)
    touched.insert(static_cast<long>(h.case_index) * qtot + h.cell);
  std::set<int> shifted(led.y_cases.begin(), led.y_cases.end());
  for (int n = 0; n < cfg.n; ++n) {
    if (shifted.count(n)) continue;
    for (int q = 0; q < qtot; ++q)
      if (!touched.count(static_cast<long>(n) * qtot + q))
        CHECK(d.y[n][q] == y0[n][q]);
  }
}

TEST_CASE("case outliers shift responses and rebuild predictors") {
  SimConfig cfg;
  cfg.seed = 8;
  apply_scenario(cfg, 1, 1, 5.0, 8.0, 0.0);
  SimData d = generate(cfg);
  std::vector<Tensor> y0 = d.y, x0 = d.x;
  ContamLedger led = contaminate(d, cfg);
  REQUIRE(led.y_cases.size() == 6u);
  REQUIRE(led.x_cases.size() == 3u);

  double pooled = 0;
  long cells = 0;
  for (int n : led.y_cases) {
    double case_mean = 0;
    for (std::size_t j = 0; j < d.y[n].size(); ++j) {
      double shift = d.y[n][j] - y0[n][j];
      case_mean += shift;
      pooled += shift;
      ++cells;
    }
    CHECK(case_mean / static_cast<double>(d.y[n].size()) > 2.0);
  }
  CHECK(pooled / static_cast<double>(cells) ==
        doctest::Approx(4.0).epsilon(0.125));

  // A rebuilt predictor's full-basis core concentrates on the corner support.
  std::vector<char> sup = outlier_core_support(cfg.p_dims, cfg.k_ranks);
  Eigen::MatrixXd b1 = ar1_eigenbasis(cfg.p_dims[0]);
  Eigen::MatrixXd b2 = ar1_eigenbasis(cfg.p_dims[1]);
  for (int n : led.x_cases) {
    CHECK(!same_values(d.x[n], x0[n]));
    Eigen::MatrixXd m = matricize(d.x[n], {0}, {1});
    Eigen::MatrixXd core = b1.transpose() * m * b2;
    double on = 0, off = 0;
    long non = 0, noff = 0;
    for (int i = 0; i < core.rows(); ++i)
      for (int j = 0; j < core.cols(); ++j) {
        std::size_t lin = linear_index(cfg.p_dims, {i, j});
        if (sup[lin]) {
          on += core(i, j) * core(i, j);
          ++non;
        } else {
          off += core(i, j) * core(i, j);
          ++noff;
        }
      }
    CHECK(on / static_cast<double>(non) >
          50.0 * off / static_cast<double>(noff));
  }
}

TEST_CASE("zero contamination leaves the draw untouched") {
  SimConfig cfg;
  cfg.seed = 13;
  apply_scenario(cfg, 1, 2, 5.0, 0.0, 0.0);
  SimData d = generate(cfg);
  std::vector<Tensor> y0 = d.y, x0 = d.x;
  ContamLedger led = contaminate(d, cfg);
  CHECK(led.empty());
  for (int n = 0; n < cfg.n; ++n) {
    CHECK(same_values(d.y[n], y0[n]));
    CHECK(same_values(d.x[n], x0[n]));
    CHECK(!d.y[n].has_missing());
    CHECK(!d.x[n].has_missing());
  }
}

TEST_CASE("missing entries stay away from injected cells") {
  SimConfig cfg;
  cfg.seed = 31;
  apply_scenario(cfg, 1, 2, 5.0, 8.0, 0.05);
  SimData d = generate(cfg);
  ContamLedger led = contaminate(d, cfg);

  CHECK(led.y_missing.size() == 96u);   // round(0.05 * 60 * 32)
  CHECK(led.x_missing.size() == 240u);  // round(0.05 * 60 * 80)

  long y_missing = 0, x_missing = 0;
  for (int n = 0; n < cfg.n; ++n) {
    for (std::size_t j = 0; j < d.y[n].size(); ++j)
      y_missing += d.y[n].observed(j) ? 0 : 1;
    for (std::size_t j = 0; j < d.x[n].size(); ++j)
      x_missing += d.x[n].observed(j) ? 0 : 1;
  }
  CHECK(y_missing == 96);
  CHECK(x_missing == 240);

  std::set<long> y_inj, x_inj;
  for (const CellHit& h : led.y_cells)
    y_inj.insert(static_cast<long>(h.case_index) * 32 + h.cell);
  for (const CellHit& h : led.x_cells)
    x_inj.insert(static_cast<long>(h.case_index) * 80 + h.cell);
  for (const CellHit& h : led.y_missing) {
    CHECK(!y_inj.count(static_cast<long>(h.case_index) * 32 + h.cell));
    CHECK(!d.y[h.case_index].observed(h.cell));
  }
  for (const CellHit& h : led.x_missing) {
    CHECK(!x_inj.count(static_cast<long>(h.case_index) * 80 + h.cell));
    CHECK(!d.x[h.case_index].observed(h.cell));
  }
}

TEST_CASE("infeasible contamination requests throw") {
  SimConfig cfg;
  cfg.seed = 41;

  cfg.y_contam = {};
  cfg.x_contam = {};
  cfg.y_contam.eps_case = 0.6;
  cfg.x_contam.eps_case = 0.6;
  cfg.y_contam.gamma_case = 1.0;
  cfg.x_contam.gamma_case = 1.0;
  {
    SimData d = generate(cfg);
    CHECK_THROWS_AS(contaminate(d, cfg), std::invalid_argument);
  }

  cfg.y_contam = {};
  cfg.x_contam = {};
  cfg.y_contam.eps_cell = 1.0;
  cfg.y_contam.eps_case = 0.2;
  cfg.y_contam.gamma_cell = 1.0;
  cfg.y_contam.gamma_case = 1.0;
  {
    SimData d = generate(cfg);
    CHECK_THROWS_AS(contaminate(d, cfg), std::invalid_argument);
  }

  cfg.y_contam = {};
  cfg.x_contam = {};
  cfg.y_contam.eps_cell = 0.5;
  cfg.y_contam.eps_miss = 0.6;
  cfg.y_contam.gamma_cell = 1.0;
  {
    SimData d = generate(cfg);
    CHECK_THROWS_AS(contaminate(d, cfg), std::invalid_argument);
  }

  cfg.y_contam = {};
  cfg.y_contam.eps_cell = 1.5;
  {
    SimData d = generate(cfg);
    CHECK_THROWS_AS(contaminate(d, cfg), std::invalid_argument);
  }
}

TEST_CASE("prediction error ratio matches hand calculations") {
  std::vector<Tensor> y(2, Tensor(Shape{1})), yhat(2, Tensor(Shape{1}));
  y[0][0] = 3;
  y[1][0] = 7;
  yhat[0][0] = 4;
  yhat[1][0] = 5;
  // residual norms 1 + 2; centered norms 2 + 2
  CHECK(rpe(y, yhat) == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(rpe(y, y) == 0.0);

  std::vector<Tensor> a(2, Tensor(Shape{2})), b(2, Tensor(Shape{2}));
  a[0][0] = 1;
  a[0][1] = 2;
  a[1][0] = 3;
  a[1][1] = 4;
  b[0][0] = 2;
  b[0][1] = 2;
  b[1][0] = 3;
  b[1][1] = 4;
  // residual norms 1 + 0; mean response (2,3), both deviations norm sqrt(2)
  CHECK(rpe(a, b) == doctest::Approx(1.0 / (2.0 * std::sqrt(2.0))));
}

TEST_CASE("trimmed error keeps the smallest three quarters per cell") {
  std::vector<Tensor> y(4, Tensor(Shape{2})), yhat(4, Tensor(Shape{2}));
  double r0[] = {1, -2, 3, -4};  // keep 1,2,3 -> sum of squares 14
  double r1[] = {0, 0, 5, 1};    // keep 0,0,1 -> sum of squares 1
  for (int n = 0; n < 4; ++n) {
    y[n][0] = r0[n];
    y[n][1] = r1[n];
    yhat[n][0] = 0;
    yhat[n][1] = 0;
  }
  // H = ceil(0.75 * 4) = 3 kept per cell, averaged over 3 * 2
  CHECK(robmse(y, yhat) == doctest::Approx(15.0 / 6.0).epsilon(1e-15));
  CHECK(robmse(y, y) == 0.0);
}

TEST_CASE("scenario presets pin the contamination tables") {
  SimConfig cfg;

  apply_scenario(cfg, 1, 0, 5.0, 8.0, 0.0);
  CHECK(cfg.y_contam.eps_cell == 0.10);
  CHECK(cfg.y_contam.eps_case == 0.0);
  CHECK(cfg.y_contam.gamma_cell == doctest::Approx(36.0));  // 8 * 4.5
  CHECK(cfg.x_contam.eps_cell == 0.05);
  CHECK(cfg.x_contam.eps_case == 0.05);
  CHECK(cfg.x_contam.gamma_cell == 30.0);
  CHECK(cfg.x_contam.gamma_case == 10.0);

  apply_scenario(cfg, 1, 1, 5.0, 8.0, 0.0);
  CHECK(cfg.y_contam.eps_cell == 0.0);
  CHECK(cfg.y_contam.eps_case == 0.10);
  CHECK(cfg.y_contam.gamma_case == doctest::Approx(4.0));  // 8 * 0.5

  apply_scenario(cfg, 1, 2, 5.0, 8.0, 0.0);
  CHECK(cfg.y_contam.eps_cell == 0.10);
  CHECK(cfg.y_contam.eps_case == 0.10);
  CHECK(cfg.y_contam.gamma_cell == doctest::Approx(36.0));

  // With missingness the cellwise multiplier drops to 3.5.
  apply_scenario(cfg, 1, 2, 5.0, 8.0, 0.05);
  CHECK(cfg.y_contam.gamma_cell == doctest::Approx(28.0));
  CHECK(cfg.y_contam.eps_miss == 0.05);
  CHECK(cfg.x_contam.eps_miss == 0.05);

  apply_scenario(cfg, 2, 1, 5.0, 8.0, 0.0);
  CHECK(cfg.x_contam.eps_cell == 0.0);
  CHECK(cfg.x_contam.eps_case == 0.10);
  CHECK(cfg.x_contam.gamma_case == doctest::Approx(8.0));  // 8 * 1.0
  CHECK(cfg.y_contam.eps_cell == 0.10);
  CHECK(cfg.y_contam.eps_case == 0.10);
  CHECK(cfg.y_contam.gamma_cell == 20.0);
  CHECK(cfg.y_contam.gamma_case == 4.0);

  apply_scenario(cfg, 2, 2, 1.0, 8.0, 0.0);
  CHECK(cfg.x_contam.eps_cell == 0.05);
  CHECK(cfg.x_contam.eps_case == 0.05);
  CHECK(cfg.x_contam.gamma_cell == doctest::Approx(12.0));  // 8 * 1.5
  CHECK(cfg.y_contam.gamma_case == 3.5);  // the low-snr magnitude

  apply_scenario(cfg, 1, 2, 5.0, 0.0, 0.05);
  CHECK(cfg.y_contam.eps_cell == 0.0);
  CHECK(cfg.y_contam.eps_case == 0.0);
  CHECK(cfg.x_contam.eps_cell == 0.0);
  CHECK(cfg.x_contam.eps_case == 0.0);
  CHECK(cfg.y_contam.eps_miss == 0.05);

  CHECK_THROWS_AS(apply_scenario(cfg, 3, 0, 5.0, 1.0, 0.0),
                  std::invalid_argument);
  CHECK_THROWS_AS(apply_scenario(cfg, 1, 4, 5.0, 1.0, 0.0),
                  std::invalid_argument);
}

TEST_CASE("scenario runs are deterministic and complete") {
  ScenarioSpec spec;
  spec.base = tiny_config();
  spec.gamma_grid = {0.0, 8.0};
  spec.replications = 2;
  spec.seed = 77;
  spec.methods = {Method::tot, Method::rotot};
  spec.fixed_lambda = 1e-4;

  ScenarioTable t1 = run_scenario(spec);
  ScenarioTable t2 = run_scenario(spec);
  REQUIRE(t1.rows.size() == 8u);  // 2 reps * 2 gammas * 2 methods
  REQUIRE(t2.rows.size() == 8u);
  for (std::size_t i = 0; i < t1.rows.size(); ++i) {
    CHECK(t1.rows[i].method == t2.rows[i].method);
    CHECK(t1.rows[i].gamma == t2.rows[i].gamma);
    CHECK(t1.rows[i].replication == t2.rows[i].replication);
    CHECK(t1.rows[i].rpe == t2.rows[i].rpe);  // bitwise reproducible
  }
  REQUIRE(t1.lambdas.size() == 2u);
  CHECK(t1.lambdas[0].second == 1e-4);
  CHECK(t1.lambdas[1].second == 1e-4);

  std::ostringstream c1, c2;
  write_results_csv(c1, t1);
  write_results_csv(c2, t2);
  CHECK(c1.str() == c2.str());

  // Rows cover every cell of the grid exactly once.
  std::set<std::tuple<int, double, int>> seen;
  for (const ScenarioRow& r : t1.rows) {
    CHECK(r.scenario == 1);
    CHECK(r.snr == 5.0);
    seen.insert({static_cast<int>(r.method), r.gamma, r.replication});
  }
  CHECK(seen.size() == 8u);

  CHECK(median_rpe(t1, Method::tot, 0.0) ==
        doctest::Approx(0.5 * (t1.rows[0].rpe + t1.rows[4].rpe))
            .epsilon(1e-15));
  CHECK_THROWS_AS(median_rpe(t1, Method::onlycell, 0.0),
                  std::invalid_argument);
}

TEST_CASE("robust fit outlasts the baseline under heavy cell outliers") {
  ScenarioSpec spec;
  spec.setting = 0;
  spec.gamma_grid = {8.0};
  spec.replications = 3;
  spec.methods = {Method::tot, Method::rotot};
  spec.fixed_lambda = 1e-4;

  ScenarioTable t = run_scenario(spec);
  double base = median_rpe(t, Method::tot, 8.0);
  double robust = median_rpe(t, Method::rotot, 8.0);
  CHECK(robust < 1.0);
  CHECK(base > 2.0 * robust);
}

TEST_CASE("result tables print exact seventeen-digit csv") {
  ScenarioTable t;
  t.rows.push_back({Method::tot, 1, 5.0, 0.0, 0, 0.5});
  t.rows.push_back({Method::tot, 1, 5.0, 0.0, 1, 0.25});

  std::ostringstream res;
  write_results_csv(res, t);
  CHECK(res.str() ==
        "method,scenario,snr,gamma,replication,rpe\n"
        "tot,1,5,0,0,0.5\n"
        "tot,1,5,0,1,0.25\n");

  std::ostringstream med;
  write_medians_csv(med, t);
  CHECK(med.str() ==
        "method,scenario,snr,gamma,median_rpe\n"
        "tot,1,5,0,0.375\n");

  t.rows[0].rpe = 0.1;
  std::ostringstream g17;
  write_results_csv(g17, t);
  CHECK(g17.str().find("0.10000000000000001") != std::string::npos);
}

TEST_CASE("config text parses into a full protocol") {
  std::istringstream in(
      "# contamination protocol\n"
      "scenario = 2\n"
      "setting = both\n"
      "snr = 1\n"
      "gamma_grid = 0, 4, 8\n"
      "replications = 7\n"
      "tune_replications = 2\n"
      "seed = 99\n"
      "eps_miss = 0.05\n"
      "\n"
      "n = 30\n"
      "n_val = 10\n"
      "p_dims = 5,6\n"
      "k_ranks = 2,3\n"
      "q_dims = 3,4\n"
      "rank_r = 3\n"
      "lambda = 0.001\n"
      "methods = tot, rotot\n");
  ScenarioSpec spec = parse_scenario_config(in);
  CHECK(spec.scenario == 2);
  CHECK(spec.setting == 2);
  CHECK(spec.snr == 1.0);
  CHECK(spec.base.snr == 1.0);
  REQUIRE(spec.gamma_grid.size() == 3u);
  CHECK(spec.gamma_grid[1] == 4.0);
  CHECK(spec.replications == 7);
  CHECK(spec.tune_replications == 2);
  CHECK(spec.seed == 99u);
  CHECK(spec.eps_miss == 0.05);
  CHECK(spec.base.n == 30);
  CHECK(spec.base.n_val == 10);
  CHECK(spec.base.p_dims == Shape{5, 6});
  CHECK(spec.base.k_ranks == Shape{2, 3});
  CHECK(spec.base.q_dims == Shape{3, 4});
  CHECK(spec.base.rank_r == 3);
  CHECK(spec.fixed_lambda == 0.001);
  REQUIRE(spec.methods.size() == 2u);
  CHECK(spec.methods[0] == Method::tot);
  CHECK(spec.methods[1] == Method::rotot);

  std::istringstream named("setting = case\nlambda_grid = 1e-3, 1e-2\n");
  ScenarioSpec s2 = parse_scenario_config(named);
  CHECK(s2.setting == 1);
  REQUIRE(s2.lambda_grid.size() == 2u);
  CHECK(s2.lambda_grid[0] == 1e-3);
  CHECK(s2.fixed_lambda < 0.0);

  std::istringstream empty("");
  ScenarioSpec dflt = parse_scenario_config(empty);
  CHECK(dflt.scenario == 1);
  CHECK(dflt.setting == 0);
  CHECK(dflt.methods.size() == 4u);
  CHECK(dflt.replications == 20);

  std::istringstream unknown("frobnicate = 1\n");
  CHECK_THROWS_AS(parse_scenario_config(unknown), std::invalid_argument);
  std::istringstream garbage("n = abc\n");
  CHECK_THROWS_AS(parse_scenario_config(garbage), std::invalid_argument);
}
