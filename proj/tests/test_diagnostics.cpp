#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <fstream>
#include <string>
#include <vector>

#include "rotot/diagnostics.hpp"
#include "rotot/errors.hpp"
#include "rotot/regression.hpp"
#include "rotot/rng.hpp"
#include "rotot/rompca.hpp"
#include "rotot/rotot.hpp"
#include "rotot/simlab.hpp"
#include "rotot/tensor.hpp"

using namespace rotot;

namespace {

std::size_t count_sub(const std::string& s, const std::string& sub) {
  std::size_t n = 0;
  for (std::size_t pos = s.find(sub); pos != std::string::npos;
       pos = s.find(sub, pos + 1))
    ++n;
  return n;
}

// Value of `attr` inside the k-th occurrence (0-based) of `tag`.
double svg_attr(const std::string& svg, const std::string& tag, int k,
                const std::string& attr) {
  std::size_t pos = std::string::npos;
  for (int i = 0; i <= k; ++i) {
    pos = svg.find(tag, pos == std::string::npos ? 0 : pos + 1);
    REQUIRE(pos != std::string::npos);
  }
  std::string key = attr + "=\"";
  std::size_t a = svg.find(key, pos);
  REQUIRE(a != std::string::npos);
  return std::strtod(svg.c_str() + a + key.size(), nullptr);
}

// Model assembled by hand around a robust decomposition of generated
// predictors; the responses are defined as the model's own predictions, so
// every residual is exactly zero.
struct HandFixture {
  std::vector<Tensor> x, y;
  RototModel m;
};

const HandFixture& perfect() {
  static HandFixture f = [] {
    HandFixture out;
    SimConfig cfg;
    cfg.n = 16;
    cfg.n_val = 4;
    cfg.p_dims = {4, 3};
    cfg.k_ranks = {2, 2};
    cfg.q_dims = {3, 4};
    cfg.rank_r = 1;
    cfg.seed = 5;
    out.x = generate(cfg).x;

    RototModel m;
    m.rompca = rompca_fit(out.x, {2, 2});
    m.cp = make_cp_model({4, 3}, {3, 4}, 2);
    Rng rng(77);
    for (auto& fac : m.cp.u)
      for (int i = 0; i < fac.rows(); ++i)
        for (int r = 0; r < fac.cols(); ++r) fac(i, r) = 0.4 * rng.normal();
    for (auto& fac : m.cp.v)
      for (int i = 0; i < fac.rows(); ++i)
        for (int r = 0; r < fac.cols(); ++r) fac(i, r) = 0.4 * rng.normal();
    for (std::size_t i = 0; i < m.cp.b0.size(); ++i) m.cp.b0[i] = 0.25;
    m.rank_r = 2;
    m.lambda = 1e-4;
    m.cell_scales = Tensor({3, 4}, 0.3);
    m.case_scale = 0.4;
    out.m = m;

    for (const Tensor& xn : out.x) out.y.push_back(rotot_predict(m, xn));
    return out;
  }();
  return f;
}

// Real fit on clean generated data, shared across the report tests.
struct FitFixture {
  SimData d;
  RototModel m;
  DiagnosticsReport rep;
};

const FitFixture& fitted() {
  static FitFixture f = [] {
    FitFixture out;
    SimConfig cfg;
    cfg.n = 40;
    cfg.n_val = 8;
    cfg.p_dims = {4, 3};
    cfg.k_ranks = {2, 2};
    cfg.q_dims = {3, 4};
    cfg.rank_r = 2;
    cfg.snr = 5.0;
    cfg.seed = 11;
    out.d = generate(cfg);
    RototConfig rc;
    rc.x_ranks = {2, 2};
    out.m = rotot_fit(out.d.x, out.d.y, 2, 1e-4, rc);
    out.rep = build_report(out.m, out.d.x, out.d.y);
    return out;
  }();
  return f;
}

// The label must restate the three threshold comparisons exactly.
void check_label_partition(const DiagnosticsReport& rep) {
  REQUIRE(rep.label.size() == rep.resid_dist.size());
  for (std::size_t n = 0; n < rep.label.size(); ++n) {
    bool lev = rep.score_dist[n] > rep.c_sd;
    bool vert = rep.resid_dist[n] > rep.c_res;
    CaseLabel want;
    if (lev)
      want = vert ? CaseLabel::BadLeverage : CaseLabel::GoodLeverage;
    else if (!vert)
      want = CaseLabel::Regular;
    else
      want = rep.case_dev[n] > rep.c_case ? CaseLabel::VerticalCasewise
                                          : CaseLabel::VerticalCellwise;
    CHECK(rep.label[n] == want);
  }
}

void check_invariants(const DiagnosticsReport& rep) {
  for (std::size_t n = 0; n < rep.label.size(); ++n) {
    CHECK(rep.poc[n] >= 0.0);
    CHECK(rep.poc[n] <= 1.0);
    CHECK(rep.resid_dist[n] >= 0.0);
    CHECK(rep.score_dist[n] >= 0.0);
  }
  CHECK(rep.c_cell == doctest::Approx(3.09).epsilon(0.0033));
  check_label_partition(rep);
}

}  // namespace

TEST_CASE("cell cutoff matches the normal reference point") {
  CHECK(cutoff_cell() == doctest::Approx(3.09).scale(1).epsilon(0.0033));
  CHECK(cutoff_cell() == doctest::Approx(3.0902323061678123).epsilon(1e-9));
}

TEST_CASE("score cutoff follows the chi-square quantile") {
  CHECK(cutoff_sd({1}) == doctest::Approx(2.575829303548901).epsilon(1e-3));
  CHECK(cutoff_sd({1, 1}) == doctest::Approx(2.575829303548901).epsilon(1e-3));
  CHECK(cutoff_sd({4, 6}) == doctest::Approx(6.555899643782816).epsilon(1e-3));
  CHECK(cutoff_sd({2, 2}) == doctest::Approx(3.6437211935036444).epsilon(1e-3));
  CHECK_THROWS_AS(cutoff_sd({}), ShapeError);
}

TEST_CASE("poc counts strict exceedances over all cells") {
  Tensor zeros({2, 3});
  CHECK(poc(zeros, 3.09) == 0.0);

  Tensor tens({2, 3}, 10.0);
  CHECK(poc(tens, 3.09) == 1.0);

  Tensor half({2, 2});
  half[0] = 10.0;
  half[1] = -10.0;
  CHECK(poc(half, 3.09) == 0.5);

  // boundary is regular, missing cells never count
  Tensor edge({2, 2}, 3.09);
  CHECK(poc(edge, 3.09) == 0.0);
  Tensor miss({2, 2}, 10.0);
  miss.set_missing(0);
  CHECK(poc(miss, 3.09) == 0.75);
}

TEST_CASE("bigger cell residuals never shrink the case summaries") {
  Tensor t({2, 3});
  t[1] = 2.0;
  t[4] = -5.0;
  double c = cutoff_cell();
  double prev_poc = poc(t, c);
  double prev_fro = frobenius_norm(t);
  for (double v = 2.5; v < 9.0; v += 0.5) {
    t[1] = v;
    double p = poc(t, c);
    double fro = frobenius_norm(t);
    CHECK(p >= prev_poc);
    CHECK(fro >= prev_fro);
    prev_poc = p;
    prev_fro = fro;
  }
  CHECK(prev_poc == doctest::Approx(2.0 / 6.0));
}

TEST_CASE("perfect fit reports zeros and an all-yellow map") {
  const HandFixture& hf = perfect();
  DiagnosticsReport rep = build_report(hf.m, hf.x, hf.y);

  for (const Tensor& t : rep.std_residuals)
    for (std::size_t i = 0; i < t.size(); ++i) CHECK(t[i] == 0.0);
  for (std::size_t n = 0; n < rep.label.size(); ++n) {
    CHECK(rep.poc[n] == 0.0);
    CHECK(rep.resid_dist[n] == 0.0);
    CHECK(rep.case_dev[n] == 0.0);
    // zero residual distance rules out the vertical and bad labels; a case
    // may still sit far out in predictor space
    CHECK((rep.label[n] == CaseLabel::Regular ||
           rep.label[n] == CaseLabel::GoodLeverage));
  }
  CHECK(rep.case_scale == 0.0);
  check_label_partition(rep);

  std::string svg = render_cellmap(rep);
  CHECK(count_sub(svg, "#ffeb3b") == 16 * 12);
  CHECK(count_sub(svg, "#2e7d32") == 2);  // separators between the 3 slices
  CHECK(count_sub(svg, "#ffffff") == 0);
  CHECK(svg.rfind("<svg", 0) == 0);
  CHECK(svg.find("xmlns=\"http://www.w3.org/2000/svg\"") != std::string::npos);
  CHECK(svg.substr(svg.size() - 7) == "</svg>\n");
}

TEST_CASE("simulated cutoffs are reproducible and track the noise scale") {
  const FitFixture& ff = fitted();
  CutoffSimConfig cfg;
  cfg.replications = 200;
  cfg.seed = 7;
  SimCutoffs a = cutoff_sim(ff.m, ff.rep.cell_scales, ff.d.y, cfg);
  SimCutoffs b = cutoff_sim(ff.m, ff.rep.cell_scales, ff.d.y, cfg);
  CHECK(a.c_res == b.c_res);
  CHECK(a.c_case == b.c_case);
  CHECK(a.c_res > 0.0);
  CHECK(a.c_case > 0.0);

  RototModel loud = ff.m;
  for (std::size_t i = 0; i < loud.cell_scales.size(); ++i)
    loud.cell_scales[i] *= 2.0;
  SimCutoffs doubled = cutoff_sim(loud, ff.rep.cell_scales, ff.d.y, cfg);
  CHECK(doubled.c_res / a.c_res == doctest::Approx(2.0).epsilon(0.2));
  // the case deviation restandardizes inside each replication, so its cutoff
  // stays near 1 while the residual cutoff tracks the noise
  CHECK(doubled.c_case / a.c_case > 0.6);
  CHECK(doubled.c_case / a.c_case < 1.4);

  CutoffSimConfig other = cfg;
  other.seed = 8;
  SimCutoffs reseeded = cutoff_sim(ff.m, ff.rep.cell_scales, ff.d.y, other);
  CHECK(reseeded.c_res != a.c_res);
}

TEST_CASE("clean training data stays under the residual cutoff") {
  const FitFixture& ff = fitted();
  check_invariants(ff.rep);

  int over = 0;
  for (double rd : ff.rep.resid_dist)
    if (rd > ff.rep.c_res) ++over;
  // 0.99 quantile calibration: at most ~1% of clean cases, read with slack
  CHECK(static_cast<double>(over) / 40.0 <= 0.025);

  // byte-identical rebuild
  DiagnosticsReport again = build_report(ff.m, ff.d.x, ff.d.y);
  CHECK(report_csv(again) == report_csv(ff.rep));
}

TEST_CASE("an inflated response cell flags its case") {
  const FitFixture& ff = fitted();
  std::vector<Tensor> y2 = ff.d.y;
  y2[3][0] += 30.0 * ff.rep.cell_scales[0];
  DiagnosticsReport rep = build_report(ff.m, ff.d.x, y2);
  CHECK(std::fabs(rep.std_residuals[3][0]) > rep.c_cell);
  CHECK(rep.poc[3] >= 1.0 / 12.0);
  CHECK(rep.resid_dist[3] > ff.rep.resid_dist[3]);
  check_label_partition(rep);
}

TEST_CASE("a consistent strong predictor reads as good leverage") {
  const FitFixture& ff = fitted();
  RompcaModel rom = ff.m.rompca;
  double sd0 = score_distance(rom, rom.cores[3]);
  REQUIRE(sd0 > 0.0);
  double factor = 5.0 * cutoff_sd({2, 2}) / sd0;
  for (std::size_t i = 0; i < rom.cores[3].size(); ++i)
    rom.cores[3][i] *= factor;
  Tensor x_lev = rompca_reconstruct(rom, 3);
  Tensor y_lev = rotot_predict(ff.m, x_lev);

  std::vector<Tensor> x2 = ff.d.x;
  std::vector<Tensor> y2 = ff.d.y;
  x2[5] = x_lev;
  y2[5] = y_lev;
  DiagnosticsReport rep = build_report(ff.m, x2, y2);
  CHECK(rep.score_dist[5] > rep.c_sd);
  CHECK(rep.resid_dist[5] <= rep.c_res);
  CHECK(rep.label[5] == CaseLabel::GoodLeverage);
  check_label_partition(rep);
}

TEST_CASE("a shifted response on a strong predictor reads as bad leverage") {
  const FitFixture& ff = fitted();
  RompcaModel rom = ff.m.rompca;
  double sd0 = score_distance(rom, rom.cores[3]);
  REQUIRE(sd0 > 0.0);
  double factor = 5.0 * cutoff_sd({2, 2}) / sd0;
  for (std::size_t i = 0; i < rom.cores[3].size(); ++i)
    rom.cores[3][i] *= factor;
  Tensor x_lev = rompca_reconstruct(rom, 3);
  Tensor y_bad = rotot_predict(ff.m, x_lev);
  for (std::size_t i = 0; i < y_bad.size(); ++i)
    y_bad[i] += 12.0 * ff.rep.cell_scales[i];

  std::vector<Tensor> x2 = ff.d.x;
  std::vector<Tensor> y2 = ff.d.y;
  x2[5] = x_lev;
  y2[5] = y_bad;
  DiagnosticsReport rep = build_report(ff.m, x2, y2);
  CHECK(rep.score_dist[5] > rep.c_sd);
  CHECK(rep.resid_dist[5] > rep.c_res);
  CHECK(rep.label[5] == CaseLabel::BadLeverage);

  // the outlier map places that case beyond both red cutoff lines
  std::string svg = render_outlier_map(rep);
  double cut_x = svg_attr(svg, "<line", 0, "x1");
  double cut_y = svg_attr(svg, "<line", 1, "y1");
  double cx = svg_attr(svg, "<circle", 5, "cx");
  double cy = svg_attr(svg, "<circle", 5, "cy");
  CHECK(cx > cut_x);
  CHECK(cy < cut_y);
  CHECK(count_sub(svg, "stroke=\"red\"") == 2);
  CHECK(count_sub(svg, "<circle") == 40);
}

TEST_CASE("cellmap colors follow the coded ramp") {
  DiagnosticsReport rep;
  double c = cutoff_cell();
  Tensor t({2, 3});
  t[0] = c;        // boundary stays yellow
  t[1] = -c;
  t[2] = 1.4 * c;  // 40% up the positive ramp
  t[3] = 3.0 * c;  // saturated red
  t[4] = -3.0 * c; // saturated dark blue
  t.set_missing(5);
  rep.std_residuals = {t};
  rep.c_cell = c;
  rep.resid_dist = {0.0};
  rep.score_dist = {0.0};
  rep.case_dev = {0.0};
  rep.poc = {0.0};
  rep.label = {CaseLabel::Regular};

  CellmapLayout ly;
  ly.cell_px = 10.0;
  ly.separator_px = 2.0;
  std::string svg = render_cellmap(rep, ly);
  CHECK(count_sub(svg, "#ffeb3b") == 2);
  CHECK(count_sub(svg, "#e26f22") == 1);  // light orange 40% toward red
  CHECK(count_sub(svg, "#b71c1c") == 1);
  CHECK(count_sub(svg, "#1a237e") == 1);
  CHECK(count_sub(svg, "#ffffff") == 1);
  CHECK(count_sub(svg, "#2e7d32") == 1);
  CHECK(svg.find("width=\"62\" height=\"10\"") != std::string::npos);
  // second slice starts after the separator: column 3 at x = 3*10 + 2
  CHECK(svg.find("<rect x=\"32\"") != std::string::npos);

  std::string path = "build_cellmap_check.svg";
  render_cellmap(rep, ly, path);
  std::ifstream in(path, std::ios::binary);
  std::string back((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  CHECK(back == svg);
  std::remove(path.c_str());
  CHECK_THROWS_AS(render_cellmap(rep, ly, "no-such-dir/x.svg"),
                  FileFormatError);
}

TEST_CASE("missing response cells render white") {
  const FitFixture& ff = fitted();
  std::vector<Tensor> y2 = ff.d.y;
  y2[0].set_missing(2);
  DiagnosticsReport rep = build_report(ff.m, ff.d.x, y2);
  CHECK(!rep.std_residuals[0].observed(2));
  std::string svg = render_cellmap(rep);
  CHECK(count_sub(svg, "#ffffff") == 1);
}

TEST_CASE("report table prints fixed columns") {
  const FitFixture& ff = fitted();
  std::string csv = report_csv(ff.rep);
  CHECK(csv.rfind("case,resid_dist,score_dist,poc,case_dev,label\n", 0) == 0);
  CHECK(count_sub(csv, "\n") == 41);
  CHECK(csv.find("\n0,") != std::string::npos);
  CHECK(count_sub(csv, ",regular\n") +
            count_sub(csv, ",vertical-casewise\n") +
            count_sub(csv, ",vertical-cellwise\n") +
            count_sub(csv, ",good-leverage\n") +
            count_sub(csv, ",bad-leverage\n") ==
        40);
}
