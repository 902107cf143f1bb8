#include "rotot/diagnostics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "rotot/errors.hpp"
#include "rotot/kernels.hpp"
#include "rotot/regression.hpp"
#include "rotot/rng.hpp"
#include "rotot/rompca.hpp"
#include "rotot/stats.hpp"

namespace rotot {
namespace {

// Zero-scale cells keep exact zeros finite and push everything else off the
// chart; NaN (a case with no observed cell) passes through.
double standardize(double r, double s) {
  if (std::isnan(r)) return r;
  if (s > 0.0) return r / s;
  if (r == 0.0) return 0.0;
  return r > 0.0 ? std::numeric_limits<double>::infinity()
                 : -std::numeric_limits<double>::infinity();
}

Tensor standardized(const Tensor& res, const Tensor& scales) {
  Tensor out = res;
  for (std::size_t i = 0; i < out.size(); ++i)
    out[i] = out.observed(i) ? standardize(res[i], scales[i]) : 0.0;
  return out;
}

double observed_fro(const Tensor& t) {
  double s = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    if (t.observed(i)) s += t[i] * t[i];
  return std::sqrt(s);
}

CaseLabel classify(double rd, double sd, double dev, double c_res, double c_sd,
                   double c_case) {
  if (sd > c_sd)
    return rd > c_res ? CaseLabel::BadLeverage : CaseLabel::GoodLeverage;
  if (!(rd > c_res)) return CaseLabel::Regular;
  return dev > c_case ? CaseLabel::VerticalCasewise
                      : CaseLabel::VerticalCellwise;
}

std::string format_g17(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

std::string lerp_hex(const int from[3], const int to[3], double t) {
  char buf[8];
  int rgb[3];
  for (int c = 0; c < 3; ++c)
    rgb[c] = from[c] + static_cast<int>(std::lround(t * (to[c] - from[c])));
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", rgb[0], rgb[1], rgb[2]);
  return buf;
}

constexpr int kLightOrange[3] = {255, 167, 38};
constexpr int kRed[3] = {183, 28, 28};
constexpr int kPurple[3] = {149, 117, 205};
constexpr int kDarkBlue[3] = {26, 35, 126};

// Ramp position over (c, 2c], saturating at the extreme color beyond.
double ramp_t(double mag, double c) {
  if (std::isinf(mag)) return 1.0;
  return std::min(1.0, std::max(0.0, (mag - c) / c));
}

std::string cell_color(double v, bool observed, double c) {
  if (!observed) return "#ffffff";
  double mag = std::fabs(v);
  if (mag <= c) return "#ffeb3b";
  double t = ramp_t(mag, c);
  return v > 0.0 ? lerp_hex(kLightOrange, kRed, t)
                 : lerp_hex(kPurple, kDarkBlue, t);
}

void rect(std::ostringstream& out, double x, double y, double w, double h,
          const std::string& fill) {
  out << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\""
      << num(w) << "\" height=\"" << num(h) << "\" fill=\"" << fill << "\"/>\n";
}

void write_text_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FileFormatError("cannot open for writing: " + path);
  f << body;
  f.flush();
  if (!f) throw FileFormatError("write failed: " + path);
}

}  // namespace

const char* case_label_name(CaseLabel label) {
  switch (label) {
    case CaseLabel::Regular: return "regular";
    case CaseLabel::VerticalCasewise: return "vertical-casewise";
    case CaseLabel::VerticalCellwise: return "vertical-cellwise";
    case CaseLabel::GoodLeverage: return "good-leverage";
    case CaseLabel::BadLeverage: return "bad-leverage";
  }
  return "regular";
}

double cutoff_cell() { return std::sqrt(chi2_quantile(1, 0.998)); }

double cutoff_sd(const Shape& ranks) {
  if (ranks.empty()) throw ShapeError("cutoff_sd: empty rank vector");
  std::size_t prod = shape_size(ranks);
  return std::sqrt(chi2_quantile(static_cast<int>(prod), 0.99));
}

double poc(const Tensor& std_residual, double c_cell) {
  if (std_residual.size() == 0) return 0.0;
  std::size_t hits = 0;
  for (std::size_t i = 0; i < std_residual.size(); ++i)
    if (std_residual.observed(i) && std::fabs(std_residual[i]) > c_cell)
      ++hits;
  return static_cast<double>(hits) / static_cast<double>(std_residual.size());
}

SimCutoffs cutoff_sim(const RototModel& m, const Tensor& std_scales,
                      const std::vector<Tensor>& mask_like,
                      const CutoffSimConfig& cfg) {
  const Shape qshape = m.cp.qshape();
  if (mask_like.empty()) throw ShapeError("cutoff_sim: no cases");
  if (cfg.replications < 1)
    throw ShapeError("cutoff_sim: need at least one replication");
  if (!same_shape(std_scales.shape(), qshape))
    throw ShapeError("cutoff_sim: scale shape mismatch");
  for (const Tensor& t : mask_like)
    if (!same_shape(t.shape(), qshape))
      throw ShapeError("cutoff_sim: mask shape mismatch");

  const std::size_t n_cases = mask_like.size();
  Rng master(cfg.seed);
  std::vector<double> pool_rd, pool_dev;
  pool_rd.reserve(n_cases * static_cast<std::size_t>(cfg.replications));
  pool_dev.reserve(pool_rd.capacity());

  for (int b = 0; b < cfg.replications; ++b) {
    Rng rb = master.derive(static_cast<std::uint64_t>(b) + 1);
    std::vector<Tensor> res;
    res.reserve(n_cases);
    for (std::size_t n = 0; n < n_cases; ++n) {
      Tensor e(qshape);
      for (std::size_t i = 0; i < e.size(); ++i) {
        if (mask_like[n].observed(i))
          e[i] = m.cell_scales[i] * rb.normal();
        else
          e.set_missing(i);
      }
      res.push_back(std::move(e));
    }
    for (const Tensor& r : res)
      pool_rd.push_back(observed_fro(standardized(r, std_scales)));
    std::vector<double> dev = case_deviations(res, std_scales, m.rho1);
    std::vector<double> finite;
    finite.reserve(dev.size());
    for (double d : dev)
      if (!std::isnan(d)) finite.push_back(d);
    if (finite.empty()) continue;
    double sigma2b = mscale(finite);
    for (double d : dev)
      if (!std::isnan(d)) pool_dev.push_back(standardize(d, sigma2b));
  }
  if (pool_rd.empty() || pool_dev.empty())
    throw FitError("cutoff_sim: every synthetic case was empty");

  SimCutoffs out;
  out.c_res = quantile_ceil(pool_rd, 0.99);
  out.c_case = quantile_ceil(pool_dev, 0.99);
  return out;
}

DiagnosticsReport build_report(const RototModel& m,
                               const std::vector<Tensor>& x,
                               const std::vector<Tensor>& y,
                               const CutoffSimConfig& cfg) {
  if (x.empty() || x.size() != y.size())
    throw ShapeError("build_report: need matching nonempty x and y");
  const Shape pshape = m.cp.pshape();
  const Shape qshape = m.cp.qshape();
  for (std::size_t n = 0; n < x.size(); ++n) {
    if (!same_shape(x[n].shape(), pshape))
      throw ShapeError("build_report: predictor shape mismatch");
    if (!same_shape(y[n].shape(), qshape))
      throw ShapeError("build_report: response shape mismatch");
  }

  const std::size_t n_cases = x.size();
  DiagnosticsReport rep;
  rep.score_dist.reserve(n_cases);
  std::vector<Tensor> residuals;
  residuals.reserve(n_cases);
  for (std::size_t n = 0; n < n_cases; ++n) {
    RompcaProjection pr = rompca_project_new(m.rompca, x[n]);
    Tensor fitted = cp_apply(m.cp, pr.imputed);
    Tensor r = y[n];
    for (std::size_t i = 0; i < r.size(); ++i)
      r[i] = r.observed(i) ? y[n][i] - (m.cp.b0[i] + fitted[i]) : 0.0;
    residuals.push_back(std::move(r));
    rep.score_dist.push_back(pr.sd);
  }

  Tensor scales(qshape);
  std::vector<double> sample;
  for (std::size_t i = 0; i < scales.size(); ++i) {
    sample.clear();
    for (const Tensor& r : residuals)
      if (r.observed(i)) sample.push_back(r[i]);
    scales[i] = sample.empty() ? 0.0 : mscale(sample);
  }
  rep.cell_scales = scales;

  rep.std_residuals.reserve(n_cases);
  rep.resid_dist.reserve(n_cases);
  for (const Tensor& r : residuals) {
    rep.std_residuals.push_back(standardized(r, scales));
    rep.resid_dist.push_back(observed_fro(rep.std_residuals.back()));
  }

  std::vector<double> dev = case_deviations(residuals, scales, m.rho1);
  std::vector<double> finite;
  finite.reserve(dev.size());
  for (double d : dev)
    if (!std::isnan(d)) finite.push_back(d);
  if (finite.empty()) throw FitError("build_report: no case has observed cells");
  rep.case_scale = mscale(finite);
  rep.case_dev.reserve(n_cases);
  for (double d : dev) rep.case_dev.push_back(standardize(d, rep.case_scale));

  rep.c_cell = cutoff_cell();
  rep.c_sd = cutoff_sd(m.rompca.kshape());
  SimCutoffs sim = cutoff_sim(m, scales, y, cfg);
  rep.c_res = sim.c_res;
  rep.c_case = sim.c_case;

  rep.poc.reserve(n_cases);
  rep.label.reserve(n_cases);
  for (std::size_t n = 0; n < n_cases; ++n) {
    rep.poc.push_back(poc(rep.std_residuals[n], rep.c_cell));
    rep.label.push_back(classify(rep.resid_dist[n], rep.score_dist[n],
                                 rep.case_dev[n], rep.c_res, rep.c_sd,
                                 rep.c_case));
  }
  return rep;
}

std::string report_csv(const DiagnosticsReport& rep) {
  std::ostringstream out;
  out << "case,resid_dist,score_dist,poc,case_dev,label\n";
  for (std::size_t n = 0; n < rep.label.size(); ++n) {
    out << n << ',' << format_g17(rep.resid_dist[n]) << ','
        << format_g17(rep.score_dist[n]) << ',' << format_g17(rep.poc[n])
        << ',' << format_g17(rep.case_dev[n]) << ','
        << case_label_name(rep.label[n]) << '\n';
  }
  return out.str();
}

std::string render_cellmap(const DiagnosticsReport& rep,
                           const CellmapLayout& layout) {
  if (rep.std_residuals.empty())
    throw ShapeError("render_cellmap: empty report");
  const Shape qshape = rep.std_residuals.front().shape();
  const std::size_t q_total = shape_size(qshape);
  const int slices = qshape[0];
  const std::size_t slice_width = q_total / static_cast<std::size_t>(slices);
  const std::size_t n_cases = rep.std_residuals.size();
  const double cw = layout.cell_px;
  const double sep = layout.separator_px;
  const double width =
      static_cast<double>(q_total) * cw + static_cast<double>(slices - 1) * sep;
  const double height = static_cast<double>(n_cases) * cw;

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width)
      << "\" height=\"" << num(height) << "\" viewBox=\"0 0 " << num(width)
      << ' ' << num(height) << "\" shape-rendering=\"crispEdges\">\n";
  for (int s = 1; s < slices; ++s) {
    double x = static_cast<double>(s) * static_cast<double>(slice_width) * cw +
               static_cast<double>(s - 1) * sep;
    rect(out, x, 0.0, sep, height, "#2e7d32");
  }
  for (std::size_t n = 0; n < n_cases; ++n) {
    const Tensor& t = rep.std_residuals[n];
    for (std::size_t lin = 0; lin < t.size(); ++lin) {
      // Columns group by the first response index; the native linear order
      // runs that index fastest, so the within-slice offset is lin / Q1.
      std::size_t s = lin % static_cast<std::size_t>(slices);
      std::size_t col = s * slice_width + lin / static_cast<std::size_t>(slices);
      double x = static_cast<double>(col) * cw +
                 static_cast<double>(col / slice_width) * sep;
      rect(out, x, static_cast<double>(n) * cw, cw, cw,
           cell_color(t[lin], t.observed(lin), rep.c_cell));
    }
  }
  out << "</svg>\n";
  return out.str();
}

void render_cellmap(const DiagnosticsReport& rep, const CellmapLayout& layout,
                    const std::string& path) {
  write_text_file(path, render_cellmap(rep, layout));
}

std::string render_outlier_map(const DiagnosticsReport& rep) {
  if (rep.label.empty()) throw ShapeError("render_outlier_map: empty report");
  const double left = 54.0, right = 16.0, top = 16.0, bottom = 42.0;
  const double width = 480.0, height = 360.0;
  const double pw = width - left - right, ph = height - top - bottom;

  double xmax = rep.c_sd, ymax = rep.c_res;
  for (double v : rep.score_dist)
    if (std::isfinite(v)) xmax = std::max(xmax, v);
  for (double v : rep.resid_dist)
    if (std::isfinite(v)) ymax = std::max(ymax, v);
  if (!(xmax > 0.0)) xmax = 1.0;
  if (!(ymax > 0.0)) ymax = 1.0;
  xmax *= 1.08;
  ymax *= 1.08;
  auto xpos = [&](double v) {
    if (!std::isfinite(v)) return left + pw;
    return left + pw * std::min(1.0, std::max(0.0, v / xmax));
  };
  auto ypos = [&](double v) {
    if (!std::isfinite(v)) return top;
    return top + ph * (1.0 - std::min(1.0, std::max(0.0, v / ymax)));
  };

  std::ostringstream out;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << num(width)
      << "\" height=\"" << num(height) << "\" viewBox=\"0 0 " << num(width)
      << ' ' << num(height) << "\">\n";
  out << "<rect x=\"" << num(left) << "\" y=\"" << num(top) << "\" width=\""
      << num(pw) << "\" height=\"" << num(ph)
      << "\" fill=\"none\" stroke=\"#000000\"/>\n";
  out << "<text x=\"" << num(left + pw / 2) << "\" y=\"" << num(height - 10)
      << "\" text-anchor=\"middle\" font-size=\"13\">score distance</text>\n";
  out << "<text x=\"14\" y=\"" << num(top + ph / 2)
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 14 "
      << num(top + ph / 2) << ")\">residual distance</text>\n";
  double cx_cut = xpos(rep.c_sd), cy_cut = ypos(rep.c_res);
  out << "<line x1=\"" << num(cx_cut) << "\" y1=\"" << num(top) << "\" x2=\""
      << num(cx_cut) << "\" y2=\"" << num(top + ph)
      << "\" stroke=\"red\" stroke-width=\"1\"/>\n";
  out << "<line x1=\"" << num(left) << "\" y1=\"" << num(cy_cut) << "\" x2=\""
      << num(left + pw) << "\" y2=\"" << num(cy_cut)
      << "\" stroke=\"red\" stroke-width=\"1\"/>\n";

  constexpr int kLightGray[3] = {211, 211, 211};
  constexpr int kBlack[3] = {0, 0, 0};
  for (std::size_t n = 0; n < rep.label.size(); ++n) {
    // Area grows linearly in POC once above the 2px visibility floor.
    double r = std::max(2.0, 10.0 * std::sqrt(rep.poc[n]));
    double dv = rep.case_dev[n];
    std::string fill =
        !(dv > rep.c_case)
            ? "#ffffff"
            : lerp_hex(kLightGray, kBlack, ramp_t(dv, rep.c_case));
    out << "<circle cx=\"" << num(xpos(rep.score_dist[n])) << "\" cy=\""
        << num(ypos(rep.resid_dist[n])) << "\" r=\"" << num(r) << "\" fill=\""
        << fill << "\" stroke=\"#333333\" stroke-width=\"0.8\"/>\n";
  }
  out << "</svg>\n";
  return out.str();
}

void render_outlier_map(const DiagnosticsReport& rep, const std::string& path) {
  write_text_file(path, render_outlier_map(rep));
}

}  // namespace rotot
