#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "rotot/rotot.hpp"

namespace rotot {

// Post-fit case taxonomy from the three cutoff comparisons. A case is a
// leverage point when its score distance is large; among leverage points the
// residual distance separates good from bad. Non-leverage cases with a large
// residual distance split on the standardized case deviation: a large one
// means the whole case sits off the regression (casewise), a small one means
// a few wild cells inflate the distance while the bulk still fits (cellwise).
enum class CaseLabel {
  Regular,
  VerticalCasewise,
  VerticalCellwise,
  GoodLeverage,
  BadLeverage,
};

const char* case_label_name(CaseLabel label);

struct CutoffSimConfig {
  int replications = 500;
  std::uint64_t seed = 1;
};

struct SimCutoffs {
  double c_res = 0.0;
  double c_case = 0.0;
};

struct DiagnosticsReport {
  std::vector<Tensor> std_residuals;  // response-shaped, masked like y_n
  Tensor cell_scales;                 // fresh per-cell M-scales of residuals
  double case_scale = 0.0;            // M-scale of the case deviations
  std::vector<double> case_dev;       // standardized case deviations
  std::vector<double> resid_dist;     // Frobenius norm over observed cells
  std::vector<double> score_dist;     // core distances under the MRCD metric
  std::vector<double> poc;            // share of cells beyond c_cell
  double c_cell = 0.0;
  double c_case = 0.0;
  double c_sd = 0.0;
  double c_res = 0.0;
  std::vector<CaseLabel> label;
};

// sqrt of chi2(1, 0.998): a standardized cell is regular up to ~3.09.
double cutoff_cell();

// sqrt of chi2(prod ranks, 0.99): score distance cutoff for K-shaped cores.
double cutoff_sd(const Shape& ranks);

// Fraction of all cells with |standardized residual| strictly above c_cell.
// Missing cells count as regular; the denominator is the full cell count.
double poc(const Tensor& std_residual, double c_cell);

// 0.99 quantiles of the residual distance and the standardized case deviation
// over seeded synthetic clean replications: each draws Gaussian noise at the
// model's cell scales on every observed cell of mask_like, standardizes by
// std_scales, and pushes the case deviations through the same M-scale
// pipeline as a real report. Keeping the noise scale (from the model) apart
// from the standardizer (from the data at hand) carries any mismatch between
// the two straight into c_res. Replications use independent derived streams,
// so the result is deterministic in cfg.seed alone.
SimCutoffs cutoff_sim(const RototModel& m, const Tensor& std_scales,
                      const std::vector<Tensor>& mask_like,
                      const CutoffSimConfig& cfg = {});

// Full post-fit report on a dataset: per-case predictions through the
// robust projection of x, fresh M-scales of the resulting residuals, POC,
// score distances, simulated cutoffs and labels. x/y may be the training
// data or new cases of the same shapes. Throws ShapeError on mismatched
// shapes or empty input.
DiagnosticsReport build_report(const RototModel& m,
                               const std::vector<Tensor>& x,
                               const std::vector<Tensor>& y,
                               const CutoffSimConfig& cfg = {});

// CSV table: case,resid_dist,score_dist,poc,case_dev,label. 17 significant
// digits, one row per case in order.
std::string report_csv(const DiagnosticsReport& rep);

struct CellmapLayout {
  double cell_px = 12.0;      // square cell side
  double separator_px = 2.0;  // green slice separator width
};

// Heatmap of standardized residuals, one row per case. Columns group by the
// first response mode (one slice per index, separated by green bars) with the
// remaining modes vectorized inside each slice. Yellow within +-c_cell
// (boundary inclusive), linear ramp light-orange to red over (c, 2c] for
// positive exceedances and purple to dark blue for negative ones, saturating
// beyond 2c; missing cells are white.
std::string render_cellmap(const DiagnosticsReport& rep,
                           const CellmapLayout& layout = {});
void render_cellmap(const DiagnosticsReport& rep, const CellmapLayout& layout,
                    const std::string& path);

// Scatter of residual distance against score distance. Point area grows
// linearly in POC above a small visibility floor; fill is white up to c_case
// and ramps light gray to black beyond; red lines mark c_sd (vertical) and
// c_res (horizontal).
std::string render_outlier_map(const DiagnosticsReport& rep);
void render_outlier_map(const DiagnosticsReport& rep, const std::string& path);

}  // namespace rotot
