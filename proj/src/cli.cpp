#include "rotot/cli.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "rotot/diagnostics.hpp"
#include "rotot/errors.hpp"
#include "rotot/io.hpp"
#include "rotot/model_io.hpp"
#include "rotot/rotot.hpp"
#include "rotot/simlab.hpp"

namespace rotot {
namespace {

Shape parse_int_list(const std::string& text) {
  Shape out;
  std::istringstream in(text);
  std::string item;
  while (std::getline(in, item, ','))
    out.push_back(std::stoi(item));
  return out;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw FileFormatError("cannot create directory: " + dir);
}

void write_file(const std::string& path, const std::string& body) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw FileFormatError("cannot open for writing: " + path);
  f << body;
  f.flush();
  if (!f) throw FileFormatError("write failed: " + path);
}

struct FitArgs {
  std::string x_path, y_path, out_path, x_ranks;
  int rank = 1;
  double lambda = -1.0;
  bool cv = false;
  int folds = 5;
  std::uint64_t seed = 1;
  std::vector<double> lambda_grid{1e-5, 1e-4, 1e-3, 1e-2};
};

int do_fit(const FitArgs& a) {
  std::vector<Tensor> x = read_tens(a.x_path);
  std::vector<Tensor> y = read_tens(a.y_path);
  if (x.size() != y.size())
    throw ShapeError("fit: predictor and response case counts differ");

  RototConfig cfg;
  cfg.seed = a.seed;
  cfg.cv_folds = a.folds;
  if (!a.x_ranks.empty()) cfg.x_ranks = parse_int_list(a.x_ranks);

  InitBundle bundle = build_init_bundle(x, y, cfg);
  double lambda = a.lambda;
  if (a.cv) {
    CvResult sel =
        cross_validate(bundle, y, {a.rank}, a.lambda_grid, cfg);
    lambda = sel.best_lambda;
  }
  RototModel m = rotot_fit_bundled(bundle, y, a.rank, lambda, cfg);
  ModelMeta meta;
  meta.seed = a.seed;
  save_model(a.out_path, m, meta);
  std::cout << "fit: rank " << m.rank_r << " lambda " << m.lambda
            << " iterations " << m.iterations
            << (m.converged ? " converged" : " not-converged") << " objective "
            << m.objective_trace.back() << '\n';
  return 0;
}

int do_predict(const std::string& model_path, const std::string& x_path,
               const std::string& out_path) {
  RototModel m = load_model(model_path);
  std::vector<Tensor> x = read_tens(x_path);
  std::vector<Tensor> pred;
  pred.reserve(x.size());
  for (const Tensor& xn : x) pred.push_back(rotot_predict(m, xn));
  write_tens(out_path, pred);
  std::cout << "predict: " << pred.size() << " cases -> " << out_path << '\n';
  return 0;
}

int do_diagnose(const std::string& model_path, const std::string& x_path,
                const std::string& y_path, const std::string& out_dir,
                std::uint64_t sim_seed) {
  RototModel m = load_model(model_path);
  std::vector<Tensor> x = read_tens(x_path);
  std::vector<Tensor> y = read_tens(y_path);
  CutoffSimConfig cfg;
  cfg.seed = sim_seed;
  DiagnosticsReport rep = build_report(m, x, y, cfg);

  ensure_dir(out_dir);
  std::filesystem::path dir(out_dir);
  write_file((dir / "report.csv").string(), report_csv(rep));
  render_cellmap(rep, CellmapLayout{}, (dir / "cellmap.svg").string());
  render_outlier_map(rep, (dir / "outliermap.svg").string());

  std::size_t regular = 0;
  for (CaseLabel l : rep.label)
    if (l == CaseLabel::Regular) ++regular;
  std::cout << "diagnose: " << rep.label.size() << " cases, " << regular
            << " regular -> " << out_dir << '\n';
  return 0;
}

int do_simulate(const std::string& config_path, const std::string& out_dir) {
  std::ifstream in(config_path);
  if (!in) throw FileFormatError("cannot open: " + config_path);
  ScenarioSpec spec;
  try {
    spec = parse_scenario_config(in);
  } catch (const ShapeError&) {
    throw;
  } catch (const std::invalid_argument& e) {
    throw FileFormatError(e.what());  // parser messages carry their own prefix
  }
  ScenarioTable table = run_scenario(spec);

  ensure_dir(out_dir);
  std::filesystem::path dir(out_dir);
  std::ostringstream results, medians;
  write_results_csv(results, table);
  write_medians_csv(medians, table);
  write_file((dir / "results.csv").string(), results.str());
  write_file((dir / "medians.csv").string(), medians.str());
  std::cout << "simulate: " << table.rows.size() << " rows -> " << out_dir
            << '\n';
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"robust tensor-on-tensor regression"};
  app.require_subcommand(1);

  FitArgs fa;
  CLI::App* fit = app.add_subcommand("fit", "fit a model on tensor stacks");
  fit->add_option("--x", fa.x_path, "predictor stack (.tens)")->required();
  fit->add_option("--y", fa.y_path, "response stack (.tens)")->required();
  fit->add_option("--rank", fa.rank, "CP rank of the slope")->required();
  CLI::Option* lam =
      fit->add_option("--lambda", fa.lambda, "ridge penalty (fixed)");
  CLI::Option* cv = fit->add_flag(
      "--cv", fa.cv, "select the penalty by cross-validation instead");
  fit->add_option("--folds", fa.folds, "cross-validation folds")
      ->default_val(5);
  fit->add_option("--lambda-grid", fa.lambda_grid,
                  "candidate penalties for --cv");
  fit->add_option("--x-ranks", fa.x_ranks,
                  "predictor reduction ranks, comma separated");
  fit->add_option("--seed", fa.seed, "fit seed")->default_val(1);
  fit->add_option("--out", fa.out_path, "model file to write")->required();
  lam->excludes(cv);
  cv->excludes(lam);

  std::string p_model, p_x, p_out;
  CLI::App* predict =
      app.add_subcommand("predict", "predict responses for new predictors");
  predict->add_option("--model", p_model, "model file")->required();
  predict->add_option("--x", p_x, "predictor stack (.tens)")->required();
  predict->add_option("--out", p_out, "prediction stack to write")->required();

  std::string d_model, d_x, d_y, d_dir;
  std::uint64_t d_seed = 1;
  CLI::App* diagnose =
      app.add_subcommand("diagnose", "outlier report and maps for a dataset");
  diagnose->add_option("--model", d_model, "model file")->required();
  diagnose->add_option("--x", d_x, "predictor stack (.tens)")->required();
  diagnose->add_option("--y", d_y, "response stack (.tens)")->required();
  diagnose->add_option("--out-dir", d_dir, "directory for the artifacts")
      ->required();
  diagnose->add_option("--seed", d_seed, "cutoff simulation seed")
      ->default_val(1);

  std::string s_config, s_dir;
  CLI::App* simulate =
      app.add_subcommand("simulate", "run a contamination scenario grid");
  simulate->add_option("--config", s_config, "scenario config file")
      ->required();
  simulate->add_option("--out-dir", s_dir, "directory for the result tables")
      ->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (fit->parsed()) {
      if (!fa.cv && fa.lambda < 0.0) {
        std::cerr << "fit: give either --lambda or --cv\n";
        return 1;
      }
      return do_fit(fa);
    }
    if (predict->parsed()) return do_predict(p_model, p_x, p_out);
    if (diagnose->parsed())
      return do_diagnose(d_model, d_x, d_y, d_dir, d_seed);
    if (simulate->parsed()) return do_simulate(s_config, s_dir);
  } catch (const FileFormatError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ShapeError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  } catch (const FitError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 4;
  }
  return 1;
}

int run_cli(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("rotot");
  for (const std::string& a : args) argv.push_back(a.c_str());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace rotot
