// tebfar: simulation, fitting, prediction and benchmarking front end.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tebfar/tebfar.hpp"

namespace fs = std::filesystem;
using namespace tebfar;

namespace {

struct GridSpec {
  double lo = 0.0, hi = 0.0;
  int n = 0;
};

GridSpec parse_grid(const std::string& s) {
  std::vector<std::string> parts;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ':');) parts.push_back(part);
  if (parts.size() != 3) throw ConfigError("grid must be LO:HI:N, got '" + s + "'");
  GridSpec g;
  const auto lo = detail::parse_decimal(parts[0]);
  const auto hi = detail::parse_decimal(parts[1]);
  const auto n = detail::parse_decimal(parts[2]);
  if (!lo || !hi || !n || *n < 1 || *n != static_cast<int>(*n)) throw ConfigError("grid must be LO:HI:N, got '" + s + "'");
  g.lo = *lo;
  g.hi = *hi;
  g.n = static_cast<int>(*n);
  if (g.n > 1 && !(g.hi > g.lo)) throw ConfigError("grid needs HI > LO");
  return g;
}

std::vector<double> grid_values(const GridSpec& g) {
  std::vector<double> v(static_cast<std::size_t>(g.n));
  for (int i = 0; i < g.n; ++i) v[static_cast<std::size_t>(i)] = g.n == 1 ? g.lo : g.lo + (g.hi - g.lo) * i / (g.n - 1);
  if (g.n > 1) v.back() = g.hi;
  return v;
}

// "A:B" is the inclusive range, anything else a comma list.
std::vector<std::uint64_t> parse_seeds(const std::string& s) {
  std::vector<std::uint64_t> out;
  auto num = [&](const std::string& t) {
    std::uint64_t v = 0;
    const auto tt = detail::trim(t);
    const auto [ptr, ec] = std::from_chars(tt.data(), tt.data() + tt.size(), v);
    if (ec != std::errc() || ptr != tt.data() + tt.size()) throw ConfigError("bad seed '" + t + "'");
    return v;
  };
  if (const auto colon = s.find(':'); colon != std::string::npos) {
    const auto a = num(s.substr(0, colon));
    const auto b = num(s.substr(colon + 1));
    if (b < a) throw ConfigError("seed range must be increasing");
    for (auto v = a; v <= b; ++v) out.push_back(v);
    return out;
  }
  std::stringstream ss(s);
  for (std::string t; std::getline(ss, t, ',');) out.push_back(num(t));
  return out;
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string t; std::getline(ss, t, ',');)
    if (!t.empty()) out.emplace_back(detail::trim(t));
  return out;
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) {
    std::error_code ec;
    fs::create_directories(path.parent_path(), ec);
  }
  std::ofstream out(path);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  return out;
}

void check_written(std::ofstream& out, const fs::path& path) {
  out.flush();
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

struct ChainFlags {
  int iters = 5000, burnin = 2500, thin = 5;
  std::optional<int> kmax;
};

SamplerConfig sampler_config(const ChainFlags& f) {
  SamplerConfig c;
  c.iterations = f.iters;
  c.burn_in = f.burnin;
  c.thin = f.thin;
  c.k_max = f.kmax;
  return c;
}

void add_chain_flags(CLI::App* cmd, ChainFlags& f) {
  cmd->add_option("--iters", f.iters, "Gibbs iterations")->capture_default_str();
  cmd->add_option("--burnin", f.burnin, "burn-in iterations")->capture_default_str();
  cmd->add_option("--thin", f.thin, "thinning interval")->capture_default_str();
  cmd->add_option("--kmax", f.kmax, "loadings truncation (default min(p+1, floor(5 + 2 ln(p+1))))");
}

void add_cv_cell_flags(CLI::App* cmd, ChainFlags& f) {
  f = {2000, 1000, 5, std::nullopt};
  cmd->add_option("--cv-iters", f.iters, "iterations per CV cell chain")->capture_default_str();
  cmd->add_option("--cv-burnin", f.burnin, "burn-in per CV cell chain")->capture_default_str();
  cmd->add_option("--cv-thin", f.thin, "thinning per CV cell chain")->capture_default_str();
}

Json simulated_truth(const sim::SimulatedData& d) {
  Json j;
  j["scenario"] = sim::scenario_name(d.spec.scenario);
  j["seed"] = d.spec.seed;
  j["n_train"] = d.spec.n_train;
  j["n_test"] = d.spec.n_test;
  if (d.model) j["model"] = model_to_json(*d.model);
  if (d.beta) {
    j["beta"] = to_json_vector(*d.beta);
    j["nonzero"] = (d.beta->array() != 0.0).count();
  }
  j["joint_cov"] = to_json_matrix(d.joint_cov);
  const auto reg = conditional_regression(d.joint_cov, d.joint_cov.rows() - 1);
  j["population_r2"] = 1.0 - reg.sigma2 / d.joint_cov(d.joint_cov.rows() - 1, d.joint_cov.rows() - 1);
  return j;
}

int run(int argc, char** argv) {
  CLI::App app{"Targeted empirical Bayes factor regression"};
  app.require_subcommand(1);
  int jobs = default_jobs();
  app.add_option("--jobs", jobs, "worker threads (default from TEBFAR_JOBS, else 1)");

  // simulate ---------------------------------------------------------------
  auto* simulate = app.add_subcommand("simulate", "Generate train/test CSVs and truth.json for a scenario");
  std::string scenario;
  Eigen::Index ntrain = 0, ntest = 0;
  std::uint64_t seed = 0;
  std::string out_dir;
  simulate->add_option("--scenario", scenario, "1, 2, 3, motivating or null")->required();
  simulate->add_option("--ntrain", ntrain, "training rows")->required();
  simulate->add_option("--ntest", ntest, "test rows")->required();
  simulate->add_option("--seed", seed, "random seed")->required();
  simulate->add_option("--out", out_dir, "output directory")->required();

  // fit --------------------------------------------------------------------
  auto* fit = app.add_subcommand(
      "fit",
      "Fit a factor model and write a draws manifest.\n"
      "In --cv mode also writes <out stem>.cv.csv with columns sigma_y2,mean_cv_mse.");
  std::string data_path, outcome = "y", mode = "tebfar", model_out;
  std::optional<double> sigma_y2;
  std::optional<int> cv_folds;
  std::string grid_str = "0.01:1:100";
  ChainFlags chain, cell;
  bool drop_incomplete = false;
  fit->add_option("--data", data_path, "input CSV with header")->required();
  fit->add_option("--outcome", outcome, "response column name")->capture_default_str();
  fit->add_option("--sigma-y2", sigma_y2, "fixed response variance (tebfar mode)");
  fit->add_option("--cv", cv_folds, "select sigma_y2 by K-fold CV (tebfar mode)");
  fit->add_option("--grid", grid_str, "CV grid LO:HI:N")->capture_default_str();
  fit->add_option("--mode", mode, "tebfar or jbfm")->capture_default_str();
  fit->add_option("--seed", seed, "random seed")->required();
  fit->add_option("--out", model_out, "manifest path (draws go to <stem>.draws.csv)")->required();
  fit->add_flag("--drop-incomplete", drop_incomplete, "drop rows with missing cells");
  add_chain_flags(fit, chain);
  add_cv_cell_flags(fit, cell);

  // predict ----------------------------------------------------------------
  auto* predict_cmd = app.add_subcommand("predict", "Predict the response on the original scale (row_index,y_hat)");
  std::string manifest_path, pred_out;
  predict_cmd->add_option("--model", manifest_path, "draws manifest from fit")->required();
  predict_cmd->add_option("--data", data_path, "CSV containing the predictor columns")->required();
  predict_cmd->add_option("--out", pred_out, "predictions CSV")->required();

  // eval-mse ---------------------------------------------------------------
  auto* eval = app.add_subcommand("eval-mse", "Mean squared error of predictions against a truth CSV");
  std::string pred_path, truth_path, mse_out;
  eval->add_option("--pred", pred_path, "predictions CSV (row_index,y_hat)")->required();
  eval->add_option("--truth", truth_path, "CSV containing the outcome column")->required();
  eval->add_option("--outcome", outcome, "response column name")->capture_default_str();
  eval->add_option("--out", mse_out, "optional CSV with a single mse column");

  // kl-scan ----------------------------------------------------------------
  auto* kl = app.add_subcommand(
      "kl-scan",
      "KL-optimal rank-k fits over fixed sigma_y2 values.\n"
      "CSV columns: sigma_y2,kl,dist_col_1..dist_col_m,ell_joint,ell_x,ell_y_given_x\n"
      "(ell_* are expected log-likelihoods per observation).");
  std::string kl_grid = "0.005:1.2:240", kl_truth, kl_out;
  int kl_k = 1, restarts = 10;
  kl->add_option("--truth", kl_truth, "truth.json with a model (default: the motivating model)");
  kl->add_option("--k", kl_k, "rank of the approximation")->capture_default_str();
  kl->add_option("--grid", kl_grid, "sigma_y2 grid LO:HI:N")->capture_default_str();
  kl->add_option("--restarts", restarts, "EM restarts per grid value")->capture_default_str();
  kl->add_option("--seed", seed, "restart jitter seed")->required();
  kl->add_option("--out", kl_out, "output CSV")->required();

  // align ------------------------------------------------------------------
  auto* align_cmd = app.add_subcommand(
      "align",
      "Varimax-rotate and align each draw's loadings to a reference.\n"
      "CSV columns: row,variable,column,mean,lower,upper,display (95% interval; display is 0 when it covers 0).");
  std::string reference_path, align_out;
  bool no_rotate = false;
  align_cmd->add_option("--model", manifest_path, "draws manifest from fit")->required();
  align_cmd->add_option("--reference", reference_path,
                        "model JSON whose lambda is the reference (default: varimax of the last draw)");
  align_cmd->add_flag("--no-rotate", no_rotate, "skip the varimax step");
  align_cmd->add_option("--out", align_out, "output CSV")->required();

  // bench ------------------------------------------------------------------
  auto* bench_cmd = app.add_subcommand(
      "bench",
      "Method x ntrain x seed simulation study.\n"
      "Writes a long CSV (method,ntrain,seed,mse) and a pivot of mean MSE (ntrain,<method>...).");
  std::string ntrains_str, seeds_str, methods_str = "tebfar-cv,jbfm,lasso-cv,ridge-cv,ols", bench_out, pivot_out;
  int folds = 10;
  bench_cmd->add_option("--scenario", scenario, "1, 2, 3, motivating or null")->required();
  bench_cmd->add_option("--ntrain", ntrains_str, "comma-separated training sizes")->required();
  bench_cmd->add_option("--ntest", ntest, "test rows")->required();
  bench_cmd->add_option("--seeds", seeds_str, "seed list A,B,C or inclusive range A:B")->required();
  bench_cmd->add_option("--methods", methods_str, "comma-separated methods")->capture_default_str();
  bench_cmd->add_option("--cv", folds, "folds for every CV-tuned method")->capture_default_str();
  bench_cmd->add_option("--grid", grid_str, "sigma_y2 grid LO:HI:N")->capture_default_str();
  bench_cmd->add_option("--out", bench_out, "long-format results CSV")->required();
  bench_cmd->add_option("--pivot", pivot_out, "pivot CSV (default <out stem>.pivot.csv)");
  add_chain_flags(bench_cmd, chain);
  add_cv_cell_flags(bench_cmd, cell);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }
  if (jobs < 1) throw ConfigError("--jobs must be at least 1");

  if (*simulate) {
    sim::ScenarioSpec spec;
    spec.scenario = sim::parse_scenario(scenario);
    spec.n_train = ntrain;
    spec.n_test = ntest;
    spec.seed = seed;
    const auto data = sim::simulate(spec);
    const fs::path dir(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());
    for (const auto& [name, ds] : {std::pair{"train.csv", &data.train}, std::pair{"test.csv", &data.test}}) {
      auto out = open_out(dir / name);
      write_csv(out, *ds);
      check_written(out, dir / name);
    }
    auto out = open_out(dir / "truth.json");
    out << simulated_truth(data).dump(2) << '\n';
    check_written(out, dir / "truth.json");
    std::cout << "wrote " << (dir / "train.csv").string() << " (" << ntrain << " rows), "
              << (dir / "test.csv").string() << " (" << ntest << " rows), " << (dir / "truth.json").string() << '\n';
    return 0;
  }

  if (*fit) {
    const bool tebfar_mode = mode == "tebfar";
    if (!tebfar_mode && mode != "jbfm") throw ConfigError("--mode must be tebfar or jbfm");
    if (tebfar_mode && sigma_y2.has_value() == cv_folds.has_value())
      throw ConfigError("tebfar mode needs exactly one of --sigma-y2 or --cv");
    if (!tebfar_mode && (sigma_y2 || cv_folds)) throw ConfigError("jbfm mode takes neither --sigma-y2 nor --cv");

    const Dataset raw = load_csv(data_path, outcome, drop_incomplete);
    const auto [data, params] = standardize(raw);
    SamplerConfig cfg = sampler_config(chain);
    cfg.seed = seed;
    FitRecord rec;
    rec.predictor_names = raw.predictor_names;
    rec.response_name = raw.response_name;
    rec.standardization = params;
    rec.data_source = raw.provenance;
    if (!tebfar_mode) {
      cfg.mode = SamplerMode::jbfm();
    } else if (sigma_y2) {
      cfg.mode = SamplerMode::tebfar(*sigma_y2);
    } else {
      const GridSpec g = parse_grid(grid_str);
      const SigmaGrid grid(grid_values(g));
      CvPlan plan;
      plan.n_folds = *cv_folds;
      plan.seed = derive_seed(seed, {0});
      SamplerConfig cell_cfg = sampler_config(cell);
      cell_cfg.k_max = chain.kmax;
      cell_cfg.seed = derive_seed(seed, {1});
      const SigmaSelection sel = cv_select_sigma(data, grid, plan, cell_cfg, jobs);
      fs::path curve = model_out;
      curve.replace_extension(".cv.csv");
      auto out = open_out(curve);
      write_cv_curve(out, sel);
      check_written(out, curve);
      rec.cv = CvRecord{sel.sigma_hat, plan.n_folds, curve.filename().string()};
      cfg.mode = SamplerMode::tebfar(sel.sigma_hat);
      std::cout << "sigma_hat " << detail::format_double(sel.sigma_hat) << " (curve: " << curve.string() << ")\n";
    }
    const PosteriorDraws draws = run_chain(data, cfg);
    const fs::path manifest(model_out);
    if (manifest.has_parent_path()) {
      std::error_code ec;
      fs::create_directories(manifest.parent_path(), ec);
    }
    const auto table = save_draws(manifest, draws, rec);
    std::cout << "retained " << draws.size() << " draws (k = " << draws.k << ", mean sigma_y2 "
              << detail::format_double(draws.mean_sigma_y2()) << "); wrote " << manifest.string() << " and "
              << table.string() << '\n';
    return 0;
  }

  if (*predict_cmd) {
    const LoadedFit loaded = load_draws(manifest_path);
    Eigen::MatrixXd x = load_columns(data_path, loaded.record.predictor_names);
    if (loaded.record.standardization) x = apply_standardization_x(*loaded.record.standardization, x);
    Eigen::VectorXd y_hat = predict(loaded.draws, x);
    if (loaded.record.standardization) y_hat = unstandardize_predictions(*loaded.record.standardization, y_hat);
    auto out = open_out(pred_out);
    write_predictions(out, y_hat);
    check_written(out, pred_out);
    std::cout << "wrote " << y_hat.size() << " predictions to " << pred_out << '\n';
    return 0;
  }

  if (*eval) {
    const Eigen::MatrixXd pred = load_columns(pred_path, {"y_hat"});
    const Eigen::MatrixXd truth = load_columns(truth_path, {outcome});
    const double value = mse(pred.col(0), truth.col(0));
    std::cout << "mse " << detail::format_double(value) << '\n';
    if (!mse_out.empty()) {
      auto out = open_out(mse_out);
      out << "mse\n" << detail::format_double(value) << '\n';
      check_written(out, mse_out);
    }
    return 0;
  }

  if (*kl) {
    FactorModel truth = sim::motivating_model();
    if (!kl_truth.empty()) {
      std::ifstream in(kl_truth);
      if (!in) throw IoError("cannot open '" + kl_truth + "'");
      Json j;
      try {
        j = Json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("'" + kl_truth + "': " + e.what());
      }
      if (!j.contains("model")) throw InvalidInput("'" + kl_truth + "' has no factor model");
      truth = model_from_json(j["model"]);
    }
    EmOptions opts;
    opts.n_restarts = restarts;
    opts.seed = seed;
    const Eigen::MatrixXd s0 = implied_covariance(truth);
    const auto scan = scan_sigma_grid(s0, truth.lambda, kl_k, grid_values(parse_grid(kl_grid)), opts);
    auto out = open_out(kl_out);
    write_kl_scan(out, scan);
    check_written(out, kl_out);
    std::cout << "wrote " << scan.rows.size() << " scan rows to " << kl_out << '\n';
    return 0;
  }

  if (*align_cmd) {
    const LoadedFit loaded = load_draws(manifest_path);
    if (loaded.draws.empty()) throw InvalidInput("manifest has no draws");
    Eigen::MatrixXd reference;
    if (reference_path.empty()) {
      reference = loaded.draws.draws.back().model.lambda;
      if (!no_rotate) reference = align::varimax(reference).rotated;
    } else {
      std::ifstream in(reference_path);
      if (!in) throw IoError("cannot open '" + reference_path + "'");
      Json j;
      try {
        j = Json::parse(in);
      } catch (const nlohmann::json::exception& e) {
        throw InvalidInput("'" + reference_path + "': " + e.what());
      }
      reference = model_from_json(j.contains("model") ? j["model"] : j).lambda;
    }
    if (reference.rows() != loaded.draws.p + 1 || reference.cols() != loaded.draws.k)
      throw DimensionMismatch("reference loadings are " + std::to_string(reference.rows()) + " x " +
                              std::to_string(reference.cols()) + ", draws are " +
                              std::to_string(loaded.draws.p + 1) + " x " + std::to_string(loaded.draws.k));
    const auto summary = align::summarize_aligned(loaded.draws, reference, !no_rotate);
    auto names = loaded.record.predictor_names;
    names.push_back(loaded.record.response_name);
    auto out = open_out(align_out);
    align::write_aligned_summary(out, summary, names);
    check_written(out, align_out);
    std::cout << "aligned " << loaded.draws.size() << " draws; wrote " << align_out << '\n';
    return 0;
  }

  if (*bench_cmd) {
    bench::BenchConfig cfg;
    cfg.scenario = sim::parse_scenario(scenario);
    for (const auto& t : split_list(ntrains_str)) {
      const auto v = detail::parse_decimal(t);
      if (!v || *v != static_cast<Eigen::Index>(*v)) throw ConfigError("bad training size '" + t + "'");
      cfg.ntrains.push_back(static_cast<Eigen::Index>(*v));
    }
    cfg.ntest = ntest;
    cfg.seeds = parse_seeds(seeds_str);
    cfg.methods.clear();
    for (const auto& m : split_list(methods_str)) cfg.methods.push_back(bench::parse_method(m));
    cfg.grid = SigmaGrid(grid_values(parse_grid(grid_str)));
    cfg.n_folds = folds;
    cfg.cell_config = sampler_config(cell);
    cfg.cell_config.k_max = chain.kmax;
    cfg.final_config = sampler_config(chain);
    cfg.jobs = jobs;
    const auto result = bench::run_bench(cfg, [](const bench::BenchRow& r) {
      std::cerr << r.result.method << " ntrain=" << r.result.ntrain << " seed=" << r.result.seed
                << " mse=" << detail::format_double(r.result.mse) << '\n';
    });
    const auto rows = result.results();
    auto out = open_out(bench_out);
    write_results(out, rows);
    check_written(out, bench_out);
    fs::path pivot_path = pivot_out;
    if (pivot_path.empty()) {
      pivot_path = bench_out;
      pivot_path.replace_extension(".pivot.csv");
    }
    const auto table = bench::pivot(rows);
    auto pout = open_out(pivot_path);
    bench::write_pivot(pout, table);
    check_written(pout, pivot_path);
    bench::write_pivot(std::cout, table);
    return 0;
  }
  return 1;
}

int exit_code(const Error& e) {
  switch (e.category()) {
    case ErrorCategory::Usage: return 1;
    case ErrorCategory::Data: return 2;
    case ErrorCategory::Numeric: return 3;
  }
  return 3;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
