// Command-line front end: simulate / fit / cv / predict / score / classify /
// compare, driven by one JSON config with CSV and ASCII-grid I/O.

#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>

#include "airfuse/baselines.hpp"
#include "airfuse/config.hpp"
#include "airfuse/fit_io.hpp"
#include "airfuse/prediction.hpp"
#include "airfuse/scoring.hpp"
#include "airfuse/sitetype.hpp"
#include "airfuse/synthetic.hpp"

namespace fs = std::filesystem;
using namespace airfuse;

namespace {

struct DataBundle {
  std::vector<ObservationBlock> blocks;
  std::shared_ptr<TriangleMesh> mesh;

  const ObservationBlock* block(SourceId id) const {
    for (const auto& b : blocks)
      if (b.id == id) return &b;
    return nullptr;
  }
};

DataBundle load_data(const std::string& dir, const RunConfig& cfg) {
  const fs::path obs = fs::path(dir) / "observations.csv";
  if (!fs::exists(obs)) throw ConfigError("missing data file " + obs.string());
  DataBundle out;
  out.blocks = read_observations_csv(obs.string());
  if (out.blocks.empty()) throw ConfigError(obs.string() + ": no observations");

  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  std::vector<Point2D> monitor_locs;
  for (const auto& b : out.blocks)
    for (const auto& r : b.rows) {
      x0 = std::min(x0, r.loc.x);
      x1 = std::max(x1, r.loc.x);
      y0 = std::min(y0, r.loc.y);
      y1 = std::max(y1, r.loc.y);
    }
  // reuse the dataset's mesh when it ships one; otherwise triangulate from
  // the monitor locations over the bounding box of all observations
  const fs::path mesh_file = fs::path(dir) / "mesh.txt";
  if (fs::exists(mesh_file)) {
    out.mesh = std::make_shared<TriangleMesh>(read_mesh(mesh_file.string()));
    return out;
  }
  const ObservationBlock* mon = out.block(SourceId::monitors);
  std::set<std::string> seen;
  if (mon)
    for (const auto& r : mon->rows)
      if (seen.insert(r.monitor_id).second) monitor_locs.push_back(r.loc);
  if (monitor_locs.size() < 3)
    for (const auto& b : out.blocks)
      for (std::size_t i = 0; i < b.rows.size() && monitor_locs.size() < 16; i += 7)
        monitor_locs.push_back(b.rows[i].loc);
  out.mesh = std::make_shared<TriangleMesh>(
      build_mesh(monitor_locs, Polygon::rectangle(x0, y0, x1, y1), cfg.mesh_edge_inner,
                 cfg.mesh_edge_outer, cfg.mesh_cutoff));
  return out;
}

FitOptions fit_options(const RunConfig& cfg) {
  FitOptions opts;
  opts.strategy = cfg.strategy == "eb"
                      ? ExploreStrategy::empirical_bayes
                      : (cfg.strategy == "grid" ? ExploreStrategy::grid : ExploreStrategy::ccd);
  return opts;
}

struct ModelBundle {
  JointModelSpec spec;
  std::shared_ptr<BlockDesign> design;
};

// aligned covariate columns of a fusion/GPP monitor block, for inspection
void dump_covariates(const JointModelSpec& spec, const std::string& path) {
  const ObservationBlock* mon = nullptr;
  for (const auto& b : spec.blocks)
    if (b.id == SourceId::monitors) mon = &b;
  if (!mon || mon->rows.empty() || mon->rows[0].covariates.empty())
    throw ConfigError("no aligned covariates to dump for model " + spec.model_name);
  std::ofstream f(path);
  if (!f) throw ConfigError("cannot open " + path);
  const std::size_t n_cov = mon->rows[0].covariates.size();
  f << "monitor_id,day,x_km,y_km";
  for (std::size_t c = 0; c < n_cov; ++c) f << ",x" << c + 1;
  f << "\n";
  char buf[320];
  for (const auto& r : mon->rows) {
    std::snprintf(buf, sizeof(buf), "%s,%d,%.17g,%.17g", r.monitor_id.c_str(), r.day, r.loc.x,
                  r.loc.y);
    f << buf;
    for (double v : r.covariates) {
      std::snprintf(buf, sizeof(buf), ",%.17g", v);
      f << buf;
    }
    f << "\n";
  }
}

ModelBundle make_model(const std::string& model, const std::string& source,
                       const std::string& align, const DataBundle& data, const RunConfig& cfg) {
  ModelBundle out;
  const ObservationBlock* pcm = data.block(SourceId::pcm);
  const ObservationBlock* aqum = data.block(SourceId::aqum);
  const ObservationBlock* mon = data.block(SourceId::monitors);

  auto require = [&](const ObservationBlock* b, const char* what) {
    if (!b) throw ConfigError(std::string("model ") + model + " needs the " + what + " block");
    return b;
  };

  if (model == "joint" || model == "joint-pcm-only" || model == "joint-aqum-only") {
    require(mon, "monitors");
    JointModelOptions opt;
    opt.use_pcm = model != "joint-aqum-only";
    opt.use_aqum = model != "joint-pcm-only";
    opt.lambdas_free = cfg.lambdas_free;
    opt.priors = cfg.priors;
    if (opt.use_pcm) require(pcm, "pcm");
    if (opt.use_aqum) require(aqum, "aqum");
    out.spec = build_joint_spec(data.blocks, opt);
    out.design = std::make_shared<BlockDesign>(out.spec, data.mesh);
  } else if (model == "linear-fusion") {
    require(mon, "monitors");
    ObservationBlock aligned;
    if (align == "bilinear") {
      aligned = align_bilinear(*mon, aqum, pcm);
    } else if (align == "kriging") {
      std::optional<FitResult> aq_fit, pc_fit;
      std::shared_ptr<BlockDesign> aq_design, pc_design;
      FitOptions sep_opts;
      sep_opts.strategy = ExploreStrategy::empirical_bayes;
      if (aqum) {
        auto spec = build_separate_model(*aqum, SeparateVariant::additive, cfg.priors);
        aq_design = std::make_shared<BlockDesign>(spec, data.mesh);
        aq_fit = fit_model(*aq_design, sep_opts);
      }
      if (pcm) {
        auto spec = build_separate_model(*pcm, SeparateVariant::spatial_or_temporal, cfg.priors);
        pc_design = std::make_shared<BlockDesign>(spec, data.mesh);
        pc_fit = fit_model(*pc_design, sep_opts);
      }
      aligned = align_kriging(*mon, aq_fit ? &*aq_fit : nullptr, aq_design.get(),
                              pc_fit ? &*pc_fit : nullptr, pc_design.get());
    } else {
      throw ConfigError("unknown alignment method " + align);
    }
    const int n_cov =
        aligned.rows.empty() ? 0 : static_cast<int>(aligned.rows[0].covariates.size());
    out.spec = build_fusion_spec(aligned, n_cov, cfg.priors);
    out.spec.model_name = "linear-fusion-" + align;
    out.design = std::make_shared<BlockDesign>(out.spec, data.mesh);
  } else if (model == "gpp" || model == "gpp-stationary") {
    require(mon, "monitors");
    ObservationBlock aligned = align_bilinear(*mon, aqum, pcm);
    GppOptions gopt;
    gopt.stationary = model == "gpp-stationary";
    gopt.temporal_ar = cfg.gpp_temporal_ar;
    gopt.priors = cfg.priors;
    gopt.decay_init = cfg.gpp_decay_init;
    std::vector<Point2D> locs;
    for (const auto& r : aligned.rows) locs.push_back(r.loc);
    gopt.knots = regular_knots(locs, cfg.gpp_knots_x, cfg.gpp_knots_y);
    out.spec = build_gpp_spec(aligned, gopt);
    out.design = std::make_shared<BlockDesign>(out.spec, nullptr);
  } else if (model == "separate-i" || model == "separate-ii" || model == "separate-iii") {
    const ObservationBlock* src = source == "pcm"
                                      ? require(pcm, "pcm")
                                      : (source == "aqum" ? require(aqum, "aqum") : nullptr);
    if (!src) throw ConfigError("separate models need --source pcm or --source aqum");
    const SeparateVariant variant = model == "separate-i"
                                        ? SeparateVariant::spatial_or_temporal
                                        : (model == "separate-ii" ? SeparateVariant::additive
                                                                  : SeparateVariant::interaction);
    out.spec = build_separate_model(*src, variant, cfg.priors);
    out.design = std::make_shared<BlockDesign>(out.spec, data.mesh);
  } else {
    throw ConfigError("unknown model name " + model);
  }
  return out;
}

std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

void print_fit_summary(const FitResult& fit, const BlockDesign& design) {
  std::cout << "model: " << fit.model_name << (fit.converged ? "" : "  [NOT CONVERGED]") << "\n";
  std::cout << "log posterior at mode: " << fmt(fit.mode_log_post)
            << "  iterations: " << fit.iterations << "  seconds: " << fmt(fit.fit_seconds)
            << "  points: " << fit.points.size() << "\n";
  std::printf("%-26s %10s %10s %10s %10s %10s\n", "parameter", "mean", "sd", "q025", "median",
              "q975");
  auto row = [&](const std::string& name, const MarginalSummary& m) {
    std::printf("%-26s %10s %10s %10s %10s %10s\n", name.c_str(), fmt(m.mean).c_str(),
                fmt(m.sd).c_str(), fmt(m.q025).c_str(), fmt(m.median).c_str(),
                fmt(m.q975).c_str());
  };
  for (const auto& name : design.fixed_names())
    row(name, marginal_latent(fit, design.fixed_col(name)));
  for (int i = 0; i < static_cast<int>(fit.hypers.size()); ++i) {
    auto m = hyper_marginal(fit, i);
    const auto& h = fit.hypers[i];
    MarginalSummary nat = m;
    if (h.transform != HyperTransform::identity) {
      nat.mean = std::exp(m.mean);  // median of the log-normal approximation
      nat.sd = std::exp(m.mean) * m.sd;
      nat.q025 = std::exp(m.q025);
      nat.median = std::exp(m.median);
      nat.q975 = std::exp(m.q975);
    }
    std::string label = h.name;
    if (h.transform == HyperTransform::log_variance) label += " (variance)";
    if (h.transform == HyperTransform::log_sd) label += " (sd)";
    if (h.transform == HyperTransform::log_range) label += " (km)";
    if (h.transform == HyperTransform::log_decay) label += " (1/km)";
    row(label, nat);
  }
}

std::vector<PredictionSite> monitor_sites(const ObservationBlock& mon, bool masked_only) {
  std::vector<PredictionSite> sites;
  for (const auto& r : mon.rows) {
    if (masked_only && !r.missing) continue;
    PredictionSite s;
    s.id = r.monitor_id;
    s.loc = r.loc;
    s.sitetype = r.sitetype;
    s.day = r.day;
    s.covariates = r.covariates;
    sites.push_back(std::move(s));
  }
  return sites;
}

std::vector<ScoredPair> score_pairs(const ObservationBlock& mon,
                                    const std::vector<PredictionSite>& sites,
                                    const PredictiveSamples& samples, bool concentration) {
  std::map<std::pair<std::string, int>, const ObservationRow*> lookup;
  for (const auto& r : mon.rows) lookup[{r.monitor_id, r.day}] = &r;
  std::vector<ScoredPair> pairs;
  for (std::size_t i = 0; i < sites.size(); ++i) {
    const auto* r = lookup.at({sites[i].id, sites[i].day});
    ScoredPair p;
    p.site = sites[i].id;
    p.day = sites[i].day;
    p.sitetype = sites[i].sitetype;
    p.y = concentration ? std::exp(r->value) : r->value;
    p.samples = samples.draws[i];
    pairs.push_back(std::move(p));
  }
  return pairs;
}

int run_simulate(const std::string& config_path, std::uint64_t seed_override, bool has_seed,
                 const std::string& out_dir) {
  RunConfig cfg = load_config(config_path);
  const std::uint64_t seed = has_seed ? seed_override : cfg.seed;
  auto data = simulate_joint(cfg.synthetic, seed);
  fs::create_directories(out_dir);
  write_observations_csv(data.blocks, (fs::path(out_dir) / "observations.csv").string());
  write_mesh(*data.mesh, (fs::path(out_dir) / "mesh.txt").string());

  nlohmann::ordered_json truth;
  truth["seed"] = seed;
  truth["hyper"] = nlohmann::ordered_json(
      std::map<std::string, double>(data.truth.hyper.begin(), data.truth.hyper.end()));
  truth["fixed"] = nlohmann::ordered_json(
      std::map<std::string, double>(data.truth.fixed.begin(), data.truth.fixed.end()));
  nlohmann::ordered_json eta = nlohmann::ordered_json::array();
  for (std::size_t m = 0; m < data.truth.monitor_ids.size(); ++m) {
    nlohmann::ordered_json row;
    row["monitor_id"] = data.truth.monitor_ids[m];
    row["sitetype"] = sitetype_name(data.truth.monitor_sitetype[m]);
    nlohmann::ordered_json vals = nlohmann::ordered_json::array();
    for (int t = 0; t < data.truth.eta_monitors.cols(); ++t)
      vals.push_back(data.truth.eta_monitors(static_cast<Eigen::Index>(m), t));
    row["eta"] = vals;
    eta.push_back(row);
  }
  truth["eta_monitors"] = eta;
  std::ofstream tf(fs::path(out_dir) / "truth.json");
  tf << truth.dump(1) << "\n";
  std::cout << "wrote " << out_dir << "/observations.csv (" << data.blocks[0].rows.size() << "+"
            << data.blocks[1].rows.size() << "+" << data.blocks[2].rows.size() << " rows)\n";
  return 0;
}

int run_fit(const std::string& config_path, const std::string& data_dir, const std::string& model,
            const std::string& source, const std::string& align, const std::string& out_file,
            const std::string& covariates_out) {
  RunConfig cfg = load_config(config_path);
  DataBundle data = load_data(data_dir, cfg);
  ModelBundle mb = make_model(model, source, align, data, cfg);
  if (!covariates_out.empty()) {
    dump_covariates(mb.spec, covariates_out);
    std::cout << "wrote " << covariates_out << "\n";
  }
  FitResult fit = fit_model(*mb.design, fit_options(cfg));
  print_fit_summary(fit, *mb.design);
  std::cout << "dic: " << fmt(dic(fit, *mb.design, 200, cfg.seed)) << "\n";
  if (!out_file.empty()) {
    save_fit(fit, out_file);
    std::cout << "wrote " << out_file << "\n";
  }
  return 0;
}

int run_cv(const std::string& config_path, const std::string& data_dir, const std::string& model,
           const std::string& source, const std::string& align, int folds_override,
           const std::string& out_file) {
  RunConfig cfg = load_config(config_path);
  if (folds_override > 0) cfg.folds = folds_override;
  DataBundle data = load_data(data_dir, cfg);
  const ObservationBlock* mon = data.block(SourceId::monitors);
  if (!mon) throw ConfigError("cv needs the monitors block");
  auto folds = assign_folds(*mon, cfg.folds);

  ModelBundle full = make_model(model, source, align, data, cfg);
  std::vector<std::vector<ScoredPair>> fold_pairs;
  for (int fold = 1; fold <= cfg.folds; ++fold) {
    JointModelSpec masked = mask_validation(full.spec, folds, fold);
    BlockDesign design(masked, data.mesh);
    FitResult fit = fit_model(design, fit_options(cfg));
    const ObservationBlock* masked_mon = nullptr;
    for (const auto& b : masked.blocks)
      if (b.id == SourceId::monitors) masked_mon = &b;
    auto sites = monitor_sites(*masked_mon, /*masked_only=*/true);
    if (sites.empty()) {
      fold_pairs.push_back({});
      continue;
    }
    auto samples = predictive_samples(fit, design, sites, cfg.n_eta, cfg.n_y,
                                      cfg.seed + static_cast<std::uint64_t>(fold));
    if (cfg.score_scale == "concentration") backtransform(samples, OutputScale::concentration);
    fold_pairs.push_back(
        score_pairs(*masked_mon, sites, samples, cfg.score_scale == "concentration"));
    std::cout << "fold " << fold << ": " << sites.size() << " validation pairs, "
              << (fit.converged ? "converged" : "NOT converged") << "\n";
  }
  auto pooled = pool_folds(fold_pairs);
  auto reports = score_report(pooled, static_cast<Stratify>(cfg.score_stratify));
  write_scores_csv(out_file, full.spec.model_name, reports);
  for (const auto& r : reports)
    std::cout << "stratum " << r.stratum << ": pmcc " << fmt(r.pmcc) << " crps " << fmt(r.crps)
              << " rmse " << fmt(r.rmse) << " mape " << fmt(r.mape) << "% corr " << fmt(r.corr)
              << " cov " << fmt(r.coverage95) << "%\n";
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

// Recovers (model, source, align) CLI arguments from a persisted model name.
void split_model_name(const std::string& fit_model, std::string& model, std::string& source,
                      std::string& align) {
  model = fit_model;
  source = "";
  align = "bilinear";
  if (fit_model.rfind("linear-fusion-", 0) == 0) {
    model = "linear-fusion";
    align = fit_model.substr(std::string("linear-fusion-").size());
  } else if (fit_model.rfind("separate-", 0) == 0) {
    const auto pos = fit_model.find_last_of('-');
    source = fit_model.substr(pos + 1);
    model = fit_model.substr(0, pos);
  }
}

int run_predict(const std::string& config_path, const std::string& data_dir,
                const std::string& fit_file, const std::string& days_csv,
                const std::string& out_dir, const std::string& roads_path,
                const std::string& cover_path, const std::string& legend_path,
                const std::string& rule_name) {
  RunConfig cfg = load_config(config_path);
  DataBundle data = load_data(data_dir, cfg);
  if (!fs::exists(fit_file)) throw ConfigError("missing fit file " + fit_file);
  FitResult fit = load_fit(fit_file);
  std::string model, source, align;
  split_model_name(fit.model_name, model, source, align);
  ModelBundle mb = make_model(model, source, align, data, cfg);
  ensure_posteriors(fit, *mb.design);

  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& b : data.blocks)
    for (const auto& r : b.rows) {
      x0 = std::min(x0, r.loc.x);
      x1 = std::max(x1, r.loc.x);
      y0 = std::min(y0, r.loc.y);
      y1 = std::max(y1, r.loc.y);
    }
  PredictionGrid grid = PredictionGrid::regular(x0, y0, x1, y1, cfg.predict_resolution,
                                                sitetype_from_name(cfg.predict_sitetype));
  if (!roads_path.empty()) {
    // site type per grid cell from road distances and land cover
    if (cover_path.empty() || legend_path.empty())
      throw ConfigError("predict: --roads needs --landcover and --legend");
    for (const std::string& p : {roads_path, cover_path, legend_path})
      if (!fs::exists(p)) throw ConfigError("missing input file " + p);
    KerbsideRule rule = KerbsideRule::R3;
    if (rule_name == "R1")
      rule = KerbsideRule::R1;
    else if (rule_name == "R2")
      rule = KerbsideRule::R2;
    else if (rule_name != "R3")
      throw ConfigError("unknown rule " + rule_name);
    auto roads = read_roads_csv(roads_path);
    auto cover = read_landcover(cover_path, legend_path);
    for (std::size_t c = 0; c < grid.cells.size(); ++c)
      grid.sitetype[c] = classify(grid.cells[c], roads, cover, rule);
  }
  if (!days_csv.empty()) {
    grid.days.clear();
    std::stringstream ss(days_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) grid.days.push_back(std::stoi(tok));
  } else {
    grid.days = cfg.predict_days;
  }
  auto pred = predict_eta3(fit, *mb.design, grid, cfg.predict_samples, cfg.seed);
  fs::create_directories(out_dir);
  for (std::size_t di = 0; di < grid.days.size(); ++di) {
    const std::string tag = "day" + std::to_string(grid.days[di]);
    write_esri_ascii((fs::path(out_dir) / ("pred_mean_" + tag + ".asc")).string(), grid,
                     pred.mean[di]);
    write_esri_ascii((fs::path(out_dir) / ("pred_sd_" + tag + ".asc")).string(), grid,
                     pred.sd[di]);
    write_esri_ascii((fs::path(out_dir) / ("pred_q025_" + tag + ".asc")).string(), grid,
                     pred.q025[di]);
    write_esri_ascii((fs::path(out_dir) / ("pred_q975_" + tag + ".asc")).string(), grid,
                     pred.q975[di]);
  }
  write_grid_csv((fs::path(out_dir) / "predictions.csv").string(), grid, pred);
  std::cout << "wrote " << grid.days.size() * 4 << " grids + predictions.csv to " << out_dir
            << "\n";
  return 0;
}

int run_score(const std::string& config_path, const std::string& data_dir,
              const std::string& fit_file, const std::string& out_file) {
  RunConfig cfg = load_config(config_path);
  DataBundle data = load_data(data_dir, cfg);
  if (!fs::exists(fit_file)) throw ConfigError("missing fit file " + fit_file);
  FitResult fit = load_fit(fit_file);
  std::string model, source, align;
  split_model_name(fit.model_name, model, source, align);
  ModelBundle mb = make_model(model, source, align, data, cfg);
  ensure_posteriors(fit, *mb.design);
  const ObservationBlock* mon = nullptr;
  for (const auto& b : mb.spec.blocks)
    if (b.id == SourceId::monitors) mon = &b;
  if (!mon) throw ConfigError("score needs the monitors block");
  auto sites = monitor_sites(*mon, /*masked_only=*/false);
  auto samples = predictive_samples(fit, *mb.design, sites, cfg.n_eta, cfg.n_y, cfg.seed);
  if (cfg.score_scale == "concentration") backtransform(samples, OutputScale::concentration);
  auto pairs = score_pairs(*mon, sites, samples, cfg.score_scale == "concentration");
  auto reports = score_report(pairs, static_cast<Stratify>(cfg.score_stratify));
  write_scores_csv(out_file, fit.model_name, reports);
  for (const auto& r : reports)
    std::cout << "stratum " << r.stratum << ": pmcc " << fmt(r.pmcc) << " crps " << fmt(r.crps)
              << " rmse " << fmt(r.rmse) << "\n";
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

int run_classify(const std::string& roads_path, const std::string& cover_path,
                 const std::string& legend_path, const std::string& points_path,
                 const std::string& rule_name, const std::string& out_file) {
  for (const std::string& p : {roads_path, cover_path, legend_path, points_path})
    if (!fs::exists(p)) throw ConfigError("missing input file " + p);
  KerbsideRule rule;
  if (rule_name == "R1")
    rule = KerbsideRule::R1;
  else if (rule_name == "R2")
    rule = KerbsideRule::R2;
  else if (rule_name == "R3")
    rule = KerbsideRule::R3;
  else
    throw ConfigError("unknown rule " + rule_name + " (use R1, R2 or R3)");

  auto roads = read_roads_csv(roads_path);
  auto cover = read_landcover(cover_path, legend_path);

  std::ifstream pf(points_path);
  std::string line;
  std::getline(pf, line);  // header: id,x,y[,sitetype]
  const bool has_truth = line.find("sitetype") != std::string::npos;
  std::vector<std::string> ids;
  std::vector<Point2D> pts;
  std::vector<int> truth;
  while (std::getline(pf, line)) {
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> fields;
    std::string fld;
    while (std::getline(ss, fld, ',')) fields.push_back(fld);
    if (fields.size() < 3) throw ConfigError(points_path + ": expected id,x,y columns");
    ids.push_back(fields[0]);
    pts.push_back({std::stod(fields[1]), std::stod(fields[2])});
    if (has_truth && fields.size() >= 4) truth.push_back(sitetype_from_name(fields[3]));
  }

  std::ofstream of(out_file);
  if (!of) throw ConfigError("cannot open " + out_file);
  of << "id,x,y,sitetype\n";
  std::vector<int> labels;
  char buf[160];
  for (std::size_t i = 0; i < pts.size(); ++i) {
    const int st = classify(pts[i], roads, cover, rule);
    labels.push_back(st);
    std::snprintf(buf, sizeof(buf), "%s,%.17g,%.17g,%s\n", ids[i].c_str(), pts[i].x, pts[i].y,
                  sitetype_name(st).c_str());
    of << buf;
  }
  std::cout << "classified " << pts.size() << " points with rule " << rule_name << "\n";
  if (!truth.empty() && truth.size() == labels.size())
    std::cout << "accuracy vs provided labels: " << fmt(accuracy(labels, truth)) << "\n";
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

int run_compare(const std::vector<std::string>& score_files,
                const std::vector<std::string>& fit_files, const std::string& out_file) {
  for (const auto& p : fit_files)
    if (!fs::exists(p)) throw ConfigError("missing fit file " + p);
  for (const auto& p : score_files)
    if (!fs::exists(p)) throw ConfigError("missing score file " + p);

  std::map<std::string, bool> converged;
  for (const auto& p : fit_files) {
    FitResult fit = load_fit(p);
    converged[fit.model_name] = fit.converged;
  }

  std::ofstream of(out_file);
  if (!of) throw ConfigError("cannot open " + out_file);
  of << "model,stratum,n,pmcc,crps,rmse,mape,corr,cov95,log_score,converged\n";
  for (const auto& p : score_files) {
    std::ifstream f(p);
    std::string line;
    std::getline(f, line);  // header
    while (std::getline(f, line)) {
      if (line.empty()) continue;
      const std::string model = line.substr(0, line.find(','));
      std::string conv;
      if (converged.count(model)) conv = converged[model] ? "yes" : "no";
      of << line << "," << conv << "\n";
    }
  }
  std::cout << "wrote " << out_file << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"joint latent-Gaussian fusion of misaligned air-quality data"};
  app.require_subcommand(1);

  std::string config_path, data_dir = "data", out, model = "joint", source, align = "bilinear";
  std::string fit_file, days_csv, rule = "R3";
  std::string roads_path, cover_path, legend_path, points_path;
  std::vector<std::string> score_files, fit_files;
  std::uint64_t seed = 0;
  bool has_seed = false;
  int folds = 0;

  auto* sim = app.add_subcommand("simulate", "generate a synthetic misaligned dataset");
  sim->add_option("--config", config_path)->required();
  sim->add_option("--seed", seed)->each([&](const std::string&) { has_seed = true; });
  sim->add_option("--out", out)->required();

  auto* fit = app.add_subcommand("fit", "fit a model and persist the result");
  fit->add_option("--config", config_path)->required();
  fit->add_option("--data", data_dir)->required();
  fit->add_option("--model", model);
  fit->add_option("--source", source);
  fit->add_option("--align", align);
  fit->add_option("--out", fit_file);
  fit->add_option("--covariates-out", out);

  auto* cv = app.add_subcommand("cv", "cross-validated predictive scores");
  cv->add_option("--config", config_path)->required();
  cv->add_option("--data", data_dir)->required();
  cv->add_option("--model", model);
  cv->add_option("--source", source);
  cv->add_option("--align", align);
  cv->add_option("--folds", folds);
  cv->add_option("--out", out)->required();

  auto* pred = app.add_subcommand("predict", "gridded predictions from a fit");
  pred->add_option("--config", config_path)->required();
  pred->add_option("--data", data_dir)->required();
  pred->add_option("--fit", fit_file)->required();
  pred->add_option("--days", days_csv);
  pred->add_option("--out", out)->required();
  pred->add_option("--roads", roads_path);
  pred->add_option("--landcover", cover_path);
  pred->add_option("--legend", legend_path);
  pred->add_option("--rule", rule);

  auto* score = app.add_subcommand("score", "score a fit against observed values");
  score->add_option("--config", config_path)->required();
  score->add_option("--data", data_dir)->required();
  score->add_option("--fit", fit_file)->required();
  score->add_option("--out", out)->required();

  auto* cls = app.add_subcommand("classify", "assign site types from roads and land cover");
  cls->add_option("--roads", roads_path)->required();
  cls->add_option("--landcover", cover_path)->required();
  cls->add_option("--legend", legend_path)->required();
  cls->add_option("--points", points_path)->required();
  cls->add_option("--rule", rule);
  cls->add_option("--out", out)->required();

  auto* cmp = app.add_subcommand("compare", "merge per-model scores into one table");
  cmp->add_option("--scores", score_files)->required()->delimiter(',');
  cmp->add_option("--fits", fit_files)->delimiter(',');
  cmp->add_option("--out", out)->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (sim->parsed()) return run_simulate(config_path, seed, has_seed, out);
    if (fit->parsed())
      return run_fit(config_path, data_dir, model, source, align, fit_file, out);
    if (cv->parsed()) return run_cv(config_path, data_dir, model, source, align, folds, out);
    if (pred->parsed())
      return run_predict(config_path, data_dir, fit_file, days_csv, out, roads_path, cover_path,
                         legend_path, rule);
    if (score->parsed()) return run_score(config_path, data_dir, fit_file, out);
    if (cls->parsed())
      return run_classify(roads_path, cover_path, legend_path, points_path, rule, out);
    if (cmp->parsed()) return run_compare(score_files, fit_files, out);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const FactorizationError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "failure: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
