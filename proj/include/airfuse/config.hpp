#pragma once

#include <fstream>
#include <set>
#include <json.hpp>
#include <string>

#include "airfuse/model.hpp"
#include "airfuse/synthetic.hpp"

namespace airfuse {

// Configuration problems map to exit code 2 at the CLI.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct RunConfig {
  std::uint64_t seed = 1;
  SyntheticConfig synthetic;
  JointPriorConfig priors;
  bool lambdas_free = true;
  int folds = 6;
  std::string strategy = "ccd";  // ccd | grid | eb
  double mesh_edge_inner = 8.0, mesh_edge_outer = 16.0, mesh_cutoff = 0.1;
  // prediction
  double predict_resolution = 2.0;
  std::vector<int> predict_days = {1};
  int predict_samples = 1000;
  std::string predict_sitetype = "RUR";
  // scoring
  int n_eta = 50, n_y = 100;
  std::string score_scale = "log";  // log | concentration
  int score_stratify = 0;           // 0 none, else Stratify
  // gpp
  int gpp_knots_x = 5, gpp_knots_y = 5;
  bool gpp_temporal_ar = true;
  double gpp_decay_init = 0.05;
};

namespace cfgdetail {
template <typename T>
T get_or(const nlohmann::json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError("config key '" + key + "' has the wrong type");
  }
}
}  // namespace cfgdetail

inline RunConfig parse_config(const nlohmann::json& j) {
  using cfgdetail::get_or;
  for (const auto& [key, value] : j.items()) {
    static const std::set<std::string> known = {"seed",  "synthetic", "priors", "lambdas_free",
                                                "folds", "strategy",  "mesh",   "predict",
                                                "score", "gpp"};
    if (!known.count(key)) throw ConfigError("unknown config key '" + key + "'");
  }
  RunConfig c;
  c.seed = get_or<std::uint64_t>(j, "seed", 1);
  if (j.contains("synthetic")) {
    const auto& s = j.at("synthetic");
    auto& sc = c.synthetic;
    sc.domain = get_or(s, "domain", sc.domain);
    sc.pcm_nx = get_or(s, "pcm_nx", sc.pcm_nx);
    sc.pcm_ny = get_or(s, "pcm_ny", sc.pcm_ny);
    sc.pcm_years = get_or(s, "pcm_years", sc.pcm_years);
    sc.aqum_nx = get_or(s, "aqum_nx", sc.aqum_nx);
    sc.aqum_ny = get_or(s, "aqum_ny", sc.aqum_ny);
    sc.n_monitors = get_or(s, "n_monitors", sc.n_monitors);
    sc.n_days = get_or(s, "n_days", sc.n_days);
    sc.alpha_pcm = get_or(s, "alpha_pcm", sc.alpha_pcm);
    sc.alpha_aqum = get_or(s, "alpha_aqum", sc.alpha_aqum);
    sc.alpha_monitors = get_or(s, "alpha_monitors", sc.alpha_monitors);
    sc.beta_urb = get_or(s, "beta_urb", sc.beta_urb);
    sc.beta_rks = get_or(s, "beta_rks", sc.beta_rks);
    sc.noise_pcm = get_or(s, "noise_pcm", sc.noise_pcm);
    sc.noise_aqum = get_or(s, "noise_aqum", sc.noise_aqum);
    sc.noise_monitors = get_or(s, "noise_monitors", sc.noise_monitors);
    sc.spatial_sigma = get_or(s, "spatial_sigma", sc.spatial_sigma);
    sc.spatial_range = get_or(s, "spatial_range", sc.spatial_range);
    sc.trend_var = get_or(s, "trend_var", sc.trend_var);
    sc.sitetype_var = get_or(s, "sitetype_var", sc.sitetype_var);
    sc.sitetype_ar = get_or(s, "sitetype_ar", sc.sitetype_ar);
    sc.lambda_12 = get_or(s, "lambda_12", sc.lambda_12);
    sc.lambda_13 = get_or(s, "lambda_13", sc.lambda_13);
    sc.lambda_23 = get_or(s, "lambda_23", sc.lambda_23);
  }
  if (j.contains("priors")) {
    const auto& p = j.at("priors");
    auto& pc = c.priors;
    pc.pc_range_frac = get_or(p, "pc_range_frac", pc.pc_range_frac);
    pc.pc_range_prob = get_or(p, "pc_range_prob", pc.pc_range_prob);
    pc.pc_sigma0 = get_or(p, "pc_sigma0", pc.pc_sigma0);
    pc.pc_sigma_prob = get_or(p, "pc_sigma_prob", pc.pc_sigma_prob);
    pc.rw1_sd_tail_prob = get_or(p, "rw1_sd_tail_prob", pc.rw1_sd_tail_prob);
    pc.loggamma_shape = get_or(p, "loggamma_shape", pc.loggamma_shape);
    pc.loggamma_rate = get_or(p, "loggamma_rate", pc.loggamma_rate);
    pc.lambda12_mean = get_or(p, "lambda12_mean", pc.lambda12_mean);
    pc.lambda13_mean = get_or(p, "lambda13_mean", pc.lambda13_mean);
    pc.lambda23_mean = get_or(p, "lambda23_mean", pc.lambda23_mean);
    pc.lambda_var = get_or(p, "lambda_var", pc.lambda_var);
    pc.ar_mean = get_or(p, "ar_mean", pc.ar_mean);
    pc.ar_var = get_or(p, "ar_var", pc.ar_var);
    pc.fixed_effect_var = get_or(p, "fixed_effect_var", pc.fixed_effect_var);
  }
  c.lambdas_free = get_or(j, "lambdas_free", c.lambdas_free);
  c.folds = get_or(j, "folds", c.folds);
  c.strategy = get_or<std::string>(j, "strategy", c.strategy);
  if (c.strategy != "ccd" && c.strategy != "grid" && c.strategy != "eb")
    throw ConfigError("config key 'strategy' must be ccd, grid or eb");
  if (j.contains("mesh")) {
    const auto& m = j.at("mesh");
    c.mesh_edge_inner = get_or(m, "edge_inner", c.mesh_edge_inner);
    c.mesh_edge_outer = get_or(m, "edge_outer", c.mesh_edge_outer);
    c.mesh_cutoff = get_or(m, "cutoff", c.mesh_cutoff);
  }
  c.synthetic.mesh_edge_inner = c.mesh_edge_inner;
  c.synthetic.mesh_edge_outer = c.mesh_edge_outer;
  c.synthetic.mesh_cutoff = c.mesh_cutoff;
  if (j.contains("predict")) {
    const auto& p = j.at("predict");
    c.predict_resolution = get_or(p, "resolution", c.predict_resolution);
    c.predict_days = get_or(p, "days", c.predict_days);
    c.predict_samples = get_or(p, "samples", c.predict_samples);
    c.predict_sitetype = get_or<std::string>(p, "sitetype", c.predict_sitetype);
  }
  if (j.contains("score")) {
    const auto& s = j.at("score");
    c.n_eta = get_or(s, "n_eta", c.n_eta);
    c.n_y = get_or(s, "n_y", c.n_y);
    c.score_scale = get_or<std::string>(s, "scale", c.score_scale);
    const std::string strat = get_or<std::string>(s, "stratify", "none");
    if (strat == "none")
      c.score_stratify = 0;
    else if (strat == "site")
      c.score_stratify = 1;
    else if (strat == "day")
      c.score_stratify = 2;
    else if (strat == "sitetype")
      c.score_stratify = 3;
    else
      throw ConfigError("config key 'score.stratify' must be none, site, day or sitetype");
  }
  if (j.contains("gpp")) {
    const auto& g = j.at("gpp");
    c.gpp_knots_x = get_or(g, "knots_x", c.gpp_knots_x);
    c.gpp_knots_y = get_or(g, "knots_y", c.gpp_knots_y);
    c.gpp_temporal_ar = get_or(g, "temporal_ar", c.gpp_temporal_ar);
    c.gpp_decay_init = get_or(g, "decay_init", c.gpp_decay_init);
  }
  return c;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file " + path);
  nlohmann::json j;
  try {
    f >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path + ": invalid JSON: " + e.what());
  }
  return parse_config(j);
}

}  // namespace airfuse
