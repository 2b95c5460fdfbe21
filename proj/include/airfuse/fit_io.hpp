#pragma once

#include <fstream>
#include <json.hpp>
#include <string>

#include "airfuse/inference.hpp"

namespace airfuse {

// Versioned fit artifact: hyperparameter mode and exploration points with
// weights, latent means and marginal sds. Factor caches are rebuilt from the
// data on load, so the artifact stays factor-free; wall-clock timing stays
// out so artifacts are reproducible byte for byte.
inline constexpr const char* kFitFormat = "airfuse-fit/1";

namespace fitio {

inline nlohmann::ordered_json vec_to_json(const Vec& v) {
  nlohmann::ordered_json a = nlohmann::ordered_json::array();
  for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline Vec vec_from_json(const nlohmann::json& a) {
  Vec v(static_cast<Eigen::Index>(a.size()));
  for (std::size_t i = 0; i < a.size(); ++i) v[static_cast<Eigen::Index>(i)] = a[i].get<double>();
  return v;
}

inline nlohmann::ordered_json mat_to_json(const Mat& m) {
  nlohmann::ordered_json rows = nlohmann::ordered_json::array();
  for (int i = 0; i < m.rows(); ++i) rows.push_back(vec_to_json(m.row(i)));
  return rows;
}

inline Mat mat_from_json(const nlohmann::json& a) {
  const int n = static_cast<int>(a.size());
  if (n == 0) return Mat(0, 0);
  const int m = static_cast<int>(a[0].size());
  Mat out(n, m);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < m; ++j) out(i, j) = a[i][j].get<double>();
  return out;
}

}  // namespace fitio

inline void save_fit(const FitResult& fit, const std::string& path) {
  nlohmann::ordered_json j;
  j["format"] = kFitFormat;
  j["model"] = fit.model_name;
  j["spec_hash"] = fit.spec_hash;
  nlohmann::ordered_json hypers = nlohmann::ordered_json::array();
  for (const auto& h : fit.hypers) {
    nlohmann::ordered_json e;
    e["name"] = h.name;
    e["transform"] = static_cast<int>(h.transform);
    hypers.push_back(e);
  }
  j["hypers"] = hypers;
  j["psi_mode"] = fitio::vec_to_json(fit.psi_mode);
  j["neg_hessian"] = fitio::mat_to_json(fit.neg_hessian);
  j["mode_log_post"] = fit.mode_log_post;
  j["converged"] = fit.converged;
  j["iterations"] = fit.iterations;
  nlohmann::ordered_json points = nlohmann::ordered_json::array();
  for (const auto& p : fit.points) {
    nlohmann::ordered_json e;
    e["psi"] = fitio::vec_to_json(p.psi);
    e["log_post"] = p.log_post;
    e["weight"] = p.weight;
    e["latent_mean"] = fitio::vec_to_json(p.latent_mean);
    e["latent_sd"] = fitio::vec_to_json(p.latent_sd);
    points.push_back(e);
  }
  j["points"] = points;
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << j.dump(1) << "\n";
}

inline FitResult load_fit(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open fit file " + path);
  nlohmann::json j;
  f >> j;
  if (j.value("format", "") != kFitFormat)
    throw std::runtime_error(path + ": not an " + std::string(kFitFormat) + " artifact");
  FitResult fit;
  fit.model_name = j["model"].get<std::string>();
  fit.spec_hash = j["spec_hash"].get<std::uint64_t>();
  for (const auto& e : j["hypers"]) {
    HyperCfg h;
    h.name = e["name"].get<std::string>();
    h.transform = static_cast<HyperTransform>(e["transform"].get<int>());
    fit.hypers.push_back(h);
  }
  fit.psi_mode = fitio::vec_from_json(j["psi_mode"]);
  fit.neg_hessian = fitio::mat_from_json(j["neg_hessian"]);
  fit.mode_log_post = j["mode_log_post"].get<double>();
  fit.converged = j["converged"].get<bool>();
  fit.iterations = j["iterations"].get<int>();
  for (const auto& e : j["points"]) {
    ExplorationPoint p;
    p.psi = fitio::vec_from_json(e["psi"]);
    p.log_post = e["log_post"].get<double>();
    p.weight = e["weight"].get<double>();
    p.latent_mean = fitio::vec_from_json(e["latent_mean"]);
    p.latent_sd = fitio::vec_from_json(e["latent_sd"]);
    fit.points.push_back(std::move(p));
  }
  return fit;
}

}  // namespace airfuse
