#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfuse/observations.hpp"

namespace airfuse {

// Predictive-capability measures for one stratum of validation pairs.
struct ScoreReport {
  std::string stratum = "all";
  long n = 0;
  double rmse = 0.0;
  double mape = 0.0;        // percent
  double pmcc = 0.0;
  double crps = 0.0;
  double log_score = 0.0;   // lower is better
  double corr = 0.0;
  double coverage95 = 0.0;  // percent
};

// CRPS of an empirical predictive distribution:
//   1/Q sum |x_q - y|  -  1/(2 Q^2) sum_qr |x_q - x_r|
// evaluated with the sorted-prefix identity for the double sum.
inline double crps_empirical(std::vector<double> samples, double y) {
  const std::size_t q = samples.size();
  if (q == 0) throw std::invalid_argument("crps_empirical: empty sample set");
  double term1 = 0.0;
  for (double x : samples) term1 += std::abs(x - y);
  term1 /= static_cast<double>(q);
  std::sort(samples.begin(), samples.end());
  // sum_{i<j} (x_j - x_i) = sum_i (2i - Q + 1) x_i  (0-based i)
  double pair_sum = 0.0;
  for (std::size_t i = 0; i < q; ++i)
    pair_sum += (2.0 * static_cast<double>(i) - static_cast<double>(q) + 1.0) * samples[i];
  return term1 - pair_sum / (static_cast<double>(q) * static_cast<double>(q));
}

struct ScoredPair {
  std::string site;
  int day = 0;
  int sitetype = 0;
  double y = 0.0;
  std::vector<double> samples;
};

enum class Stratify { none, site, day, sitetype };

namespace scoredetail {

inline double sample_mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_var(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = sample_mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  const double pos = q * (static_cast<double>(sorted.size()) - 1.0);
  const std::size_t lo = static_cast<std::size_t>(pos);
  const double frac = pos - static_cast<double>(lo);
  return lo + 1 < sorted.size() ? sorted[lo] * (1.0 - frac) + sorted[lo + 1] * frac
                                : sorted.back();
}

inline ScoreReport score_group(const std::string& label,
                               const std::vector<const ScoredPair*>& group) {
  ScoreReport rep;
  rep.stratum = label;
  rep.n = static_cast<long>(group.size());
  double se = 0.0, ape = 0.0, var_sum = 0.0, crps_sum = 0.0, ls = 0.0;
  long covered = 0;
  double sy = 0.0, syh = 0.0, syy = 0.0, shh = 0.0, syh2 = 0.0;
  for (const ScoredPair* p : group) {
    if (p->y == 0.0) throw std::invalid_argument("score_report: zero observed value (MAPE)");
    const double yhat = sample_mean(p->samples);
    const double v = sample_var(p->samples);
    const double d = p->y - yhat;
    se += d * d;
    ape += std::abs(d) / std::abs(p->y);
    var_sum += v;
    crps_sum += crps_empirical(p->samples, p->y);
    ls += -(-0.5 * std::log(2.0 * M_PI * std::max(v, 1e-12)) -
            0.5 * d * d / std::max(v, 1e-12));
    std::vector<double> sorted = p->samples;
    std::sort(sorted.begin(), sorted.end());
    const double lo = quantile_sorted(sorted, 0.025);
    const double hi = quantile_sorted(sorted, 0.975);
    if (lo == hi ? p->y == lo : (p->y >= lo && p->y <= hi)) ++covered;
    sy += p->y;
    syh += yhat;
    syy += p->y * p->y;
    shh += yhat * yhat;
    syh2 += p->y * yhat;
  }
  const double n = static_cast<double>(group.size());
  rep.rmse = std::sqrt(se / n);
  rep.mape = 100.0 * ape / n;
  rep.pmcc = se + var_sum;
  rep.crps = crps_sum / n;
  rep.log_score = ls / n;
  rep.coverage95 = 100.0 * static_cast<double>(covered) / n;
  if (group.size() >= 2) {
    const double num = n * syh2 - sy * syh;
    const double den = std::sqrt(std::max(0.0, n * syy - sy * sy)) *
                       std::sqrt(std::max(0.0, n * shh - syh * syh));
    rep.corr = den > 0.0 ? num / den : 0.0;
  } else {
    throw std::invalid_argument("score_report: need at least 2 pairs for correlation");
  }
  return rep;
}

}  // namespace scoredetail

inline std::vector<ScoreReport> score_report(const std::vector<ScoredPair>& pairs,
                                             Stratify stratify = Stratify::none) {
  if (pairs.empty()) throw std::invalid_argument("score_report: no pairs");
  std::map<std::string, std::vector<const ScoredPair*>> groups;
  for (const auto& p : pairs) {
    std::string key;
    switch (stratify) {
      case Stratify::none: key = "all"; break;
      case Stratify::site: key = p.site; break;
      case Stratify::day: key = "day" + std::to_string(p.day); break;
      case Stratify::sitetype: key = sitetype_name(p.sitetype); break;
    }
    groups[key].push_back(&p);
  }
  std::vector<ScoreReport> out;
  for (const auto& [label, group] : groups)
    out.push_back(scoredetail::score_group(label, group));
  return out;
}

// Concatenates per-fold validation pairs; (site, day) duplicates across
// folds indicate a broken fold partition.
inline std::vector<ScoredPair> pool_folds(const std::vector<std::vector<ScoredPair>>& folds) {
  std::vector<ScoredPair> out;
  std::set<std::pair<std::string, int>> seen;
  for (const auto& f : folds)
    for (const auto& p : f) {
      if (!seen.insert({p.site, p.day}).second)
        throw std::invalid_argument("pool_folds: duplicate (site, day) across folds: " + p.site +
                                    "/" + std::to_string(p.day));
      out.push_back(p);
    }
  return out;
}

inline void write_scores_csv(const std::string& path, const std::string& model,
                             const std::vector<ScoreReport>& reports) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "model,stratum,n,pmcc,crps,rmse,mape,corr,cov95,log_score\n";
  char buf[320];
  for (const auto& r : reports) {
    std::snprintf(buf, sizeof(buf), "%s,%s,%ld,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g\n",
                  model.c_str(), r.stratum.c_str(), r.n, r.pmcc, r.crps, r.rmse, r.mape, r.corr,
                  r.coverage95, r.log_score);
    f << buf;
  }
}

}  // namespace airfuse
