#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfuse/fem.hpp"
#include "airfuse/gmrf.hpp"
#include "airfuse/gpp.hpp"
#include "airfuse/latent.hpp"
#include "airfuse/matern.hpp"
#include "airfuse/mesh.hpp"
#include "airfuse/gmrf.hpp"
#include "airfuse/model.hpp"

namespace airfuse {

struct LatentLayoutEntry {
  std::string name;
  LatentKind kind = LatentKind::iid;
  int offset = 0;
  int size = 0;       // total (replicates * rep_size)
  int rep_size = 0;
  int replicates = 1;
};

// The assembled multi-likelihood design: stacked observation vector, the
// sparse map from (latent nodes ++ fixed effects) to observations, per-row
// noise bindings, the prior precision builder and the linear constraints.
// Blocks appear in declaration order, one block row each, mirroring the
// block observation matrix of the joint formulation.
class BlockDesign {
 public:
  BlockDesign(const JointModelSpec& spec, std::shared_ptr<const TriangleMesh> mesh)
      : spec_(spec), mesh_(std::move(mesh)) {
    build_layout();
    build_rows();
    build_constraints();
  }

  const JointModelSpec& spec() const { return spec_; }
  const TriangleMesh* mesh() const { return mesh_.get(); }
  int n_latent_cols() const { return n_latent_; }
  int n_cols() const { return n_latent_ + static_cast<int>(fixed_names_.size()); }
  int n_rows() const { return static_cast<int>(y_.size()); }
  int n_days() const { return spec_.n_days; }
  const Vec& y() const { return y_; }
  const std::vector<uint8_t>& masked() const { return masked_; }
  const std::vector<LatentLayoutEntry>& latent_layout() const { return layout_; }
  const HyperLayout& hypers() const { return spec_.hypers; }

  const LatentLayoutEntry& latent(const std::string& name) const {
    for (const auto& e : layout_)
      if (e.name == name) return e;
    throw std::logic_error("unknown latent block " + name);
  }

  int fixed_col(const std::string& name) const {
    for (std::size_t i = 0; i < fixed_names_.size(); ++i)
      if (fixed_names_[i] == name) return n_latent_ + static_cast<int>(i);
    throw std::logic_error("unknown fixed effect " + name);
  }
  const std::vector<std::string>& fixed_names() const { return fixed_names_; }

  std::pair<int, int> block_row_range(SourceId id) const {
    auto it = block_rows_.find(id);
    if (it == block_rows_.end()) throw std::logic_error("block not in design");
    return it->second;
  }

  // ---- psi-dependent pieces -------------------------------------------

  SpMat design(const Vec& psi) const {
    std::vector<Triplet> trips;
    trips.reserve(entries_.size() + 8 * gpp_rows_.size());
    for (const auto& e : entries_) {
      const double lam = e.lambda_idx >= 0 ? psi[e.lambda_idx] : 1.0;
      trips.emplace_back(e.row, e.col, e.w * lam);
    }
    append_gpp_triplets(psi, trips);
    SpMat a(n_rows(), n_cols());
    a.setFromTriplets(trips.begin(), trips.end());
    return a;
  }

  Vec noise_variances(const Vec& psi) const {
    Vec v(n_rows());
    for (int r = 0; r < n_rows(); ++r) v[r] = std::exp(spec_.hyper_or_fixed(noise_name_[r], psi));
    return v;
  }

  SpMat prior_precision(const Vec& psi) const {
    std::vector<Triplet> trips;
    for (const auto& e : layout_) {
      const LatentBlockCfg& cfg = latent_cfg(e.name);
      SpMat q = latent_precision(cfg, e, psi);
      append_block_triplets(trips, q, e.offset);
    }
    for (std::size_t i = 0; i < fixed_names_.size(); ++i) {
      const int col = n_latent_ + static_cast<int>(i);
      trips.emplace_back(col, col, 1.0 / fixed_prior_var_[i] + 1e-6);
    }
    SpMat q(n_cols(), n_cols());
    q.setFromTriplets(trips.begin(), trips.end());
    return q;
  }

  // k x n dense constraint rows (sum-to-zero per intrinsic replicate).
  const Mat& constraints() const { return constraints_; }

  double log_hyper_prior(const Vec& psi) const { return airfuse::log_hyper_prior(spec_.hypers, psi); }

  // Design row for a new monitor-block observation at (loc, day, sitetype);
  // used for prediction at grid cells and validation sites.
  Vec predictor_row(const Point2D& loc, int day, int sitetype,
                    const std::vector<double>& covariates, const Vec& psi) const {
    Vec row = Vec::Zero(n_cols());
    auto terms = spec_.terms.find(SourceId::monitors);
    if (terms == spec_.terms.end()) {
      // single-block models predict through their only block
      terms = spec_.terms.begin();
    }
    for (const auto& t : terms->second) {
      const LatentLayoutEntry& e = latent(t.latent);
      const double lam = t.lambda.empty() ? 1.0 : spec_.hyper_or_fixed(t.lambda, psi);
      add_term_to_row(row, e, latent_cfg(e.name), loc, day, sitetype, lam, psi);
    }
    ObservationRow fake;
    fake.loc = loc;
    fake.day = day;
    fake.sitetype = sitetype;
    fake.covariates = covariates;
    for (std::size_t i = 0; i < fixed_names_.size(); ++i) {
      const double v = fixed_value_for_row(fixed_cfgs_[i], fake, terms->first);
      if (v != 0.0) row[n_latent_ + static_cast<int>(i)] = v;
    }
    return row;
  }

  std::uint64_t spec_hash() const {
    std::string s = spec_.model_name + "|" + std::to_string(spec_.n_days);
    for (const auto& e : layout_)
      s += "|" + e.name + ":" + std::to_string(static_cast<int>(e.kind)) + ":" +
           std::to_string(e.size);
    for (const auto& h : spec_.hypers) s += "|" + h.name;
    for (const auto& f : fixed_names_) s += "|" + f;
    s += "|rows:" + std::to_string(n_rows());
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ULL;
    }
    return h;
  }

 private:
  struct Entry {
    int row, col;
    double w;
    int lambda_idx;  // psi index, or -1
  };
  struct GppRow {
    int row;
    Point2D loc;
    int day;
    int latent_index;  // into layout_
    int lambda_idx;
    double lambda_fixed;
  };

  const LatentBlockCfg& latent_cfg(const std::string& name) const {
    for (const auto& c : spec_.latents)
      if (c.name == name) return c;
    throw std::logic_error("unknown latent cfg " + name);
  }

  void build_layout() {
    int offset = 0;
    for (const auto& cfg : spec_.latents) {
      LatentLayoutEntry e;
      e.name = cfg.name;
      e.kind = cfg.kind;
      e.offset = offset;
      e.replicates = cfg.replicates;
      switch (cfg.kind) {
        case LatentKind::matern_spde: {
          if (!mesh_) throw std::invalid_argument("matern block requires a mesh");
          e.rep_size = mesh_->num_nodes();
          break;
        }
        case LatentKind::rw1:
        case LatentKind::ar1:
        case LatentKind::iid:
          if (spec_.n_days < (cfg.kind == LatentKind::rw1 ? 2 : 1))
            throw std::invalid_argument("temporal block without enough days");
          e.rep_size = spec_.n_days;
          break;
        case LatentKind::kron_rw1_spde:
          if (!mesh_) throw std::invalid_argument("space-time block requires a mesh");
          e.rep_size = spec_.n_days * mesh_->num_nodes();
          break;
        case LatentKind::gpp_knots:
          if (spec_.gpp_knots.empty()) throw std::invalid_argument("gpp block without knots");
          e.rep_size = spec_.n_days * static_cast<int>(spec_.gpp_knots.size());
          break;
        case LatentKind::gp_sites: {
          build_site_registry();
          e.rep_size = spec_.n_days * static_cast<int>(site_locs_.size());
          break;
        }
      }
      e.size = e.rep_size * e.replicates;
      offset += e.size;
      layout_.push_back(e);
    }
    n_latent_ = offset;
    for (const auto& f : spec_.fixed_effects) {
      fixed_names_.push_back(f.name);
      fixed_prior_var_.push_back(f.prior_variance);
      fixed_cfgs_.push_back(f);
    }
  }

  void build_site_registry() {
    if (!site_locs_.empty()) return;
    for (const auto& b : spec_.blocks)
      for (const auto& r : b.rows) {
        const std::string key = r.monitor_id.empty()
                                    ? std::to_string(r.loc.x) + "/" + std::to_string(r.loc.y)
                                    : r.monitor_id;
        if (site_index_.emplace(key, static_cast<int>(site_locs_.size())).second)
          site_locs_.push_back(r.loc);
      }
  }

  int site_of(const ObservationRow& r) const {
    const std::string key = r.monitor_id.empty()
                                ? std::to_string(r.loc.x) + "/" + std::to_string(r.loc.y)
                                : r.monitor_id;
    auto it = site_index_.find(key);
    if (it == site_index_.end()) throw std::logic_error("row site missing from registry");
    return it->second;
  }

  double fixed_value_for_row(const FixedEffectCfg& f, const ObservationRow& r,
                             SourceId block) const {
    switch (f.kind) {
      case FixedKind::intercept:
        return f.block == block ? 1.0 : 0.0;
      case FixedKind::sitetype_indicator:
        return (r.sitetype == f.sitetype) ? 1.0 : 0.0;
      case FixedKind::covariate:
        if (f.covariate_index >= static_cast<int>(r.covariates.size()))
          throw std::invalid_argument("row lacks covariate " + f.name);
        return r.covariates[f.covariate_index];
      case FixedKind::covariate_x_sitetype:
        if (f.covariate_index >= static_cast<int>(r.covariates.size()))
          throw std::invalid_argument("row lacks covariate " + f.name);
        return (r.sitetype == f.sitetype) ? r.covariates[f.covariate_index] : 0.0;
    }
    return 0.0;
  }

  void build_rows() {
    int total = 0;
    for (const auto& b : spec_.blocks) total += static_cast<int>(b.rows.size());
    y_.resize(total);
    masked_.reserve(total);
    noise_name_.reserve(total);
    int row = 0;
    for (const auto& b : spec_.blocks) {
      const int first = row;
      auto terms_it = spec_.terms.find(b.id);
      if (terms_it == spec_.terms.end())
        throw std::invalid_argument("block " + source_name(b.id) + " has no linear predictor");

      // projector for all row locations of this block, if any spatial term
      bool needs_projector = false;
      for (const auto& t : terms_it->second) {
        const LatentKind k = latent_cfg(t.latent).kind;
        if (k == LatentKind::matern_spde || k == LatentKind::kron_rw1_spde) needs_projector = true;
      }
      Eigen::SparseMatrix<double, Eigen::RowMajor> proj_rm;
      if (needs_projector) {
        std::vector<Point2D> locs;
        locs.reserve(b.rows.size());
        for (const auto& r : b.rows) locs.push_back(r.loc);
        ProjectorMatrix proj = projector(*mesh_, locs);
        for (std::size_t i = 0; i < b.rows.size(); ++i)
          if (!proj.valid[i])
            throw std::invalid_argument("observation location outside the mesh in block " +
                                        source_name(b.id));
        proj_rm = proj.weights;
      }

      for (std::size_t i = 0; i < b.rows.size(); ++i) {
        const ObservationRow& r = b.rows[i];
        if (r.sitetype > 2) throw std::invalid_argument("unknown site type");
        y_[row] = r.value;
        masked_.push_back(r.missing ? 1 : 0);
        noise_name_.push_back(spec_.noise_hyper.at(b.id));

        for (const auto& t : terms_it->second) {
          const LatentLayoutEntry& e = latent(t.latent);
          const LatentBlockCfg& cfg = latent_cfg(t.latent);
          const int lam_idx = t.lambda.empty() ? -1 : hyper_index(spec_.hypers, t.lambda);
          const double lam_fixed =
              (t.lambda.empty() || lam_idx >= 0) ? 1.0 : spec_.fixed_hypers.at(t.lambda);
          auto push = [&](int col, double w) {
            entries_.push_back({row, col, w * lam_fixed, lam_idx});
          };
          switch (cfg.kind) {
            case LatentKind::matern_spde: {
              for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                       proj_rm, static_cast<int>(i));
                   it; ++it)
                push(e.offset + static_cast<int>(it.col()), it.value());
              break;
            }
            case LatentKind::rw1:
            case LatentKind::iid: {
              check_daily(b, cfg);
              push(e.offset + (r.day - 1), 1.0);
              break;
            }
            case LatentKind::ar1: {
              check_daily(b, cfg);
              int rep = 0;
              if (cfg.replicate_by_sitetype) {
                if (r.sitetype < 0) throw std::invalid_argument("row lacks site type");
                rep = r.sitetype;
              }
              push(e.offset + rep * e.rep_size + (r.day - 1), 1.0);
              break;
            }
            case LatentKind::kron_rw1_spde: {
              check_daily(b, cfg);
              const int nm = mesh_->num_nodes();
              for (Eigen::SparseMatrix<double, Eigen::RowMajor>::InnerIterator it(
                       proj_rm, static_cast<int>(i));
                   it; ++it)
                push(e.offset + (r.day - 1) * nm + static_cast<int>(it.col()), it.value());
              break;
            }
            case LatentKind::gpp_knots: {
              check_daily(b, cfg);
              gpp_rows_.push_back({row, r.loc, r.day, latent_index(e.name), lam_idx, lam_fixed});
              break;
            }
            case LatentKind::gp_sites: {
              check_daily(b, cfg);
              const int ns = static_cast<int>(site_locs_.size());
              push(e.offset + (r.day - 1) * ns + site_of(r), 1.0);
              break;
            }
          }
        }
        for (std::size_t fi = 0; fi < fixed_cfgs_.size(); ++fi) {
          const double v = fixed_value_for_row(fixed_cfgs_[fi], r, b.id);
          if (v != 0.0) entries_.push_back({row, n_latent_ + static_cast<int>(fi), v, -1});
        }
        ++row;
      }
      block_rows_[b.id] = {first, row};
    }
  }

  static void check_daily(const ObservationBlock& b, const LatentBlockCfg& cfg) {
    if (b.resolution != TemporalResolution::daily)
      throw std::invalid_argument("temporal latent " + cfg.name + " attached to an annual block");
  }

  int latent_index(const std::string& name) const {
    for (std::size_t i = 0; i < layout_.size(); ++i)
      if (layout_[i].name == name) return static_cast<int>(i);
    throw std::logic_error("unknown latent " + name);
  }

  static std::vector<std::pair<int, double>> projector_row(const ProjectorMatrix& proj, int row) {
    std::vector<std::pair<int, double>> out;
    for (int c = 0; c < proj.weights.outerSize(); ++c)
      for (SpMat::InnerIterator it(proj.weights, c); it; ++it)
        if (it.row() == row) out.emplace_back(c, it.value());
    return out;
  }

  void add_term_to_row(Vec& row, const LatentLayoutEntry& e, const LatentBlockCfg& cfg,
                       const Point2D& loc, int day, int sitetype, double lam,
                       const Vec& psi) const {
    switch (cfg.kind) {
      case LatentKind::matern_spde: {
        auto proj = projector(*mesh_, {loc});
        if (!proj.valid[0]) throw std::invalid_argument("prediction location outside the mesh");
        for (const auto& [col, w] : projector_row(proj, 0)) row[e.offset + col] += lam * w;
        break;
      }
      case LatentKind::rw1:
      case LatentKind::iid:
        row[e.offset + (day - 1)] += lam;
        break;
      case LatentKind::ar1: {
        const int rep = cfg.replicate_by_sitetype ? sitetype : 0;
        row[e.offset + rep * e.rep_size + (day - 1)] += lam;
        break;
      }
      case LatentKind::kron_rw1_spde: {
        auto proj = projector(*mesh_, {loc});
        if (!proj.valid[0]) throw std::invalid_argument("prediction location outside the mesh");
        const int nm = mesh_->num_nodes();
        for (const auto& [col, w] : projector_row(proj, 0))
          row[e.offset + (day - 1) * nm + col] += lam * w;
        break;
      }
      case LatentKind::gpp_knots: {
        const double phi = std::exp(spec_.hyper_or_fixed(latent_cfg(e.name).hyper_decay, psi));
        const Mat h = exp_corr_matrix(spec_.gpp_knots, phi);
        Eigen::LLT<Mat> llt(h);
        Vec w = llt.solve(gpp_cross_corr(spec_.gpp_knots, loc, phi));
        const int m = static_cast<int>(spec_.gpp_knots.size());
        for (int k = 0; k < m; ++k) row[e.offset + (day - 1) * m + k] += lam * w[k];
        break;
      }
      case LatentKind::gp_sites:
        throw std::invalid_argument("gp_sites blocks do not support off-site prediction");
    }
  }

  void append_gpp_triplets(const Vec& psi, std::vector<Triplet>& trips) const {
    if (gpp_rows_.empty()) return;
    const int m = static_cast<int>(spec_.gpp_knots.size());
    double phi = 0.0;
    Eigen::LLT<Mat> llt;
    bool ready = false;
    for (const auto& g : gpp_rows_) {
      const LatentLayoutEntry& e = layout_[g.latent_index];
      const LatentBlockCfg& cfg = latent_cfg(e.name);
      const double cur_phi = std::exp(spec_.hyper_or_fixed(cfg.hyper_decay, psi));
      if (!ready || cur_phi != phi) {
        phi = cur_phi;
        llt.compute(exp_corr_matrix(spec_.gpp_knots, phi));
        if (llt.info() != Eigen::Success)
          throw FactorizationError("gpp: singular knot correlation matrix");
        ready = true;
      }
      Vec w = llt.solve(gpp_cross_corr(spec_.gpp_knots, g.loc, phi));
      const double lam = (g.lambda_idx >= 0 ? psi[g.lambda_idx] : 1.0) * g.lambda_fixed;
      for (int k = 0; k < m; ++k)
        trips.emplace_back(g.row, e.offset + (g.day - 1) * m + k, lam * w[k]);
    }
  }

  SpMat latent_precision(const LatentBlockCfg& cfg, const LatentLayoutEntry& e,
                         const Vec& psi) const {
    switch (cfg.kind) {
      case LatentKind::matern_spde: {
        ensure_fem();
        const double sigma = std::exp(spec_.hyper_or_fixed(cfg.hyper_sd, psi));
        const double rho = std::exp(spec_.hyper_or_fixed(cfg.hyper_range, psi));
        double lt, lk;
        params_from_range_sigma(rho, sigma, 1.0, 2, lt, lk);
        SpMat q = spde_precision(fem_c_, fem_g_, lt, lk);
        return cfg.replicates > 1 ? replicate_block(q, cfg.replicates) : q;
      }
      case LatentKind::rw1: {
        const double s2 = std::exp(spec_.hyper_or_fixed(cfg.hyper_var, psi));
        SpMat q = rw1_precision(e.rep_size, s2);
        q += sparse_identity(e.rep_size, 1e-6 / s2);  // intrinsic: jitter + hard constraint
        return cfg.replicates > 1 ? replicate_block(q, cfg.replicates) : q;
      }
      case LatentKind::ar1: {
        const double innov = std::exp(spec_.hyper_or_fixed(cfg.hyper_var, psi));
        const double rho = spec_.hyper_or_fixed(cfg.hyper_ar, psi);
        SpMat q = ar1_precision(e.rep_size, rho, innov / (1.0 - rho * rho));
        return cfg.replicates > 1 ? replicate_block(q, cfg.replicates) : q;
      }
      case LatentKind::iid: {
        const double s2 = std::exp(spec_.hyper_or_fixed(cfg.hyper_var, psi));
        return sparse_identity(e.size, 1.0 / s2);
      }
      case LatentKind::kron_rw1_spde: {
        ensure_fem();
        const double s2 = std::exp(spec_.hyper_or_fixed(cfg.hyper_var, psi));
        const double rho = std::exp(spec_.hyper_or_fixed(cfg.hyper_range, psi));
        double lt, lk;
        params_from_range_sigma(rho, 1.0, 1.0, 2, lt, lk);
        SpMat qs = spde_precision(fem_c_, fem_g_, lt, lk);
        SpMat qt = rw1_precision(spec_.n_days, 1.0);
        qt += sparse_identity(spec_.n_days, 1e-6);
        SpMat q = kronecker_precision(qt, qs);
        q *= 1.0 / s2;
        return q;
      }
      case LatentKind::gpp_knots:
      case LatentKind::gp_sites: {
        const std::vector<Point2D>& pts =
            cfg.kind == LatentKind::gpp_knots ? spec_.gpp_knots : site_locs_;
        const double s2 = std::exp(spec_.hyper_or_fixed(cfg.hyper_var, psi));
        const double phi = std::exp(spec_.hyper_or_fixed(cfg.hyper_decay, psi));
        Mat h = exp_corr_matrix(pts, phi);
        Eigen::LLT<Mat> h_llt(h);
        if (h_llt.info() != Eigen::Success)
          throw FactorizationError("gpp: singular correlation matrix");
        Mat hinv = h_llt.solve(Mat::Identity(h.rows(), h.cols()));
        SpMat qs = sparse_from_dense(hinv);
        SpMat qt = cfg.temporal_ar
                       ? ar1_precision(spec_.n_days, spec_.hyper_or_fixed(cfg.hyper_ar, psi), 1.0)
                       : sparse_identity(spec_.n_days);
        SpMat q = kronecker_precision(qt, qs);
        q *= 1.0 / s2;
        return q;
      }
    }
    throw std::logic_error("unhandled latent kind");
  }

  void ensure_fem() const {
    if (fem_ready_) return;
    fem_matrices(*mesh_, fem_c_, fem_g_);
    fem_ready_ = true;
  }

  void build_constraints() {
    std::vector<Vec> rows;
    for (const auto& e : layout_) {
      const LatentBlockCfg& cfg = latent_cfg(e.name);
      if (cfg.kind == LatentKind::rw1) {
        for (int r = 0; r < e.replicates; ++r) {
          Vec c = Vec::Zero(n_cols());
          for (int i = 0; i < e.rep_size; ++i) c[e.offset + r * e.rep_size + i] = 1.0;
          rows.push_back(c);
        }
      } else if (cfg.kind == LatentKind::kron_rw1_spde) {
        Vec c = Vec::Zero(n_cols());
        for (int i = 0; i < e.size; ++i) c[e.offset + i] = 1.0;
        rows.push_back(c);
      }
    }
    constraints_ = Mat(static_cast<Eigen::Index>(rows.size()), n_cols());
    for (std::size_t i = 0; i < rows.size(); ++i) constraints_.row(static_cast<Eigen::Index>(i)) = rows[i];
  }

  JointModelSpec spec_;
  std::shared_ptr<const TriangleMesh> mesh_;
  std::vector<LatentLayoutEntry> layout_;
  int n_latent_ = 0;
  std::vector<std::string> fixed_names_;
  std::vector<double> fixed_prior_var_;
  std::vector<FixedEffectCfg> fixed_cfgs_;
  Vec y_;
  std::vector<uint8_t> masked_;
  std::vector<std::string> noise_name_;
  std::vector<Entry> entries_;
  std::vector<GppRow> gpp_rows_;
  std::map<SourceId, std::pair<int, int>> block_rows_;
  Mat constraints_;
  std::map<std::string, int> site_index_;
  std::vector<Point2D> site_locs_;
  mutable SpMat fem_c_, fem_g_;
  mutable bool fem_ready_ = false;
};

}  // namespace airfuse
