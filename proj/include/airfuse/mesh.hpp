#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfuse/geometry.hpp"
#include "airfuse/rng.hpp"
#include "airfuse/sparse_utils.hpp"

namespace airfuse {

// 2-D triangulation of the spatial domain plus a coarser extension ring.
// Nodes 0..n_data-1 are the (cutoff-merged) input locations in order.
struct TriangleMesh {
  std::vector<Point2D> nodes;
  std::vector<std::array<int, 3>> triangles;  // positively oriented
  Polygon boundary;                           // inner study-region polygon
  int n_data_nodes = 0;

  int num_nodes() const { return static_cast<int>(nodes.size()); }
  int num_triangles() const { return static_cast<int>(triangles.size()); }
};

// Barycentric weights from mesh nodes to target locations; one row per
// target, at most 3 nonzeros. Rows for targets outside the mesh hull are
// flagged invalid and must not be used downstream.
struct ProjectorMatrix {
  SpMat weights;                // n_targets x n_nodes
  std::vector<uint8_t> valid;   // per row

  bool all_valid() const {
    for (auto v : valid)
      if (!v) return false;
    return true;
  }
};

namespace meshdetail {

// > 0 when p lies inside the circumcircle of CCW triangle (a,b,c).
inline double incircle(const Point2D& a, const Point2D& b, const Point2D& c, const Point2D& p) {
  const double adx = a.x - p.x, ady = a.y - p.y;
  const double bdx = b.x - p.x, bdy = b.y - p.y;
  const double cdx = c.x - p.x, cdy = c.y - p.y;
  const double ad = adx * adx + ady * ady;
  const double bd = bdx * bdx + bdy * bdy;
  const double cd = cdx * cdx + cdy * cdy;
  return adx * (bdy * cd - bd * cdy) - ady * (bdx * cd - bd * cdx) + ad * (bdx * cdy - bdy * cdx);
}

struct Tri {
  int v[3];
  bool alive = true;
};

// Incremental Bowyer-Watson; points closer than dup_tol to an existing node
// are not inserted again.
inline void delaunay(const std::vector<Point2D>& pts, double dup_tol,
                     std::vector<Point2D>& out_nodes, std::vector<std::array<int, 3>>& out_tris) {
  if (pts.size() < 3) throw std::invalid_argument("delaunay: need at least 3 points");
  double x0 = pts[0].x, x1 = x0, y0 = pts[0].y, y1 = y0;
  for (const auto& p : pts) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const double span = std::max({x1 - x0, y1 - y0, 1.0});
  const double cx = 0.5 * (x0 + x1), cy = 0.5 * (y0 + y1);

  std::vector<Point2D> nodes;
  nodes.reserve(pts.size() + 3);
  nodes.push_back({cx - 40.0 * span, cy - 20.0 * span});
  nodes.push_back({cx + 40.0 * span, cy - 20.0 * span});
  nodes.push_back({cx, cy + 40.0 * span});

  std::vector<Tri> tris;
  tris.push_back({{0, 1, 2}, true});

  for (const auto& p : pts) {
    bool dup = false;
    for (std::size_t i = 3; i < nodes.size(); ++i) {
      if (dist(nodes[i], p) < dup_tol) {
        dup = true;
        break;
      }
    }
    if (dup) continue;
    const int pi = static_cast<int>(nodes.size());
    nodes.push_back(p);

    // cavity = triangles whose circumcircle contains p (ties included)
    std::map<std::pair<int, int>, int> edge_count;
    bool found = false;
    for (auto& t : tris) {
      if (!t.alive) continue;
      if (incircle(nodes[t.v[0]], nodes[t.v[1]], nodes[t.v[2]], p) >= 0.0) {
        t.alive = false;
        found = true;
        for (int e = 0; e < 3; ++e) {
          int u = t.v[e], v = t.v[(e + 1) % 3];
          auto key = std::minmax(u, v);
          edge_count[{key.first, key.second}]++;
        }
      }
    }
    if (!found) throw std::runtime_error("delaunay: point outside all circumcircles");
    // boundary edges of the cavity appear exactly once; fan them to p
    std::vector<std::array<int, 2>> cavity_edges;
    for (const auto& t : tris) {
      if (t.alive) continue;
      for (int e = 0; e < 3; ++e) {
        int u = t.v[e], v = t.v[(e + 1) % 3];
        auto key = std::minmax(u, v);
        if (edge_count[{key.first, key.second}] == 1) cavity_edges.push_back({u, v});
      }
    }
    std::vector<Tri> next;
    next.reserve(tris.size());
    for (const auto& t : tris)
      if (t.alive) next.push_back(t);
    for (const auto& e : cavity_edges) {
      Tri t{{e[0], e[1], pi}, true};
      if (orient2d(nodes[t.v[0]], nodes[t.v[1]], nodes[t.v[2]]) <= 0.0) std::swap(t.v[0], t.v[1]);
      next.push_back(t);
    }
    tris.swap(next);
  }

  out_nodes.assign(nodes.begin() + 3, nodes.end());
  out_tris.clear();
  for (const auto& t : tris) {
    if (!t.alive) continue;
    if (t.v[0] < 3 || t.v[1] < 3 || t.v[2] < 3) continue;  // touches super-triangle
    std::array<int, 3> tri = {t.v[0] - 3, t.v[1] - 3, t.v[2] - 3};
    if (orient2d(out_nodes[tri[0]], out_nodes[tri[1]], out_nodes[tri[2]]) <= 0.0)
      std::swap(tri[0], tri[1]);
    out_tris.push_back(tri);
  }
}

// Hexagonal lattice over [x0,x1]x[y0,y1] with spacing s; small deterministic
// jitter breaks the cocircular degeneracies of a regular grid.
inline std::vector<Point2D> hex_lattice(double x0, double y0, double x1, double y1, double s,
                                        double jitter_frac, std::uint64_t salt) {
  std::vector<Point2D> out;
  const double dy = s * 0.8660254037844386;
  int row = 0;
  for (double y = y0; y <= y1 + 1e-12; y += dy, ++row) {
    const double off = (row % 2 == 0) ? 0.0 : 0.5 * s;
    int col = 0;
    for (double x = x0 + off; x <= x1 + 1e-12; x += s, ++col) {
      CounterRng rng(salt, (static_cast<std::uint64_t>(row) << 32) ^ static_cast<std::uint64_t>(col));
      const double jx = jitter_frac * s * (rng.uniform() - 0.5);
      const double jy = jitter_frac * s * (rng.uniform() - 0.5);
      out.push_back({x + jx, y + jy});
    }
  }
  return out;
}

}  // namespace meshdetail

// Greedy merge of locations closer than `cutoff`; keeps first occurrences.
inline std::vector<Point2D> merge_close_points(const std::vector<Point2D>& pts, double cutoff) {
  std::vector<Point2D> kept;
  for (const auto& p : pts) {
    bool close = false;
    for (const auto& q : kept) {
      if (dist(p, q) < cutoff) {
        close = true;
        break;
      }
    }
    if (!close) kept.push_back(p);
  }
  return kept;
}

// Triangulates the study region at spacing ~max_edge_inner plus an extension
// ring of width 2*max_edge_outer at spacing ~max_edge_outer. All (merged)
// input locations become mesh nodes.
inline TriangleMesh build_mesh(const std::vector<Point2D>& locations, const Polygon& boundary,
                               double max_edge_inner, double max_edge_outer, double cutoff) {
  if (!(max_edge_inner > 0.0) || !(max_edge_outer > 0.0) || !(cutoff > 0.0))
    throw std::invalid_argument("build_mesh: edge lengths and cutoff must be positive");
  if (boundary.vertices.size() < 3 || !boundary.is_simple())
    throw std::invalid_argument("build_mesh: boundary polygon must be simple");
  for (const auto& p : locations)
    if (!finite(p)) throw std::invalid_argument("build_mesh: non-finite location");

  std::vector<Point2D> data = merge_close_points(locations, std::max(cutoff, 1e-9));
  if (data.size() < 3) throw std::invalid_argument("build_mesh: need >= 3 distinct locations");
  bool collinear = true;
  for (std::size_t i = 2; i < data.size() && collinear; ++i)
    if (std::abs(orient2d(data[0], data[1], data[i])) >
        1e-12 * (1.0 + dist(data[0], data[1]) * dist(data[0], data[i])))
      collinear = false;
  if (collinear) throw std::invalid_argument("build_mesh: degenerate geometry (collinear points)");
  for (const auto& p : data)
    if (!boundary.contains(p, 1e-9))
      throw std::invalid_argument("build_mesh: location outside boundary polygon");

  double bx0, by0, bx1, by1;
  boundary.bounding_box(bx0, by0, bx1, by1);
  const double ring = 2.0 * max_edge_outer;
  const double ox0 = bx0 - ring, oy0 = by0 - ring, ox1 = bx1 + ring, oy1 = by1 + ring;

  std::vector<Point2D> pts = data;

  auto keep_away_from_data = [&](const Point2D& p, double min_d) {
    for (const auto& q : data)
      if (dist(p, q) < min_d) return false;
    return true;
  };

  for (const auto& p :
       meshdetail::hex_lattice(bx0, by0, bx1, by1, max_edge_inner, 0.12, 0x5eedu)) {
    if (boundary.contains(p) && keep_away_from_data(p, 0.45 * max_edge_inner)) pts.push_back(p);
  }
  for (const auto& p :
       meshdetail::hex_lattice(ox0, oy0, ox1, oy1, max_edge_outer, 0.12, 0x07e5u)) {
    if (!boundary.contains(p, 0.25 * max_edge_inner) &&
        keep_away_from_data(p, 0.45 * max_edge_outer))
      pts.push_back(p);
  }
  // outer rectangle gets exact corner/edge nodes so the hull covers the ring
  const int nx = std::max(1, static_cast<int>(std::ceil((ox1 - ox0) / max_edge_outer)));
  const int ny = std::max(1, static_cast<int>(std::ceil((oy1 - oy0) / max_edge_outer)));
  for (int i = 0; i <= nx; ++i) {
    const double x = ox0 + (ox1 - ox0) * i / nx;
    pts.push_back({x, oy0});
    pts.push_back({x, oy1});
  }
  for (int j = 1; j < ny; ++j) {
    const double y = oy0 + (oy1 - oy0) * j / ny;
    pts.push_back({ox0, y});
    pts.push_back({ox1, y});
  }

  TriangleMesh mesh;
  mesh.boundary = boundary;
  mesh.n_data_nodes = static_cast<int>(data.size());
  meshdetail::delaunay(pts, 1e-9, mesh.nodes, mesh.triangles);
  if (static_cast<int>(mesh.nodes.size()) < mesh.n_data_nodes)
    throw std::runtime_error("build_mesh: input locations were lost in triangulation");
  for (const auto& t : mesh.triangles) {
    if (orient2d(mesh.nodes[t[0]], mesh.nodes[t[1]], mesh.nodes[t[2]]) <= 0.0)
      throw std::runtime_error("build_mesh: produced non-positive triangle");
  }
  return mesh;
}

// Barycentric projector rows for each target; exact on nodal-linear fields.
inline ProjectorMatrix projector(const TriangleMesh& mesh, const std::vector<Point2D>& targets) {
  ProjectorMatrix out;
  out.valid.assign(targets.size(), 0);
  std::vector<Triplet> trips;

  // bucket grid over triangle bounding boxes for point location
  double x0 = 1e300, y0 = 1e300, x1 = -1e300, y1 = -1e300;
  for (const auto& p : mesh.nodes) {
    x0 = std::min(x0, p.x);
    x1 = std::max(x1, p.x);
    y0 = std::min(y0, p.y);
    y1 = std::max(y1, p.y);
  }
  const int gx = std::max(1, static_cast<int>(std::sqrt(static_cast<double>(mesh.num_triangles()))));
  const int gy = gx;
  const double wx = (x1 - x0) / gx + 1e-300, wy = (y1 - y0) / gy + 1e-300;
  std::vector<std::vector<int>> buckets(static_cast<std::size_t>(gx) * gy);
  auto bucket_of = [&](double x, double y) {
    int ix = std::clamp(static_cast<int>((x - x0) / wx), 0, gx - 1);
    int iy = std::clamp(static_cast<int>((y - y0) / wy), 0, gy - 1);
    return iy * gx + ix;
  };
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    double tx0 = 1e300, ty0 = 1e300, tx1 = -1e300, ty1 = -1e300;
    for (int v : tri) {
      tx0 = std::min(tx0, mesh.nodes[v].x);
      tx1 = std::max(tx1, mesh.nodes[v].x);
      ty0 = std::min(ty0, mesh.nodes[v].y);
      ty1 = std::max(ty1, mesh.nodes[v].y);
    }
    const int bx_lo = std::clamp(static_cast<int>((tx0 - x0) / wx), 0, gx - 1);
    const int bx_hi = std::clamp(static_cast<int>((tx1 - x0) / wx), 0, gx - 1);
    const int by_lo = std::clamp(static_cast<int>((ty0 - y0) / wy), 0, gy - 1);
    const int by_hi = std::clamp(static_cast<int>((ty1 - y0) / wy), 0, gy - 1);
    for (int by = by_lo; by <= by_hi; ++by)
      for (int bx = bx_lo; bx <= bx_hi; ++bx) buckets[static_cast<std::size_t>(by) * gx + bx].push_back(t);
  }

  for (std::size_t i = 0; i < targets.size(); ++i) {
    const Point2D& p = targets[i];
    const auto try_triangles = [&](const std::vector<int>& cand) -> bool {
      for (int t : cand) {
        const auto& tri = mesh.triangles[t];
        const Point2D& a = mesh.nodes[tri[0]];
        const Point2D& b = mesh.nodes[tri[1]];
        const Point2D& c = mesh.nodes[tri[2]];
        const double area = orient2d(a, b, c);
        const double wa = orient2d(p, b, c) / area;
        const double wb = orient2d(a, p, c) / area;
        const double wc = orient2d(a, b, p) / area;
        const double tol = 1e-10;
        if (wa >= -tol && wb >= -tol && wc >= -tol) {
          const double w[3] = {wa, wb, wc};
          for (int k = 0; k < 3; ++k)
            if (std::abs(w[k]) > 1e-13)
              trips.emplace_back(static_cast<int>(i), tri[k], w[k]);
          out.valid[i] = 1;
          return true;
        }
      }
      return false;
    };
    if (!try_triangles(buckets[bucket_of(p.x, p.y)])) {
      // fall back to a full scan; the bucket query misses points on bucket seams
      std::vector<int> all(mesh.num_triangles());
      for (int t = 0; t < mesh.num_triangles(); ++t) all[t] = t;
      try_triangles(all);
    }
  }
  out.weights = SpMat(static_cast<int>(targets.size()), mesh.num_nodes());
  out.weights.setFromTriplets(trips.begin(), trips.end());
  return out;
}

inline void write_mesh(const TriangleMesh& mesh, const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("write_mesh: cannot open " + path);
  char buf[128];
  f << mesh.num_nodes() << " " << mesh.num_triangles() << "\n";
  for (int i = 0; i < mesh.num_nodes(); ++i) {
    std::snprintf(buf, sizeof(buf), "%d %.17g %.17g\n", i, mesh.nodes[i].x, mesh.nodes[i].y);
    f << buf;
  }
  for (int t = 0; t < mesh.num_triangles(); ++t) {
    const auto& tri = mesh.triangles[t];
    f << t << " " << tri[0] << " " << tri[1] << " " << tri[2] << "\n";
  }
}

inline TriangleMesh read_mesh(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("read_mesh: cannot open " + path);
  int nn = 0, nt = 0;
  f >> nn >> nt;
  TriangleMesh mesh;
  mesh.nodes.resize(nn);
  mesh.triangles.resize(nt);
  for (int i = 0; i < nn; ++i) {
    int idx;
    f >> idx >> mesh.nodes[i].x >> mesh.nodes[i].y;
  }
  for (int t = 0; t < nt; ++t) {
    int idx;
    f >> idx >> mesh.triangles[t][0] >> mesh.triangles[t][1] >> mesh.triangles[t][2];
  }
  if (!f) throw std::runtime_error("read_mesh: truncated mesh file " + path);
  mesh.n_data_nodes = 0;  // not recorded in the file format
  return mesh;
}

}  // namespace airfuse
