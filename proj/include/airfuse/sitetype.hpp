#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfuse/geometry.hpp"
#include "airfuse/observations.hpp"

namespace airfuse {

enum class RoadClass : int { major = 0, minor = 1 };

struct RoadSet {
  struct Polyline {
    RoadClass cls = RoadClass::minor;
    std::vector<Point2D> vertices;
  };
  std::vector<Polyline> lines;

  bool empty() const {
    for (const auto& l : lines)
      if (l.vertices.size() >= 2) return false;
    return true;
  }
};

// Minimum point-to-segment distance over roads of the requested class
// (class_filter < 0 means any class). Distances are in the coordinate unit
// (km here; rule thresholds are given in metres).
inline double distance_to_roads(const Point2D& p, const RoadSet& roads, int class_filter = -1) {
  double best = std::numeric_limits<double>::infinity();
  bool any = false;
  for (const auto& line : roads.lines) {
    if (class_filter >= 0 && static_cast<int>(line.cls) != class_filter) continue;
    for (std::size_t i = 0; i + 1 < line.vertices.size(); ++i) {
      best = std::min(best, point_segment_distance(p, line.vertices[i], line.vertices[i + 1]));
      any = true;
    }
  }
  if (!any) throw std::invalid_argument("distance_to_roads: no road of the requested class");
  return best;
}

// Categorical raster over a regular grid with an urban/rural legend.
struct LandCoverRaster {
  double x0 = 0.0, y0 = 0.0, cell = 1.0;
  int nx = 0, ny = 0;
  std::vector<int> codes;            // row-major from the lower-left
  std::map<int, int> legend;         // code -> sitetype (0 rural, 1 urban)

  int code_at(const Point2D& p) const {
    const int i = static_cast<int>(std::floor((p.x - x0) / cell));
    const int j = static_cast<int>(std::floor((p.y - y0) / cell));
    if (i < 0 || i >= nx || j < 0 || j >= ny)
      throw std::invalid_argument("land cover: point outside the raster");
    return codes[static_cast<std::size_t>(j) * nx + i];
  }

  int landcover_at(const Point2D& p) const {
    const int code = code_at(p);
    auto it = legend.find(code);
    if (it == legend.end())
      throw std::invalid_argument("land cover: code " + std::to_string(code) + " not in legend");
    return it->second;
  }
};

enum class KerbsideRule { R1, R2, R3 };

// Kerbside classification rules (distances in metres from the road
// centreline, boundary ties count as kerbside):
//   R1: within 4 m of any road
//   R2: within 10 m of any road
//   R3: within 50 m of a major road or within 10 m of a minor road
inline int classify(const Point2D& p, const RoadSet& roads, const LandCoverRaster& landcover,
                    KerbsideRule rule) {
  const double km = 1.0e-3;
  bool kerbside = false;
  switch (rule) {
    case KerbsideRule::R1: kerbside = distance_to_roads(p, roads) <= 4.0 * km; break;
    case KerbsideRule::R2: kerbside = distance_to_roads(p, roads) <= 10.0 * km; break;
    case KerbsideRule::R3: {
      double dmaj = std::numeric_limits<double>::infinity();
      double dmin = std::numeric_limits<double>::infinity();
      try {
        dmaj = distance_to_roads(p, roads, static_cast<int>(RoadClass::major));
      } catch (const std::invalid_argument&) {
      }
      try {
        dmin = distance_to_roads(p, roads, static_cast<int>(RoadClass::minor));
      } catch (const std::invalid_argument&) {
      }
      if (!std::isfinite(dmaj) && !std::isfinite(dmin))
        throw std::invalid_argument("classify: empty road set");
      kerbside = dmaj <= 50.0 * km || dmin <= 10.0 * km;
      break;
    }
  }
  if (kerbside) return static_cast<int>(SiteType::RKS);
  return landcover.landcover_at(p);
}

// Exact-match fraction between predicted and reference labels.
inline double accuracy(const std::vector<int>& classified, const std::vector<int>& truth) {
  if (classified.size() != truth.size())
    throw std::invalid_argument("accuracy: label vectors differ in length");
  if (classified.empty()) throw std::invalid_argument("accuracy: empty label vectors");
  long hit = 0;
  for (std::size_t i = 0; i < classified.size(); ++i)
    if (classified[i] == truth[i]) ++hit;
  return static_cast<double>(hit) / static_cast<double>(classified.size());
}

// ---- file formats ---------------------------------------------------------

// Roads CSV: road_id,class,vertex_index,x,y (class in {major, minor})
inline RoadSet read_roads_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  std::getline(f, line);  // header
  std::map<std::string, std::map<int, Point2D>> by_road;
  std::map<std::string, RoadClass> cls;
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::vector<std::string> fields;
    std::string fld;
    while (std::getline(ss, fld, ',')) fields.push_back(fld);
    if (fields.size() < 5)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 5 columns");
    by_road[fields[0]][std::stoi(fields[2])] = {std::stod(fields[3]), std::stod(fields[4])};
    if (fields[1] == "major")
      cls[fields[0]] = RoadClass::major;
    else if (fields[1] == "minor")
      cls[fields[0]] = RoadClass::minor;
    else
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": unknown road class " +
                               fields[1]);
  }
  RoadSet out;
  for (const auto& [id, verts] : by_road) {
    RoadSet::Polyline pl;
    pl.cls = cls[id];
    for (const auto& [idx, p] : verts) pl.vertices.push_back(p);
    if (pl.vertices.empty())
      throw std::runtime_error("road " + id + " has no vertices");
    out.lines.push_back(std::move(pl));
  }
  return out;
}

// ESRI ASCII grid of integer category codes, with a legend sidecar mapping
// each code to urban or rural (one "code name" pair per line).
inline LandCoverRaster read_landcover(const std::string& grid_path,
                                      const std::string& legend_path) {
  std::ifstream f(grid_path);
  if (!f) throw std::runtime_error("cannot open " + grid_path);
  LandCoverRaster r;
  std::string key;
  double nodata = -9999;
  for (int h = 0; h < 6; ++h) {
    f >> key;
    std::string lower;
    for (char c : key) lower += static_cast<char>(std::tolower(c));
    if (lower == "ncols")
      f >> r.nx;
    else if (lower == "nrows")
      f >> r.ny;
    else if (lower == "xllcorner")
      f >> r.x0;
    else if (lower == "yllcorner")
      f >> r.y0;
    else if (lower == "cellsize")
      f >> r.cell;
    else if (lower == "nodata_value")
      f >> nodata;
    else
      throw std::runtime_error(grid_path + ": unexpected header key " + key);
  }
  r.codes.assign(static_cast<std::size_t>(r.nx) * r.ny, 0);
  for (int row = 0; row < r.ny; ++row)
    for (int i = 0; i < r.nx; ++i) {
      double v;
      if (!(f >> v)) throw std::runtime_error(grid_path + ": truncated raster");
      r.codes[static_cast<std::size_t>(r.ny - 1 - row) * r.nx + i] = static_cast<int>(v);
    }

  std::ifstream lf(legend_path);
  if (!lf) throw std::runtime_error("cannot open " + legend_path);
  int code;
  std::string name;
  while (lf >> code >> name) {
    if (name == "urban")
      r.legend[code] = static_cast<int>(SiteType::URB);
    else if (name == "rural")
      r.legend[code] = static_cast<int>(SiteType::RUR);
    else
      throw std::runtime_error(legend_path + ": legend category must be urban or rural");
  }
  if (r.legend.empty()) throw std::runtime_error(legend_path + ": empty legend");
  return r;
}

}  // namespace airfuse
