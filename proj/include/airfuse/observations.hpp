#pragma once

#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "airfuse/geometry.hpp"

namespace airfuse {

// Site types; RUR is the reference level with no fixed effect of its own.
enum class SiteType : int { RUR = 0, URB = 1, RKS = 2 };
constexpr int kNumSiteTypes = 3;

inline std::string sitetype_name(int s) {
  switch (s) {
    case 0: return "RUR";
    case 1: return "URB";
    case 2: return "RKS";
  }
  return "?";
}

inline int sitetype_from_name(const std::string& s) {
  if (s == "RUR") return 0;
  if (s == "URB") return 1;
  if (s == "RKS") return 2;
  throw std::invalid_argument("unknown site type: " + s);
}

enum class SourceId : int { pcm = 0, aqum = 1, monitors = 2 };

inline std::string source_name(SourceId s) {
  switch (s) {
    case SourceId::pcm: return "pcm";
    case SourceId::aqum: return "aqum";
    case SourceId::monitors: return "monitors";
  }
  return "?";
}

inline SourceId source_from_name(const std::string& s) {
  if (s == "pcm") return SourceId::pcm;
  if (s == "aqum") return SourceId::aqum;
  if (s == "monitors") return SourceId::monitors;
  throw std::invalid_argument("unknown source: " + s);
}

struct ObservationRow {
  std::string monitor_id;  // empty for gridded sources
  int sitetype = -1;       // set iff the block is `monitors`
  Point2D loc;
  int day = 1;             // 1-based day index; year replicate for annual blocks
  double value = 0.0;      // log concentration
  bool missing = false;    // masked: kept in the design, excluded from the likelihood
  std::vector<double> covariates;  // aligned covariate columns (fusion / GPP models)
};

enum class TemporalResolution { annual, daily };

struct ObservationBlock {
  SourceId id = SourceId::monitors;
  TemporalResolution resolution = TemporalResolution::daily;
  std::vector<ObservationRow> rows;
};

// CSV schema: source,monitor_id,sitetype,x_km,y_km,day,value_log
inline void write_observations_csv(const std::vector<ObservationBlock>& blocks,
                                   const std::string& path) {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  f << "source,monitor_id,sitetype,x_km,y_km,day,value_log\n";
  char buf[256];
  for (const auto& b : blocks) {
    for (const auto& r : b.rows) {
      std::snprintf(buf, sizeof(buf), "%s,%s,%s,%.17g,%.17g,%d,%.17g\n",
                    source_name(b.id).c_str(), r.monitor_id.c_str(),
                    r.sitetype >= 0 ? sitetype_name(r.sitetype).c_str() : "", r.loc.x, r.loc.y,
                    r.day, r.value);
      f << buf;
    }
  }
}

inline std::vector<ObservationBlock> read_observations_csv(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open " + path);
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty observation file " + path);
  ObservationBlock pcm{SourceId::pcm, TemporalResolution::annual, {}};
  ObservationBlock aqum{SourceId::aqum, TemporalResolution::daily, {}};
  ObservationBlock mon{SourceId::monitors, TemporalResolution::daily, {}};
  int lineno = 1;
  while (std::getline(f, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::stringstream ss(line);
    std::string field;
    std::vector<std::string> fields;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() < 7)
      throw std::runtime_error(path + ":" + std::to_string(lineno) + ": expected 7 columns");
    ObservationRow r;
    r.monitor_id = fields[1];
    r.sitetype = fields[2].empty() ? -1 : sitetype_from_name(fields[2]);
    r.loc = {std::stod(fields[3]), std::stod(fields[4])};
    r.day = std::stoi(fields[5]);
    r.value = std::stod(fields[6]);
    switch (source_from_name(fields[0])) {
      case SourceId::pcm: pcm.rows.push_back(std::move(r)); break;
      case SourceId::aqum: aqum.rows.push_back(std::move(r)); break;
      case SourceId::monitors:
        if (r.sitetype < 0)
          throw std::runtime_error(path + ":" + std::to_string(lineno) +
                                   ": monitor row without site type");
        mon.rows.push_back(std::move(r));
        break;
    }
  }
  std::vector<ObservationBlock> out;
  if (!pcm.rows.empty()) out.push_back(std::move(pcm));
  if (!aqum.rows.empty()) out.push_back(std::move(aqum));
  if (!mon.rows.empty()) out.push_back(std::move(mon));
  return out;
}

}  // namespace airfuse
