#include "fieldcast/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <stdexcept>

#include "fieldcast/csv.hpp"

namespace fieldcast {
namespace {

std::string where(const std::filesystem::path& path, std::size_t line) {
  return path.string() + ":" + std::to_string(line);
}

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  return out;
}

double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

}  // namespace

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir) {
  return {dir / "stations.csv", dir / "forecasts.csv", dir / "observations.csv"};
}

StationSet load_stations(const std::filesystem::path& path) {
  const auto table = csv::read_table(path, kStationsHeader);
  std::vector<Station> stations;
  std::set<std::string> seen;
  for (const auto& [line, text] : table.rows) {
    const auto f = csv::split(text);
    if (f.size() != 5) throw LoadError(where(path, line) + ": expected 5 fields");
    try {
      Station s;
      s.id = std::string(f[0]);
      if (s.id.empty()) throw std::invalid_argument("empty station id");
      s.lon = csv::parse_optional_real(f[1]);
      s.lat = csv::parse_optional_real(f[2]);
      s.x_km = csv::parse_real(f[3]);
      s.y_km = csv::parse_real(f[4]);
      if (!seen.insert(s.id).second) throw std::invalid_argument("duplicate station id " + s.id);
      stations.push_back(std::move(s));
    } catch (const std::invalid_argument& e) {
      throw LoadError(where(path, line) + ": " + e.what());
    }
  }
  return StationSet(std::move(stations));
}

EnsembleDataset load_dataset(const DatasetPaths& paths, LoadReport* report) {
  StationSet stations = load_stations(paths.stations);
  const auto fc = csv::read_table(paths.forecasts, kForecastsHeader);
  const auto ob = csv::read_table(paths.observations, kObservationsHeader);

  struct FcRow {
    std::string date;
    std::size_t station;
    int member;
    std::optional<double> value;
  };
  struct ObRow {
    std::string date;
    std::size_t station;
    std::optional<double> value;
  };

  auto station_of = [&](std::string_view id, const std::filesystem::path& path,
                        std::size_t line) {
    auto idx = stations.index_of(id);
    if (!idx) {
      throw LoadError(where(path, line) + ": unknown station id '" + std::string(id) + "'");
    }
    return *idx;
  };

  std::set<std::string> dates;
  std::vector<FcRow> fc_rows;
  fc_rows.reserve(fc.rows.size());
  int members = 0;
  for (const auto& [line, text] : fc.rows) {
    const auto f = csv::split(text);
    if (f.size() != 4) throw LoadError(where(paths.forecasts, line) + ": expected 4 fields");
    FcRow row;
    row.date = std::string(f[0]);
    if (row.date.empty()) throw LoadError(where(paths.forecasts, line) + ": empty date");
    row.station = station_of(f[1], paths.forecasts, line);
    try {
      const long long m = csv::parse_integer(f[2]);
      if (m < 1) throw std::invalid_argument("member must be >= 1");
      row.member = static_cast<int>(m);
      row.value = csv::parse_optional_real(f[3]);
    } catch (const std::invalid_argument& e) {
      throw LoadError(where(paths.forecasts, line) + ": " + e.what());
    }
    members = std::max(members, row.member);
    dates.insert(row.date);
    fc_rows.push_back(std::move(row));
  }
  std::vector<ObRow> ob_rows;
  ob_rows.reserve(ob.rows.size());
  for (const auto& [line, text] : ob.rows) {
    const auto f = csv::split(text);
    if (f.size() != 3) {
      throw LoadError(where(paths.observations, line) + ": expected 3 fields");
    }
    ObRow row;
    row.date = std::string(f[0]);
    if (row.date.empty()) throw LoadError(where(paths.observations, line) + ": empty date");
    row.station = station_of(f[1], paths.observations, line);
    try {
      row.value = csv::parse_optional_real(f[2]);
    } catch (const std::invalid_argument& e) {
      throw LoadError(where(paths.observations, line) + ": " + e.what());
    }
    dates.insert(row.date);
    ob_rows.push_back(std::move(row));
  }
  if (members == 0) throw LoadError(paths.forecasts.string() + ": no forecast rows");

  std::vector<Date> days(dates.begin(), dates.end());
  std::map<std::string, std::size_t> day_of;
  for (std::size_t d = 0; d < days.size(); ++d) day_of.emplace(days[d], d);

  const std::size_t ns = stations.size();
  const auto m_count = static_cast<std::size_t>(members);
  std::vector<std::optional<double>> forecasts(days.size() * ns * m_count);
  std::vector<bool> fc_seen(forecasts.size(), false);
  for (std::size_t i = 0; i < fc_rows.size(); ++i) {
    const auto& r = fc_rows[i];
    const std::size_t k = (day_of[r.date] * ns + r.station) * m_count +
                          static_cast<std::size_t>(r.member - 1);
    if (fc_seen[k]) {
      throw LoadError(where(paths.forecasts, fc.rows[i].first) +
                      ": duplicate (date, station, member) row");
    }
    fc_seen[k] = true;
    forecasts[k] = r.value;
  }
  std::vector<std::optional<double>> observations(days.size() * ns);
  std::vector<bool> ob_seen(observations.size(), false);
  for (std::size_t i = 0; i < ob_rows.size(); ++i) {
    const auto& r = ob_rows[i];
    const std::size_t k = day_of[r.date] * ns + r.station;
    if (ob_seen[k]) {
      throw LoadError(where(paths.observations, ob.rows[i].first) +
                      ": duplicate (date, station) row");
    }
    ob_seen[k] = true;
    observations[k] = r.value;
  }

  const std::size_t station_rows = stations.size();
  EnsembleDataset data(std::move(stations), std::move(days), members, std::move(forecasts),
                       std::move(observations));
  if (report != nullptr) {
    report->station_rows = station_rows;
    report->forecast_rows = fc_rows.size();
    report->observation_rows = ob_rows.size();
    report->eliminated_days = data.eliminated_count();
  }
  return data;
}

void write_stations(const StationSet& stations, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << kStationsHeader << '\n';
  for (const auto& s : stations) {
    out << s.id << ',' << csv::format_optional(s.lon) << ',' << csv::format_optional(s.lat) << ','
        << csv::format_real(s.x_km) << ',' << csv::format_real(s.y_km) << '\n';
  }
}

void write_dataset(const EnsembleDataset& data, const DatasetPaths& paths) {
  write_stations(data.stations(), paths.stations);
  auto fc = open_out(paths.forecasts);
  fc << kForecastsHeader << '\n';
  auto ob = open_out(paths.observations);
  ob << kObservationsHeader << '\n';
  for (std::size_t d = 0; d < data.day_count(); ++d) {
    for (std::size_t s = 0; s < data.station_count(); ++s) {
      const auto& id = data.stations()[s].id;
      for (int m = 0; m < data.members(); ++m) {
        fc << data.days()[d] << ',' << id << ',' << (m + 1) << ','
           << csv::format_optional(data.forecast(d, s, m)) << '\n';
      }
      ob << data.days()[d] << ',' << id << ',' << csv::format_optional(data.observation(d, s))
         << '\n';
    }
  }
}

void GridForecast::validate() const {
  if (nx < 1 || ny < 1) throw std::invalid_argument("grid dimensions must be positive");
  if (!(dx > 0.0) || !(dy > 0.0)) throw std::invalid_argument("grid spacing must be positive");
  if (member_ids.size() != values.size()) {
    throw std::invalid_argument("grid member ids do not match value arrays");
  }
  for (const auto& v : values) {
    if (v.size() != static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny)) {
      throw std::invalid_argument("grid array size does not match nx * ny");
    }
  }
}

GridForecast read_grid_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path.string() + "'");
  std::string line;
  std::size_t line_no = 0;
  auto next_nonblank = [&](std::string& out) {
    while (std::getline(in, out)) {
      ++line_no;
      if (out.find_first_not_of(" \t\r") != std::string::npos) return true;
    }
    return false;
  };
  if (!next_nonblank(line)) throw LoadError(path.string() + ": empty grid file");
  {
    std::vector<std::string> header;
    for (auto f : csv::split(line)) header.emplace_back(f);
    if (header != std::vector<std::string>{"nx", "ny", "x0", "y0", "dx", "dy", "member"}) {
      throw LoadError(where(path, line_no) + ": expected header 'nx,ny,x0,y0,dx,dy,member'");
    }
  }
  if (!next_nonblank(line)) throw LoadError(path.string() + ": missing grid metadata");
  GridForecast grid;
  try {
    const auto f = csv::split(line);
    if (f.size() != 7) throw std::invalid_argument("expected 7 metadata fields");
    grid.nx = static_cast<int>(csv::parse_integer(f[0]));
    grid.ny = static_cast<int>(csv::parse_integer(f[1]));
    grid.x0 = csv::parse_real(f[2]);
    grid.y0 = csv::parse_real(f[3]);
    grid.dx = csv::parse_real(f[4]);
    grid.dy = csv::parse_real(f[5]);
    grid.member_ids.push_back(static_cast<int>(csv::parse_integer(f[6])));
  } catch (const std::invalid_argument& e) {
    throw LoadError(where(path, line_no) + ": " + e.what());
  }
  std::vector<double> values;
  while (next_nonblank(line)) {
    try {
      for (auto f : csv::split(line)) {
        if (f.empty()) continue;
        values.push_back(csv::parse_real(f));
      }
    } catch (const std::invalid_argument& e) {
      throw LoadError(where(path, line_no) + ": " + e.what());
    }
  }
  grid.values.push_back(std::move(values));
  try {
    grid.validate();
  } catch (const std::invalid_argument& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
  return grid;
}

void write_grid_file(const GridForecast& grid, std::size_t member_slot,
                     const std::filesystem::path& path) {
  grid.validate();
  auto out = open_out(path);
  out << "nx,ny,x0,y0,dx,dy,member\n"
      << grid.nx << ',' << grid.ny << ',' << csv::format_real(grid.x0) << ','
      << csv::format_real(grid.y0) << ',' << csv::format_real(grid.dx) << ','
      << csv::format_real(grid.dy) << ',' << grid.member_ids.at(member_slot) << '\n';
  const auto& v = grid.values.at(member_slot);
  for (int j = 0; j < grid.ny; ++j) {
    for (int i = 0; i < grid.nx; ++i) {
      if (i > 0) out << ',';
      out << csv::format_real(v[static_cast<std::size_t>(j) * grid.nx + i]);
    }
    out << '\n';
  }
}

GridForecast merge_grid_members(const std::vector<GridForecast>& grids) {
  if (grids.empty()) throw std::invalid_argument("no grids to merge");
  GridForecast out = grids.front();
  out.member_ids.clear();
  out.values.clear();
  for (const auto& g : grids) {
    if (g.nx != out.nx || g.ny != out.ny || g.x0 != out.x0 || g.y0 != out.y0 ||
        g.dx != out.dx || g.dy != out.dy) {
      throw std::invalid_argument("grid geometries differ");
    }
    out.member_ids.insert(out.member_ids.end(), g.member_ids.begin(), g.member_ids.end());
    out.values.insert(out.values.end(), g.values.begin(), g.values.end());
  }
  out.validate();
  return out;
}

std::vector<double> bilinear_interpolate(const GridForecast& grid, const Station& station) {
  grid.validate();
  const double u = (station.x_km - grid.x0) / grid.dx;
  const double v = (station.y_km - grid.y0) / grid.dy;
  if (!(u >= 0.0 && v >= 0.0 && u <= grid.nx - 1 && v <= grid.ny - 1)) {
    throw std::out_of_range("station '" + station.id + "' lies outside the forecast grid");
  }
  // Clamp the enclosing cell so stations on the far edge use the last cell.
  const int i = std::min(static_cast<int>(std::floor(u)), std::max(grid.nx - 2, 0));
  const int j = std::min(static_cast<int>(std::floor(v)), std::max(grid.ny - 2, 0));
  const double fx = u - i;
  const double fy = v - j;
  const int i1 = std::min(i + 1, grid.nx - 1);
  const int j1 = std::min(j + 1, grid.ny - 1);
  const auto at = [&](const std::vector<double>& vals, int ii, int jj) {
    return vals[static_cast<std::size_t>(jj) * grid.nx + ii];
  };
  std::vector<double> out;
  out.reserve(grid.values.size());
  for (const auto& vals : grid.values) {
    out.push_back(at(vals, i, j) * (1 - fx) * (1 - fy) + at(vals, i1, j) * fx * (1 - fy) +
                  at(vals, i, j1) * (1 - fx) * fy + at(vals, i1, j1) * fx * fy);
  }
  return out;
}

RotatedCoordinates rotate_to_pole(double lon, double lat, double pole_lon, double pole_lat) {
  if (std::abs(lat) > 90.0) throw std::domain_error("latitude outside [-90, 90]");
  const double phi = deg2rad(lat);
  const double dlam = deg2rad(lon - pole_lon);
  const double sin_pol = std::sin(deg2rad(pole_lat));
  const double cos_pol = std::cos(deg2rad(pole_lat));
  const double s = std::clamp(cos_pol * std::cos(phi) * std::cos(dlam) + sin_pol * std::sin(phi),
                              -1.0, 1.0);
  const double y = -std::sin(dlam) * std::cos(phi);
  const double x = -sin_pol * std::cos(phi) * std::cos(dlam) + cos_pol * std::sin(phi);
  return {rad2deg(std::atan2(y, x)), rad2deg(std::asin(s))};
}

PlanarPoint project_rotated_pole(double lon, double lat, double pole_lon, double pole_lat) {
  const auto r = rotate_to_pole(lon, lat, pole_lon, pole_lat);
  return {r.lon_deg * kKmPerDegree, r.lat_deg * kKmPerDegree};
}

std::optional<TrainingWindow> window_for_day(const EnsembleDataset& data, std::size_t target_day,
                                             std::size_t window_length) {
  if (window_length == 0 || target_day >= data.day_count() || data.eliminated(target_day)) {
    return std::nullopt;
  }
  TrainingWindow w;
  w.target_day = target_day;
  for (std::size_t d = target_day; d-- > 0 && w.training_days.size() < window_length;) {
    if (!data.eliminated(d)) w.training_days.push_back(d);
  }
  if (w.training_days.size() < window_length) return std::nullopt;
  std::reverse(w.training_days.begin(), w.training_days.end());
  return w;
}

std::vector<TrainingWindow> rolling_windows(const EnsembleDataset& data,
                                            std::size_t window_length,
                                            std::vector<std::string>* warnings) {
  std::vector<TrainingWindow> out;
  for (std::size_t d = 0; d < data.day_count(); ++d) {
    if (auto w = window_for_day(data, d, window_length)) out.push_back(std::move(*w));
  }
  if (out.empty() && warnings != nullptr) {
    warnings->push_back("insufficient history for a " + std::to_string(window_length) +
                        "-day training window");
  }
  return out;
}

}  // namespace fieldcast
