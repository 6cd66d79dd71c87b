#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "fieldcast/types.hpp"

namespace fieldcast {

// stations.csv      station_id,lon,lat,x_km,y_km   (lon/lat may be empty)
// forecasts.csv     date,station_id,member,value_c (member in 1..M)
// observations.csv  date,station_id,value_c
// An empty value field marks a missing value.
inline constexpr std::string_view kStationsHeader = "station_id,lon,lat,x_km,y_km";
inline constexpr std::string_view kForecastsHeader = "date,station_id,member,value_c";
inline constexpr std::string_view kObservationsHeader = "date,station_id,value_c";

struct DatasetPaths {
  std::filesystem::path stations;
  std::filesystem::path forecasts;
  std::filesystem::path observations;

  // stations.csv, forecasts.csv and observations.csv inside `dir`.
  static DatasetPaths in_directory(const std::filesystem::path& dir);
};

struct LoadReport {
  std::size_t station_rows = 0;
  std::size_t forecast_rows = 0;
  std::size_t observation_rows = 0;
  std::size_t eliminated_days = 0;
};

StationSet load_stations(const std::filesystem::path& path);

// Throws LoadError naming file and line for malformed rows, unknown station
// ids and duplicate (date, station[, member]) keys.
EnsembleDataset load_dataset(const DatasetPaths& paths, LoadReport* report = nullptr);

void write_stations(const StationSet& stations, const std::filesystem::path& path);
// Writes every (day, station, member) cell, missing ones as empty fields.
void write_dataset(const EnsembleDataset& data, const DatasetPaths& paths);

// Regular grid of per-member forecasts. Values are row-major with x varying
// fastest: value(i, j) = values[member][j * nx + i] at (x0 + i dx, y0 + j dy).
struct GridForecast {
  int nx = 0;
  int ny = 0;
  double x0 = 0.0;
  double y0 = 0.0;
  double dx = 1.0;
  double dy = 1.0;
  std::vector<int> member_ids;
  std::vector<std::vector<double>> values;

  void validate() const;
};

// One grid file holds a single member: a header line `nx,ny,x0,y0,dx,dy,member`,
// a line with those numbers, then nx * ny comma-separated values in row-major
// order (any line breaks).
GridForecast read_grid_file(const std::filesystem::path& path);
void write_grid_file(const GridForecast& grid, std::size_t member_slot,
                     const std::filesystem::path& path);

// Stacks single-member grids with identical geometry into one forecast.
GridForecast merge_grid_members(const std::vector<GridForecast>& grids);

// Bilinear interpolation of every member at the station location. Throws
// std::out_of_range outside the grid's bounding box.
std::vector<double> bilinear_interpolate(const GridForecast& grid, const Station& station);

inline constexpr double kKmPerDegree = 111.2;

struct RotatedCoordinates {
  double lon_deg = 0.0;
  double lat_deg = 0.0;
};

// Rotated-pole spherical transform (COSMO convention: the unrotated
// system is pole_lon = -180, pole_lat = 90).
RotatedCoordinates rotate_to_pole(double lon, double lat, double pole_lon, double pole_lat);

struct PlanarPoint {
  double x_km = 0.0;
  double y_km = 0.0;
};

// Rotated coordinates scaled by kKmPerDegree.
PlanarPoint project_rotated_pole(double lon, double lat, double pole_lon, double pole_lat);

// One window per non-eliminated target day that has at least `window_length`
// non-eliminated days before it. Appends a warning when none qualify.
std::vector<TrainingWindow> rolling_windows(const EnsembleDataset& data,
                                            std::size_t window_length,
                                            std::vector<std::string>* warnings = nullptr);

// Window for one target day; nullopt when the history is too short.
std::optional<TrainingWindow> window_for_day(const EnsembleDataset& data, std::size_t target_day,
                                             std::size_t window_length);

}  // namespace fieldcast
