#pragma once

// Small dataset builders shared by the test suites.

#include <cstdio>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "fieldcast/types.hpp"

namespace fixture {

inline std::string station_id(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "S%03zu", i + 1);
  return buf;
}

inline std::string day_label(std::size_t d) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "D%04zu", d + 1);
  return buf;
}

// Stations on a line, `spacing_km` apart.
inline fieldcast::StationSet line_stations(std::size_t n, double spacing_km = 10.0) {
  std::vector<fieldcast::Station> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back({station_id(i), spacing_km * i, 0.0, {}, {}});
  return fieldcast::StationSet(std::move(s));
}

using ForecastFn = std::function<std::optional<double>(std::size_t day, std::size_t station, int member)>;
using ObservationFn = std::function<std::optional<double>(std::size_t day, std::size_t station)>;

inline fieldcast::EnsembleDataset build(const fieldcast::StationSet& stations, std::size_t days,
                                        int members, const ForecastFn& f,
                                        const ObservationFn& y) {
  std::vector<std::optional<double>> fc;
  std::vector<std::optional<double>> obs;
  std::vector<fieldcast::Date> labels;
  for (std::size_t d = 0; d < days; ++d) {
    labels.push_back(day_label(d));
    for (std::size_t s = 0; s < stations.size(); ++s) {
      for (int m = 0; m < members; ++m) fc.push_back(f(d, s, m));
      obs.push_back(y(d, s));
    }
  }
  return {stations, labels, members, fc, obs};
}

inline fieldcast::TrainingWindow window_over(std::size_t first, std::size_t count,
                                             std::size_t target) {
  fieldcast::TrainingWindow w;
  w.target_day = target;
  for (std::size_t d = first; d < first + count; ++d) w.training_days.push_back(d);
  return w;
}

}  // namespace fixture
