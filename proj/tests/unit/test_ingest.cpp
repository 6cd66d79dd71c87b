#include <cmath>
#include <fstream>
#include <numbers>
#include <random>

#include <Eigen/Geometry>
#include <gtest/gtest.h>

#include "fieldcast/ingest.hpp"
#include "fixtures.hpp"
#include "oracles.hpp"

using namespace fieldcast;
namespace fs = std::filesystem;

namespace {

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
}

// 3 stations x 2 days x 2 members, complete.
fs::path complete_panel(const std::string& name) {
  const auto dir = oracle::scratch_dir(name);
  write(dir / "stations.csv",
        "station_id,lon,lat,x_km,y_km\nA,,,0,0\nB,8.5,49.0,10,0\nC,,,0,10\n");
  std::string fc = "date,station_id,member,value_c\n";
  std::string obs = "date,station_id,value_c\n";
  for (const char* d : {"2024-01-01", "2024-01-02"}) {
    for (const char* s : {"A", "B", "C"}) {
      for (int m = 1; m <= 2; ++m) fc += std::string(d) + "," + s + "," + std::to_string(m) + ",1.5\n";
      obs += std::string(d) + "," + s + ",2\n";
    }
  }
  write(dir / "forecasts.csv", fc);
  write(dir / "observations.csv", obs);
  return dir;
}

}  // namespace

TEST(LoadDataset, CompletePanel) {
  const auto dir = complete_panel("complete");
  LoadReport report;
  const auto data = load_dataset(DatasetPaths::in_directory(dir), &report);
  EXPECT_EQ(data.station_count(), 3u);
  EXPECT_EQ(data.day_count(), 2u);
  EXPECT_EQ(data.members(), 2);
  EXPECT_EQ(data.eliminated_count(), 0u);
  EXPECT_EQ(report.forecast_rows, 12u);
  EXPECT_EQ(report.observation_rows, 6u);
  EXPECT_EQ(report.station_rows, 3u);
  EXPECT_EQ(data.forecast(1, 2, 1), 1.5);
  EXPECT_EQ(data.observation(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(*data.stations()[1].lon, 8.5);
  EXPECT_FALSE(data.stations()[0].lat.has_value());
}

TEST(LoadDataset, DayWithMemberMissingEverywhereIsEliminated) {
  const auto dir = complete_panel("eliminated");
  std::string fc = "date,station_id,member,value_c\n";
  for (const char* d : {"2024-01-01", "2024-01-02"}) {
    for (const char* s : {"A", "B", "C"}) {
      const bool drop = std::string(d) == "2024-01-02";
      fc += std::string(d) + "," + s + ",1," + (drop ? "" : "1.0") + "\n";
      fc += std::string(d) + "," + s + ",2,1.0\n";
    }
  }
  write(dir / "forecasts.csv", fc);
  const auto data = load_dataset(DatasetPaths::in_directory(dir));
  EXPECT_FALSE(data.eliminated(0));
  EXPECT_TRUE(data.eliminated(1));
}

TEST(LoadDataset, DuplicateRowNamesLine) {
  const auto dir = complete_panel("duplicate");
  std::ofstream(dir / "forecasts.csv", std::ios::app) << "2024-01-01,A,1,3.0\n";
  try {
    load_dataset(DatasetPaths::in_directory(dir));
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(std::string(e.what()).find("forecasts.csv:14"), std::string::npos) << e.what();
  }
}

TEST(LoadDataset, UnknownStationAndBadSchema) {
  const auto dir = complete_panel("unknown");
  std::ofstream(dir / "observations.csv", std::ios::app) << "2024-01-01,Z,3.0\n";
  EXPECT_THROW(load_dataset(DatasetPaths::in_directory(dir)), LoadError);

  const auto dir2 = complete_panel("badheader");
  write(dir2 / "observations.csv", "date,station,value\n");
  EXPECT_THROW(load_dataset(DatasetPaths::in_directory(dir2)), LoadError);

  const auto dir3 = complete_panel("badmember");
  std::ofstream(dir3 / "forecasts.csv", std::ios::app) << "2024-01-01,A,0,3.0\n";
  EXPECT_THROW(load_dataset(DatasetPaths::in_directory(dir3)), LoadError);

  const auto dir4 = complete_panel("badnumber");
  std::ofstream(dir4 / "observations.csv", std::ios::app) << "2024-01-03,A,abc\n";
  EXPECT_THROW(load_dataset(DatasetPaths::in_directory(dir4)), LoadError);

  EXPECT_THROW(load_dataset(DatasetPaths::in_directory(dir4 / "nowhere")), LoadError);
}

TEST(LoadDataset, RoundTripIsIdentical) {
  const auto st = fixture::line_stations(4);
  std::mt19937_64 gen(5);
  std::normal_distribution<double> n;
  std::vector<double> draws(4 * 6 * 3 + 4 * 6);
  for (auto& v : draws) v = n(gen) * 7.3;
  const auto data = fixture::build(
      st, 6, 3,
      [&](std::size_t d, std::size_t s, int m) -> std::optional<double> {
        if (d == 2 && m == 1) return std::nullopt;
        return draws[(d * 4 + s) * 3 + m];
      },
      [&](std::size_t d, std::size_t s) -> std::optional<double> {
        if (s == 3 && d % 2 == 0) return std::nullopt;
        return draws[72 + d * 4 + s];
      });
  const auto dir = oracle::scratch_dir("roundtrip");
  const auto paths = DatasetPaths::in_directory(dir);
  write_dataset(data, paths);
  const auto back = load_dataset(paths);
  EXPECT_TRUE(back == data);
  EXPECT_TRUE(back.eliminated(2));
}

TEST(Bilinear, NodeCenterAndFractionalOffsets) {
  GridForecast g;
  g.nx = 2;
  g.ny = 2;
  g.member_ids = {1};
  g.values = {{0.0, 1.0, 2.0, 3.0}};
  EXPECT_DOUBLE_EQ(bilinear_interpolate(g, {"s", 1.0, 0.0, {}, {}})[0], 1.0);
  EXPECT_DOUBLE_EQ(bilinear_interpolate(g, {"s", 1.0, 1.0, {}, {}})[0], 3.0);
  EXPECT_DOUBLE_EQ(bilinear_interpolate(g, {"s", 0.25, 0.75, {}, {}})[0], 1.75);

  GridForecast c = g;
  c.values = {{0.0, 0.0, 4.0, 4.0}};
  EXPECT_DOUBLE_EQ(bilinear_interpolate(c, {"s", 0.5, 0.5, {}, {}})[0], 2.0);
}

TEST(Bilinear, OutsideGridThrows) {
  GridForecast g;
  g.nx = 3;
  g.ny = 2;
  g.x0 = 10;
  g.y0 = 20;
  g.dx = 2;
  g.dy = 5;
  g.member_ids = {1};
  g.values = {std::vector<double>(6, 1.0)};
  EXPECT_NO_THROW(bilinear_interpolate(g, {"s", 14.0, 25.0, {}, {}}));
  EXPECT_THROW(bilinear_interpolate(g, {"s", 14.01, 25.0, {}, {}}), std::out_of_range);
  EXPECT_THROW(bilinear_interpolate(g, {"s", 9.99, 21.0, {}, {}}), std::out_of_range);
}

TEST(Bilinear, ExactForAffineFields) {
  std::mt19937_64 gen(17);
  std::uniform_real_distribution<double> u(-5, 5);
  for (int trial = 0; trial < 50; ++trial) {
    GridForecast g;
    g.nx = 7;
    g.ny = 5;
    g.x0 = u(gen);
    g.y0 = u(gen);
    g.dx = 0.5 + std::abs(u(gen));
    g.dy = 0.5 + std::abs(u(gen));
    const double a = u(gen), bx = u(gen), by = u(gen);
    g.member_ids = {1, 2};
    g.values.assign(2, std::vector<double>(g.nx * g.ny));
    for (int j = 0; j < g.ny; ++j) {
      for (int i = 0; i < g.nx; ++i) {
        const double x = g.x0 + i * g.dx, y = g.y0 + j * g.dy;
        g.values[0][j * g.nx + i] = a + bx * x + by * y;
        g.values[1][j * g.nx + i] = -a + 2 * by * y;
      }
    }
    std::uniform_real_distribution<double> px(g.x0, g.x0 + (g.nx - 1) * g.dx);
    std::uniform_real_distribution<double> py(g.y0, g.y0 + (g.ny - 1) * g.dy);
    for (int k = 0; k < 20; ++k) {
      const double x = px(gen), y = py(gen);
      const auto v = bilinear_interpolate(g, {"s", x, y, {}, {}});
      EXPECT_LE(std::abs(v[0] - (a + bx * x + by * y)), 1e-10);
      EXPECT_LE(std::abs(v[1] - (-a + 2 * by * y)), 1e-10);
    }
  }
}

TEST(GridFile, RoundTripAndMerge) {
  GridForecast g;
  g.nx = 3;
  g.ny = 2;
  g.x0 = 1.5;
  g.y0 = -2;
  g.dx = 2.8;
  g.dy = 2.8;
  g.member_ids = {4, 9};
  g.values = {{1, 2, 3, 4, 5, 6}, {-1, -2, -3, -4, -5, -6.25}};
  const auto dir = oracle::scratch_dir("grid");
  write_grid_file(g, 0, dir / "m4.csv");
  write_grid_file(g, 1, dir / "m9.csv");
  const auto a = read_grid_file(dir / "m4.csv");
  const auto b = read_grid_file(dir / "m9.csv");
  EXPECT_EQ(a.member_ids, std::vector<int>{4});
  const auto merged = merge_grid_members({a, b});
  EXPECT_EQ(merged.member_ids, g.member_ids);
  EXPECT_EQ(merged.values, g.values);
  EXPECT_DOUBLE_EQ(merged.x0, 1.5);
  EXPECT_EQ(merged.nx, 3);

  write(dir / "short.csv", "nx,ny,x0,y0,dx,dy,member\n2,2,0,0,1,1,1\n1,2,3\n");
  EXPECT_THROW(read_grid_file(dir / "short.csv"), LoadError);
  write(dir / "neg.csv", "nx,ny,x0,y0,dx,dy,member\n2,2,0,0,-1,1,1\n1,2,3,4\n");
  EXPECT_THROW(read_grid_file(dir / "neg.csv"), LoadError);
}

namespace {

// Rotated coordinates by explicit change of basis: the rotated z axis is the
// pole, the rotated x axis points at the rotated origin (pole_lon + 180,
// 90 - pole_lat).
std::pair<double, double> rotate_by_basis(double lon, double lat, double plon, double plat) {
  const double r = std::numbers::pi / 180.0;
  auto unit = [&](double lo, double la) {
    return Eigen::Vector3d(std::cos(la * r) * std::cos(lo * r), std::cos(la * r) * std::sin(lo * r),
                           std::sin(la * r));
  };
  const Eigen::Vector3d ez = unit(plon, plat);
  const Eigen::Vector3d ex = unit(plon + 180.0, 90.0 - plat);
  const Eigen::Vector3d ey = ez.cross(ex);
  const Eigen::Vector3d p = unit(lon, lat);
  return {std::atan2(p.dot(ey), p.dot(ex)) / r, std::asin(p.dot(ez)) / r};
}

}  // namespace

TEST(RotatedPole, UnrotatedPoleIsIdentity) {
  for (double lon : {-170.0, -30.0, 0.0, 10.0, 120.0}) {
    for (double lat : {-60.0, 0.0, 45.0, 89.0}) {
      const auto c = rotate_to_pole(lon, lat, -180.0, 90.0);
      EXPECT_NEAR(c.lon_deg, lon, 1e-9);
      EXPECT_NEAR(c.lat_deg, lat, 1e-9);
    }
  }
}

TEST(RotatedPole, AntipodalEquatorPointHasZeroLatitude) {
  const auto c = rotate_to_pole(-170.0 + 180.0, 90.0 - 40.0, -170.0, 40.0);
  EXPECT_NEAR(c.lat_deg, 0.0, 1e-9);
  EXPECT_NEAR(c.lon_deg, 0.0, 1e-9);
}

TEST(RotatedPole, MatchesChangeOfBasis) {
  const auto c = rotate_to_pole(10.0, 50.0, -170.0, 40.0);
  const auto [lon, lat] = rotate_by_basis(10.0, 50.0, -170.0, 40.0);
  EXPECT_NEAR(c.lon_deg, lon, 1e-9);
  EXPECT_NEAR(c.lat_deg, lat, 1e-9);
  std::mt19937_64 gen(2);
  std::uniform_real_distribution<double> ulon(-180, 180), ulat(-85, 85);
  for (int i = 0; i < 500; ++i) {
    const double a = ulon(gen), b = ulat(gen), pa = ulon(gen), pb = ulat(gen);
    const auto got = rotate_to_pole(a, b, pa, pb);
    const auto [elon, elat] = rotate_by_basis(a, b, pa, pb);
    EXPECT_NEAR(got.lat_deg, elat, 1e-8);
    EXPECT_NEAR(std::remainder(got.lon_deg - elon, 360.0), 0.0, 1e-8);
  }
  const auto p = project_rotated_pole(11.0, 50.0, -170.0, 40.0);
  const auto [plon, plat] = rotate_by_basis(11.0, 50.0, -170.0, 40.0);
  EXPECT_NEAR(p.x_km, plon * 111.2, 1e-6);
  EXPECT_NEAR(p.y_km, plat * 111.2, 1e-6);
  EXPECT_THROW(rotate_to_pole(0, 91, 0, 40), std::domain_error);
}

namespace {

EnsembleDataset days_panel(std::size_t days, std::optional<std::size_t> eliminated = std::nullopt) {
  return fixture::build(
      fixture::line_stations(2), days, 2,
      [=](std::size_t d, std::size_t, int m) -> std::optional<double> {
        if (eliminated && d == *eliminated && m == 0) return std::nullopt;
        return 1.0;
      },
      [](std::size_t, std::size_t) { return 0.0; });
}

}  // namespace

TEST(RollingWindows, Counting) {
  const auto w = rolling_windows(days_panel(30), 25);
  ASSERT_EQ(w.size(), 5u);
  EXPECT_EQ(w.front().target_day, 25u);
  EXPECT_EQ(w.front().training_days.front(), 0u);
  EXPECT_EQ(w.front().training_days.back(), 24u);
  EXPECT_EQ(w.back().target_day, 29u);
}

TEST(RollingWindows, EliminatedDayIsSkipped) {
  const auto data = days_panel(31, 9);
  const auto w = rolling_windows(data, 25);
  ASSERT_EQ(w.size(), 5u);
  EXPECT_EQ(w.front().target_day, 26u);
  EXPECT_EQ(w.front().training_days.size(), 25u);
  EXPECT_EQ(w.front().training_days.front(), 0u);
  for (const auto& win : w) {
    for (auto d : win.training_days) EXPECT_NE(d, 9u);
  }
}

TEST(RollingWindows, InsufficientHistoryWarns) {
  std::vector<std::string> warnings;
  EXPECT_TRUE(rolling_windows(days_panel(10), 25, &warnings).empty());
  EXPECT_EQ(warnings.size(), 1u);
  EXPECT_FALSE(window_for_day(days_panel(10), 9, 25).has_value());
  EXPECT_TRUE(window_for_day(days_panel(10), 9, 9).has_value());
}
