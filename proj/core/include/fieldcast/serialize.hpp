#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fieldcast/bma.hpp"
#include "fieldcast/ngr.hpp"
#include "fieldcast/spatial.hpp"
#include "fieldcast/types.hpp"

namespace fieldcast {

// Parameters fitted for one target day. Exactly one of the univariate
// parameter sets is present, matching `method` ("ngr+", "ngrc" or "bma").
//
// JSON layout:
//   ngr+ / ngrc  {method, target_day, a, beta[], c_raw, d_raw,
//                 climatology{station: {ybar, fbar[], xi2, n}}}
//                (for ngrc, a = 0 and beta holds the unsquared b)
//   bma          {method, target_day, a[], b[], weights[], sigma2,
//                 member_variograms[]}
//   optional     variogram {theta, range_km, bins[{d, gamma, n}], objective}
struct ModelParameters {
  std::string method;
  Date target_day;
  std::optional<NgrPlusParams> ngr_plus;
  std::optional<NgrCParams> ngr_c;
  std::optional<BmaParams> bma;
  std::optional<VariogramFit> variogram;
  std::vector<VariogramFit> member_variograms;
};

std::string to_json(const VariogramFit& fit);
VariogramFit variogram_from_json(std::string_view text);

std::string to_json(const ModelParameters& params, int indent = 2);
ModelParameters model_parameters_from_json(std::string_view text);
// JSON array of parameter sets, one per line-indented element.
std::string to_json(std::span<const ModelParameters> params, int indent = 2);
std::vector<ModelParameters> model_parameter_list_from_json(std::string_view text);

void write_model_parameters(const ModelParameters& params, const std::filesystem::path& path);
ModelParameters read_model_parameters(const std::filesystem::path& path);

inline constexpr std::string_view kFieldSampleHeader = "provenance,seed,sample,station_id,value_c";

// One row per (sample, station); samples are numbered from 1.
void write_field_sample(const ForecastFieldSample& sample, const std::filesystem::path& path);
// Throws LoadError on schema violations or ragged samples.
ForecastFieldSample read_field_sample(const std::filesystem::path& path);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

}  // namespace fieldcast
