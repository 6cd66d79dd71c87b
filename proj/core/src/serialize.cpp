#include "fieldcast/serialize.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "fieldcast/csv.hpp"

namespace fieldcast {
namespace {

// Keys in insertion order so output follows the documented layout.
using ojson = nlohmann::ordered_json;

ojson variogram_json(const VariogramFit& fit) {
  ojson bins = ojson::array();
  for (const auto& b : fit.bins) {
    bins.push_back(ojson{{"d", b.distance_km}, {"gamma", b.gamma}, {"n", b.pairs}});
  }
  return ojson{{"theta", fit.theta},
               {"range_km", fit.range_km},
               {"bins", std::move(bins)},
               {"objective", fit.objective}};
}

VariogramFit variogram_from(const ojson& j) {
  VariogramFit fit;
  fit.theta = j.at("theta").get<double>();
  fit.range_km = j.at("range_km").get<double>();
  fit.objective = j.value("objective", 0.0);
  if (j.contains("bins")) {
    for (const auto& b : j.at("bins")) {
      fit.bins.push_back(
          {b.at("d").get<double>(), b.at("gamma").get<double>(), b.at("n").get<std::size_t>()});
    }
  }
  return fit;
}

ojson params_json(const ModelParameters& p) {
  ojson j;
  j["method"] = p.method;
  j["target_day"] = p.target_day;
  if (p.ngr_plus) {
    j["a"] = p.ngr_plus->a;
    j["beta"] = p.ngr_plus->beta;
    j["c_raw"] = p.ngr_plus->c_raw;
    j["d_raw"] = p.ngr_plus->d_raw;
    j["climatology"] = ojson::object();
  } else if (p.ngr_c) {
    j["a"] = 0.0;
    j["beta"] = p.ngr_c->b;
    j["c_raw"] = p.ngr_c->c_raw;
    j["d_raw"] = p.ngr_c->d_raw;
    ojson clim = ojson::object();
    for (const auto& [id, c] : p.ngr_c->climatology) {
      clim[id] = ojson{{"ybar", c.ybar}, {"fbar", c.fbar}, {"xi2", c.xi2}, {"n", c.n_obs}};
    }
    j["climatology"] = std::move(clim);
  } else if (p.bma) {
    std::vector<double> a;
    std::vector<double> b;
    std::vector<double> w;
    for (const auto& m : p.bma->members) {
      a.push_back(m.a);
      b.push_back(m.b);
      w.push_back(m.weight);
    }
    j["a"] = a;
    j["b"] = b;
    j["weights"] = w;
    j["sigma2"] = p.bma->sigma2;
    ojson mv = ojson::array();
    for (const auto& f : p.member_variograms) mv.push_back(variogram_json(f));
    j["member_variograms"] = std::move(mv);
  } else {
    throw std::invalid_argument("model parameters carry no univariate parameter set");
  }
  if (p.variogram) j["variogram"] = variogram_json(*p.variogram);
  return j;
}

ModelParameters params_from(const ojson& j) {
  ModelParameters p;
  p.method = j.at("method").get<std::string>();
  p.target_day = j.at("target_day").get<std::string>();
  if (p.method == "ngr+") {
    NgrPlusParams n;
    n.a = j.at("a").get<double>();
    n.beta = j.at("beta").get<std::vector<double>>();
    n.c_raw = j.at("c_raw").get<double>();
    n.d_raw = j.at("d_raw").get<double>();
    p.ngr_plus = std::move(n);
  } else if (p.method == "ngrc") {
    NgrCParams n;
    n.b = j.at("beta").get<std::vector<double>>();
    n.c_raw = j.at("c_raw").get<double>();
    n.d_raw = j.at("d_raw").get<double>();
    for (const auto& [id, c] : j.at("climatology").items()) {
      StationClimatology sc;
      sc.ybar = c.at("ybar").get<double>();
      sc.fbar = c.at("fbar").get<std::vector<double>>();
      sc.xi2 = c.at("xi2").get<double>();
      sc.n_obs = c.value("n", std::size_t{0});
      n.climatology.emplace(id, std::move(sc));
    }
    p.ngr_c = std::move(n);
  } else if (p.method == "bma") {
    BmaParams b;
    const auto a = j.at("a").get<std::vector<double>>();
    const auto bs = j.at("b").get<std::vector<double>>();
    const auto w = j.at("weights").get<std::vector<double>>();
    if (a.size() != bs.size() || a.size() != w.size()) {
      throw std::invalid_argument("bma parameters: a, b and weights differ in length");
    }
    for (std::size_t m = 0; m < a.size(); ++m) b.members.push_back({a[m], bs[m], w[m]});
    b.sigma2 = j.at("sigma2").get<double>();
    p.bma = std::move(b);
    if (j.contains("member_variograms")) {
      for (const auto& f : j.at("member_variograms")) p.member_variograms.push_back(variogram_from(f));
    }
  } else {
    throw std::invalid_argument("unknown method '" + p.method + "' in parameter file");
  }
  if (j.contains("variogram")) p.variogram = variogram_from(j.at("variogram"));
  return p;
}

ojson parse(std::string_view text) {
  try {
    return ojson::parse(text);
  } catch (const ojson::exception& e) {
    throw LoadError(std::string("malformed JSON: ") + e.what());
  }
}

template <typename F>
auto translate(F&& f) {
  try {
    return f();
  } catch (const ojson::exception& e) {
    throw LoadError(std::string("invalid parameter JSON: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw LoadError(std::string("invalid parameter JSON: ") + e.what());
  }
}

}  // namespace

std::string to_json(const VariogramFit& fit) { return variogram_json(fit).dump(2); }

VariogramFit variogram_from_json(std::string_view text) {
  const auto j = parse(text);
  return translate([&] { return variogram_from(j); });
}

std::string to_json(const ModelParameters& params, int indent) {
  return params_json(params).dump(indent);
}

ModelParameters model_parameters_from_json(std::string_view text) {
  const auto j = parse(text);
  return translate([&] { return params_from(j); });
}

std::string to_json(std::span<const ModelParameters> params, int indent) {
  ojson arr = ojson::array();
  for (const auto& p : params) arr.push_back(params_json(p));
  return arr.dump(indent);
}

std::vector<ModelParameters> model_parameter_list_from_json(std::string_view text) {
  const auto j = parse(text);
  return translate([&] {
    std::vector<ModelParameters> out;
    for (const auto& e : j) out.push_back(params_from(e));
    return out;
  });
}

void write_model_parameters(const ModelParameters& params, const std::filesystem::path& path) {
  write_text_file(path, to_json(params) + "\n");
}

ModelParameters read_model_parameters(const std::filesystem::path& path) {
  return model_parameters_from_json(read_text_file(path));
}

void write_field_sample(const ForecastFieldSample& sample, const std::filesystem::path& path) {
  sample.validate();
  std::ostringstream out;
  out << kFieldSampleHeader << '\n';
  const std::string prov(to_string(sample.provenance));
  for (Eigen::Index i = 0; i < sample.fields.rows(); ++i) {
    for (std::size_t s = 0; s < sample.station_order.size(); ++s) {
      out << prov << ',' << sample.seed << ',' << (i + 1) << ',' << sample.station_order[s] << ','
          << csv::format_real(sample.fields(i, static_cast<Eigen::Index>(s))) << '\n';
    }
  }
  write_text_file(path, out.str());
}

ForecastFieldSample read_field_sample(const std::filesystem::path& path) {
  const auto table = csv::read_table(path, kFieldSampleHeader);
  ForecastFieldSample out;
  std::vector<std::vector<double>> rows;
  auto fail = [&](std::size_t line, const std::string& what) {
    return LoadError(path.string() + ":" + std::to_string(line) + ": " + what);
  };
  bool first = true;
  for (const auto& [line, text] : table.rows) {
    const auto f = csv::split(text);
    if (f.size() != 5) throw fail(line, "expected 5 fields");
    try {
      const auto prov = parse_provenance(f[0]);
      const auto seed = static_cast<std::uint64_t>(csv::parse_integer(f[1]));
      const auto sample = csv::parse_integer(f[2]);
      const std::string station(f[3]);
      const double value = csv::parse_real(f[4]);
      if (first) {
        out.provenance = prov;
        out.seed = seed;
        first = false;
      } else if (prov != out.provenance || seed != out.seed) {
        throw fail(line, "provenance and seed must be constant within a file");
      }
      if (sample < 1 || static_cast<std::size_t>(sample) > rows.size() + 1) {
        throw fail(line, "sample numbers must start at 1 and increase");
      }
      if (static_cast<std::size_t>(sample) == rows.size() + 1) rows.emplace_back();
      auto& row = rows[static_cast<std::size_t>(sample) - 1];
      if (rows.size() == 1) {
        out.station_order.push_back(station);
      } else if (row.size() >= out.station_order.size() ||
                 out.station_order[row.size()] != station) {
        throw fail(line, "station order differs from the first sample");
      }
      row.push_back(value);
    } catch (const LoadError&) {
      throw;
    } catch (const std::exception& e) {
      throw fail(line, e.what());
    }
  }
  out.fields.resize(static_cast<Eigen::Index>(rows.size()),
                    static_cast<Eigen::Index>(out.station_order.size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != out.station_order.size()) {
      throw LoadError(path.string() + ": sample " + std::to_string(i + 1) + " is incomplete");
    }
    for (std::size_t s = 0; s < rows[i].size(); ++s) {
      out.fields(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(s)) = rows[i][s];
    }
  }
  out.validate();
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open '" + path.string() + "'");
  std::ostringstream text;
  text << in.rdbuf();
  return text.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
}

}  // namespace fieldcast
