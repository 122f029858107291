#pragma once

// File formats: sample files (one value per line), versioned JSON model files
// and comma-separated curve tables.

#include <nlohmann/json.hpp>

#include <charconv>
#include <cstdio>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ocph/dataset.hpp"
#include "ocph/errors.hpp"
#include "ocph/estimation.hpp"
#include "ocph/gof.hpp"
#include "ocph/one_cut_point.hpp"
#include "ocph/phase_type.hpp"

namespace ocph {

inline constexpr int kModelFormatVersion = 1;

using ModelFile = std::variant<ErlangSpec, OcpErlangSpec, PhaseTypeRep, OneCutPointRep>;

/// Evaluation view of any model file entry.
using Distribution = std::variant<PhaseTypeRep, OneCutPointRep>;

inline std::string_view kind_name(const ModelFile& m) {
  static constexpr std::string_view names[] = {"ph-erlang", "ocp-erlang", "ph-general",
                                               "ocp-general"};
  return names[m.index()];
}

inline Distribution to_distribution(const ModelFile& m) {
  return std::visit(
      [](const auto& v) -> Distribution {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ErlangSpec>)
          return erlang_rep(v);
        else if constexpr (std::is_same_v<T, OcpErlangSpec>)
          return expand_ocp_erlang(v);
        else
          return v;
      },
      m);
}

inline ModelFile to_model_file(const FittedModel& f) {
  return std::visit([](const auto& v) -> ModelFile { return v; }, f);
}

namespace detail {

inline nlohmann::json matrix_json(const Matrix& m) {
  auto rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    auto row = nlohmann::json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline nlohmann::json row_json(const RowVector& v) {
  auto out = nlohmann::json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.empty()) throw parse_error(std::string("model field '") + field + "' must be a nonempty array of rows");
  const auto n = static_cast<Eigen::Index>(j.size());
  Matrix m(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto& row = j[static_cast<std::size_t>(i)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n)
      throw parse_error(std::string("model field '") + field + "' must be square");
    for (Eigen::Index c = 0; c < n; ++c) m(i, c) = row[static_cast<std::size_t>(c)].get<double>();
  }
  return m;
}

inline RowVector row_from_json(const nlohmann::json& j, const char* field) {
  if (!j.is_array() || j.empty()) throw parse_error(std::string("model field '") + field + "' must be a nonempty array");
  RowVector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

}  // namespace detail

inline nlohmann::json model_to_json(const ModelFile& m) {
  nlohmann::json j;
  j["format_version"] = kModelFormatVersion;
  j["kind"] = std::string(kind_name(m));
  std::visit(
      [&](const auto& v) {
        using T = std::decay_t<decltype(v)>;
        if constexpr (std::is_same_v<T, ErlangSpec>) {
          j["n"] = v.phases;
          j["lambda"] = v.rate;
        } else if constexpr (std::is_same_v<T, OcpErlangSpec>) {
          j["a"] = v.cut_point;
          j["n"] = v.phases;
          j["lambda1"] = v.rate1;
          j["lambda2"] = v.rate2;
        } else if constexpr (std::is_same_v<T, PhaseTypeRep>) {
          j["alpha"] = detail::row_json(v.alpha());
          j["T"] = detail::matrix_json(v.generator());
        } else {
          j["a"] = v.cut_point();
          j["alpha"] = detail::row_json(v.alpha());
          j["T1"] = detail::matrix_json(v.t1());
          j["T2"] = detail::matrix_json(v.t2());
        }
      },
      m);
  return j;
}

/// Doubles are written in shortest round-trip form, so parse(serialize(m)) == m bitwise.
inline std::string serialize_model(const ModelFile& m) { return model_to_json(m).dump(2) + "\n"; }

inline ModelFile model_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object()) throw parse_error("model file must hold a JSON object");
    if (!j.contains("format_version") || j.at("format_version").get<int>() != kModelFormatVersion)
      throw parse_error("unsupported or missing model format_version");
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "ph-erlang") {
      ErlangSpec s{j.at("n").get<int>(), j.at("lambda").get<double>()};
      s.validate();
      return s;
    }
    if (kind == "ocp-erlang") {
      OcpErlangSpec s{j.at("a").get<double>(), j.at("n").get<int>(), j.at("lambda1").get<double>(),
                      j.at("lambda2").get<double>()};
      s.validate();
      return s;
    }
    if (kind == "ph-general")
      return PhaseTypeRep::validate(detail::row_from_json(j.at("alpha"), "alpha"),
                                    detail::matrix_from_json(j.at("T"), "T"));
    if (kind == "ocp-general")
      return OneCutPointRep::validate(j.at("a").get<double>(),
                                      detail::row_from_json(j.at("alpha"), "alpha"),
                                      detail::matrix_from_json(j.at("T1"), "T1"),
                                      detail::matrix_from_json(j.at("T2"), "T2"));
    throw parse_error("unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("malformed model file: ") + e.what());
  }
}

inline ModelFile parse_model(std::string_view text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw parse_error(std::string("model file is not valid JSON: ") + e.what());
  }
  return model_from_json(j);
}

inline std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw invalid_input("cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline ModelFile read_model(const std::string& path) { return parse_model(read_text_file(path)); }

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw invalid_input("cannot write '" + path + "'");
  out << text;
  if (!out) throw invalid_input("write to '" + path + "' failed");
}

/// One decimal per line; blank lines and '#' comments skipped.
inline Dataset parse_samples(std::string_view text) {
  std::vector<double> values;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const std::size_t end = std::min(text.find('\n', pos), text.size());
    std::string_view line = text.substr(pos, end - pos);
    pos = end + 1;
    ++line_no;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
      if (end == text.size()) break;
      continue;
    }
    line = line.substr(first, line.find_last_not_of(" \t\r") - first + 1);
    if (line.front() == '#') continue;
    double v = 0.0;
    const char* b = line.data();
    if (line.front() == '+') ++b;
    const auto [ptr, ec] = std::from_chars(b, line.data() + line.size(), v);
    if (ec != std::errc() || ptr != line.data() + line.size() || !std::isfinite(v))
      throw parse_error("line " + std::to_string(line_no) + ": cannot parse '" + std::string(line) + "'", line_no);
    if (v < 0.0)
      throw domain_error("line " + std::to_string(line_no) + ": negative value " + std::string(line));
    values.push_back(v);
    if (end == text.size()) break;
  }
  if (values.empty()) throw empty_data("sample file contains no values");
  return Dataset(std::move(values));
}

inline Dataset read_samples(const std::string& path) { return parse_samples(read_text_file(path)); }

inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct CurveRow {
  double x, pdf, cdf, reliability, hazard, cum_hazard;
  std::optional<double> ecdf, emp_cum_hazard, kde, kernel_hazard;
};

/// Model measures on an evenly spaced grid, plus empirical overlays when data
/// are supplied. Hazard columns hold nan where the reliability has underflowed.
inline std::vector<CurveRow> curves(const Distribution& model, double xmin, double xmax, int points,
                                    const Dataset* data = nullptr) {
  if (!(xmin >= 0.0)) throw domain_error("curves: xmin must be nonnegative");
  if (!(xmin < xmax)) throw invalid_input("curves: xmin must be below xmax");
  if (points < 2) throw invalid_input("curves: need at least 2 points");
  auto or_nan = [](auto&& f) {
    try {
      return f();
    } catch (const error&) {
      return std::numeric_limits<double>::quiet_NaN();
    }
  };
  std::vector<CurveRow> rows;
  rows.reserve(static_cast<std::size_t>(points));
  for (int i = 0; i < points; ++i) {
    const double x = i + 1 == points ? xmax : xmin + (xmax - xmin) * i / (points - 1);
    CurveRow r{};
    r.x = x;
    std::visit(
        [&](const auto& rep) {
          const auto pm = evaluate(rep, x);
          r.pdf = pm.pdf;
          r.cdf = pm.cdf;
          r.reliability = pm.reliability;
          r.hazard = or_nan([&] { return hazard(rep, x); });
          r.cum_hazard = or_nan([&] { return cum_hazard(rep, x); });
        },
        model);
    if (data) {
      r.ecdf = ecdf(*data, x);
      r.emp_cum_hazard = empirical_cum_hazard(*data, x);
      r.kde = or_nan([&] { return kde_density(*data, x); });
      r.kernel_hazard = or_nan([&] { return kernel_hazard(*data, x); });
    }
    rows.push_back(r);
  }
  return rows;
}

inline std::string curves_csv(const std::vector<CurveRow>& rows) {
  const bool empirical = !rows.empty() && rows.front().ecdf.has_value();
  std::string out = "x,pdf,cdf,reliability,hazard,cum_hazard";
  if (empirical) out += ",ecdf,emp_cum_hazard,kde,kernel_hazard";
  out += '\n';
  for (const auto& r : rows) {
    out += format_double(r.x) + ',' + format_double(r.pdf) + ',' + format_double(r.cdf) + ',' +
           format_double(r.reliability) + ',' + format_double(r.hazard) + ',' +
           format_double(r.cum_hazard);
    if (empirical) {
      out += ',' + format_double(*r.ecdf) + ',' + format_double(*r.emp_cum_hazard) + ',' +
             format_double(*r.kde) + ',' + format_double(*r.kernel_hazard);
    }
    out += '\n';
  }
  return out;
}

}  // namespace ocph
