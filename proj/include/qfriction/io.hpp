#pragma once

// Operator JSON files and trajectory CSV export.

#include "json.hpp"

#include <cstdio>
#include <fstream>
#include <ostream>
#include <string>
#include <vector>

#include "qfriction/hilbert.hpp"
#include "qfriction/liouville.hpp"

namespace qfriction {

/// {"dims": [...], "re": [[...]], "im": [[...]]}, row-major nested arrays.
inline nlohmann::ordered_json operator_to_json(const Matrix& m, const std::vector<int>& dims) {
  nlohmann::ordered_json j;
  j["dims"] = dims;
  auto re = nlohmann::ordered_json::array();
  auto im = nlohmann::ordered_json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    std::vector<double> rr(static_cast<std::size_t>(m.cols())), ii(static_cast<std::size_t>(m.cols()));
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      rr[static_cast<std::size_t>(c)] = m(r, c).real();
      ii[static_cast<std::size_t>(c)] = m(r, c).imag();
    }
    re.push_back(std::move(rr));
    im.push_back(std::move(ii));
  }
  j["re"] = std::move(re);
  j["im"] = std::move(im);
  return j;
}

inline nlohmann::ordered_json operator_to_json(const Operator& op) { return operator_to_json(op.matrix(), op.space().dims()); }

/// Parses the operator format. If expected_dim > 0 the matrix must have that
/// dimension; dims (when present) must multiply to it.
inline Matrix operator_from_json(const nlohmann::json& j, int expected_dim = 0) {
  if (!j.is_object() || !j.contains("re")) throw InvalidArgument("operator file: expected an object with 're'");
  const auto& re = j.at("re");
  if (!re.is_array() || re.empty()) throw InvalidArgument("operator file: 're' must be a non-empty array of rows");
  const auto n = static_cast<Eigen::Index>(re.size());
  const bool has_im = j.contains("im");
  if (has_im && (!j.at("im").is_array() || j.at("im").size() != re.size())) {
    throw InvalidArgument("operator file: 'im' must match 're' in shape");
  }
  Matrix m(n, n);
  for (Eigen::Index r = 0; r < n; ++r) {
    const auto& row = re[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != n) {
      throw InvalidArgument("operator file: row " + std::to_string(r) + " of 're' has the wrong length");
    }
    for (Eigen::Index c = 0; c < n; ++c) {
      const auto& v = row[static_cast<std::size_t>(c)];
      if (!v.is_number()) throw InvalidArgument("operator file: non-numeric entry in 're'");
      double im = 0.0;
      if (has_im) {
        const auto& irow = j.at("im")[static_cast<std::size_t>(r)];
        if (!irow.is_array() || static_cast<Eigen::Index>(irow.size()) != n || !irow[static_cast<std::size_t>(c)].is_number()) {
          throw InvalidArgument("operator file: row " + std::to_string(r) + " of 'im' is malformed");
        }
        im = irow[static_cast<std::size_t>(c)].get<double>();
      }
      m(r, c) = Complex(v.get<double>(), im);
    }
  }
  if (j.contains("dims")) {
    long prod = 1;
    for (const auto& d : j.at("dims")) prod *= d.get<long>();
    if (prod != n) throw InvalidArgument("operator file: dims do not multiply to the matrix size");
  }
  if (expected_dim > 0 && n != expected_dim) {
    throw InvalidArgument("operator file: dimension " + std::to_string(n) + " does not match the model dimension " +
                          std::to_string(expected_dim));
  }
  if (!m.allFinite()) throw InvalidArgument("operator file: non-finite entries");
  return m;
}

inline Matrix load_operator(const std::string& path, int expected_dim = 0) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open operator file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument("operator file '" + path + "': " + e.what());
  }
  return operator_from_json(j, expected_dim);
}

inline void save_json(const std::string& path, const nlohmann::ordered_json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

/// Fixed 17-significant-digit formatting, locale independent.
inline std::string format_number(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// t, trace, herm_defect, min_eig, then one column per observable (real part;
/// an extra _im column is added for observables that are not real).
inline void write_trajectory_csv(std::ostream& out, const Trajectory& traj) {
  std::vector<bool> complex_col(traj.observables.size(), false);
  for (std::size_t k = 0; k < traj.observables.size(); ++k) {
    for (const auto& v : traj.observables[k]) {
      if (std::abs(v.imag()) > 1e-12 * std::max(1.0, std::abs(v.real()))) complex_col[k] = true;
    }
  }
  out << "t,trace,herm_defect,min_eig";
  for (std::size_t k = 0; k < traj.observable_names.size(); ++k) {
    out << "," << traj.observable_names[k];
    if (complex_col[k]) out << "," << traj.observable_names[k] << "_im";
  }
  out << "\n";
  for (std::size_t i = 0; i < traj.size(); ++i) {
    out << format_number(traj.times[i]) << "," << format_number(traj.trace[i]) << ","
        << format_number(traj.herm_defect[i]) << "," << format_number(traj.min_eig[i]);
    for (std::size_t k = 0; k < traj.observables.size(); ++k) {
      out << "," << format_number(traj.observables[k][i].real());
      if (complex_col[k]) out << "," << format_number(traj.observables[k][i].imag());
    }
    out << "\n";
  }
}

inline void write_trajectory_csv(const std::string& path, const Trajectory& traj) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  write_trajectory_csv(out, traj);
}

}  // namespace qfriction
